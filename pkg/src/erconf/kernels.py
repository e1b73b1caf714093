"""Row kernels with a compiled backend and a numpy fallback.

The compiled module ``erconf._ckernels`` is used when it was built; set
``ERCONF_BACKEND=python`` to force the numpy code path. Both backends agree
to within a few ulps (exp/log and summation order may differ).
"""
from __future__ import annotations

import os
from types import ModuleType

import numpy as np

from . import _pykernels

THR, APS, RAPS, SAPS, RANK = range(5)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS: dict[str, ModuleType] = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def _pick_default() -> str:
    wanted = os.environ.get("ERCONF_BACKEND", "").strip().lower()
    if wanted:
        if wanted not in _BACKENDS:
            raise ImportError(f"ERCONF_BACKEND={wanted!r} not available; have {available_backends()}")
        return wanted
    return "cython" if "cython" in _BACKENDS else "python"


_active = _pick_default()


def backend_name() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {available_backends()}")
    _active = name


def _impl() -> ModuleType:
    return _BACKENDS[_active]


def _rows(z) -> np.ndarray:
    return np.ascontiguousarray(z, dtype=np.float64)


def softmax_rows(z) -> np.ndarray:
    return _impl().softmax_rows(_rows(z))


def entropy_rows(z) -> np.ndarray:
    return _impl().entropy_rows(_rows(z))


def er_prob_rows(z, temperature: float, floor: float) -> np.ndarray:
    return _impl().er_prob_rows(_rows(z), float(temperature), float(floor))


def score_matrix(p, u, kind: int, lam: float = 0.0, k_reg: int = 0) -> np.ndarray:
    p = _rows(p)
    u = np.ascontiguousarray(u, dtype=np.float64).reshape(-1)
    return _impl().score_matrix(p, u, int(kind), float(lam), int(k_reg))


def label_scores(p, labels, u, kind: int, lam: float = 0.0, k_reg: int = 0) -> np.ndarray:
    p = _rows(p)
    labels = np.ascontiguousarray(labels, dtype=np.int64).reshape(-1)
    u = np.ascontiguousarray(u, dtype=np.float64).reshape(-1)
    return _impl().label_scores(p, labels, u, int(kind), float(lam), int(k_reg))
