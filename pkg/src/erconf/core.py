"""Shared numeric types: logits, probability vectors, labeled batches, splits, RNG streams."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels


class InvalidInputError(ValueError):
    """Raised for non-finite logits, bad labels or malformed arrays."""


class SplitError(ValueError):
    """Raised when a requested split cannot give every part at least one index."""


def as_logits(z, *, ndim: int | None = None) -> np.ndarray:
    """Return ``z`` as a float64 array, rejecting NaN/Inf and fewer than two classes."""
    arr = np.asarray(z, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise InvalidInputError(f"expected a {ndim}-d logit array, got shape {arr.shape}")
    if arr.ndim == 0 or arr.shape[-1] < 2:
        raise InvalidInputError(f"need at least 2 classes, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("logits must be finite")
    return arr


def softmax(z) -> np.ndarray:
    """Max-subtracted softmax over the last axis."""
    z = as_logits(z)
    if z.ndim == 1:
        return kernels.softmax_rows(z[None, :])[0]
    if z.ndim == 2:
        return kernels.softmax_rows(z)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def descending_order(p) -> np.ndarray:
    """Class indices sorted by decreasing probability; ties go to the lower index."""
    p = np.asarray(p, dtype=np.float64)
    return np.argsort(-p, axis=-1, kind="stable")


def rank_of_label(p, y: int) -> int:
    """1-based rank of class ``y`` in ``p`` (rank 1 is the most probable class)."""
    p = np.asarray(p, dtype=np.float64)
    if not 0 <= y < p.shape[-1]:
        raise InvalidInputError(f"label {y} out of range for K={p.shape[-1]}")
    order = descending_order(p)
    return int(np.flatnonzero(order == y)[0]) + 1


def _stream_key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


@dataclass(frozen=True)
class RandomSource:
    """Seed plus a stream path; equal (seed, stream) pairs give equal draws.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys, so
    ``RandomSource(7).child("split", 3)`` is independent of ``child("u", 3)``.
    """

    seed: int
    stream: tuple[int, ...] = ()

    def child(self, *keys) -> "RandomSource":
        return RandomSource(self.seed, self.stream + tuple(_stream_key(k) for k in keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1), spawn_key=self.stream)
        return np.random.default_rng(ss)


@dataclass(frozen=True)
class LabeledExample:
    """One calibration unit: logits, true label and its uniform randomizer."""

    logits: np.ndarray
    label: int
    u: float

    def __post_init__(self):
        z = as_logits(self.logits, ndim=1)
        object.__setattr__(self, "logits", z)
        if not 0 <= self.label < z.shape[0]:
            raise InvalidInputError(f"label {self.label} out of range for K={z.shape[0]}")
        if not 0.0 <= self.u <= 1.0:
            raise InvalidInputError(f"u must lie in [0, 1], got {self.u}")


@dataclass(frozen=True)
class Examples:
    """Column-oriented batch of labeled examples.

    ``labels`` may contain ``-1`` for unlabeled rows. ``u`` holds one uniform
    draw per row which is reused for every candidate label.
    """

    logits: np.ndarray
    labels: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        z = as_logits(self.logits, ndim=2)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        u = np.asarray(self.u, dtype=np.float64).reshape(-1)
        if labels.shape[0] != z.shape[0] or u.shape[0] != z.shape[0]:
            raise InvalidInputError(
                f"row mismatch: logits {z.shape[0]}, labels {labels.shape[0]}, u {u.shape[0]}"
            )
        if np.any(labels >= z.shape[1]) or np.any(labels < -1):
            raise InvalidInputError("labels must lie in {0..K-1} (or -1 when unlabeled)")
        if np.any((u < 0.0) | (u > 1.0)):
            raise InvalidInputError("u must lie in [0, 1]")
        object.__setattr__(self, "logits", z)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "u", u)

    @property
    def n_classes(self) -> int:
        return self.logits.shape[1]

    def __len__(self) -> int:
        return self.logits.shape[0]

    def subset(self, idx) -> "Examples":
        if not isinstance(idx, slice):
            idx = np.asarray(idx, dtype=np.int64)
        return Examples(self.logits[idx], self.labels[idx], self.u[idx])

    def __iter__(self):
        for i in range(len(self)):
            yield LabeledExample(self.logits[i], int(self.labels[i]), float(self.u[i]))

    @classmethod
    def from_list(cls, items: Sequence[LabeledExample]) -> "Examples":
        if not items:
            raise InvalidInputError("cannot build a batch from zero examples")
        return cls(
            np.stack([it.logits for it in items]),
            np.array([it.label for it in items]),
            np.array([it.u for it in items]),
        )

    @classmethod
    def with_uniforms(cls, logits, labels, rng: RandomSource) -> "Examples":
        """Attach fresh U(0,1) randomizers drawn from ``rng``."""
        z = as_logits(logits, ndim=2)
        return cls(z, labels, rng.generator().random(z.shape[0]))

    def concat(self, other: "Examples") -> "Examples":
        return Examples(
            np.concatenate([self.logits, other.logits]),
            np.concatenate([self.labels, other.labels]),
            np.concatenate([self.u, other.u]),
        )


@dataclass(frozen=True)
class ThreeWaySplit:
    i1: np.ndarray
    i2: np.ndarray
    i3: np.ndarray

    def sizes(self) -> tuple[int, int, int]:
        return len(self.i1), len(self.i2), len(self.i3)


def three_way_split(n: int, fractions: Iterable[float], rng: RandomSource) -> ThreeWaySplit:
    """Uniformly random partition of ``range(n)`` with sizes floor(n f1), floor(n f2), rest."""
    f = tuple(float(x) for x in fractions)
    if len(f) != 3 or any(x < 0 for x in f) or abs(sum(f) - 1.0) > 1e-9:
        raise SplitError(f"fractions must be three non-negative numbers summing to 1, got {f}")
    if n < 3:
        raise SplitError(f"need n >= 3 to split three ways, got {n}")
    n1 = int(np.floor(n * f[0] + 1e-9))
    n2 = int(np.floor(n * f[1] + 1e-9))
    n3 = n - n1 - n2
    if min(n1, n2, n3) < 1:
        raise SplitError(f"split of n={n} with {f} leaves an empty part ({n1}, {n2}, {n3})")
    perm = rng.generator().permutation(n)
    return ThreeWaySplit(np.sort(perm[:n1]), np.sort(perm[n1:n1 + n2]), np.sort(perm[n1 + n2:]))


@dataclass(frozen=True)
class PredictionSet:
    """Labels kept for one test point. May be empty."""

    members: frozenset[int] = field(default_factory=frozenset)

    def __contains__(self, y) -> bool:
        return int(y) in self.members

    def __len__(self) -> int:
        return len(self.members)

    def sorted(self) -> list[int]:
        return sorted(self.members)

    @classmethod
    def from_mask(cls, mask) -> "PredictionSet":
        return cls(frozenset(int(i) for i in np.flatnonzero(mask)))
