"""Vectorised numpy implementation of the row kernels.

Mirrors ``_ckernels.pyx`` function for function. Inputs are 2-d float64
arrays of shape (n, K); score kinds use the integer codes in ``kernels.py``.
"""
import numpy as np

THR, APS, RAPS, SAPS, RANK = range(5)


def softmax_rows(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def entropy_rows(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e.sum(axis=1)
    h = np.log(s) - (e * shifted).sum(axis=1) / s
    return np.maximum(h, 0.0)


def er_prob_rows(z, temperature, floor):
    h = np.maximum(entropy_rows(z), floor)
    return softmax_rows(z * (1.0 / (h * temperature))[:, None])


def _sorted_scores(sp, u, kind, lam, k_reg):
    """Scores in sorted coordinates: column j holds the score of the rank-(j+1) class."""
    n, k = sp.shape
    pos = np.arange(k)
    head = np.zeros_like(sp)
    np.cumsum(sp[:, :-1], axis=1, out=head[:, 1:])
    if kind == APS:
        return head + u[:, None] * sp
    if kind == RAPS:
        return (head + u[:, None] * sp) + lam * np.maximum(pos - k_reg, 0)
    if kind == SAPS:
        out = sp[:, :1] + (pos - 1 + u[:, None]) * lam
        out[:, 0] = u * sp[:, 0]
        return out
    if kind == RANK:
        return np.broadcast_to((pos + 1) / k, (n, k)).copy()
    raise ValueError(f"unknown score kind {kind}")


def score_matrix(p, u, kind, lam, k_reg):
    if kind == THR:
        return 1.0 - p
    order = np.argsort(-p, axis=1, kind="stable")
    sp = np.take_along_axis(p, order, axis=1)
    ss = _sorted_scores(sp, u, kind, lam, k_reg)
    out = np.empty_like(p)
    np.put_along_axis(out, order, ss, axis=1)
    return out


def label_scores(p, labels, u, kind, lam, k_reg):
    full = score_matrix(p, u, kind, lam, k_reg)
    return full[np.arange(p.shape[0]), labels]
