"""Feedback alignment at the scale of a single layer.

Backpropagation sends the error ``e`` back through ``W^T``; feedback
alignment uses fixed weights ``B`` instead.  The update is safe whenever
``<B e, W^T e>`` is nonnegative, which holds for ``B = alpha W^+``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .linalg import as_matrix

PINV_RCOND = 1e-12


def pseudoinverse(W):
    """Moore-Penrose pseudoinverse with a relative singular-value cutoff of 1e-12."""
    return np.linalg.pinv(as_matrix(W, "W"), rcond=PINV_RCOND)


@dataclass(frozen=True, eq=False)
class LayerPair:
    """Forward weights ``W`` (out x in) and feedback weights ``B`` (in x out)."""

    W: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        W, B = as_matrix(self.W, "W"), as_matrix(self.B, "B")
        if B.shape != W.T.shape:
            raise ShapeError(f"feedback weights must have shape {W.T.shape}, got {B.shape}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "B", B)

    @classmethod
    def aligned(cls, W, alpha=1.0):
        """Feedback ``B = alpha W^+``."""
        return cls(W, alpha * pseudoinverse(W))


def _error(pair, e):
    e = np.asarray(e, dtype=float).ravel()
    if e.size != pair.W.shape[0]:
        raise ShapeError(f"error vector has length {e.size}, expected {pair.W.shape[0]}")
    return e


def deltas(pair, e):
    """``(W^T e, B e)``: the backpropagated and the feedback-alignment signals."""
    e = _error(pair, e)
    return pair.W.T @ e, pair.B @ e


def fa_safety(pair, e):
    """``<delta_FA, delta_BP>``."""
    bp, fa = deltas(pair, e)
    return float(fa @ bp)


def alignment_angle(pair, e):
    """Angle in degrees between the two signals; undefined if either vanishes."""
    bp, fa = deltas(pair, e)
    nb, nf = np.linalg.norm(bp), np.linalg.norm(fa)
    if nb == 0 or nf == 0:
        raise ValueError("angle is undefined for a zero error signal")
    return float(np.degrees(np.arccos(np.clip(fa @ bp / (nb * nf), -1.0, 1.0))))
