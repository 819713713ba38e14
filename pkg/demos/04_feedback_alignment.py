"""Feedback alignment: when does a fixed feedback matrix still point downhill?

Run with ``python3 demos/04_feedback_alignment.py``.
"""
import numpy as np

from typedgames.nn import LayerPair, alignment_angle, fa_safety


def main():
    rng = np.random.default_rng(0)
    W = rng.standard_normal((4, 2)) @ rng.standard_normal((2, 3))  # rank 2
    errors = rng.standard_normal((1000, 4))

    for label, pair in [
        ("scaled pseudoinverse (alpha = 2)", LayerPair.aligned(W, 2.0)),
        ("random feedback", LayerPair(W, rng.standard_normal((3, 4)))),
        ("negated pseudoinverse", LayerPair.aligned(W, -1.0)),
    ]:
        values = np.array([fa_safety(pair, e) for e in errors])
        angles = np.array([alignment_angle(pair, e) for e in errors if np.linalg.norm(W.T @ e) > 1e-12])
        print(label)
        print(f"  fraction of errors with a descent update: {np.mean(values >= 0):.3f}")
        print(f"  median angle to the backpropagated signal: {np.median(angles):.1f} deg")


if __name__ == "__main__":
    main()
