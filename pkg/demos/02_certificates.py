"""Certificates for quadratic and multilinear games, and where they stop.

Run with ``python3 demos/02_certificates.py``.
"""
import numpy as np

from typedgames import SamplerConfig, empirical_safety, open_game
from typedgames.game import Multilinear, Quadratic, block_game
from typedgames.safety import (
    certify_multilinear,
    certify_quadratic_block,
    certify_quadratic_open,
    hosvd_insufficiency_search,
    shares_hosvd_factors,
)
from typedgames.tensor import TensorSVDFactors, compose_tensor_svd


def random_orthogonal(rng, n):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def shared_eigenbasis(rng):
    # three losses that commute, agree in sign along every eigenvector and share a center
    P = random_orthogonal(rng, 4)
    signs = np.array([1.0, -1.0, 1.0, 1.0])
    mats = [P @ np.diag(signs * rng.uniform(0.5, 2, 4)) @ P.T for _ in range(3)]
    b = rng.standard_normal(4)
    res = certify_quadratic_open(mats, [A @ b for A in mats])
    print("open quadratic game, shared eigenbasis")
    print(f"  verdict: {res.verdict.value}; recovered offset error "
          f"{np.linalg.norm(res.witness['b'] - b):.1e}")

    # flip one eigenvalue of one loss
    flipped = mats[:2] + [P @ np.diag(-signs * rng.uniform(0.5, 2, 4)) @ P.T]
    res = certify_quadratic_open(flipped, [np.zeros(4)] * 3)
    print(f"  one loss flipped: {res.verdict.value} ({res.reason})")


def block_views(rng):
    # each player sees a rotated, rescaled view of the same three latent directions
    sizes, L = (2, 3), 3
    P = np.zeros((5, 5))
    R = np.zeros((5, L))
    P[:2, :2], P[2:, 2:] = random_orthogonal(rng, 2), random_orthogonal(rng, 3)
    R[[0, 1], [0, 1]] = rng.uniform(0.5, 2, 2)
    R[[2, 3, 4], [0, 1, 2]] = rng.uniform(0.5, 2, 3)
    mats = [P @ R @ np.diag(rng.uniform(0.5, 2, L)) @ R.T @ P.T for _ in sizes]
    res = certify_quadratic_block(mats, [np.zeros(5)] * 2, sizes)
    print("block quadratic game with nested views (witness found by search)")
    print(f"  verdict: {res.verdict.value}")

    general = [B @ B.T for B in rng.standard_normal((2, 5, 5))]
    res = certify_quadratic_block(general, [np.zeros(5)] * 2, sizes)
    print(f"  unstructured couplings: {res.verdict.value}")


def multilinear(rng):
    factors = [random_orthogonal(rng, 3)[:, :2] for _ in range(3)]
    diags = np.array([[1.0, -2.0], [0.5, -1.0], [3.0, -0.2]])
    tensors = [compose_tensor_svd(TensorSVDFactors(factors, d)) for d in diags]
    res = certify_multilinear(tensors, factors, diags)
    game = block_game([Multilinear(T) for T in tensors], (3, 3, 3))
    rep = empirical_safety(game, SamplerConfig(1000, 0))
    print("three-player multilinear game with shared tensor-SVD factors")
    print(f"  verdict: {res.verdict.value}; sampled minimum {rep.worst_value:.2e}")

    wit = hosvd_insufficiency_search(seed=0, trials=2000)
    print("  sharing HOSVD factors alone is not enough:")
    print(f"    pair shares factors: {shares_hosvd_factors(wit.A, wit.B)};"
          f" cross term {wit.value:.3f} in mode {wit.mode}")


def pca_style_game(rng):
    # maximizing w^T C_n w over the unit ball for covariances with a shared eigenbasis
    P = random_orthogonal(rng, 3)
    mats = [-(P @ np.diag(rng.uniform(0.1, 3, 3)) @ P.T) for _ in range(4)]
    game = open_game([Quadratic(A) for A in mats], 3)
    rep = empirical_safety(game, SamplerConfig(1000, 1))
    print("four PCA objectives with a shared eigenbasis")
    print(f"  sampled verdict: {rep.verdict.value}")


if __name__ == "__main__":
    rng = np.random.default_rng(0)
    shared_eigenbasis(rng)
    block_views(rng)
    multilinear(rng)
    pca_style_game(rng)
