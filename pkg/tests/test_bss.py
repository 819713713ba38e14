import itertools

import numpy as np
import pytest
from scipy.stats import kurtosis

from constructions import random_orthogonal
from typedgames.bss import (
    EXCESS_KURTOSIS,
    MixingModel,
    SignalBatch,
    block_view_demo,
    certify_pca,
    covariance,
    fourth_cumulant_tensor,
    generate_sources,
    match_columns,
    mix,
    pca_game,
    recover_mixing,
    shared_mixing_batches,
    whiten,
)
from typedgames.errors import DegenerateSpectrumError, ShapeError, WhiteningError
from typedgames.safety import SamplerConfig, Verdict, empirical_safety
from typedgames.tensor import n_mode_product

DISTINCT = ["two-point", "uniform", "laplace"]


@pytest.mark.parametrize("dist", ["uniform", "two-point", "laplace", "gaussian"])
def test_source_moments(dist):
    S = generate_sources(1, 100_000, dist, seed=0).data[0]
    assert abs(S.mean()) < 0.02 and abs(S.var() - 1.0) < 0.02
    tol = 0.15 if dist == "laplace" else 0.05  # heavier tails, slower concentration
    assert kurtosis(S) == pytest.approx(EXCESS_KURTOSIS[dist], abs=tol)


def test_sources_are_deterministic_and_validated():
    a = generate_sources(2, 50, "uniform", seed=3).data
    np.testing.assert_array_equal(a, generate_sources(2, 50, "uniform", seed=3).data)
    assert generate_sources(2, 1, "uniform").data.shape == (2, 1)
    with pytest.raises(ValueError):
        generate_sources(1, 10, "cauchy")
    with pytest.raises(ShapeError):
        generate_sources(2, 10, ["uniform"])


def test_decorrelated_sources_have_identity_gram():
    S = generate_sources(3, 500, DISTINCT, seed=1, decorrelate=True).data
    np.testing.assert_allclose(S @ S.T / 500, np.eye(3), atol=1e-12)


def test_mix_identity_and_noise():
    S = generate_sources(2, 100, "uniform", seed=0)
    np.testing.assert_array_equal(mix(MixingModel(np.eye(2)), S).data, S.data)
    noisy = mix(MixingModel(np.eye(2), noise=0.1, seed=4), S)
    assert 0 < np.abs(noisy.data - S.data).max() < 1.0
    with pytest.raises(ShapeError):
        mix(MixingModel(np.eye(3)), S)


def test_orthogonal_mixing_covariance():
    M = MixingModel.orthogonal(3, seed=2)
    S = generate_sources(3, 20_000, DISTINCT, seed=5)
    C = covariance(mix(M, S), normalized=True)
    np.testing.assert_allclose(C, M.M @ covariance(S, normalized=True) @ M.M.T, atol=1e-10)
    np.testing.assert_allclose(C, np.eye(3), atol=0.05)


def test_mixing_structure_checks():
    with pytest.raises(ShapeError):
        MixingModel(np.array([[1.0, 1.0], [0.0, 1.0]]), "orthogonal")
    with pytest.raises(ShapeError):
        MixingModel(np.eye(2), "block_view")
    with pytest.raises(ShapeError):
        MixingModel.block_view((4,), 3)
    model = MixingModel.block_view((2, 3), 3, seed=0)
    assert model.sizes == (2, 3)


def test_covariance_properties():
    np.testing.assert_array_equal(covariance(np.eye(3)), np.eye(3))
    x = np.array([[1.0], [2.0]])
    assert np.linalg.matrix_rank(covariance(x)) == 1
    C = covariance(np.random.default_rng(0).standard_normal((4, 30)))
    np.testing.assert_allclose(C, C.T, atol=1e-12)
    assert np.linalg.eigvalsh(C).min() >= -1e-12


def test_cumulant_is_exactly_symmetric():
    X = np.random.default_rng(0).standard_normal((3, 200)) ** 3
    K = fourth_cumulant_tensor(X)
    for perm in itertools.permutations(range(4)):
        np.testing.assert_array_equal(K, K.transpose(perm))


def test_cumulant_matches_scalar_formula():
    # single channel: fourth cumulant = m4 - 3 m2^2 of the centered data
    x = np.random.default_rng(1).exponential(size=500)
    c = x - x.mean()
    K = fourth_cumulant_tensor(x[None, :])
    assert K[0, 0, 0, 0] == pytest.approx(np.mean(c ** 4) - 3 * np.mean(c ** 2) ** 2, rel=1e-12)


def test_gaussian_cumulant_vanishes():
    X = generate_sources(3, 100_000, "gaussian", seed=2).data
    assert np.abs(fourth_cumulant_tensor(X)).max() < 0.1


def test_cumulant_population_consistency():
    P = random_orthogonal(np.random.default_rng(3), 3)
    X = P @ generate_sources(3, 100_000, DISTINCT, seed=4).data
    K = fourth_cumulant_tensor(X)
    core = np.zeros((3,) * 4)
    for i, d in enumerate(DISTINCT):
        core[(i,) * 4] = EXCESS_KURTOSIS[d]
    expected = core
    for n in range(4):
        expected = n_mode_product(expected, P, n)
    assert np.linalg.norm(K - expected) <= 0.1 * np.linalg.norm(expected)


def test_whitening_gives_identity():
    X = np.random.default_rng(5).standard_normal((3, 3)) @ generate_sources(3, 1000, "uniform", seed=5).data
    Z, root = whiten(X)
    np.testing.assert_allclose(Z @ Z.T / Z.shape[1], np.eye(3), atol=1e-8)
    Xc = X - X.mean(axis=1, keepdims=True)
    np.testing.assert_allclose(root @ Z, Xc, atol=1e-8)
    with pytest.raises(WhiteningError):
        whiten(np.vstack([X[0], X[0]]))


def test_csv_round_trip(tmp_path):
    batch = generate_sources(2, 7, "laplace", seed=9)
    path = tmp_path / "batch.csv"
    batch.to_csv(path)
    assert path.read_text().splitlines()[0] == "2,7,9,laplace"
    back = SignalBatch.from_csv(path)
    np.testing.assert_array_equal(back.data, batch.data)
    assert back.seed == 9 and back.dist == "laplace"


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(5))
def test_recovery_within_five_degrees(seed):
    M = MixingModel.orthogonal(3, seed=seed)
    X = mix(M, generate_sources(3, 100_000, DISTINCT, seed=seed + 100))
    res = recover_mixing(X, truth=M.M)
    assert res.reliable
    assert res.angles.max() < 5.0
    # the Laplace kurtosis estimate has standard deviation near 0.1 at this T
    np.testing.assert_allclose(np.sort(res.kurtosis), sorted(EXCESS_KURTOSIS[d] for d in DISTINCT), atol=0.4)


def test_recovery_with_identity_mixing():
    X = generate_sources(2, 100_000, ["two-point", "laplace"], seed=1)
    res = recover_mixing(X, truth=np.eye(2))
    assert res.reliable and res.angles.max() < 5.0


def test_gaussian_sources_flagged_unreliable():
    X = mix(MixingModel.orthogonal(3, seed=0), generate_sources(3, 100_000, "gaussian", seed=1))
    res = recover_mixing(X)
    assert not res.reliable and "Gaussian" in res.reason
    assert np.abs(res.kurtosis).min() < 0.1


def test_identical_kurtoses_are_not_identifiable():
    X = generate_sources(2, 100_000, "two-point", seed=2)
    with pytest.raises(DegenerateSpectrumError):
        recover_mixing(X)


def test_match_columns_handles_permutation_and_sign():
    Q = random_orthogonal(np.random.default_rng(0), 3)
    angles, cols = match_columns(-Q[:, [2, 0, 1]], Q)
    np.testing.assert_allclose(angles, 0.0, atol=1e-6)
    assert list(cols) == [1, 2, 0]


# -- PCA games --------------------------------------------------------------

def test_shared_mixing_pca_game_is_certified_and_safe():
    model = MixingModel.orthogonal(4, seed=1)
    batches = shared_mixing_batches(model, 3, 2000, seed=1)
    assert certify_pca(batches).certified
    rep = empirical_safety(pca_game(batches, normalized=True), SamplerConfig(1000, 0))
    assert rep.worst_value >= -1e-6


def test_different_mixings_are_not_certified():
    # anisotropic spectra in unrelated bases make C_a C_b indefinite
    rng = np.random.default_rng(0)
    scale = np.diag([3.0, 1.0, 0.1])
    a = shared_mixing_batches(MixingModel(random_orthogonal(rng, 3) @ scale), 1, 500, seed=1)
    b = shared_mixing_batches(MixingModel(random_orthogonal(rng, 3) @ scale), 1, 500, seed=2)
    assert not certify_pca(a + b).certified
    rep = empirical_safety(pca_game(a + b, normalized=True), SamplerConfig(1000, 0))
    assert rep.verdict is Verdict.VIOLATION


def test_single_batch_pca_game_moves_toward_top_component():
    batch = shared_mixing_batches(MixingModel.orthogonal(3, seed=4), 1, 500, seed=4)
    game = pca_game(batch)
    C = covariance(batch[0])
    w = np.full(3, 0.1)
    # minimizing -1/2 w^T C w: the gradient step follows C w
    np.testing.assert_allclose(-game.losses[0].gradient(w), C @ w)
    with pytest.raises(ShapeError):
        pca_game([np.ones((2, 3)), np.ones((3, 3))])


def test_block_view_pipeline():
    report = block_view_demo(MixingModel.block_view((2, 3), 3, seed=0), T=1000, samples=500, rounds=500)
    assert report.certificate.certified
    assert report.safety.verdict is Verdict.SAFE


def test_block_view_single_view():
    report = block_view_demo(MixingModel.block_view((3,), 3, seed=1), T=500, samples=200, rounds=200)
    assert report.certificate.certified


def test_general_mixing_block_game_not_certified():
    rng = np.random.default_rng(2)
    general = MixingModel(rng.standard_normal((4, 3)))
    object.__setattr__(general, "blocks", ((np.eye(2), np.zeros((2, 3))), (np.eye(2), np.zeros((2, 3)))))
    report = block_view_demo(general, T=500, samples=200, rounds=100)
    assert not report.certificate.certified
