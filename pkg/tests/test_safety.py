import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from constructions import (
    open_quadratic_instance,
    block_quadratic_instance,
    multilinear_instance,
    quadratic_block_game,
    quadratic_open_game,
    random_orthogonal,
    strongly_typed_instance,
)
from typedgames.errors import NotSymmetricError, ShapeError
from typedgames.game import Ball, Box, Quadratic, block_game, open_game
from typedgames.safety import (
    BlockWitness,
    CallableMap,
    FactorizationSpec,
    LinearMap,
    ProductMap,
    SamplerConfig,
    Verdict,
    certify_bilinear,
    certify_multilinear,
    certify_quadratic_block,
    certify_quadratic_open,
    certify_strong_typing,
    cross_safety,
    empirical_safety,
    hosvd_insufficiency_search,
    pairwise_safety_at,
    pairwise_safety_batch,
    potential_check_bilinear,
    potential_check_quadratic,
    shares_hosvd_factors,
    sign_violation,
)
from typedgames.scenarios import SWAP, get_example

seeds = st.integers(0, 2 ** 31 - 1)


# -- pairwise safety --------------------------------------------------------

def test_example3_pairwise_matrix_is_constant():
    game = get_example("ex3").game
    for w in ([0.0, 0.0], [0.3, -0.6]):
        np.testing.assert_array_equal(pairwise_safety_at(game, np.array(w)), [[1.0, 2.0], [2.0, 1.0]])


def test_example4_pairwise_entry():
    game = get_example("ex4").game
    assert pairwise_safety_at(game, np.array([1.0, 1.0]))[0, 1] == -1.0


def test_example6_pairwise_entry():
    game = get_example("ex6").game
    # <(y, 0), (y - 9, x)> = y^2 - 9y
    assert pairwise_safety_at(game, np.array([0.0, 1.0]))[0, 1] == -8.0


def test_batch_matches_pointwise():
    game, _ = strongly_typed_instance(np.random.default_rng(0))
    W = np.random.default_rng(1).standard_normal((10, game.dim))
    np.testing.assert_allclose(pairwise_safety_batch(game, W), [pairwise_safety_at(game, w) for w in W],
                               atol=1e-12)


def test_empirical_safety_verdicts():
    assert empirical_safety(get_example("ex3").game).verdict is Verdict.SAFE
    rep = empirical_safety(get_example("ex4").game)
    assert rep.verdict is Verdict.VIOLATION and rep.worst_value < 0
    rep = empirical_safety(get_example("ex6").game)
    assert rep.verdict is Verdict.VIOLATION
    assert 0 < rep.worst_point[1] < 9


def test_empirical_safety_is_deterministic():
    game = get_example("ex4").game
    a, b = empirical_safety(game, SamplerConfig(200, 7)), empirical_safety(game, SamplerConfig(200, 7))
    np.testing.assert_array_equal(a.worst_point, b.worst_point)


def test_decomposable_game_is_safe():
    game = block_game([Quadratic(np.diag([1.0, 0.0])), Quadratic(np.diag([0.0, -3.0]))], (1, 1))
    # cross terms vanish; own terms are squares
    assert empirical_safety(game).verdict is Verdict.SAFE


# -- strong typing ----------------------------------------------------------

def test_example5_is_strongly_typed():
    sc = get_example("ex5")
    assert certify_strong_typing(sc.game, sc.factorization).certified


def test_example4_natural_factorization_refuted():
    sc = get_example("ex4")
    res = certify_strong_typing(sc.game, sc.factorization)
    assert res.verdict is Verdict.REFUTED and res.violation[2] == 0


def test_non_commuting_latent_refuted():
    game = get_example("ex5").game
    Q = random_orthogonal(np.random.default_rng(0), 4)
    spec = FactorizationSpec([Q[:, :2], Q[:, 2:]], [ProductMap(), ProductMap()], [[1, 2], [3, 4]])
    res = certify_strong_typing(game, spec)
    assert res.verdict is Verdict.REFUTED and "commute" in res.reason


def test_wrong_factorization_refuted():
    game = get_example("ex5").game
    eye = np.eye(4)
    spec = FactorizationSpec([eye[:, [0, 2]], eye[:, [1, 3]]], [ProductMap(), ProductMap()], [[1, 2], [3, 5]])
    res = certify_strong_typing(game, spec)
    assert res.verdict is Verdict.REFUTED and "reproduce" in res.reason


def test_black_box_outer_maps_are_sampled():
    # l_n = h_n(x) with increasing h_n of one latent factor
    eye = np.eye(2)
    game = block_game([Quadratic(np.zeros((2, 2)), [1.0, 0.0]), Quadratic(np.zeros((2, 2)), [2.0, 0.0])], (1, 1))
    spec = FactorizationSpec([eye[:, :1], eye[:, 1:]], [LinearMap([1.0]), CallableMap(lambda x: 0.0)],
                             [lambda z: z[0], lambda z: 2 * z[0]])
    res = certify_strong_typing(game, spec)
    assert res.certified and res.empirical


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_constructed_strongly_typed_games_certify_and_are_safe(seed):
    game, spec = strongly_typed_instance(np.random.default_rng(seed))
    assert certify_strong_typing(game, spec).certified
    assert empirical_safety(game, SamplerConfig(200, seed)).worst_value >= -1e-9


def test_sign_violation_and_zero_flags():
    assert sign_violation([[1.0, 2.0], [3.0, -4.0]]) == (0, 1, 1)
    assert sign_violation([[1.0, 0.0], [3.0, -4.0]]) is None


# -- bilinear ---------------------------------------------------------------

def test_bilinear_certificate_cases():
    assert certify_bilinear(np.diag([1.0, 2.0]), np.diag([3.0, 4.0])).certified
    res = certify_bilinear(np.diag([1.0, 2.0]), np.diag([-3.0, 4.0]))
    assert res.verdict is Verdict.REFUTED and res.witness["E"][res.violation[0]] == -3.0
    res = certify_bilinear(np.diag([1.0, 2.0]), np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert res.verdict is Verdict.INCONCLUSIVE and "psd_cross_check" in res.witness


@settings(max_examples=30)
@given(seeds)
def test_bilinear_certificate_agrees_with_psd_cross_check(seed):
    rng = np.random.default_rng(seed)
    U, V = random_orthogonal(rng, 3), random_orthogonal(rng, 3)
    d, e = rng.uniform(0.2, 2, 3), rng.uniform(0.2, 2, 3) * rng.choice([-1, 1], 3)
    res = certify_bilinear(U @ np.diag(d) @ V.T, U @ np.diag(e) @ V.T)
    assert res.certified == bool(np.all(e > 0))
    assert res.witness["psd_cross_check"] == bool(np.all(e > 0))


# -- quadratic --------------------------------------------------------------

def eigenbasis_cross_term(P, diags, center, w, m, n):
    """Inner product of gradients written in the shared eigenbasis."""
    z = P.T @ (w - center)
    return float(np.sum(diags[m] * diags[n] * z ** 2))


@settings(max_examples=30)
@given(seeds)
def test_open_quadratic_round_trip_and_identity(seed):
    rng = np.random.default_rng(seed)
    mats, vecs, P, diags, b = open_quadratic_instance(rng)
    res = certify_quadratic_open(mats, vecs)
    assert res.certified
    np.testing.assert_allclose(res.witness["b"], b, atol=1e-8)
    game = quadratic_open_game(mats, vecs)
    w = rng.standard_normal(4)
    S = pairwise_safety_at(game, w)
    for m in range(3):
        for n in range(3):
            expected = eigenbasis_cross_term(P, diags, -b, w, m, n)
            assert S[m, n] == pytest.approx(expected, rel=1e-8, abs=1e-10)


def test_open_quadratic_refutations():
    P = random_orthogonal(np.random.default_rng(0), 2)
    A1, A2 = P @ np.diag([1.0, 2.0]) @ P.T, P @ np.diag([1.0, -2.0]) @ P.T
    res = certify_quadratic_open([A1, A2], [np.zeros(2)] * 2)
    assert res.verdict is Verdict.REFUTED and res.violation[2] in (0, 1)
    res = certify_quadratic_open([np.diag([1.0, 2.0]), SWAP], [np.zeros(2)] * 2)
    assert res.verdict is Verdict.REFUTED and "diagonalizable" in res.reason
    res = certify_quadratic_open([np.eye(2), np.eye(2)], [np.zeros(2), np.ones(2)])
    assert res.verdict is Verdict.REFUTED and "common b" in res.reason
    with pytest.raises(NotSymmetricError):
        certify_quadratic_open([np.array([[1.0, 1.0], [0.0, 1.0]])], [np.zeros(2)])


def test_open_quadratic_flags_zero_coordinates():
    res = certify_quadratic_open([np.diag([1.0, 0.0]), np.diag([2.0, 3.0])], [np.zeros(2)] * 2)
    assert res.certified and res.witness["zero_coordinates"] == [1]


def block_cross_term(W, center, w, m, n, sizes):
    P, R, d = W.P, W.R, W.diagonals
    z = R.T @ P.T @ (w - center)
    start = sum(sizes[:m])
    r2 = np.sum(R[start:start + sizes[m]] ** 2, axis=0)
    return float(np.sum(d[m] * d[n] * r2 * z ** 2))


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_block_quadratic_round_trip(seed):
    rng = np.random.default_rng(seed)
    sizes = (2, 3)
    mats, vecs, witness = block_quadratic_instance(rng, sizes, N=2)
    res = certify_quadratic_block(mats, vecs, sizes, witness)
    assert res.certified and res.witness["reconstruction_residual"] <= 1e-8
    searched = certify_quadratic_block(mats, vecs, sizes)
    assert searched.certified, searched.reason
    game = quadratic_block_game(mats, vecs, sizes)
    w = rng.standard_normal(5)
    S = pairwise_safety_at(game, w)
    for m in range(2):
        for n in range(2):
            assert S[m, n] == pytest.approx(block_cross_term(witness, -witness.b, w, m, n, sizes), rel=1e-8, abs=1e-10)


def test_block_quadratic_bad_witness_refuted():
    rng = np.random.default_rng(0)
    mats, vecs, W = block_quadratic_instance(rng)
    R = W.R.copy()
    R[0, 1] = 0.5  # off-diagonal entry in the first row block
    res = certify_quadratic_block(mats, vecs, (2, 3), BlockWitness(W.P, R, W.diagonals, W.b))
    assert res.verdict is Verdict.REFUTED and "diagonal" in res.reason
    d = W.diagonals.copy()
    d[0, 0] = -d[0, 0]
    res = certify_quadratic_block(mats, vecs, (2, 3), BlockWitness(W.P, W.R, d, W.b))
    assert res.verdict is Verdict.REFUTED


def test_block_quadratic_general_mixing_not_certified():
    rng = np.random.default_rng(3)
    mats = []
    for _ in range(2):
        B = rng.standard_normal((4, 4))
        mats.append(B @ B.T)
    res = certify_quadratic_block(mats, [np.zeros(4)] * 2, (2, 2))
    assert not res.certified


def test_block_quadratic_shape_check():
    with pytest.raises(ShapeError):
        certify_quadratic_block([np.eye(3)], [np.zeros(3)], (1, 1))


# -- multilinear ------------------------------------------------------------

def test_multilinear_round_trip_and_refutation():
    rng = np.random.default_rng(0)
    tensors, factors, diags = multilinear_instance(rng)
    assert certify_multilinear(tensors, factors, diags).certified
    bad = diags.copy()
    bad[1, 0] *= -1
    tensors[1] = tensors[1] - 2 * diags[1, 0] * np.einsum("i,j,k->ijk", *[U[:, 0] for U in factors])
    res = certify_multilinear(tensors, factors, bad)
    assert res.verdict is Verdict.REFUTED and res.violation[2] == 0


def test_multilinear_mismatched_factors_refuted():
    rng = np.random.default_rng(1)
    tensors, factors, diags = multilinear_instance(rng)
    res = certify_multilinear([tensors[0] + 0.1], factors, diags[:1])
    assert res.verdict is Verdict.REFUTED


def test_multilinear_cross_terms_identity():
    rng = np.random.default_rng(2)
    tensors, factors, diags = multilinear_instance(rng)
    actions = [rng.standard_normal(3) for _ in range(3)]
    for n in range(3):
        dots = np.array([[U[:, l] @ a for l in range(2)] for k, (U, a) in enumerate(zip(factors, actions)) if k != n])
        expected = np.sum(diags[0] * diags[1] * np.prod(dots ** 2, axis=0))
        assert cross_safety(tensors[0], tensors[1], actions, n) == pytest.approx(expected, rel=1e-8)


# -- potential games --------------------------------------------------------

def test_example5_not_potential_example6_potential():
    assert not potential_check_bilinear(np.diag([1.0, 2.0]), np.diag([3.0, 4.0])).is_potential
    res = potential_check_quadratic(get_example("ex6").game)
    assert res.is_potential and res.weights == (1.0, 1.0)


@settings(max_examples=30)
@given(seeds)
def test_weighted_potential_property(seed):
    rng = np.random.default_rng(seed)
    A1 = rng.standard_normal((3, 3))
    c = rng.uniform(0.2, 3)
    A1 = A1 + A1.T
    A2 = rng.standard_normal((3, 3))
    A2 = A2 + A2.T
    A2[:1, 1:] = c * A1[:1, 1:]
    A2[1:, :1] = c * A1[1:, :1]
    game = block_game([Quadratic(A1, rng.standard_normal(3)), Quadratic(A2, rng.standard_normal(3))], (1, 2))
    res = potential_check_quadratic(game)
    assert res.is_potential and res.ratio == pytest.approx(c)
    w = rng.standard_normal(3)
    for n, sl in enumerate((slice(0, 1), slice(1, 3))):
        v = w.copy()
        v[sl] += rng.standard_normal(v[sl].size)
        lhs = game.losses[n].value(v) - game.losses[n].value(w)
        rhs = res.weights[n] * (res.potential(v) - res.potential(w))
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


def test_potential_edge_cases():
    z = np.zeros((2, 2))
    assert potential_check_bilinear(z, z).is_potential
    assert not potential_check_bilinear(z, np.eye(2)).is_potential
    assert not potential_check_bilinear(np.eye(2), -np.eye(2)).is_potential


# -- shared HOSVD factors do not imply safety -------------------------------

def test_hosvd_insufficiency_witness():
    wit = hosvd_insufficiency_search(seed=0, trials=2000)
    assert wit is not None and wit.value < 0
    assert shares_hosvd_factors(wit.A, wit.B)
    assert cross_safety(wit.A, wit.B, wit.point, wit.mode) == pytest.approx(wit.value)


def test_same_sign_tensor_svd_never_violates():
    assert hosvd_insufficiency_search(seed=1, trials=300, kind="tensor_svd", points=3) is None
    assert hosvd_insufficiency_search(seed=1, trials=100, kind="zero") is None
