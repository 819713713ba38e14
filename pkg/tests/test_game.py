import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from constructions import rotated_block_type
from typedgames.errors import InfeasibleError, LossEvaluationError, ShapeError
from typedgames.game import (
    Ball,
    Bilinear,
    BlackBox,
    BlockBall,
    BlockSimplex,
    Box,
    Game,
    Multilinear,
    Quadratic,
    TypeStructure,
    Unconstrained,
    block_game,
    feasible_point,
    gradient,
    is_decomposable,
    loss_eval,
    open_game,
    project_simplex,
    projected_player_gradient,
)
from typedgames.scenarios import SWAP

seeds = st.integers(0, 2 ** 31 - 1)


def central_difference(f, w, h=1e-6):
    g = np.zeros_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (f(w + e) - f(w - e)) / (2 * h)
    return g


def ex3():
    return block_game([Quadratic(np.zeros((2, 2)), [1, 2]), Quadratic(np.zeros((2, 2)), [2, 1])], (1, 1),
                      Ball(np.zeros(2)))


def test_type_structure_validation():
    with pytest.raises(ValueError):
        TypeStructure((np.eye(2)[:, :1],))  # does not sum to identity
    with pytest.raises(ValueError):
        TypeStructure((np.eye(2)[:, :1], np.eye(2)[:, :1]))
    t = TypeStructure.block((2, 1))
    assert t.rank == 2 and t.dim == 3
    np.testing.assert_array_equal(t.matrix(0) + t.matrix(1), np.eye(3))


def test_rotated_type_structure_is_valid():
    t = rotated_block_type(np.random.default_rng(0), (2, 2))
    np.testing.assert_allclose(t.matrix(0) @ t.matrix(1), 0.0, atol=1e-12)


def test_example3_losses_and_projected_gradients():
    g = ex3()
    w = np.array([1.0, 1.0])
    assert loss_eval(g, 0, w) == 3.0 and loss_eval(g, 1, w) == 3.0
    np.testing.assert_array_equal(projected_player_gradient(g, 0, np.array([0.3, -0.2])), [1.0, 0.0])


def test_example4_gradients():
    g = block_game([Quadratic(SWAP), Quadratic(-SWAP)], (1, 1))
    x, y = 0.7, -1.3
    np.testing.assert_allclose(gradient(g, 0, np.array([x, y])), [y, x])
    np.testing.assert_allclose(projected_player_gradient(g, 0, np.array([1.0, 1.0])), [1.0, 0.0])


def test_decomposability():
    decomposable = block_game([Quadratic(np.diag([1.0, 0.0])), Quadratic(np.diag([0.0, 2.0]))], (1, 1))
    pts = np.random.default_rng(0).standard_normal((20, 2))
    assert is_decomposable(decomposable, pts)
    ex4 = block_game([Quadratic(SWAP), Quadratic(-SWAP)], (1, 1))
    assert not is_decomposable(ex4, np.array([[1.0, 1.0]]))
    with pytest.raises(ValueError):
        is_decomposable(open_game([Quadratic(np.eye(2))] * 2, 2), pts)


def test_game_validation():
    with pytest.raises(ShapeError):
        block_game([Quadratic(np.eye(3))], (1, 1))
    with pytest.raises(ShapeError):
        Game(TypeStructure.open(2), (0, 0), (Quadratic(np.eye(2)),))
    with pytest.raises(ValueError):
        Game(TypeStructure.open(2), (1,), (Quadratic(np.eye(2)),))


def test_feasible_point():
    with pytest.raises(InfeasibleError):
        feasible_point(ex3(), [2.0, 0.0])


@given(seeds)
def test_simplex_projection_properties(seed):
    rng = np.random.default_rng(seed)
    v = 3 * rng.standard_normal(5)
    p = project_simplex(v)
    assert p.min() >= 0 and p.sum() == pytest.approx(1.0)
    # optimality: <v - p, q - p> <= 0 for every vertex q
    for q in np.eye(5):
        assert (v - p) @ (q - p) <= 1e-10


def test_simplex_projection_fixed_point():
    p = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(project_simplex(p), p)


@pytest.mark.parametrize("H", [
    Ball(np.zeros(3), 2.0),
    Box(-np.ones(3), np.ones(3)),
    BlockSimplex((1, 2)),
    BlockBall((2, 1), 1.5),
])
def test_feasible_sets_sample_inside_and_project_idempotently(H):
    rng = np.random.default_rng(0)
    for x in H.sample(rng, 100):
        assert H.contains(x)
    for x in 5 * rng.standard_normal((50, 3)):
        p = H.project(x)
        assert H.contains(p)
        np.testing.assert_allclose(H.project(p), p, atol=1e-12)


def test_unconstrained_cannot_sample():
    with pytest.raises(ValueError):
        Unconstrained().sample(np.random.default_rng(0), 1)


def _families(rng):
    D = 4
    A = rng.standard_normal((D, D))
    T = rng.standard_normal((2, 3, 2))
    return [
        (Quadratic(A, rng.standard_normal(D)), D),
        (Bilinear(rng.standard_normal((2, 3))), 5),
        (Multilinear(T), 7),
        (BlackBox(lambda w: np.sin(w).sum() + w[0] ** 2 * w[1]), 3),
    ]


@settings(max_examples=25)
@given(seeds)
def test_gradients_match_central_differences(seed):
    rng = np.random.default_rng(seed)
    for loss, D in _families(rng):
        w = rng.standard_normal(D)
        fd = central_difference(loss.value, w)
        assert np.linalg.norm(loss.gradient(w) - fd) <= 1e-6 * max(1.0, np.linalg.norm(fd))


@settings(max_examples=25)
@given(seeds)
def test_hessians_match_differences_of_gradients(seed):
    rng = np.random.default_rng(seed)
    for loss, D in _families(rng)[:3]:
        w = rng.standard_normal(D)
        H = np.array([central_difference(lambda v: loss.gradient(v)[i], w) for i in range(D)])
        np.testing.assert_allclose(loss.hessian(w), H, atol=1e-6 * max(1.0, np.abs(H).max()))


def test_gradient_batch_matches_pointwise():
    rng = np.random.default_rng(4)
    for loss, D in _families(rng)[:3]:
        W = rng.standard_normal((6, D))
        np.testing.assert_allclose(loss.gradient_batch(W), [loss.gradient(w) for w in W], atol=1e-12)


def test_black_box_failures_surface():
    bad = BlackBox(lambda w: float("nan"))
    with pytest.raises(LossEvaluationError):
        bad.value(np.zeros(2))
    boom = BlackBox(lambda w: 1 / 0)
    with pytest.raises(LossEvaluationError):
        boom.gradient(np.zeros(2))


def test_quadratic_symmetrizes():
    q = Quadratic(np.array([[0.0, 2.0], [0.0, 0.0]]))
    np.testing.assert_array_equal(q.A, SWAP)
