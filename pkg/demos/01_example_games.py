"""Four small two-player games and what gradient play does in each.

Run with ``python3 demos/01_example_games.py``.
"""
import numpy as np

from typedgames import (
    DynamicsConfig,
    SamplerConfig,
    certify_strong_typing,
    descent_direction_check,
    empirical_safety,
    nash_check,
    potential_check_bilinear,
    potential_check_quadratic,
    simulate,
)
from typedgames.scenarios import get_example


def linear_game():
    # l_1 = x + 2y, l_2 = 2x + y on the unit disc: each player only pushes its own
    # coordinate down, and the pushes never conflict
    sc = get_example("ex3")
    traj = simulate(sc.game, sc.start, DynamicsConfig(max_rounds=10_000))
    print("linear game")
    print(f"  stopped after {traj.rounds} rounds ({traj.reason}) at {np.round(traj.final, 6)}")
    print(f"  Nash at the end point: {all(v.is_nash for v in nash_check(sc.game, traj.final))}")
    print(f"  smallest cross term of the potential gradient: {descent_direction_check(sc.game, sc.start):.3f}")


def zero_sum_game():
    # l_1 = xy, l_2 = -xy: simultaneous steps rotate and the radius grows every round
    sc = get_example("ex4")
    traj = simulate(sc.game, sc.start, sc.dynamics)
    r = np.linalg.norm(traj.points, axis=1)
    rep = empirical_safety(sc.game, SamplerConfig(1000, 0))
    print("zero-sum bilinear game")
    print(f"  radius {r[0]:.3f} -> {r[-1]:.3f} after {traj.rounds} rounds")
    print(f"  sampled verdict: {rep.verdict.value}, worst inner product {rep.worst_value:.3f}"
          f" at {np.round(rep.worst_point, 3)}")


def typed_but_not_potential():
    sc = get_example("ex5")
    cert = certify_strong_typing(sc.game, sc.factorization)
    pot = potential_check_bilinear(sc.game.losses[0].A, sc.game.losses[1].A)
    print("bilinear game with diagonal couplings diag(1, 2) and diag(3, 4)")
    print(f"  factorization certificate: {cert.verdict.value}")
    print(f"  weighted potential game: {pot.is_potential}")


def potential_but_unsafe():
    sc = get_example("ex6")
    pot = potential_check_quadratic(sc.game)
    rep = empirical_safety(sc.game, SamplerConfig(1000, 0))
    print("potential game on the box [-1, 1] x [0, 9]")
    print(f"  weighted potential game: {pot.is_potential} with weights {pot.weights}")
    print(f"  sampled verdict: {rep.verdict.value} at {np.round(rep.worst_point, 3)}")


if __name__ == "__main__":
    linear_game()
    zero_sum_game()
    typed_but_not_potential()
    potential_but_unsafe()
