"""Named example scenarios.

``ex3`` .. ``ex6`` are small two-player games, ``saddle`` is a one-player
quadratic saddle used to show Newton's method can be unsafe, ``fa`` is a
feedback-alignment sweep and ``bss-open``, ``bss-block``, ``ica`` are the
source-separation pipelines.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import DynamicsConfig
from .game import Ball, Bilinear, Box, Quadratic, block_game, open_game
from .safety import FactorizationSpec, LinearMap, ProductMap
from .second_order import newton_step

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])  # 1/2 w^T SWAP w = x y


def newton_direction(game, m, w):
    return newton_step(game.losses[m], w)


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    kind: str = "game"
    game: object = None
    start: Optional[np.ndarray] = None
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    region: object = None
    factorization: Optional[FactorizationSpec] = None
    direction: Optional[Callable] = None
    params: dict = field(default_factory=dict)


def _ex3():
    game = block_game([Quadratic(np.zeros((2, 2)), [1.0, 2.0]), Quadratic(np.zeros((2, 2)), [2.0, 1.0])],
                      (1, 1), Ball(np.zeros(2), 1.0))
    eye = np.eye(2)
    spec = FactorizationSpec([eye[:, :1], eye[:, 1:]], [LinearMap([1.0]), LinearMap([1.0])],
                             [[1.0, 2.0], [2.0, 1.0]])
    return Scenario("ex3", game=game, start=np.array([0.5, 0.5]), factorization=spec,
                    dynamics=DynamicsConfig(step="decaying"))


def _ex4():
    game = block_game([Quadratic(SWAP), Quadratic(-SWAP)], (1, 1))
    spec = FactorizationSpec([np.eye(2)], [ProductMap()], [[1.0], [-1.0]])
    return Scenario("ex4", game=game, start=np.array([1.0, 0.0]), factorization=spec,
                    dynamics=DynamicsConfig(step="constant", eta=0.1, max_rounds=200))


def _ex5():
    game = block_game([Bilinear(np.diag([1.0, 2.0])), Bilinear(np.diag([3.0, 4.0]))], (2, 2))
    eye = np.eye(4)
    spec = FactorizationSpec([eye[:, [0, 2]], eye[:, [1, 3]]], [ProductMap(), ProductMap()],
                             [[1.0, 2.0], [3.0, 4.0]])
    return Scenario("ex5", game=game, start=np.full(4, 0.5), factorization=spec,
                    region=Ball(np.zeros(4), 1.0),
                    dynamics=DynamicsConfig(step="constant", eta=0.05, max_rounds=200))


def _ex6():
    box = Box([-1.0, 0.0], [1.0, 9.0])
    game = block_game([Quadratic(SWAP), Quadratic(SWAP, [-9.0, 0.0])], (1, 1), box)
    return Scenario("ex6", game=game, start=np.array([0.5, 4.5]),
                    dynamics=DynamicsConfig(step="decaying", max_rounds=2000))


def _saddle():
    game = open_game([Quadratic(np.diag([1.0, -1.0]))], 2)
    return Scenario("saddle", game=game, start=np.array([1.0, 2.0]), direction=newton_direction,
                    region=Ball(np.zeros(2), 3.0),
                    dynamics=DynamicsConfig(step="constant", eta=0.1, max_rounds=100))


EXAMPLES = {
    "ex3": _ex3,
    "ex4": _ex4,
    "ex5": _ex5,
    "ex6": _ex6,
    "saddle": _saddle,
    "fa": lambda: Scenario("fa", kind="fa", params=dict(inputs=3, outputs=4, rank=2, alpha=1.0, samples=1000)),
    "bss-open": lambda: Scenario("bss-open", kind="bss",
                                 params=dict(mode="open", D=4, batches=3, T=2000, dist="uniform")),
    "bss-block": lambda: Scenario("bss-block", kind="bss",
                                  params=dict(mode="block", sizes=(2, 3), L=3, T=2000, dist="uniform")),
    "ica": lambda: Scenario("ica", kind="bss",
                            params=dict(mode="ica", D=3, T=100_000, dist=["two-point", "uniform", "laplace"])),
}


def get_example(name):
    try:
        return EXAMPLES[name]()
    except KeyError:
        raise KeyError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}") from None
