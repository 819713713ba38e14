"""Projected gradient play, potential tracking and brute-force Nash checks.

Each round every player steps along its projected gradient and the joint
action is projected back onto the feasible set once.
"""
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, LossEvaluationError
from .game import feasible_point, gradient, loss_eval
from .safety import pairwise_safety_at


@dataclass(frozen=True)
class DynamicsConfig:
    """Step schedule and stopping rule.

    ``eta`` is the constant step, or the constant ``c`` of the decaying
    schedule ``c / sqrt(t)``; when omitted it defaults to 0.1 (constant) or
    ``0.1 * diam(H)`` (decaying, 0.1 for unbounded sets).
    """

    step: str = "decaying"
    eta: Optional[float] = None
    max_rounds: int = 10_000
    tol: float = 1e-8
    weights: Optional[tuple] = None
    seed: int = 0
    update: str = "simultaneous"

    def __post_init__(self):
        if self.step not in ("constant", "decaying"):
            raise ConfigError(f"unknown step schedule {self.step!r}")
        if self.update not in ("simultaneous", "round_robin"):
            raise ConfigError(f"unknown update rule {self.update!r}")
        if self.eta is not None and not self.eta > 0:
            raise ConfigError("step size must be positive")
        if self.max_rounds < 0:
            raise ConfigError("max_rounds must be nonnegative")
        if not self.tol >= 0:
            raise ConfigError("tol must be nonnegative")
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(a) for a in self.weights))
            if any(not a > 0 for a in self.weights):
                raise ConfigError("player weights must be strictly positive")

    def step_size(self, t, feasible):
        if self.step == "constant":
            return self.eta or 0.1
        c = self.eta
        if c is None:
            diam = feasible.diameter
            c = 0.1 * diam if np.isfinite(diam) and diam > 0 else 0.1
        return c / np.sqrt(t)


@dataclass(frozen=True, eq=False)
class Trajectory:
    points: np.ndarray
    losses: np.ndarray
    potential: np.ndarray
    min_safety: np.ndarray
    steps: np.ndarray
    reason: str
    weights: tuple = field(default=())

    @property
    def rounds(self):
        return len(self.points) - 1

    @property
    def final(self):
        return self.points[-1]

    def to_csv(self, path_or_buf=None):
        """Write ``round,w_1..w_D,loss_1..loss_N,potential,min_safety``.

        Floats use 17 significant digits, so values round-trip exactly.
        Returns the text when no destination is given.
        """
        D, N = self.points.shape[1], self.losses.shape[1]
        header = (["round"] + [f"w_{i + 1}" for i in range(D)]
                  + [f"loss_{n + 1}" for n in range(N)] + ["potential", "min_safety"])
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for t in range(len(self.points)):
            row = np.concatenate([self.points[t], self.losses[t],
                                  [self.potential[t], self.min_safety[t]]])
            buf.write(f"{t}," + ",".join("%.17g" % v for v in row) + "\n")
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
        return None


def _weights(game, weights):
    if weights is None:
        return np.ones(game.n_players)
    alpha = np.asarray(weights, dtype=float)
    if alpha.shape != (game.n_players,):
        raise ConfigError(f"need {game.n_players} player weights, got {alpha.size}")
    if np.any(alpha <= 0):
        raise ConfigError("player weights must be strictly positive")
    return alpha


def _losses(game, w):
    vals = np.array([loss_eval(game, n, w) for n in range(game.n_players)])
    if not np.all(np.isfinite(vals)):
        raise LossEvaluationError(f"non-finite loss at {w}")
    return vals


def simulate(game, w0, config=None):
    """Run projected gradient play from ``w0``.

    Player ``n`` moves by ``eta_t * alpha_n * pi_n grad l_n``.  With
    ``update="simultaneous"`` all moves are summed and projected once per
    round; ``"round_robin"`` moves and projects player by player.  The run
    stops after ``max_rounds`` or once ``||w_{t+1} - w_t|| <= tol * eta_t``.
    """
    config = config or DynamicsConfig()
    alpha = _weights(game, config.weights)
    w = feasible_point(game, w0).copy()
    H = game.feasible

    points, losses, steps = [w.copy()], [_losses(game, w)], []
    safety = [float(pairwise_safety_at(game, w).min())]
    reason = "max_rounds"
    for t in range(1, config.max_rounds + 1):
        eta = config.step_size(t, H)
        if config.update == "simultaneous":
            move = sum(alpha[n] * game.player_projection(n)(gradient(game, n, w))
                       for n in range(game.n_players))
            w_next = H.project(w - eta * move)
        else:
            w_next = w.copy()
            for n in range(game.n_players):
                w_next = H.project(w_next - eta * alpha[n] * game.player_projection(n)(gradient(game, n, w_next)))
        step = float(np.linalg.norm(w_next - w))
        w = w_next
        points.append(w.copy())
        losses.append(_losses(game, w))
        safety.append(float(pairwise_safety_at(game, w).min()))
        steps.append(eta)
        if step <= config.tol * eta:
            reason = "converged"
            break
    losses = np.array(losses)
    return Trajectory(np.array(points), losses, losses @ alpha, np.array(safety),
                      np.array(steps), reason, tuple(alpha))


def potential_trace(game, trajectory, alpha=None):
    """``Phi(w_t) = sum_n alpha_n l_n(w_t)`` for every recorded round."""
    return trajectory.losses @ _weights(game, alpha)


def descent_direction_check(game, w, alpha=None):
    """``min_m <pi_m grad Phi, grad l_m> - alpha_m ||pi_m grad l_m||^2``.

    The subtracted term is the player's own contribution, so the value is the
    smallest sum of cross terms.  It is nonnegative in safe games.
    """
    alpha = _weights(game, alpha)
    grads = [gradient(game, n, w) for n in range(game.n_players)]
    grad_phi = sum(a * g for a, g in zip(alpha, grads))
    out = []
    for m, g in enumerate(grads):
        pi = game.player_projection(m)
        out.append(pi(grad_phi) @ g - alpha[m] * np.sum(pi(g) ** 2))
    return float(min(out))


# -- Nash probing -----------------------------------------------------------

@dataclass(frozen=True)
class ProbeConfig:
    random_directions: int = 32
    magnitudes: int = 16
    seed: int = 0
    max_magnitude: Optional[float] = None


@dataclass(frozen=True, eq=False)
class NashVerdict:
    player: int
    is_nash: bool
    best_gain: float
    witness: Optional[np.ndarray]
    gradient_norm: float


def _max_feasible(H, w, u, s, iters=50):
    if H.contains(w + s * u):
        return s
    lo, hi = 0.0, s
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if H.contains(w + mid * u):
            lo = mid
        else:
            hi = mid
    return lo


def nash_check(game, w, tol=1e-3, probe=None):
    """Probe unilateral deviations for every player.

    Deviations ``w + s u`` use unit directions ``u`` in the player's range
    (basis vectors, their negatives and seeded random ones) and magnitudes
    ``s`` spaced geometrically from ``tol`` to the feasible diameter.  Steps
    that leave the feasible set are shortened to the boundary, so the other
    players' coordinates never move.  A player passes when no probe lowers
    its loss by more than ``tol``.
    """
    probe = probe or ProbeConfig()
    w = feasible_point(game, w)
    H = game.feasible
    top = probe.max_magnitude
    if top is None:
        diam = H.diameter
        top = diam if np.isfinite(diam) else 10 * max(1.0, float(np.linalg.norm(w)))
    mags = np.geomspace(tol, max(top, 2 * tol), probe.magnitudes)
    rng = np.random.default_rng(probe.seed)

    verdicts = []
    for n in range(game.n_players):
        P = game.player_projection(n).basis
        dirs = np.hstack([P, -P, P @ rng.standard_normal((P.shape[1], probe.random_directions))])
        dirs /= np.linalg.norm(dirs, axis=0)
        base = loss_eval(game, n, w)
        best_gain, witness = -np.inf, None
        for u in dirs.T:
            for s in mags:
                s_ok = _max_feasible(H, w, u, s)
                if s_ok <= 0:
                    break
                cand = w + s_ok * u
                gain = base - loss_eval(game, n, cand)
                if gain > best_gain:
                    best_gain, witness = gain, cand
                if s_ok < s:
                    break
        gnorm = float(np.linalg.norm(game.player_projection(n)(gradient(game, n, w))))
        ok = best_gain <= tol
        verdicts.append(NashVerdict(n, bool(ok), float(best_gain), None if ok else witness, gnorm))
    return verdicts
