"""Newton steps, natural gradients and mirror descent.

Two convex potentials are supported: a positive-definite quadratic form
(Euclidean geometry) and negative entropy on the open probability simplex.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import DomainError, NotPositiveDefiniteError, ShapeError, SingularMatrixError
from .linalg import as_matrix


def hessian(loss, w):
    """Hessian of a loss: analytic where available, finite differences for black boxes."""
    H = np.asarray(loss.hessian(np.asarray(w, dtype=float)), dtype=float)
    return 0.5 * (H + H.T)


def _solve(H, g, cutoff=1e-12):
    s = np.linalg.svd(H, compute_uv=False)
    if s[-1] <= cutoff * max(1.0, s[0]):
        raise SingularMatrixError(float(s[-1]))
    return np.linalg.solve(H, g)


def hessian_condition(loss, w):
    return float(np.linalg.cond(hessian(loss, w)))


def newton_step(loss, w, eta=1.0):
    """``eta * H(w)^{-1} grad l(w)``; subtract it from ``w`` to take the step."""
    w = np.asarray(w, dtype=float)
    return eta * _solve(hessian(loss, w), loss.gradient(w))


def newton_safety(loss, w):
    """``<H^{-1} grad l, grad l>``, positive away from the minimizer of a strictly convex loss."""
    w = np.asarray(w, dtype=float)
    g = loss.gradient(w)
    return float(_solve(hessian(loss, w), g) @ g)


def _check_pd(G):
    G = as_matrix(G, "metric")
    if G.shape[0] != G.shape[1]:
        raise ShapeError("metric must be square")
    if np.linalg.norm(G - G.T) > 1e-10 * max(1.0, np.linalg.norm(G)):
        raise NotPositiveDefiniteError("metric is not symmetric")
    try:
        return np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("metric is not positive definite") from None


def natural_gradient_direction(G, g):
    """``G^{-1} g`` via a Cholesky solve."""
    L = _check_pd(G)
    y = np.linalg.solve(L, g)
    return np.linalg.solve(L.T, y)


def natural_gradient_step(loss, G, w, eta=1.0):
    w = np.asarray(w, dtype=float)
    return eta * natural_gradient_direction(G, loss.gradient(w))


def natural_gradient_safety(G, g):
    g = np.asarray(g, dtype=float)
    return float(natural_gradient_direction(G, g) @ g)


# -- convex potentials and their Legendre duals -----------------------------

class ConvexPotential:
    def value(self, w):
        raise NotImplementedError

    def grad(self, w):
        raise NotImplementedError

    def hessian(self, w):
        raise NotImplementedError

    def check_domain(self, w):
        return np.asarray(w, dtype=float)


@dataclass(frozen=True, eq=False)
class QuadraticPotential(ConvexPotential):
    """``psi(w) = 1/2 w^T Q w`` with ``Q`` symmetric positive definite."""

    Q: np.ndarray

    def __post_init__(self):
        Q = as_matrix(self.Q, "Q")
        _check_pd(Q)
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))

    def value(self, w):
        w = self.check_domain(w)
        return float(0.5 * w @ self.Q @ w)

    def grad(self, w):
        return self.Q @ self.check_domain(w)

    def hessian(self, w):
        return self.Q.copy()

    def check_domain(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.Q.shape[0],):
            raise ShapeError(f"expected a vector of length {self.Q.shape[0]}")
        return w


@dataclass(frozen=True)
class NegEntropy(ConvexPotential):
    """``psi(w) = sum_i w_i log w_i`` on the open simplex."""

    dim: int
    tol: float = 1e-9

    def check_domain(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dim,):
            raise ShapeError(f"expected a vector of length {self.dim}")
        if np.any(w <= 0):
            raise DomainError("negative entropy needs strictly positive coordinates")
        if abs(w.sum() - 1.0) > self.tol:
            raise DomainError(f"coordinates sum to {w.sum():.12g}, expected 1")
        return w

    def value(self, w):
        w = self.check_domain(w)
        return float(np.sum(w * np.log(w)))

    def grad(self, w):
        return 1.0 + np.log(self.check_domain(w))

    def hessian(self, w):
        return np.diag(1.0 / self.check_domain(w))


@dataclass(frozen=True, eq=False)
class LegendrePair:
    """A convex potential with its gradient map, inverse map and conjugate."""

    psi: ConvexPotential

    def to_dual(self, w):
        return self.psi.grad(w)

    def to_primal(self, theta):
        theta = np.asarray(theta, dtype=float)
        if isinstance(self.psi, QuadraticPotential):
            return np.linalg.solve(self.psi.Q, theta)
        # the gradient map is shift invariant on the simplex; fix the shift first
        return softmax(self.canonical(theta))

    def dual_value(self, theta):
        theta = np.asarray(theta, dtype=float)
        if isinstance(self.psi, QuadraticPotential):
            return float(0.5 * theta @ np.linalg.solve(self.psi.Q, theta))
        return float(logsumexp(theta))

    def dual_hessian(self, theta):
        theta = np.asarray(theta, dtype=float)
        if isinstance(self.psi, QuadraticPotential):
            return np.linalg.inv(self.psi.Q)
        p = self.to_primal(theta)
        return np.diag(p) - np.outer(p, p)

    def dual_metric_solve(self, theta, v):
        """Minimum-norm solution ``x`` of ``grad^2 psi*(theta) x = v``.

        On the simplex the conjugate Hessian ``diag(p) - p p^T`` is singular
        along the all-ones vector.  For ``v`` in its range (coordinates summing
        to zero, as chain-rule gradients do) the solution is
        ``Pi diag(1/p) v`` with ``Pi`` the centering projection.  ``v`` is not
        re-centered first: its roundoff scales with ``p`` coordinatewise, while
        subtracting a mean would spread it across coordinates and then divide
        it by tiny ``p_i``.
        """
        v = np.asarray(v, dtype=float)
        if isinstance(self.psi, QuadraticPotential):
            return self.psi.Q @ v
        p = self.to_primal(theta)
        x = v / p
        return x - x.mean()

    def canonical(self, theta):
        """Representative of a dual point: zero-mean for the simplex, itself otherwise."""
        theta = np.asarray(theta, dtype=float)
        if isinstance(self.psi, NegEntropy):
            return theta - theta.mean()
        return theta

    def duality_residual(self, w):
        """``|psi(w) + psi*(theta) - w^T theta|`` at ``theta = grad psi(w)``."""
        theta = self.to_dual(w)
        return abs(self.psi.value(w) + self.dual_value(theta) - np.asarray(w) @ theta)

    def metric_residual(self, w):
        """Distance of ``grad^2 psi(w) grad^2 psi*(theta)`` from the identity.

        For negative entropy both sides are restricted to the tangent space of
        the simplex, where the conjugate Hessian is invertible.
        """
        w = np.asarray(w, dtype=float)
        prod = self.psi.hessian(w) @ self.dual_hessian(self.to_dual(w))
        D = w.size
        if isinstance(self.psi, NegEntropy):
            Pi = np.eye(D) - np.full((D, D), 1.0 / D)
            return float(np.linalg.norm(Pi @ prod @ Pi - Pi))
        return float(np.linalg.norm(prod - np.eye(D)))


def legendre(psi):
    if not isinstance(psi, (QuadraticPotential, NegEntropy)):
        raise TypeError(f"no closed-form conjugate for {type(psi).__name__}")
    return LegendrePair(psi)


def bregman(psi, v, w):
    """``D_psi(v, w) = psi(v) - psi(w) - <grad psi(w), v - w>``."""
    v, w = psi.check_domain(v), psi.check_domain(w)
    return float(psi.value(v) - psi.value(w) - psi.grad(w) @ (v - w))


def mirror_step(loss, psi, w, eta):
    """One mirror-descent step, solved in closed form through the dual map."""
    pair = legendre(psi)
    w = psi.check_domain(w)
    return pair.to_primal(pair.to_dual(w) - eta * loss.gradient(w))


def mirror_safety(loss, psi, w, eta):
    """``<w_t - w_{t+1}, eta grad l(w_t)>`` for a single mirror step."""
    w = np.asarray(w, dtype=float)
    return float((w - mirror_step(loss, psi, w, eta)) @ (eta * loss.gradient(w)))


def verify_md_ng_equivalence(loss, psi, w0, eta, rounds):
    """Max deviation between mirror descent and dual natural gradient.

    The dual recursion ``theta <- theta - eta G*(theta)^+ grad_theta l`` uses
    the chain-rule gradient ``grad_theta l = G*(theta) grad_w l`` with
    ``G*`` the conjugate Hessian (pseudo-inverted on the simplex).  Dual
    points are compared through their canonical representatives.
    """
    pair = legendre(psi)
    w = psi.check_domain(w0)
    theta = pair.to_dual(w)
    worst = 0.0
    for _ in range(rounds):
        w = mirror_step(loss, psi, w, eta)
        G = pair.dual_hessian(theta)
        grad_theta = G @ loss.gradient(pair.to_primal(theta))
        theta = theta - eta * pair.dual_metric_solve(theta, grad_theta)
        dev = np.linalg.norm(pair.canonical(pair.to_dual(w)) - pair.canonical(theta))
        worst = max(worst, float(dev))
    return worst
