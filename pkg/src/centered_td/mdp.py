"""Exact finite-MDP machinery for centered temporal-difference analysis.

Small dense linear algebra, all of it pure: stationary distributions, the
distribution-weighted centering operator, the analytic matrices driving the
centered TD learners, fixpoint solving, and the RMSCBE metric.  Value objects
are immutable after construction (their arrays are marked read-only), so
everything here is safe to share across threads.

Conventions
-----------
* Transition matrices are row-stochastic: ``p[s, s']`` is the probability of
  moving from ``s`` to ``s'``.
* ``rewards[s, s']`` is the deterministic reward on the transition ``s -> s'``.
* All norms and covariances are weighted by the behavior chain's stationary
  distribution ``d``; ``D`` denotes ``diag(d)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError, StationaryDistributionError

ROW_SUM_TOL = 1e-12
DISTRIBUTION_SUM_TOL = 1e-12
PSD_TOL = 1e-10
STATIONARY_RESIDUAL_TOL = 1e-10
STATIONARY_ITER_TOL = 1e-12
STATIONARY_MAX_ITER = 10**6
# Condition estimates above this mark the analytic A matrix as singular and
# route fixpoint solving through minimum-norm least squares.
CONDITION_LIMIT = 1e10


def _frozen_array(value, dtype=float) -> np.ndarray:
    arr = np.array(value, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _set(obj, name, value) -> None:
    object.__setattr__(obj, name, value)


def _check_row_stochastic(p: np.ndarray, name: str) -> None:
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ModelError(f"{name} must be a square matrix, got shape {p.shape}")
    if not np.isfinite(p).all():
        raise ModelError(f"{name} contains non-finite entries")
    if (p < 0).any() or (p > 1).any():
        raise ModelError(f"{name} entries must lie in [0, 1]")
    row_err = np.abs(p.sum(axis=1) - 1.0).max()
    if row_err > ROW_SUM_TOL:
        raise ModelError(f"{name} rows must sum to 1 (max deviation {row_err:.3e})")


@dataclass(frozen=True)
class MdpModel:
    """Finite MDP at the state-transition level.

    Actions are folded into successor states: every benchmark chain used here
    has deterministic per-action successors, so the per-transition probability
    ratio ``p_target/p_behavior`` equals the per-action importance ratio.
    """

    n_states: int
    p_behavior: np.ndarray
    p_target: np.ndarray
    rewards: np.ndarray
    gamma: float

    def __post_init__(self):
        n = self.n_states
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise ModelError(f"n_states must be a positive integer, got {n!r}")
        p_mu = np.array(self.p_behavior, dtype=float)
        p_pi = np.array(self.p_target, dtype=float)
        r = np.array(self.rewards, dtype=float)
        _check_row_stochastic(p_mu, "p_behavior")
        _check_row_stochastic(p_pi, "p_target")
        if p_mu.shape != (n, n) or p_pi.shape != (n, n):
            raise ModelError("transition matrices must be n_states x n_states")
        if r.shape != (n, n):
            raise ModelError(f"rewards must be {n}x{n}, got {r.shape}")
        if not np.isfinite(r).all():
            raise ModelError("rewards contains non-finite entries")
        # Coverage: the behavior chain must be able to produce every target
        # transition, otherwise importance ratios are unbounded.
        uncovered = (p_pi > 0) & (p_mu == 0)
        if uncovered.any():
            s, sp = np.argwhere(uncovered)[0]
            raise ModelError(
                f"coverage violation: p_target[{s}][{sp}] > 0 but p_behavior[{s}][{sp}] = 0"
            )
        if not (0.0 < self.gamma < 1.0):
            raise ModelError(f"gamma must lie in (0, 1), got {self.gamma}")
        for name, arr in (("p_behavior", p_mu), ("p_target", p_pi), ("rewards", r)):
            arr.setflags(write=False)
            _set(self, name, arr)
        _set(self, "gamma", float(self.gamma))

    def expected_rewards(self) -> np.ndarray:
        """Per-state expected one-step reward under the target chain."""
        return (self.p_target * self.rewards).sum(axis=1)

    def rho_table(self) -> np.ndarray:
        """Importance ratios ``p_target/p_behavior`` (zero where behavior is zero)."""
        safe = np.where(self.p_behavior > 0, self.p_behavior, 1.0)
        return np.where(self.p_behavior > 0, self.p_target / safe, 0.0)


@dataclass(frozen=True)
class FeatureMap:
    """State-feature matrix with one row per state."""

    phi: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim != 2:
            raise ModelError(f"feature matrix must be 2-D, got shape {phi.shape}")
        if phi.shape[1] < 1:
            raise ModelError("feature matrix needs at least one column")
        if not np.isfinite(phi).all():
            raise ModelError("feature matrix contains non-finite entries")
        phi.setflags(write=False)
        _set(self, "phi", phi)

    @property
    def n_states(self) -> int:
        return self.phi.shape[0]

    @property
    def n_features(self) -> int:
        return self.phi.shape[1]


@dataclass(frozen=True)
class DistributionVector:
    """Probability vector over states."""

    d: np.ndarray

    def __post_init__(self):
        d = np.array(self.d, dtype=float)
        if d.ndim != 1:
            raise ModelError(f"distribution must be a vector, got shape {d.shape}")
        if not np.isfinite(d).all() or (d < 0).any():
            raise ModelError("distribution entries must be finite and nonnegative")
        err = abs(d.sum() - 1.0)
        if err > DISTRIBUTION_SUM_TOL:
            raise ModelError(f"distribution must sum to 1 (deviation {err:.3e})")
        d.setflags(write=False)
        _set(self, "d", d)


@dataclass(frozen=True)
class AnalyticSystem:
    """Analytic quantities driving the centered learners.

    ``a_matrix``/``b_vector`` define the centered linear system whose solution
    is the centered TD fixpoint; ``c_matrix`` is the feature second-moment
    matrix; ``omega_star_affine = (v, c)`` encodes the mean-error fixpoint
    ``omega*(theta) = v @ theta + c``.
    """

    a_matrix: np.ndarray
    b_vector: np.ndarray
    c_matrix: np.ndarray
    omega_star_affine: tuple[np.ndarray, float]

    def __post_init__(self):
        a = _frozen_array(self.a_matrix)
        b = _frozen_array(self.b_vector)
        c = _frozen_array(self.c_matrix)
        m = a.shape[0]
        if a.shape != (m, m) or c.shape != (m, m) or b.shape != (m,):
            raise ModelError("inconsistent analytic system dimensions")
        if np.abs(c - c.T).max() > PSD_TOL:
            raise ModelError("c_matrix must be symmetric")
        if np.linalg.eigvalsh(0.5 * (c + c.T)).min() < -PSD_TOL:
            raise ModelError("c_matrix must be positive semi-definite")
        v, const = self.omega_star_affine
        v = _frozen_array(v)
        if v.shape != (m,):
            raise ModelError("omega_star_affine vector has wrong length")
        _set(self, "a_matrix", a)
        _set(self, "b_vector", b)
        _set(self, "c_matrix", c)
        _set(self, "omega_star_affine", (v, float(const)))

    def omega_star(self, theta: np.ndarray) -> float:
        """Mean-error fixpoint at fixed weights: importance-weighted E[delta]."""
        v, const = self.omega_star_affine
        return float((v * np.asarray(theta, dtype=float)).sum() + const)

    @property
    def n_features(self) -> int:
        return self.a_matrix.shape[0]


def _as_distribution(d) -> np.ndarray:
    if isinstance(d, DistributionVector):
        return d.d
    return np.asarray(d, dtype=float)


def _closed_class_count(p: np.ndarray) -> int:
    """Number of closed recurrent classes of the chain (exact, graph-based)."""
    n = p.shape[0]
    reach = np.eye(n, dtype=bool) | (p > 0)
    for k in range(n):  # Floyd-Warshall transitive closure
        reach |= reach[:, k : k + 1] & reach[k : k + 1, :]
    # s is recurrent iff it can return from everything it reaches.
    recurrent = np.array([bool((~reach[s] | reach[:, s]).all()) for s in range(n)])
    seen = np.zeros(n, dtype=bool)
    classes = 0
    for s in range(n):
        if recurrent[s] and not seen[s]:
            classes += 1
            seen |= reach[s] & reach[:, s]
    return classes


def stationary_distribution(p: np.ndarray) -> DistributionVector:
    """Stationary distribution of a row-stochastic matrix by power iteration.

    Iterates on the lazy chain ``(P + I)/2``, which has the same stationary
    vector as ``P`` but is aperiodic, so the iteration converges for every
    chain with a unique stationary distribution.  Chains with more than one
    closed recurrent class are rejected up front.
    """
    p = np.asarray(p, dtype=float)
    _check_row_stochastic(p, "p")
    n = p.shape[0]
    classes = _closed_class_count(p)
    if classes != 1:
        raise StationaryDistributionError(
            f"no unique stationary distribution: chain has {classes} closed recurrent classes"
        )
    d = np.full(n, 1.0 / n)
    lazy = 0.5 * (p + np.eye(n))
    for _ in range(STATIONARY_MAX_ITER):
        d_next = d @ lazy
        delta = np.abs(d_next - d).max()
        d = d_next
        if delta < STATIONARY_ITER_TOL:
            break
    d = d / d.sum()
    residual = float(np.abs(d @ p - d).max())
    if residual > STATIONARY_RESIDUAL_TOL:
        raise StationaryDistributionError(
            f"power iteration did not converge (residual {residual:.3e})",
            residual=residual,
        )
    return DistributionVector(d)


def center(x: np.ndarray, d) -> np.ndarray:
    """Subtract the d-weighted mean: ``x - (x . d) 1``.

    The result is d-orthogonal: ``center(x, d) . d == 0`` up to rounding.
    The operator is linear, idempotent, and annihilates constant vectors.
    """
    x = np.asarray(x, dtype=float)
    dv = _as_distribution(d)
    if x.shape != dv.shape:
        raise ModelError(f"dimension mismatch: x has shape {x.shape}, d has shape {dv.shape}")
    return x - (x * dv).sum()


def bellman_apply(model: MdpModel, phi: FeatureMap, theta: np.ndarray) -> np.ndarray:
    """One application of the target-chain Bellman operator to ``V = phi @ theta``.

    Returns ``r_pi + gamma * P_pi V`` where ``r_pi`` is the per-state expected
    reward under the target chain.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (phi.n_features,):
        raise ModelError(
            f"theta has shape {theta.shape}, expected ({phi.n_features},)"
        )
    if phi.n_states != model.n_states:
        raise ModelError("feature map does not match model size")
    v = (phi.phi * theta).sum(axis=-1)
    pv = (model.p_target * v).sum(axis=-1)
    return model.expected_rewards() + model.gamma * pv


def centered_bellman_residual(model: MdpModel, phi: FeatureMap, theta: np.ndarray, d) -> np.ndarray:
    """Centered Bellman residual ``center(T V - V, d)``.

    Zero exactly when ``theta`` solves the centered Bellman equation in value
    space; always d-orthogonal.
    """
    v = (phi.phi * np.asarray(theta, dtype=float)).sum(axis=-1)
    e = bellman_apply(model, phi, theta) - v
    return center(e, d)


def rmscbe_batch(model: MdpModel, phi: FeatureMap, thetas: np.ndarray, d) -> np.ndarray:
    """Root mean squared centered Bellman error for a batch of weight vectors.

    ``thetas`` has shape ``(N, n_features)``; returns shape ``(N,)``.  Uses
    only elementwise operations and fixed-axis reductions so results are
    bitwise independent of the batch width.
    """
    dv = _as_distribution(d)
    thetas = np.asarray(thetas, dtype=float)
    v = (phi.phi[None, :, :] * thetas[:, None, :]).sum(axis=-1)
    pv = (model.p_target[None, :, :] * v[:, None, :]).sum(axis=-1)
    e = model.expected_rewards()[None, :] + model.gamma * pv - v
    ec = e - (e * dv[None, :]).sum(axis=-1, keepdims=True)
    return np.sqrt(((ec * ec) * dv[None, :]).sum(axis=-1))


def rmscbe(model: MdpModel, phi: FeatureMap, theta: np.ndarray, d) -> float:
    """Root mean squared centered Bellman error of one weight vector.

    ``sqrt(sum_s d(s) * ec(s)^2)`` where ``ec`` is the centered residual.
    """
    theta = np.asarray(theta, dtype=float)
    return float(rmscbe_batch(model, phi, theta[None, :], d)[0])


def analytic_system(model: MdpModel, phi: FeatureMap) -> AnalyticSystem:
    """Exact update matrices under the behavior chain's stationary distribution.

    With ``d`` stationary for ``p_behavior``, ``D = diag(d)`` and ``P`` the
    target chain:

    * ``A = Phi' (D - d d') (I - gamma P) Phi``
    * ``b = Phi' (D - d d') r_pi``
    * ``C = Phi' D Phi``
    * ``omega*(theta) = d . (r_pi - (I - gamma P) Phi theta)``

    On-policy models are the special case ``p_target == p_behavior``, where
    ``A`` coincides with the stationary cross-covariance of the features with
    their one-step temporal difference.
    """
    if phi.n_states != model.n_states:
        raise ModelError("feature map does not match model size")
    d = stationary_distribution(model.p_behavior).d
    n = model.n_states
    weight = np.diag(d) - np.outer(d, d)
    discounted = np.eye(n) - model.gamma * model.p_target
    r_pi = model.expected_rewards()
    a = phi.phi.T @ weight @ discounted @ phi.phi
    b = phi.phi.T @ weight @ r_pi
    c = phi.phi.T @ np.diag(d) @ phi.phi
    omega_vec = -(discounted @ phi.phi).T @ d
    omega_const = float(d @ r_pi)
    return AnalyticSystem(a, b, c, (omega_vec, omega_const))


def fixpoint_solve(sys: AnalyticSystem) -> tuple[np.ndarray, bool]:
    """Solve ``A theta = b`` for the centered TD fixpoint.

    Returns ``(theta_star, singular)``.  When the condition estimate of ``A``
    exceeds ``CONDITION_LIMIT`` the system is treated as singular and the
    minimum-norm least-squares solution is returned with ``singular=True``.
    Note that any feature map able to represent constant value functions makes
    ``A`` singular, because centering annihilates the constant direction.
    """
    a = sys.a_matrix
    b = sys.b_vector
    cond = np.linalg.cond(a)
    singular = bool(not np.isfinite(cond) or cond > CONDITION_LIMIT)
    if singular:
        theta, *_ = np.linalg.lstsq(a, b, rcond=None)
    else:
        theta = np.linalg.solve(a, b)
    return theta, singular


def lemma_two_state(
    a: float, b: float, x: float, y: float, m: float, n: float, gamma: float
) -> tuple[float, float]:
    """Closed-form and matrix-path values of the scalar centered A for the
    general two-state off-policy chain.

    Behavior chain ``[[a, 1-a], [b, 1-b]]``, target chain ``[[x, 1-x],
    [y, 1-y]]``, features ``(m, n)``.  The closed form is

        ``(1-a) b / (1-a+b)^2 * (1 - x*gamma + y*gamma) * (m - n)^2``

    and the matrix path evaluates ``Phi' (D - d d') (I - gamma P_target) Phi``
    with the behavior stationary vector ``d = (b, 1-a) / (1-a+b)``.  Both are
    returned so callers can cross-check one against the other.
    """
    for name, val in (("a", a), ("b", b), ("x", x), ("y", y)):
        if not 0.0 <= val <= 1.0:
            raise ModelError(f"lemma parameter {name} must lie in [0, 1], got {val}")
    if m == 0.0 or n == 0.0:
        raise ModelError("lemma features m and n must be nonzero")
    if not (0.0 < gamma < 1.0):
        raise ModelError(f"gamma must lie in (0, 1), got {gamma}")
    denom = 1.0 - a + b
    if denom == 0.0:
        raise ModelError("degenerate chain: a = 1 and b = 0 has no stationary distribution")
    closed = ((1.0 - a) * b / denom**2) * (1.0 - x * gamma + y * gamma) * (m - n) ** 2
    d = np.array([b / denom, (1.0 - a) / denom])
    phi = np.array([[m], [n]])
    p_pi = np.array([[x, 1.0 - x], [y, 1.0 - y]])
    weight = np.diag(d) - np.outer(d, d)
    matrix = phi.T @ weight @ (np.eye(2) - gamma * p_pi) @ phi
    return float(closed), float(matrix[0, 0])
