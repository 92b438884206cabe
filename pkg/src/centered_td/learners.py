"""Incremental step rules for the TD-family learners.

Six algorithms share one vectorized kernel: baseline TD and TDC with linear
features, their centered variants CTD and CTDC (which subtract a running
estimate of the mean TD error), and the tabular rules SRC (average-reward
centering) and VRC (average-TD-error centering).  The kernel advances a batch
of independent learner states in lockstep using only elementwise operations
and fixed-axis reductions, so its arithmetic is bitwise identical whether a
state is updated alone or as a row of a large batch.  The public single-step
functions wrap a batch of one.

Update order within a step: the weight updates consume the pre-update mean
estimate ``omega`` (and auxiliary ``u``); ``omega`` is advanced last.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ModelError

DIVERGENCE_NORM_LIMIT = 1e8

LINEAR_ALGORITHMS = ("td", "tdc", "ctd", "ctdc")
TABULAR_ALGORITHMS = ("src", "vrc")
ALGORITHMS = LINEAR_ALGORITHMS + TABULAR_ALGORITHMS

CTDC_MODES = ("rho", "subsample")
DECAY_MODES = ("constant", "power")


@dataclass(frozen=True)
class LearnerState:
    """Per-algorithm mutable state, carried as an immutable value.

    ``theta`` holds linear weights (or is None for tabular learners);
    ``omega`` estimates the mean TD error (the running average reward for
    SRC); ``u`` is the TDC/CTDC auxiliary weight vector; ``v_table`` is the
    tabular value function.  Once ``diverged`` is set, steps are no-ops.
    """

    theta: np.ndarray | None = None
    omega: float = 0.0
    u: np.ndarray | None = None
    v_table: np.ndarray | None = None
    diverged: bool = False

    def __post_init__(self):
        for name in ("theta", "u", "v_table"):
            val = getattr(self, name)
            if val is not None:
                arr = np.array(val, dtype=float)
                if arr.ndim != 1:
                    raise ModelError(f"{name} must be a vector")
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        object.__setattr__(self, "omega", float(self.omega))


def linear_state(theta, with_u: bool = False) -> LearnerState:
    """Fresh linear-learner state: given weights, zero omega, zero u."""
    theta = np.asarray(theta, dtype=float)
    u = np.zeros_like(theta) if with_u else None
    return LearnerState(theta=theta, omega=0.0, u=u)


def tabular_state(v_table) -> LearnerState:
    """Fresh tabular-learner state: given value table, zero mean estimate."""
    return LearnerState(v_table=np.asarray(v_table, dtype=float), omega=0.0)


@dataclass(frozen=True)
class TransitionSample:
    """One observed transition with features and importance ratio."""

    s: int
    s_next: int
    r: float
    phi_s: np.ndarray
    phi_next: np.ndarray
    rho: float = 1.0

    def __post_init__(self):
        for name in ("phi_s", "phi_next"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.rho < 0:
            raise ModelError(f"rho must be nonnegative, got {self.rho}")


@dataclass(frozen=True)
class StepSizes:
    """Learning rates with an optional polynomial decay schedule.

    ``beta`` is required by the centered and tabular learners, ``zeta`` by
    TDC/CTDC.  In ``power`` mode the effective rate at step ``k >= 1`` is
    ``base * k**(-exponent)``; the default exponents form a valid
    two-timescale triple (alpha vanishes fastest, beta slowest).
    """

    alpha: float
    beta: float | None = None
    zeta: float | None = None
    decay_mode: str = "constant"
    alpha_exponent: float = 1.0
    beta_exponent: float = 0.6
    zeta_exponent: float = 0.8

    def __post_init__(self):
        if not self.alpha > 0:
            raise ModelError(f"alpha must be positive, got {self.alpha}")
        for name in ("beta", "zeta"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ModelError(f"{name} must be positive when given, got {val}")
        if self.decay_mode not in DECAY_MODES:
            raise ModelError(f"decay_mode must be one of {DECAY_MODES}, got {self.decay_mode!r}")
        for name in ("alpha_exponent", "beta_exponent", "zeta_exponent"):
            if not getattr(self, name) > 0:
                raise ModelError(f"{name} must be positive")

    def at(self, k: int) -> "StepSizes":
        """Effective (constant-mode) rates for step ``k`` (1-based)."""
        if self.decay_mode == "constant":
            return self
        if k < 1:
            raise ModelError(f"step index must be >= 1, got {k}")
        return replace(
            self,
            alpha=self.alpha * k ** -self.alpha_exponent,
            beta=None if self.beta is None else self.beta * k ** -self.beta_exponent,
            zeta=None if self.zeta is None else self.zeta * k ** -self.zeta_exponent,
            decay_mode="constant",
        )


def _required_rates(algo: str) -> tuple[str, ...]:
    return {
        "td": ("alpha",),
        "ctd": ("alpha", "beta"),
        "tdc": ("alpha", "zeta"),
        "ctdc": ("alpha", "beta", "zeta"),
        "src": ("alpha", "beta"),
        "vrc": ("alpha", "beta"),
    }[algo]


def step_batch(
    algo: str,
    gamma: float,
    theta: np.ndarray | None,
    omega: np.ndarray,
    u: np.ndarray | None,
    v_table: np.ndarray | None,
    diverged: np.ndarray,
    s: np.ndarray,
    s_next: np.ndarray,
    r: np.ndarray,
    rho: np.ndarray,
    phi_s: np.ndarray | None,
    phi_next: np.ndarray | None,
    alpha,
    beta,
    zeta,
    ctdc_mode: str = "rho",
):
    """Advance a batch of learner states by one transition each.

    All state arrays are (N, ...) with the batch as the leading axis; rates
    may be scalars or (N,) arrays.  Inputs are never mutated; returns the
    tuple ``(theta, omega, u, v_table, diverged)``.

    Any row whose candidate update is non-finite or exceeds the norm guard is
    frozen at its previous (finite) state and flagged; flagged rows never
    update again.
    """
    if algo not in ALGORITHMS:
        raise ModelError(f"unknown algorithm {algo!r}")
    if ctdc_mode not in CTDC_MODES:
        raise ModelError(f"ctdc_mode must be one of {CTDC_MODES}, got {ctdc_mode!r}")
    r = np.asarray(r, dtype=float)
    rho = np.asarray(rho, dtype=float)
    ok = np.ones_like(diverged)

    if algo in LINEAR_ALGORITHMS:
        delta = r + gamma * (phi_next * theta).sum(axis=-1) - (phi_s * theta).sum(axis=-1)
        omega_new, u_new = omega, u
        if algo == "td":
            theta_new = theta + (alpha * rho * delta)[:, None] * phi_s
        elif algo == "ctd":
            theta_new = theta + (alpha * rho * (delta - omega))[:, None] * phi_s
            omega_new = omega + beta * rho * (delta - omega)
        elif algo == "tdc":
            correction = (phi_s * u).sum(axis=-1)
            theta_new = theta + (alpha * rho)[..., None] * (
                delta[:, None] * phi_s - gamma * correction[:, None] * phi_next
            )
            u_new = u + (zeta * rho * (delta - correction))[:, None] * phi_s
        else:  # ctdc
            weight = rho if ctdc_mode == "rho" else np.ones_like(rho)
            correction = (phi_s * u).sum(axis=-1)
            centered = delta - omega
            theta_new = theta + (alpha * weight)[..., None] * (
                centered[:, None] * phi_s - gamma * correction[:, None] * phi_next
            )
            u_new = u + (zeta * weight * (centered - correction))[:, None] * phi_s
            omega_new = omega + beta * weight * centered
        ok &= np.isfinite(theta_new).all(axis=-1)
        ok &= np.sqrt((theta_new * theta_new).sum(axis=-1)) <= DIVERGENCE_NORM_LIMIT
        if u_new is not u:
            ok &= np.isfinite(u_new).all(axis=-1)
            ok &= np.sqrt((u_new * u_new).sum(axis=-1)) <= DIVERGENCE_NORM_LIMIT
        v_new = v_table
    else:
        rows = np.arange(v_table.shape[0])
        v_s = v_table[rows, s]
        v_next = v_table[rows, s_next]
        v_new = v_table.copy()
        if algo == "src":
            delta_bar = r - omega + gamma * v_next - v_s
            v_new[rows, s] = v_s + alpha * delta_bar
            omega_new = omega + beta * (r - omega)
        else:  # vrc
            delta = r + gamma * v_next - v_s
            v_new[rows, s] = v_s + alpha * rho * (delta - omega)
            omega_new = omega + beta * rho * (delta - omega)
        ok &= np.isfinite(v_new).all(axis=-1)
        ok &= np.sqrt((v_new * v_new).sum(axis=-1)) <= DIVERGENCE_NORM_LIMIT
        theta_new, u_new = theta, u

    ok &= np.isfinite(omega_new)
    ok &= np.abs(omega_new) <= DIVERGENCE_NORM_LIMIT
    apply = ok & ~diverged
    diverged_new = diverged | ~ok

    def _merge(new, old, mask):
        if new is old or new is None:
            return old
        if new.ndim == 2:
            return np.where(mask[:, None], new, old)
        return np.where(mask, new, old)

    return (
        _merge(theta_new, theta, apply),
        _merge(omega_new, omega, apply),
        _merge(u_new, u, apply),
        _merge(v_new, v_table, apply),
        diverged_new,
    )


def _scalar_step(
    algo: str, state: LearnerState, x: TransitionSample, gamma: float, sizes: StepSizes,
    ctdc_mode: str = "rho",
) -> LearnerState:
    for rate in _required_rates(algo):
        if getattr(sizes, rate) is None:
            raise ModelError(f"{algo} requires step size {rate!r}")
    if algo in LINEAR_ALGORITHMS:
        if state.theta is None:
            raise ModelError(f"{algo} requires a linear state (theta)")
        if algo in ("tdc", "ctdc") and state.u is None:
            raise ModelError(f"{algo} requires auxiliary weights u")
        theta = state.theta[None, :]
        u = None if state.u is None else state.u[None, :]
        v = None
        phi_s = x.phi_s[None, :]
        phi_next = x.phi_next[None, :]
    else:
        if state.v_table is None:
            raise ModelError(f"{algo} requires a tabular state (v_table)")
        theta = None
        u = None
        v = state.v_table[None, :]
        phi_s = phi_next = None
    theta2, omega2, u2, v2, div2 = step_batch(
        algo,
        gamma,
        theta,
        np.array([state.omega]),
        u,
        v,
        np.array([state.diverged]),
        np.array([x.s]),
        np.array([x.s_next]),
        np.array([x.r]),
        np.array([x.rho]),
        phi_s,
        phi_next,
        sizes.alpha,
        sizes.beta,
        sizes.zeta,
        ctdc_mode=ctdc_mode,
    )
    return LearnerState(
        theta=None if theta2 is None else theta2[0],
        omega=float(omega2[0]),
        u=None if u2 is None else u2[0],
        v_table=None if v2 is None else v2[0],
        diverged=bool(div2[0]),
    )


def td_step(state: LearnerState, x: TransitionSample, gamma: float, sizes: StepSizes) -> LearnerState:
    """Baseline (off-)policy TD(0): ``theta += alpha rho delta phi``."""
    return _scalar_step("td", state, x, gamma, sizes)


def ctd_step(state: LearnerState, x: TransitionSample, gamma: float, sizes: StepSizes) -> LearnerState:
    """Centered TD: the TD error is shifted by the running mean estimate.

    ``theta += alpha rho (delta - omega) phi`` using the pre-update ``omega``,
    then ``omega += beta rho (delta - omega)``.  With ``rho = 1`` this is the
    on-policy rule.
    """
    return _scalar_step("ctd", state, x, gamma, sizes)


def tdc_step(state: LearnerState, x: TransitionSample, gamma: float, sizes: StepSizes) -> LearnerState:
    """TDC with gradient correction; equals CTDC with ``omega`` frozen at 0."""
    return _scalar_step("tdc", state, x, gamma, sizes)


def ctdc_step(
    state: LearnerState, x: TransitionSample, gamma: float, sizes: StepSizes,
    mode: str = "rho",
) -> LearnerState:
    """Centered TDC.

    With pre-update ``omega``: ``theta += alpha rho [(delta - omega) phi -
    gamma phi' (phi . u)]``; ``u += zeta rho [(delta - omega) - phi . u] phi``;
    ``omega += beta rho (delta - omega)``.  Mode ``"rho"`` (default) applies
    the importance ratio to all three updates; mode ``"subsample"`` applies no
    ratio and expects triples sampled so that successors already follow the
    target chain.
    """
    return _scalar_step("ctdc", state, x, gamma, sizes, ctdc_mode=mode)


def src_step(state: LearnerState, x: TransitionSample, gamma: float, sizes: StepSizes) -> LearnerState:
    """Tabular on-policy average-reward centering.

    ``V(s) += alpha (r - rbar + gamma V(s') - V(s))`` and
    ``rbar += beta (r - rbar)``; ``rbar`` is stored in ``omega``.
    """
    return _scalar_step("src", state, x, gamma, sizes)


def vrc_step(state: LearnerState, x: TransitionSample, gamma: float, sizes: StepSizes) -> LearnerState:
    """Tabular TD-error centering (off-policy capable).

    ``V(s) += alpha rho (delta - rbar)`` with the pre-update ``rbar``, then
    ``rbar += beta rho (delta - rbar)``.
    """
    return _scalar_step("vrc", state, x, gamma, sizes)


@dataclass(frozen=True)
class ScheduleReport:
    """Outcome of checking step-size sequences against the two-timescale
    convergence conditions (divergent sums, square summability, and the
    ordering alpha = o(zeta) = o(beta))."""

    status: str  # "ok" | "warning" | "invalid"
    conditions: dict
    messages: tuple
    partial_sums: dict


def schedule_validate(sizes: StepSizes, horizon: int) -> ScheduleReport:
    """Check a step-size schedule against the convergence conditions.

    Polynomial rates ``base * k**(-p)`` are checked symbolically: the sum
    diverges iff ``p <= 1``, squares are summable iff ``p > 0.5``, and the
    timescale ordering requires strictly decreasing exponents from alpha to
    zeta to beta.  Constant rates cannot satisfy the conditions; they yield a
    warning rather than a failure.  Numeric partial sums over ``horizon``
    steps are attached for context.
    """
    if horizon < 1:
        raise ModelError(f"horizon must be >= 1, got {horizon}")
    rates = {"alpha": (sizes.alpha, sizes.alpha_exponent)}
    if sizes.beta is not None:
        rates["beta"] = (sizes.beta, sizes.beta_exponent)
    if sizes.zeta is not None:
        rates["zeta"] = (sizes.zeta, sizes.zeta_exponent)

    k = np.arange(1, horizon + 1, dtype=float)
    partial = {}
    for name, (base, exponent) in rates.items():
        seq = base * k ** (-exponent if sizes.decay_mode == "power" else 0.0)
        partial[f"sum_{name}"] = float(seq.sum())
        partial[f"sum_{name}_squared"] = float((seq * seq).sum())

    if sizes.decay_mode == "constant":
        return ScheduleReport(
            status="warning",
            conditions={},
            messages=("theorem conditions not met (constant rates)",),
            partial_sums=partial,
        )

    conditions = {}
    messages = []
    for name, (_, p) in rates.items():
        conditions[f"{name}_sum_divergent"] = p <= 1.0
        conditions[f"{name}_square_summable"] = p > 0.5
        if not conditions[f"{name}_sum_divergent"]:
            messages.append(f"{name}: exponent {p} > 1, rate sum converges")
        if not conditions[f"{name}_square_summable"]:
            messages.append(f"{name}: exponent {p} <= 0.5, squared rates not summable")
    if "zeta" in rates and "beta" in rates:
        ordered = sizes.alpha_exponent > sizes.zeta_exponent > sizes.beta_exponent
        conditions["timescale_ordering"] = ordered
        if not ordered:
            messages.append("timescale ordering requires alpha_exponent > zeta_exponent > beta_exponent")
    elif "beta" in rates:
        ordered = sizes.alpha_exponent > sizes.beta_exponent
        conditions["timescale_ordering"] = ordered
        if not ordered:
            messages.append("timescale ordering requires alpha_exponent > beta_exponent")

    status = "ok" if all(conditions.values()) else "invalid"
    return ScheduleReport(
        status=status,
        conditions=conditions,
        messages=tuple(messages),
        partial_sums=partial,
    )
