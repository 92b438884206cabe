"""Benchmark environments and transition samplers.

Three fixed policy-evaluation benchmarks (the 13-state on-policy chain with
interpolating features, the 2-state off-policy counterexample, and the
7-state off-policy counterexample) plus the parameterized two-state family.
Environment specs are immutable; sampling is driven by an explicit,
counter-based RNG so identical seeds give identical sample streams on every
platform.

Sampling draw order (the contract both the scalar and batched samplers obey):

* trajectory mode: one uniform per step for the successor state; specs with
  ``random_start`` consume one extra uniform up front for the initial state.
* iid-stationary mode: two uniforms per step, first for the state (drawn from
  the behavior chain's stationary distribution), then for the successor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ModelError
from .learners import TransitionSample
from .mdp import FeatureMap, MdpModel, stationary_distribution

SAMPLING_MODES = ("trajectory", "iid-stationary")

RNG_ALGORITHM = "philox4x64"  # numpy's counter-based Philox-4x64-10 generator


@dataclass(frozen=True)
class RngStream:
    """Seeded handle on a portable pseudo-random generator.

    Uses numpy's Philox counter-based generator, whose state-transition rule
    is fixed by the algorithm specification, so a seed determines the sample
    sequence independent of platform.  Per-run substreams are derived by
    XOR-ing the run index into the seed.
    """

    seed: int
    algorithm: str = RNG_ALGORITHM

    def __post_init__(self):
        if self.algorithm != RNG_ALGORITHM:
            raise ConfigError(f"unsupported rng algorithm {self.algorithm!r}")
        object.__setattr__(self, "seed", int(self.seed) & (2**64 - 1))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed))

    def substream(self, index: int) -> "RngStream":
        return RngStream(self.seed ^ int(index))


@dataclass(frozen=True)
class EnvironmentSpec:
    """A model, its feature map, and how runs sample from it."""

    name: str
    model: MdpModel
    features: FeatureMap
    start_state: int = 0
    random_start: bool = False
    sampling_mode: str = "trajectory"

    def __post_init__(self):
        if self.features.n_states != self.model.n_states:
            raise ModelError("feature row count must equal n_states")
        if not 0 <= self.start_state < self.model.n_states:
            raise ModelError(f"start_state {self.start_state} out of range")
        if self.sampling_mode not in SAMPLING_MODES:
            raise ModelError(
                f"sampling_mode must be one of {SAMPLING_MODES}, got {self.sampling_mode!r}"
            )


def boyan_chain() -> EnvironmentSpec:
    """13-state on-policy chain with 4-dimensional interpolating features.

    From states 0..10 the agent advances one or two states with equal
    probability (the two-step move from state 10 lands on 12); state 11
    always moves to 12; state 12 restarts the chain at 0.  Rewards are -2 on
    the 11 -> 12 transition, 0 on the restart, and -3 everywhere else.  The
    chain is treated as continuing, so it has a stationary distribution.
    """
    n = 13
    p = np.zeros((n, n))
    r = np.zeros((n, n))
    for s in range(11):
        p[s, s + 1] = 0.5
        p[s, s + 2] = 0.5
        r[s, s + 1] = -3.0
        r[s, s + 2] = -3.0
    p[11, 12] = 1.0
    r[11, 12] = -2.0
    p[12, 0] = 1.0
    phi = np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.75, 0.25, 0.0, 0.0],
            [0.5, 0.5, 0.0, 0.0],
            [0.25, 0.75, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.75, 0.25, 0.0],
            [0.0, 0.5, 0.5, 0.0],
            [0.0, 0.25, 0.75, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.75, 0.25],
            [0.0, 0.0, 0.5, 0.5],
            [0.0, 0.0, 0.25, 0.75],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    model = MdpModel(n_states=n, p_behavior=p, p_target=p, rewards=r, gamma=0.9)
    return EnvironmentSpec(name="boyan", model=model, features=FeatureMap(phi))


def two_state(
    a: float, b: float, x: float, y: float, m: float, n: float, gamma: float
) -> EnvironmentSpec:
    """Two-state off-policy family with scalar features ``(m, n)``.

    Behavior chain ``[[a, 1-a], [b, 1-b]]`` and target chain ``[[x, 1-x],
    [y, 1-y]]``; all rewards zero.  Raises on coverage violations (a target
    transition the behavior chain never takes).
    """
    model = MdpModel(
        n_states=2,
        p_behavior=[[a, 1.0 - a], [b, 1.0 - b]],
        p_target=[[x, 1.0 - x], [y, 1.0 - y]],
        rewards=np.zeros((2, 2)),
        gamma=gamma,
    )
    features = FeatureMap([[m], [n]])
    return EnvironmentSpec(name="two-state", model=model, features=features)


def two_state_default() -> EnvironmentSpec:
    """The standard instance: uniform behavior, always-right target, features (1, 2)."""
    return two_state(0.5, 0.5, 0.0, 0.0, 1.0, 2.0, 0.9)


def baird_seven() -> EnvironmentSpec:
    """7-state off-policy counterexample on which uncorrected TD diverges.

    The behavior chain picks the solid action (to state 7) with probability
    1/7 and otherwise lands uniformly on states 1..6, so every transition
    probability is exactly 1/7.  The target chain always takes the solid
    action.  All rewards are zero; the start state is drawn uniformly per
    run.
    """
    n = 7
    p_mu = np.full((n, n), 1.0 / 7.0)
    p_pi = np.zeros((n, n))
    p_pi[:, 6] = 1.0
    phi = np.zeros((n, 8))
    for i in range(6):
        phi[i, 0] = 1.0
        phi[i, i + 1] = 2.0
    phi[6, 0] = 2.0
    phi[6, 7] = 1.0
    model = MdpModel(
        n_states=n, p_behavior=p_mu, p_target=p_pi, rewards=np.zeros((n, n)), gamma=0.99
    )
    return EnvironmentSpec(
        name="baird7", model=model, features=FeatureMap(phi), random_start=True
    )


_REGISTRY = {
    "boyan": boyan_chain,
    "two-state": two_state_default,
    "baird7": baird_seven,
}

ENVIRONMENT_NAMES = tuple(sorted(_REGISTRY))


def get_environment(name: str) -> EnvironmentSpec:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ConfigError(
            f"unknown environment {name!r}; expected one of {', '.join(ENVIRONMENT_NAMES)}"
        ) from None


_ENV_DICT_KEYS = {
    "name",
    "n_states",
    "p_behavior",
    "p_target",
    "rewards",
    "gamma",
    "features",
    "start_state",
    "random_start",
}


def environment_from_dict(data: dict) -> EnvironmentSpec:
    """Build a custom environment from a declarative mapping."""
    if not isinstance(data, dict):
        raise ConfigError("inline environment must be an object")
    unknown = set(data) - _ENV_DICT_KEYS
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in inline environment")
    missing = {"n_states", "p_behavior", "p_target", "rewards", "gamma", "features"} - set(data)
    if missing:
        raise ConfigError(f"inline environment is missing key {sorted(missing)[0]!r}")
    model = MdpModel(
        n_states=int(data["n_states"]),
        p_behavior=data["p_behavior"],
        p_target=data["p_target"],
        rewards=data["rewards"],
        gamma=float(data["gamma"]),
    )
    return EnvironmentSpec(
        name=str(data.get("name", "custom")),
        model=model,
        features=FeatureMap(data["features"]),
        start_state=int(data.get("start_state", 0)),
        random_start=bool(data.get("random_start", False)),
    )


def _draw_index(cumulative: np.ndarray, u: float) -> int:
    idx = int(np.searchsorted(cumulative, u, side="right"))
    return min(idx, len(cumulative) - 1)


def _uniform_state(u: float, n: int) -> int:
    return min(int(u * n), n - 1)


def initial_state(spec: EnvironmentSpec, rng: np.random.Generator) -> int:
    """Starting state for a run; consumes one uniform when the spec randomizes it."""
    if spec.random_start:
        return _uniform_state(float(rng.random()), spec.model.n_states)
    return spec.start_state


def sample_step(
    spec: EnvironmentSpec,
    current_state: int,
    rng: np.random.Generator,
    d_mu: np.ndarray | None = None,
) -> tuple[TransitionSample, int]:
    """Draw one transition and return it with the follow-on state.

    In trajectory mode the successor of the emitted sample is the next
    current state.  In iid-stationary mode the sampled state is drawn fresh
    from the behavior chain's stationary distribution each call (pass a
    precomputed ``d_mu`` to avoid recomputing it per call); the follow-on
    state is the drawn successor, though chaining is immaterial in that mode.
    """
    model = spec.model
    n = model.n_states
    if not 0 <= current_state < n:
        raise ModelError(f"state {current_state} out of range")
    if spec.sampling_mode == "iid-stationary":
        if d_mu is None:
            d_mu = stationary_distribution(model.p_behavior).d
        s = _draw_index(np.cumsum(d_mu), float(rng.random()))
    else:
        s = current_state
    s_next = _draw_index(np.cumsum(model.p_behavior[s]), float(rng.random()))
    rho = model.rho_table()[s, s_next]
    sample = TransitionSample(
        s=s,
        s_next=s_next,
        r=float(model.rewards[s, s_next]),
        phi_s=spec.features.phi[s],
        phi_next=spec.features.phi[s_next],
        rho=float(rho),
    )
    return sample, s_next


def sample_path(
    spec: EnvironmentSpec,
    steps: int,
    rng: np.random.Generator,
    subsample: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Batched sample stream: arrays ``(s, s_next, r, rho)`` of length ``steps``.

    Matches the draw order of repeated :func:`sample_step` calls exactly.
    With ``subsample=True`` (triple mode for CTDC) states are drawn from the
    stationary distribution and successors from the *target* chain, and the
    returned ratios are identically 1.
    """
    model = spec.model
    n = model.n_states
    if subsample or spec.sampling_mode == "iid-stationary":
        d_mu = stationary_distribution(model.p_behavior).d
        cum_d = np.cumsum(d_mu)
        u = rng.random((steps, 2))
        s = np.minimum(np.searchsorted(cum_d, u[:, 0], side="right"), n - 1)
        successor_chain = model.p_target if subsample else model.p_behavior
        cum_rows = np.cumsum(successor_chain, axis=1)[s]
        s_next = np.minimum((cum_rows <= u[:, 1:2]).sum(axis=1), n - 1)
    else:
        cum = np.cumsum(model.p_behavior, axis=1)
        state = initial_state(spec, rng)
        u = rng.random(steps)
        s = np.empty(steps, dtype=np.int64)
        s_next = np.empty(steps, dtype=np.int64)
        for t in range(steps):
            nxt = _draw_index(cum[state], u[t])
            s[t] = state
            s_next[t] = nxt
            state = nxt
    r = model.rewards[s, s_next]
    if subsample:
        rho = np.ones(steps)
    else:
        rho = model.rho_table()[s, s_next]
    return s.astype(np.int64), s_next.astype(np.int64), r, rho
