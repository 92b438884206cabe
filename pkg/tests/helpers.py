"""Shared independent oracles for the test suite.

Everything here is deliberately written as direct dense linear algebra or
explicit enumeration over transitions, independent of the library's own
computation paths, so tests cross-check the implementation rather than echo
it.
"""

from __future__ import annotations

import numpy as np

from centered_td import MdpModel


def dense_stationary(p: np.ndarray) -> np.ndarray:
    """Stationary vector via the eigen-decomposition (not power iteration)."""
    vals, vecs = np.linalg.eig(np.asarray(p, dtype=float).T)
    idx = np.argmin(np.abs(vals - 1.0))
    d = np.real(vecs[:, idx])
    return d / d.sum()


def tabular_centered_fixpoint(model: MdpModel, d: np.ndarray) -> tuple[np.ndarray, float]:
    """Value table V and offset lam with ``T V - V = lam * 1`` and ``d . V = 0``.

    Solves the square bordered system [[I - gamma P, 1], [d, 0]] [V; lam] =
    [r_pi; 0] directly.
    """
    n = model.n_states
    p = model.p_target
    r_pi = (p * model.rewards).sum(axis=1)
    top = np.hstack([np.eye(n) - model.gamma * p, np.ones((n, 1))])
    bottom = np.hstack([d[None, :], np.zeros((1, 1))])
    system = np.vstack([top, bottom])
    rhs = np.concatenate([r_pi, [0.0]])
    sol = np.linalg.solve(system, rhs)
    return sol[:n], float(sol[n])


def transition_expectation(model: MdpModel, d: np.ndarray, func) -> np.ndarray:
    """Exact expectation of ``func(s, s_next, r, rho)`` over stationary samples.

    ``s ~ d`` and ``s_next ~ p_behavior[s]``; this is the enumeration oracle
    for Monte-Carlo-style claims.
    """
    rho_tab = model.rho_table()
    total = None
    for s in range(model.n_states):
        for sp in range(model.n_states):
            w = d[s] * model.p_behavior[s, sp]
            if w == 0.0:
                continue
            term = w * np.asarray(func(s, sp, model.rewards[s, sp], rho_tab[s, sp]), dtype=float)
            total = term if total is None else total + term
    return total


def reward_chain() -> MdpModel:
    """Small ergodic on-policy chain with low-dispersion rewards."""
    p = np.array([[0.3, 0.7], [0.6, 0.4]])
    rewards = np.array([[1.0, 0.8], [1.1, 0.9]])
    return MdpModel(n_states=2, p_behavior=p, p_target=p, rewards=rewards, gamma=0.9)


def off_policy_reward_chain() -> MdpModel:
    """Two-state off-policy chain with nonzero rewards and full coverage."""
    p_mu = np.array([[0.5, 0.5], [0.5, 0.5]])
    p_pi = np.array([[0.2, 0.8], [0.3, 0.7]])
    rewards = np.array([[1.0, 2.0], [3.0, 4.0]])
    return MdpModel(n_states=2, p_behavior=p_mu, p_target=p_pi, rewards=rewards, gamma=0.9)
