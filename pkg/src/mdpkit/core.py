"""Tabular MDP model, validation, and the shared value-iteration engine.

A model is the tuple (states, actions, transition kernel, reward table,
discount).  Everything downstream (regularized, stochastic, distributionally
robust, constrained) plugs into `value_iteration` through a backup operator:
a callable mapping the action-value vector of one state to a scalar backup
value and a probability row over actions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROW_SUM_TOL = 1e-12
POLICY_ROW_TOL = 1e-10


class ModelValidationError(ValueError):
    """Raised when a model (or model file) violates a structural invariant."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ConvergenceError(RuntimeError):
    """Raised when an iterative routine exhausts its budget.

    Carries the last residual and, when available, the best iterate so the
    caller can inspect how close the run came.
    """

    def __init__(self, message, residual=None, best=None):
        super().__init__(message)
        self.residual = residual
        self.best = best


def _frozen(a):
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MdpModel:
    """Finite MDP: reward[s, a], transition[s, a, s'], discount in [0, 1).

    Arrays are copied and marked read-only, so a model can be shared across
    threads; parallel sweeps over states are safe.
    """

    num_states: int
    num_actions: int
    transition: np.ndarray
    reward: np.ndarray
    discount: float

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "reward", _frozen(self.reward))
        violations = validate_model(self)
        if violations:
            raise ModelValidationError(violations)


@dataclass
class SolveResult:
    """Outcome of value iteration: value per state, policy rows, diagnostics."""

    value: np.ndarray
    policy: np.ndarray
    iterations: int
    residual: float


def validate_model(model) -> list:
    """Return a list of human-readable invariant violations (empty if valid)."""
    v = []
    S, A = model.num_states, model.num_actions
    if S < 1 or A < 1:
        v.append(f"need at least one state and one action, got ({S}, {A})")
        return v
    if model.transition.shape != (S, A, S):
        v.append(f"transition shape {model.transition.shape} != {(S, A, S)}")
    if model.reward.shape != (S, A):
        v.append(f"reward shape {model.reward.shape} != {(S, A)}")
    if v:
        return v
    if not np.all(np.isfinite(model.reward)):
        bad = np.argwhere(~np.isfinite(model.reward))[0]
        v.append(f"reward not finite at (s={bad[0]}, a={bad[1]})")
    if not np.all(np.isfinite(model.transition)):
        v.append("transition has non-finite entries")
    else:
        if np.any(model.transition < 0):
            s, a, _ = np.argwhere(model.transition < 0)[0]
            v.append(f"negative transition probability at (s={s}, a={a})")
        rowsum = model.transition.sum(axis=2)
        off = np.abs(rowsum - 1.0)
        if np.any(off > ROW_SUM_TOL):
            s, a = np.argwhere(off > ROW_SUM_TOL)[0]
            v.append(
                f"transition row (s={s}, a={a}) sums to {rowsum[s, a]!r}, "
                f"outside 1 +/- {ROW_SUM_TOL}"
            )
    if not (0.0 <= model.discount < 1.0):
        v.append(f"discount {model.discount!r} outside [0, 1)")
    return v


def validate_policy_matrix(probs, num_states=None, num_actions=None) -> list:
    """Check that `probs` is a row-stochastic matrix within tolerance."""
    probs = np.asarray(probs, dtype=float)
    v = []
    if probs.ndim != 2:
        return [f"policy must be 2-d, got shape {probs.shape}"]
    if num_states is not None and probs.shape[0] != num_states:
        return [f"policy has {probs.shape[0]} rows, expected {num_states}"]
    if num_actions is not None and probs.shape[1] != num_actions:
        return [f"policy has {probs.shape[1]} columns, expected {num_actions}"]
    if not np.all(np.isfinite(probs)):
        v.append("policy has non-finite entries")
        return v
    if np.any(probs < -POLICY_ROW_TOL):
        s, a = np.argwhere(probs < -POLICY_ROW_TOL)[0]
        v.append(f"negative policy entry at (s={s}, a={a})")
    off = np.abs(probs.sum(axis=1) - 1.0)
    if np.any(off > POLICY_ROW_TOL):
        s = int(np.argmax(off))
        v.append(f"policy row s={s} sums to {probs[s].sum()!r}")
    return v


def q_vector(model, value, state) -> np.ndarray:
    """Action values at `state`: reward row plus discounted expected value."""
    return model.reward[state] + model.discount * (model.transition[state] @ value)


def standard_backup(w):
    """Hard max backup: (max_a w_a, one-hot at the argmax, lowest index on ties)."""
    w = np.asarray(w, dtype=float)
    a = int(np.argmax(w))
    row = np.zeros(w.shape[0])
    row[a] = 1.0
    return float(w[a]), row


def standard_backup_operator():
    """Backup operator for the plain (unregularized) Bellman update."""
    return lambda w, state, sweep: standard_backup(w)


def bellman_sweep(model, backup, value, sweep=0):
    """One synchronous sweep: returns (new value vector, policy matrix).

    States are independent given `value`, so this loop could run in parallel;
    the backup operator receives (w, state, sweep) and must not mutate shared
    state.
    """
    S = model.num_states
    new_value = np.empty(S)
    policy = np.empty((S, model.num_actions))
    for s in range(S):
        val, row = backup(q_vector(model, value, s), s, sweep)
        new_value[s] = val
        policy[s] = row
    return new_value, policy


def value_iteration(model, backup, tol=1e-10, max_iter=100000) -> SolveResult:
    """Iterate synchronous sweeps until the sup-norm residual drops below tol.

    Raises ConvergenceError (carrying the last residual) if max_iter sweeps
    do not reach the tolerance.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    value = np.zeros(model.num_states)
    policy = None
    residual = np.inf
    for sweep in range(1, max_iter + 1):
        new_value, policy = bellman_sweep(model, backup, value, sweep - 1)
        residual = float(np.max(np.abs(new_value - value)))
        value = new_value
        if residual <= tol:
            return SolveResult(value=value, policy=policy, iterations=sweep,
                               residual=residual)
    raise ConvergenceError(
        f"value iteration did not reach tol={tol} in {max_iter} sweeps "
        f"(last residual {residual})",
        residual=residual,
        best=SolveResult(value=value, policy=policy, iterations=max_iter,
                         residual=residual),
    )


def policy_evaluation_exact(model, policy) -> np.ndarray:
    """Value of a fixed policy via the linear system (I - gamma P_pi) V = r_pi."""
    policy = np.asarray(policy, dtype=float)
    bad = validate_policy_matrix(policy, model.num_states, model.num_actions)
    if bad:
        raise ModelValidationError(bad)
    r_pi = np.einsum("sa,sa->s", policy, model.reward)
    p_pi = np.einsum("sa,sat->st", policy, model.transition)
    mat = np.eye(model.num_states) - model.discount * p_pi
    value = np.linalg.solve(mat, r_pi)
    res = float(np.max(np.abs(mat @ value - r_pi)))
    if res > 1e-8 * max(1.0, float(np.max(np.abs(r_pi)))):
        raise ConvergenceError(
            f"policy evaluation linear solve residual {res} too large",
            residual=res,
        )
    return value


def random_mdp(num_states, num_actions, seed, reward_range=(-1.0, 1.0),
               discount=0.9) -> MdpModel:
    """Random dense model: normalized positive transition rows, uniform rewards."""
    lo, hi = reward_range
    if not lo < hi:
        raise ValueError(f"empty reward range {reward_range}")
    rng = np.random.default_rng(seed)
    raw = rng.random((num_states, num_actions, num_states)) + 1e-9
    transition = raw / raw.sum(axis=2, keepdims=True)
    reward = rng.uniform(lo, hi, size=(num_states, num_actions))
    return MdpModel(num_states=num_states, num_actions=num_actions,
                    transition=transition, reward=reward, discount=discount)


def derive_rng(seed, *key) -> np.random.Generator:
    """Independent generator for (seed, *key); reproducible under any schedule.

    Recreating the generator for the same key replays the same stream, which
    is how common random numbers across sweeps are implemented.  The key
    length goes into the entropy so (0, 1) and (0, 1, 0) do not collide
    through SeedSequence zero padding.
    """
    return np.random.default_rng([int(seed), len(key)] + [int(k) for k in key])
