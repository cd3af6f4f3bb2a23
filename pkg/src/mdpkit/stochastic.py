"""MDPs with additive reward noise: Monte Carlo E[max] backups.

Per-state noise vectors perturb the action values before the max.  With
i.i.d. Gumbel noise the expected-max backup has the log-sum-exp closed form
(`ev_backup`), which is what ties this framework to the entropy-regularized
one.  Other noise laws go through Monte Carlo with common random numbers so
that value iteration still converges to a fixed point of the (fixed-draw)
perturbed operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp, softmax

from .core import MdpModel, derive_rng

EULER_GAMMA = float(np.euler_gamma)


class NoiseModel:
    """Per-state sampler for an additive noise vector over actions.

    `sample(state, n, rng)` returns an (n, num_actions) array; `mean(state)`
    returns the per-action expected noise.  Sampling must be a pure function
    of (state, n, rng) so streams can be split per (seed, state, sweep).
    """

    def sample(self, state, n, rng) -> np.ndarray:
        raise NotImplementedError

    def mean(self, state) -> np.ndarray:
        raise NotImplementedError


class GumbelIid(NoiseModel):
    """I.i.d. Gumbel(location, scale eta) noise on every action.

    Location defaults to 0, whose mean is eta * euler_gamma; use
    `GumbelIid.mean_zero(eta)` for the mean-zero convention that matches
    `ev_backup` values directly.
    """

    def __init__(self, eta, location=0.0, num_actions=None):
        if eta <= 0:
            raise ValueError(f"scale must be positive, got {eta}")
        self.eta = float(eta)
        self.location = float(location)
        self.num_actions = num_actions

    @classmethod
    def mean_zero(cls, eta, num_actions=None):
        return cls(eta, location=-eta * EULER_GAMMA, num_actions=num_actions)

    def _width(self, w_len=None):
        if self.num_actions is not None:
            return self.num_actions
        if w_len is None:
            raise ValueError("num_actions unknown; construct with num_actions=")
        return w_len

    def sample(self, state, n, rng, num_actions=None):
        a = self.num_actions if num_actions is None else num_actions
        if a is None:
            raise ValueError("num_actions unknown; construct with num_actions=")
        return rng.gumbel(loc=self.location, scale=self.eta, size=(n, a))

    def mean(self, state):
        a = self._width()
        return np.full(a, self.location + self.eta * EULER_GAMMA)


class UniformPerEntry(NoiseModel):
    """Independent Uniform[lo, hi] noise per (state, action); lo == hi allowed."""

    def __init__(self, bounds):
        bounds = np.asarray(bounds, dtype=float)
        if bounds.ndim != 3 or bounds.shape[2] != 2:
            raise ValueError(f"bounds must have shape (S, A, 2), got {bounds.shape}")
        if np.any(bounds[..., 0] > bounds[..., 1]):
            raise ValueError("lower bound exceeds upper bound somewhere")
        self.bounds = bounds

    def sample(self, state, n, rng):
        lo = self.bounds[state, :, 0]
        hi = self.bounds[state, :, 1]
        return lo + (hi - lo) * rng.random((n, lo.shape[0]))

    def mean(self, state):
        return self.bounds[state].mean(axis=1)


class GaussianJoint(NoiseModel):
    """Mean-zero jointly Gaussian noise with a per-state covariance matrix."""

    def __init__(self, cov):
        cov = np.asarray(cov, dtype=float)
        if cov.ndim != 3 or cov.shape[1] != cov.shape[2]:
            raise ValueError(f"cov must have shape (S, A, A), got {cov.shape}")
        for s in range(cov.shape[0]):
            if np.min(np.linalg.eigvalsh(cov[s])) < -1e-10:
                raise ValueError(f"covariance for state {s} is not PSD")
        self.cov = cov

    def sample(self, state, n, rng):
        a = self.cov.shape[1]
        return rng.multivariate_normal(np.zeros(a), self.cov[state], size=n,
                                       method="eigh")

    def mean(self, state):
        return np.zeros(self.cov.shape[1])


@dataclass
class EmaxEstimate:
    mean: float
    std_error: float
    samples: int


@dataclass
class EvBackup:
    """Closed-form Gumbel expected-max backup.

    `gumbel_location` records the location convention the value corresponds
    to (mean-zero, i.e. -eta * euler_gamma): Monte Carlo estimates taken with
    location-0 samplers exceed `value` by eta * euler_gamma.
    """

    value: float
    policy: np.ndarray
    gumbel_location: float


def _draws(w, noise, samples, rng, state):
    if isinstance(noise, GumbelIid):
        return noise.sample(state, samples, rng, num_actions=len(w))
    return noise.sample(state, samples, rng)


def mc_emax(w, noise, samples, seed, state=0) -> EmaxEstimate:
    """Monte Carlo estimate of E[max_a (w_a + eps_a)] with its standard error."""
    w = np.asarray(w, dtype=float)
    rng = derive_rng(seed, state)
    vals = w + _draws(w, noise, samples, rng, state)
    m = vals.max(axis=1)
    return EmaxEstimate(mean=float(m.mean()),
                        std_error=float(m.std(ddof=1) / np.sqrt(samples)),
                        samples=samples)


def mc_policy(w, noise, samples, seed, state=0) -> np.ndarray:
    """Empirical argmax frequencies under the noise (lowest index on ties)."""
    w = np.asarray(w, dtype=float)
    rng = derive_rng(seed, state)
    vals = w + _draws(w, noise, samples, rng, state)
    idx = vals.argmax(axis=1)
    return np.bincount(idx, minlength=w.shape[0]) / float(samples)


def ev_backup(w, eta) -> EvBackup:
    """Exact Gumbel expected-max backup under the mean-zero convention.

    value = eta * ln sum_a exp(w_a / eta); the choice probabilities are the
    softmax row.  With location-0 noise the expected max is value plus
    eta * euler_gamma.
    """
    if eta <= 0:
        raise ValueError(f"scale must be positive, got {eta}")
    w = np.asarray(w, dtype=float)
    return EvBackup(value=float(eta * logsumexp(w / eta)),
                    policy=softmax(w / eta),
                    gumbel_location=-eta * EULER_GAMMA)


def smdp_backup_operator(noise, samples, seed, fresh_per_sweep=False):
    """Monte Carlo backup operator for noisy-reward value iteration.

    By default the draws for a state are fixed across sweeps (common random
    numbers): the operator is then a deterministic contraction-in-practice
    and value iteration settles to the fixed point of the perturbed operator.
    Value and policy come from the same draws.  Draws are cached per state,
    costing samples * num_actions floats per state.
    """
    cache = {}

    def op(w, state, sweep):
        w = np.asarray(w, dtype=float)
        if fresh_per_sweep:
            eps = _draws(w, noise, samples, derive_rng(seed, state, sweep), state)
        else:
            eps = cache.get(state)
            if eps is None:
                eps = _draws(w, noise, samples, derive_rng(seed, state), state)
                cache[state] = eps
        vals = w + eps
        m = vals.max(axis=1)
        freq = np.bincount(vals.argmax(axis=1), minlength=w.shape[0]) / float(samples)
        return float(m.mean()), freq

    return op


def build_uniform_counterexample(r1, r2, discount=0.9):
    """Three-state chooser model with Uniform[0, 1] noise on one entry.

    State 0 picks between two absorbing zero-reward states; action 1 pays r1
    plus Uniform[0, 1] noise, action 2 pays r2 exactly.  Returns the model
    and its noise.
    """
    transition = np.zeros((3, 2, 3))
    transition[0, 0, 1] = 1.0
    transition[0, 1, 2] = 1.0
    transition[1, :, 1] = 1.0
    transition[2, :, 2] = 1.0
    reward = np.zeros((3, 2))
    reward[0] = [r1, r2]
    model = MdpModel(num_states=3, num_actions=2, transition=transition,
                     reward=reward, discount=discount)
    bounds = np.zeros((3, 2, 2))
    bounds[0, 0] = [0.0, 1.0]
    return model, UniformPerEntry(bounds)


def uniform_counterexample_ratio(r1, r2, beta=0.0) -> float:
    """Published piecewise policy ratio for the uniform-noise chooser model.

    Reproduced verbatim from its source: with t = r2 - r1 + beta the ratio is
    0 for t <= 0, t / (1 - t) for 0 < t < 1, and infinity for t >= 1.  Note
    the direct probability calculation P[eps >= t] / P[eps < t] gives the
    transposed value (1 - t) / t on the middle branch; `mc_counterexample_ratio`
    estimates that orientation empirically, and tests document that the two
    are reciprocals.
    """
    t = r2 - r1 + beta
    if t <= 0:
        return 0.0
    if t >= 1:
        return np.inf
    return t / (1.0 - t)


def mc_counterexample_ratio(r1, r2, beta=0.0, samples=1000000, seed=0) -> float:
    """Monte Carlo pi(a1)/pi(a2) at the chooser state of the uniform model."""
    rng = derive_rng(seed, 0)
    eps = rng.random(samples)
    wins = float(np.count_nonzero(r1 + eps >= r2 + beta))
    losses = samples - wins
    if losses == 0:
        return np.inf
    return wins / losses


@dataclass
class FitResult:
    """Best single-temperature softmax fit of a set of policy ratios."""

    eta: float
    residual: float


def refute_single_eta_fit(deltas, ratios) -> FitResult:
    """Min over eta > 0 of the worst log-ratio error |ln r_i - delta_i / eta|.

    deltas are action-value gaps (w_1 - w_2) and ratios the target
    pi(a1)/pi(a2) values a single softmax temperature would have to satisfy
    simultaneously.  A residual far from zero certifies no temperature fits.
    """
    deltas = np.asarray(deltas, dtype=float)
    logr = np.log(np.asarray(ratios, dtype=float))

    def worst(log_eta):
        return float(np.max(np.abs(logr - deltas / np.exp(log_eta))))

    res = minimize_scalar(worst, bounds=(-16.0, 16.0), method="bounded",
                          options={"xatol": 1e-12})
    grid = np.linspace(-16, 16, 2001)
    best = min([(worst(x), x) for x in grid] + [(res.fun, res.x)])
    return FitResult(eta=float(np.exp(best[1])), residual=float(best[0]))
