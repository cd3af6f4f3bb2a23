"""Distributionally robust backups: ambiguity sets as concave regularizers.

Three ambiguity families for the per-state noise distribution are supported,
each realized as an equivalent concave regularizer on the action simplex so
the smoothed-Bellman machinery solves them:

- marginal inverse-CDF constraints (regularizer: per-action upper-tail
  integrals of the inverse CDFs),
- marginal mean-zero / std constraints (regularizer: sum of
  sigma_a * sqrt(p_a (1 - p_a))),
- full covariance constraints (regularizer: trace of the square root of
  S^(1/2) (Diag(p) - p p^T) S^(1/2)).

`ds_lower_bound_check` draws from one member distribution of the set and
verifies the Monte Carlo expected max stays below the robust value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import expi, logsumexp, softmax

from .core import derive_rng
from .regularized import (ConjugateResult, Regularizer, numeric_conjugate,
                          regularized_backup_operator)

_PROBE_GRID = np.linspace(1e-3, 1.0 - 1e-3, 1000)
EULER_GAMMA = float(np.euler_gamma)


class InverseCdf:
    """Inverse CDF of one noise marginal: callable on t in (0, 1).

    `mass_integral(p)` is the upper-tail integral of the inverse CDF from
    1 - p to 1, the building block of the marginal-CDF regularizer.
    `draw(u)` maps uniforms to samples (inverse-transform sampling).
    """

    def __call__(self, t):
        raise NotImplementedError

    def mass_integral(self, p) -> float:
        raise NotImplementedError

    def draw(self, u):
        return self(u)

    def validate(self):
        vals = np.asarray([self(t) for t in _PROBE_GRID], dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("inverse CDF not finite on the probe grid")
        if np.any(np.diff(vals) < -1e-12):
            raise ValueError("inverse CDF is not nondecreasing")
        if not np.isfinite(self.mass_integral(1.0)):
            raise ValueError("inverse CDF has no finite first moment")


class ExponentialInverseCdf(InverseCdf):
    """Exponential(rate) marginal: F^-1(t) = -ln(1 - t) / rate."""

    def __init__(self, rate=1.0):
        if rate <= 0:
            raise ValueError(f"rate must be positive, got {rate}")
        self.rate = float(rate)

    def __call__(self, t):
        return -np.log1p(-np.asarray(t, dtype=float)) / self.rate

    def mass_integral(self, p):
        p = float(p)
        if p <= 0:
            return 0.0
        return (p - p * np.log(p)) / self.rate


class UniformInverseCdf(InverseCdf):
    def __init__(self, lo=0.0, hi=1.0):
        if not lo < hi:
            raise ValueError(f"need lo < hi, got ({lo}, {hi})")
        self.lo = float(lo)
        self.hi = float(hi)

    def __call__(self, t):
        return self.lo + (self.hi - self.lo) * np.asarray(t, dtype=float)

    def mass_integral(self, p):
        p = float(p)
        return self.lo * p + (self.hi - self.lo) * p * (2.0 - p) / 2.0


class GumbelInverseCdf(InverseCdf):
    """Location-0 Gumbel marginal: F^-1(t) = -scale * ln(-ln t)."""

    def __init__(self, scale=1.0):
        if scale <= 0:
            raise ValueError(f"scale must be positive, got {scale}")
        self.scale = float(scale)

    def __call__(self, t):
        return -self.scale * np.log(-np.log(np.asarray(t, dtype=float)))

    def mass_integral(self, p):
        # int_{1-p}^1 F^-1 = scale * (exp(-z) ln z - Ei(-z) + euler_gamma)
        # with z = -ln(1 - p); series near z = 0 avoids the ln z blowup.
        p = float(p)
        if p <= 0:
            return 0.0
        if p >= 1:
            return self.scale * EULER_GAMMA
        z = -np.log1p(-p)
        if z < 1e-6:
            return self.scale * (-z * np.log(z) + z)
        return self.scale * (np.exp(-z) * np.log(z) - expi(-z) + EULER_GAMMA)


class TabulatedInverseCdf(InverseCdf):
    """Piecewise-linear inverse CDF given on knots; clamped outside the knots."""

    def __init__(self, t, values):
        t = np.asarray(t, dtype=float)
        values = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != values.shape or t.shape[0] < 2:
            raise ValueError("need matching 1-d knot and value arrays, length >= 2")
        if np.any(t <= 0) or np.any(t >= 1) or np.any(np.diff(t) <= 0):
            raise ValueError("knots must be strictly increasing inside (0, 1)")
        if not np.all(np.isfinite(values)) or np.any(np.diff(values) < 0):
            raise ValueError("values must be finite and nondecreasing")
        self.t = t
        self.values = values

    def __call__(self, t):
        return np.interp(np.asarray(t, dtype=float), self.t, self.values)

    def mass_integral(self, p):
        p = float(p)
        if p <= 0:
            return 0.0
        lo = 1.0 - p
        inner = [float(k) for k in self.t if lo < k < 1.0]
        val, _ = quad(self, lo, 1.0, points=inner or None,
                      epsabs=1e-10, limit=10000)
        return val


class MarginalDistributionModel:
    """Per-(state, action) inverse CDFs; validated on a 1000-point probe grid."""

    def __init__(self, inverse_cdfs):
        rows = [list(row) for row in inverse_cdfs]
        if not rows or any(len(r) != len(rows[0]) for r in rows):
            raise ValueError("inverse_cdfs must be a rectangular (S, A) table")
        for s, row in enumerate(rows):
            for a, cdf in enumerate(row):
                try:
                    cdf.validate()
                except ValueError as exc:
                    raise ValueError(f"inverse CDF at (s={s}, a={a}): {exc}") from exc
        self.inverse_cdfs = rows
        self.num_states = len(rows)
        self.num_actions = len(rows[0])


class MarginalMomentModel:
    """Mean-zero noise with per-(state, action) standard deviation bounds."""

    def __init__(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim != 2:
            raise ValueError(f"sigma must be (S, A), got shape {sigma.shape}")
        if np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
            raise ValueError("sigma entries must be finite and nonnegative")
        self.sigma = sigma
        self.num_states, self.num_actions = sigma.shape


class CovarianceModel:
    """Mean-zero noise with a fixed per-state covariance matrix."""

    def __init__(self, matrices):
        matrices = np.asarray(matrices, dtype=float)
        if matrices.ndim != 3 or matrices.shape[1] != matrices.shape[2]:
            raise ValueError(f"matrices must be (S, A, A), got {matrices.shape}")
        for s in range(matrices.shape[0]):
            if np.min(np.linalg.eigvalsh(matrices[s])) < -1e-10:
                raise ValueError(f"covariance for state {s} is not PSD")
        self.matrices = matrices
        self.num_states, self.num_actions = matrices.shape[:2]


def mdm_regularizer(model, state, pi_row) -> float:
    """Sum over actions of the upper-tail inverse-CDF integral at pi_a."""
    pi_row = np.asarray(pi_row, dtype=float)
    row = model.inverse_cdfs[state]
    return float(sum(cdf.mass_integral(p) for cdf, p in zip(row, pi_row)))


def mmm_regularizer(model, state, pi_row) -> float:
    """sum_a sigma_a * sqrt(p_a (1 - p_a))."""
    pi_row = np.asarray(pi_row, dtype=float)
    inner = np.clip(pi_row * (1.0 - pi_row), 0.0, None)
    return float(np.sum(model.sigma[state] * np.sqrt(inner)))


def covariance_regularizer(model, state, pi_row) -> float:
    """trace((S^(1/2) (Diag(p) - p p^T) S^(1/2))^(1/2)) via eigendecomposition."""
    return CovarianceRegularizer(model.matrices[state]).value(pi_row)


class MdmRegularizer(Regularizer):
    """Marginal-CDF regularizer for one state; gradient F^-1_a(1 - p_a)."""

    def __init__(self, cdf_row):
        self.cdfs = list(cdf_row)

    def value(self, p):
        p = np.asarray(p, dtype=float)
        return float(sum(c.mass_integral(pa) for c, pa in zip(self.cdfs, p)))

    def gradient(self, p):
        p = np.asarray(p, dtype=float)
        return np.array([c(1.0 - pa) for c, pa in zip(self.cdfs, p)])

    def conjugate(self, w):
        # softmax closed form when every marginal is exponential at one rate
        if all(isinstance(c, ExponentialInverseCdf) for c in self.cdfs):
            rates = {c.rate for c in self.cdfs}
            if len(rates) == 1:
                lam = rates.pop()
                w = np.asarray(w, dtype=float)
                return ConjugateResult(
                    value=float((1.0 + logsumexp(lam * w)) / lam),
                    argmax=softmax(lam * w))
        return None


class MmmRegularizer(Regularizer):
    """Marginal-moment regularizer with a stationarity-based conjugate.

    Per-action stationarity gives p_a = (1 + d_a / sqrt(d_a^2 + sigma_a^2))/2
    with d_a = w_a - nu; the simplex multiplier nu is a scalar root-find.
    """

    def __init__(self, sigma_row):
        sigma = np.asarray(sigma_row, dtype=float)
        if np.any(sigma < 0):
            raise ValueError("sigma entries must be nonnegative")
        self.sigma = sigma

    def value(self, p):
        p = np.asarray(p, dtype=float)
        inner = np.clip(p * (1.0 - p), 0.0, None)
        return float(np.sum(self.sigma * np.sqrt(inner)))

    def gradient(self, p):
        p = np.asarray(p, dtype=float)
        inner = np.clip(p * (1.0 - p), 1e-32, None)
        return self.sigma * (1.0 - 2.0 * p) / (2.0 * np.sqrt(inner))

    def conjugate(self, w):
        w = np.asarray(w, dtype=float)
        n = w.shape[0]
        if n == 1:
            return ConjugateResult(value=float(w[0]), argmax=np.ones(1))
        if np.all(self.sigma == 0):
            best = int(np.argmax(w))
            row = np.zeros(n)
            row[best] = 1.0
            return ConjugateResult(value=float(w[best]), argmax=row)
        sig = np.clip(self.sigma, 1e-12, None)

        def row_for(nu):
            d = w - nu
            return 0.5 * (1.0 + d / np.sqrt(d * d + sig * sig))

        span = (10.0 + n) * float(sig.max())
        lo, hi = float(w.min()) - span, float(w.max()) + span
        nu = brentq(lambda x: row_for(x).sum() - 1.0, lo, hi,
                    xtol=1e-14, rtol=8.9e-16, maxiter=300)
        p = row_for(nu)
        p = np.clip(p, 0.0, None)
        p /= p.sum()
        return ConjugateResult(value=float(w @ p) + self.value(p), argmax=p)


class CovarianceRegularizer(Regularizer):
    """Covariance-trace regularizer phi(p) = trace((S M(p) S)^(1/2)).

    S is the symmetric square root of the covariance matrix and
    M(p) = Diag(p) - p p^T.  The gradient follows from
    d trace(X^(1/2)) = 1/2 trace(X^(-1/2) dX) on the positive eigenspace;
    with B = S A^(+1/2) S (pseudo-inverse square root of A = S M S) it is
    g_a = B_aa / 2 - (B p)_a, reported in mean-zero (simplex-tangent) form.
    The zero eigenvalue of A along the simplex carries no first-order term,
    so dropping it is exact, not an approximation.
    """

    def __init__(self, cov):
        cov = np.asarray(cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError(f"covariance must be square, got shape {cov.shape}")
        vals, vecs = np.linalg.eigh(cov)
        if vals.min() < -1e-10 * max(1.0, float(vals.max())):
            raise ValueError(f"covariance is not PSD (min eigenvalue {vals.min()})")
        vals = np.clip(vals, 0.0, None)
        self.cov = cov
        self.sqrt_cov = (vecs * np.sqrt(vals)) @ vecs.T

    def value(self, p):
        p = np.asarray(p, dtype=float)
        m = np.diag(p) - np.outer(p, p)
        b = self.sqrt_cov @ m @ self.sqrt_cov
        eig = np.linalg.eigvalsh(b)
        # the structural zero eigenvalue comes back as rounding noise of
        # either sign; sqrt would turn that noise into ~1e-8 jitter, so
        # flush everything below a relative threshold to exactly zero
        eig[eig < max(eig.max(), 0.0) * 1e-14] = 0.0
        return float(np.sqrt(eig).sum())

    def gradient(self, p):
        p = np.asarray(p, dtype=float)
        m = np.diag(p) - np.outer(p, p)
        a = self.sqrt_cov @ m @ self.sqrt_cov
        vals, vecs = np.linalg.eigh(a)
        keep = vals > max(vals.max(), 0.0) * 1e-12
        if not np.any(keep):
            return np.zeros(p.shape[0])
        inv_sqrt = (vecs[:, keep] / np.sqrt(vals[keep])) @ vecs[:, keep].T
        b = self.sqrt_cov @ inv_sqrt @ self.sqrt_cov
        g = 0.5 * np.diag(b) - b @ p
        return g - g.mean()


def regularizer_for(ambiguity, state) -> Regularizer:
    """The concave regularizer equivalent to `ambiguity` at `state`."""
    if isinstance(ambiguity, MarginalDistributionModel):
        return MdmRegularizer(ambiguity.inverse_cdfs[state])
    if isinstance(ambiguity, MarginalMomentModel):
        return MmmRegularizer(ambiguity.sigma[state])
    if isinstance(ambiguity, CovarianceModel):
        return CovarianceRegularizer(ambiguity.matrices[state])
    raise TypeError(f"unknown ambiguity model {type(ambiguity).__name__}")


def ds_backup(w, ambiguity, state=0, tol=1e-12) -> ConjugateResult:
    """Robust backup sup over the ambiguity set, via the regularizer conjugate."""
    phi = regularizer_for(ambiguity, state)
    res = phi.conjugate(w)
    if res is None:
        res = numeric_conjugate(w, phi, tol=tol)
    return res


def ds_backup_operator(ambiguity, tol=1e-12):
    """Backup operator for robust value iteration.

    Deliberately the same code path as the regularized operator: robust value
    iteration is regularized value iteration under the equivalent phi.
    """
    phis = [regularizer_for(ambiguity, s) for s in range(ambiguity.num_states)]
    return regularized_backup_operator(phis, tol=tol)


@dataclass
class LowerBoundCheck:
    mc_value: float
    mc_std_error: float
    ds_value: float
    ok: bool


def _member_draws(ambiguity, state, n, rng):
    if isinstance(ambiguity, MarginalDistributionModel):
        row = ambiguity.inverse_cdfs[state]
        u = rng.random((n, len(row)))
        return np.column_stack([c.draw(u[:, a]) for a, c in enumerate(row)])
    if isinstance(ambiguity, MarginalMomentModel):
        sigma = ambiguity.sigma[state]
        signs = np.where(rng.random((n, sigma.shape[0])) < 0.5, -1.0, 1.0)
        return sigma * signs
    if isinstance(ambiguity, CovarianceModel):
        cov = ambiguity.matrices[state]
        return rng.multivariate_normal(np.zeros(cov.shape[0]), cov, size=n,
                                       method="eigh")
    raise TypeError(f"unknown ambiguity model {type(ambiguity).__name__}")


def ds_lower_bound_check(w, ambiguity, seed, state=0,
                         samples=1000000) -> LowerBoundCheck:
    """Sanity check: E[max] under one member distribution <= robust value.

    The member is independent inverse-CDF sampling (marginal-CDF family),
    independent +/- sigma two-point noise (marginal-moment family), or the
    joint Gaussian (covariance family).  `ok` allows 3 standard errors of
    Monte Carlo slack.
    """
    w = np.asarray(w, dtype=float)
    rng = derive_rng(seed, state)
    eps = _member_draws(ambiguity, state, samples, rng)
    m = (w + eps).max(axis=1)
    mc = float(m.mean())
    se = float(m.std(ddof=1) / np.sqrt(samples))
    ds = ds_backup(w, ambiguity, state=state).value
    return LowerBoundCheck(mc_value=mc, mc_std_error=se, ds_value=ds,
                           ok=mc <= ds + 3.0 * se)
