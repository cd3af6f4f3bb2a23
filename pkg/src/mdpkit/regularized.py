"""Concave action-simplex regularizers and the smoothed Bellman backup.

The regularized backup of an action-value vector w is the convex conjugate
sup_p { w . p + phi(p) } over the probability simplex.  Entropy and
KL-to-reference regularizers have closed forms (log-sum-exp / softmax);
anything else goes through `numeric_conjugate`, an entropic mirror-ascent
solver with a step-halving line search.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .core import ConvergenceError

_FLOOR = 1e-16
_REF_FLOOR = 1e-12


@dataclass
class ConjugateResult:
    """Backup value and the maximizing probability row."""

    value: float
    argmax: np.ndarray


class Regularizer:
    """Concave function on the action simplex.

    Subclasses implement `value` and `gradient` (interior points); those with
    a closed-form conjugate override `conjugate`, otherwise callers fall back
    to `numeric_conjugate`.
    """

    def value(self, p) -> float:
        raise NotImplementedError

    def gradient(self, p) -> np.ndarray:
        raise NotImplementedError

    def conjugate(self, w):
        """Closed-form sup_p { w.p + phi(p) }, or None when unavailable."""
        return None


class EntropyRegularizer(Regularizer):
    """phi(p) = -eta * sum_a p_a ln p_a, with 0 ln 0 = 0."""

    def __init__(self, eta):
        if eta <= 0:
            raise ValueError(f"temperature must be positive, got {eta}")
        self.eta = float(eta)

    def value(self, p):
        p = np.asarray(p, dtype=float)
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
        return -self.eta * float(terms.sum())

    def gradient(self, p):
        p = np.asarray(p, dtype=float)
        return -self.eta * (np.log(p) + 1.0)

    def conjugate(self, w):
        return entropy_backup(w, self.eta)


class KlRegularizer(Regularizer):
    """phi(p) = -eta * KL(p || reference); reference floored at 1e-12."""

    def __init__(self, eta, reference):
        if eta <= 0:
            raise ValueError(f"temperature must be positive, got {eta}")
        ref = np.clip(np.asarray(reference, dtype=float), _REF_FLOOR, None)
        self.eta = float(eta)
        self.reference = ref / ref.sum()

    def value(self, p):
        p = np.asarray(p, dtype=float)
        terms = np.where(p > 0,
                         p * np.log(np.where(p > 0, p, 1.0) / self.reference),
                         0.0)
        return -self.eta * float(terms.sum())

    def gradient(self, p):
        p = np.asarray(p, dtype=float)
        return -self.eta * (np.log(p / self.reference) + 1.0)

    def conjugate(self, w):
        return kl_backup(w, self.eta, self.reference)


class ScaledRegularizer(Regularizer):
    """scale * phi, with the conjugate identity conj(w) = scale * conj_phi(w / scale)."""

    def __init__(self, base, scale):
        if scale <= 0:
            raise ValueError(f"scale must be positive, got {scale}")
        self.base = base
        self.scale = float(scale)

    def value(self, p):
        return self.scale * self.base.value(p)

    def gradient(self, p):
        return self.scale * self.base.gradient(p)

    def conjugate(self, w):
        inner = self.base.conjugate(np.asarray(w, dtype=float) / self.scale)
        if inner is None:
            return None
        return ConjugateResult(value=self.scale * inner.value, argmax=inner.argmax)


class OffsetRegularizer(Regularizer):
    """phi + constant; shifts backup values without changing the argmax."""

    def __init__(self, base, offset):
        self.base = base
        self.offset = float(offset)

    def value(self, p):
        return self.base.value(p) + self.offset

    def gradient(self, p):
        return self.base.gradient(p)

    def conjugate(self, w):
        inner = self.base.conjugate(w)
        if inner is None:
            return None
        return ConjugateResult(value=inner.value + self.offset, argmax=inner.argmax)


def entropy_backup(w, eta) -> ConjugateResult:
    """Soft backup: eta * ln sum_a exp(w_a / eta) and the softmax row.

    logsumexp subtracts the max internally, so large |w|/eta does not
    overflow.
    """
    if eta <= 0:
        raise ValueError(f"temperature must be positive, got {eta}")
    w = np.asarray(w, dtype=float)
    return ConjugateResult(value=float(eta * logsumexp(w / eta)),
                           argmax=softmax(w / eta))


def kl_backup(w, eta, reference) -> ConjugateResult:
    """KL-to-reference backup, computed as the entropy backup on shifted values.

    Shares the entropy code path exactly: the value is
    eta * ln sum_a ref_a exp(w_a / eta) and the argmax is proportional to
    ref_a exp(w_a / eta).
    """
    reference = np.asarray(reference, dtype=float)
    if np.any(reference <= 0):
        raise ValueError("reference policy must be strictly positive")
    return entropy_backup(np.asarray(w, dtype=float) + eta * np.log(reference), eta)


def numeric_conjugate(w, phi, tol=1e-12, max_steps=20000) -> ConjugateResult:
    """Maximize w.p + phi(p) over the simplex by entropic mirror ascent.

    Multiplicative updates keep iterates strictly interior; a step-halving
    line search guarantees monotone objective ascent.  Returns once the
    objective improvement over 50 consecutive accepted steps falls below
    tol (relative), or once no ascent step of any size improves.  The input
    is max-shifted first, so the result is translation-consistent to
    floating-point accuracy.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.shape[0] < 1:
        raise ValueError(f"expected a 1-d action-value vector, got shape {w.shape}")
    shift = float(w.max())
    wc = w - shift
    n = w.shape[0]
    p = np.full(n, 1.0 / n)
    f = float(wc @ p) + phi.value(p)
    step = 1.0
    history = deque(maxlen=51)
    history.append(f)
    for _ in range(max_steps):
        g = wc + phi.gradient(p)
        g = g - g.max()
        accepted = False
        while step >= 1e-18:
            cand = p * np.exp(step * g)
            cand = np.clip(cand, _FLOOR, None)
            cand /= cand.sum()
            fc = float(wc @ cand) + phi.value(cand)
            if fc > f:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no ascent direction at any step size: stationary to precision
            return ConjugateResult(value=shift + f, argmax=p)
        p, f = cand, fc
        step = min(step * 2.0, 1e6)
        history.append(f)
        if len(history) == 51 and f - history[0] <= tol * max(1.0, abs(f)):
            return ConjugateResult(value=shift + f, argmax=p)
    raise ConvergenceError(
        f"numeric conjugate did not settle within {max_steps} steps",
        residual=f - history[0] if len(history) > 1 else None,
        best=ConjugateResult(value=shift + f, argmax=p),
    )


def regularized_backup_operator(phi_per_state, tol=1e-12):
    """Backup operator using each state's regularizer.

    `phi_per_state` is a sequence of Regularizer objects (one per state) or a
    single Regularizer applied to every state.  Closed-form conjugates are
    used when a regularizer provides one, else `numeric_conjugate`.
    """
    def op(w, state, sweep):
        phi = phi_per_state if isinstance(phi_per_state, Regularizer) \
            else phi_per_state[state]
        res = phi.conjugate(w)
        if res is None:
            res = numeric_conjugate(w, phi, tol=tol)
        return res.value, res.argmax

    return op


def bregman_divergence(phi, p, q) -> float:
    """Divergence of the convex function -phi: -phi(p) + phi(q) + grad_phi(q).(p-q).

    Nonnegative for concave phi.  Requires the gradient to exist at q; a
    boundary q (any zero entry for entropy-like phi) raises ValueError.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise ValueError("gradient undefined at boundary point q")
    g = np.asarray(phi.gradient(q), dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient not finite at q")
    return -phi.value(p) + phi.value(q) + float(g @ (p - q))
