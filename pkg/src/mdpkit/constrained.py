"""Bellman backups over per-state feasible policy sets.

Feasible regions: KL balls (scalar-dual bisection with a closed-form inner
maximizer), L1 balls (exact greedy mass transfer), chi-square-weighted L2
balls (projected gradient ascent with Dykstra-style alternating projections,
then an exact active-set polish), singletons, the full simplex, and
regularizer level sets ("phi balls", used by the regularized-to-constrained
conversion).

The published dual expressions for the L1 and L2 balls are evaluated
verbatim by `l1_dual_discrepancy` / `l2_dual_discrepancy` and reported next
to the primal solutions; their orientation does not match a direct
derivation, so no equality is asserted anywhere.

`grid_oracle_backup` brute-forces small instances on a barycentric grid and
is the reference the analytic routines are tested against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize
from scipy.special import logsumexp

from .core import MdpModel, q_vector, standard_backup, value_iteration
from .regularized import (ConjugateResult, EntropyRegularizer, KlRegularizer,
                          OffsetRegularizer, Regularizer, ScaledRegularizer,
                          numeric_conjugate)

_REF_FLOOR = 1e-12
FEASIBILITY_TOL = 1e-8


def _clean_reference(reference):
    ref = np.clip(np.asarray(reference, dtype=float), _REF_FLOOR, None)
    return ref / ref.sum()


def _simplex_row(row):
    row = np.asarray(row, dtype=float)
    if np.any(row < -1e-10) or abs(row.sum() - 1.0) > 1e-10:
        raise ValueError("row is not a probability vector")
    row = np.clip(row, 0.0, None)
    return row / row.sum()


@dataclass
class KlBall:
    """{ p : KL(p || reference) <= radius }."""

    reference: np.ndarray
    radius: float

    def __post_init__(self):
        self.reference = _clean_reference(self.reference)
        if self.radius < 0:
            raise ValueError(f"radius must be nonnegative, got {self.radius}")


@dataclass
class L1Ball:
    """{ p : sum |p - reference| <= radius }, radius in [0, 2]."""

    reference: np.ndarray
    radius: float

    def __post_init__(self):
        self.reference = _simplex_row(self.reference)
        if not 0.0 <= self.radius <= 2.0:
            raise ValueError(f"radius must lie in [0, 2], got {self.radius}")


@dataclass
class L2ChiSquareBall:
    """{ p : sum (p - ref)^2 / ref <= radius }."""

    reference: np.ndarray
    radius: float

    def __post_init__(self):
        self.reference = _clean_reference(self.reference)
        if self.radius < 0:
            raise ValueError(f"radius must be nonnegative, got {self.radius}")


@dataclass
class Singleton:
    """Exactly one feasible row."""

    row: np.ndarray

    def __post_init__(self):
        self.row = _simplex_row(self.row)


@dataclass
class FullSimplex:
    """No constraint beyond the simplex itself."""


@dataclass
class PhiBall:
    """{ p : -phi(p) <= radius } for a concave regularizer phi.

    The radius may be negative (a superlevel set of phi); the set is convex
    and is how regularizer level sets round-trip through conversion.
    """

    phi: Regularizer
    radius: float


def kl_divergence(p, reference) -> float:
    p = np.asarray(p, dtype=float)
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0) / reference), 0.0)
    return float(terms.sum())


def chi_square(p, reference) -> float:
    p = np.asarray(p, dtype=float)
    d = p - reference
    return float(np.sum(d * d / reference))


def constraint_violation(constraint, p) -> float:
    """l(p) - radius for ball sets (<= 0 means feasible); sup gap for singletons."""
    p = np.asarray(p, dtype=float)
    if isinstance(constraint, KlBall):
        return kl_divergence(p, constraint.reference) - constraint.radius
    if isinstance(constraint, L1Ball):
        return float(np.abs(p - constraint.reference).sum()) - constraint.radius
    if isinstance(constraint, L2ChiSquareBall):
        return chi_square(p, constraint.reference) - constraint.radius
    if isinstance(constraint, Singleton):
        return float(np.max(np.abs(p - constraint.row)))
    if isinstance(constraint, FullSimplex):
        return 0.0
    if isinstance(constraint, PhiBall):
        return -constraint.phi.value(p) - constraint.radius
    raise TypeError(f"unknown constraint {type(constraint).__name__}")


@dataclass
class CtBackupResult:
    """Value, maximizing row, and dual diagnostics for one constrained backup."""

    value: float
    policy: np.ndarray
    multiplier: float | None = None
    dual_value: float | None = None
    dual_evals: int = 0


def kl_constrained_backup(w, reference, radius, tol=1e-12) -> CtBackupResult:
    """max w.p over the KL ball, by bisection on the scalar dual.

    The dual is g(y) = radius*y + y*ln sum_a ref_a exp(w_a/y) for y > 0, with
    primal candidate p(y) proportional to ref_a exp(w_a/y); g'(y) has the
    sign of radius - KL(p(y)||ref), so bisection drives the constraint
    active.  The returned row comes from the feasible side of the bracket and
    the duality gap y*(radius - KL) is certified <= tol.  Work is one
    O(|A|) softmax per dual evaluation and O(ln(1/tol)) evaluations.
    """
    ref = _clean_reference(reference)
    if radius < 0:
        raise ValueError(f"radius must be nonnegative, got {radius}")
    w = np.asarray(w, dtype=float)
    shift = float(w.max())
    wc = w - shift
    if radius == 0.0 or np.all(wc == 0.0):
        return CtBackupResult(value=float(w @ ref), policy=ref,
                              multiplier=None, dual_value=None, dual_evals=0)
    log_ref = np.log(ref)
    evals = 0

    def probe(y):
        nonlocal evals
        evals += 1
        z = wc / y + log_ref
        lse = logsumexp(z)
        p = np.exp(z - lse)
        kl = float(np.sum(p * (z - lse - log_ref)))
        return p, kl, lse

    y_lo = 1e-8
    p_lo, kl_lo, _ = probe(y_lo)
    if kl_lo <= radius:
        # ball wide enough to act unconstrained: p_lo is feasible and within
        # rounding of the hard-max value
        return CtBackupResult(value=shift + float(wc @ p_lo), policy=p_lo,
                              multiplier=y_lo, dual_value=None, dual_evals=evals)
    y_hi = 1.0
    p_hi, kl_hi, lse_hi = probe(y_hi)
    grow = 0
    while kl_hi > radius:
        y_hi *= 2.0
        p_hi, kl_hi, lse_hi = probe(y_hi)
        grow += 1
        if grow > 200:
            raise RuntimeError("KL dual bracket failed to close")
    if y_hi > 1.0:
        y_lo = y_hi / 2.0
    for _ in range(200):
        gap = y_hi * (radius - kl_hi)
        if gap <= tol:
            break
        y_mid = 0.5 * (y_lo + y_hi)
        p_mid, kl_mid, lse_mid = probe(y_mid)
        if kl_mid > radius:
            y_lo = y_mid
        else:
            y_hi, p_hi, kl_hi, lse_hi = y_mid, p_mid, kl_mid, lse_mid
    dual = radius * y_hi + y_hi * (lse_hi + shift / y_hi)
    return CtBackupResult(value=shift + float(wc @ p_hi), policy=p_hi,
                          multiplier=y_hi, dual_value=float(dual),
                          dual_evals=evals)


@dataclass
class DualDiscrepancy:
    """Primal solution value next to the published dual expression's value."""

    value: float
    paper_dual_value: float
    gap: float
    note: str = ""


def l1_constrained_backup(w, reference, radius) -> CtBackupResult:
    """Exact greedy optimum of max w.p over the L1 ball around `reference`.

    Move min(radius/2, 1 - ref[best]) mass onto the best action, draining the
    same amount from the worst actions upward (ties resolved toward lower
    indices).
    """
    ref = _simplex_row(reference)
    if not 0.0 <= radius <= 2.0:
        raise ValueError(f"radius must lie in [0, 2], got {radius}")
    w = np.asarray(w, dtype=float)
    best = int(np.argmax(w))
    budget = min(radius / 2.0, 1.0 - ref[best])
    p = ref.copy()
    p[best] += budget
    need = budget
    for a in np.argsort(w, kind="stable"):
        if a == best or need <= 0:
            continue
        take = min(p[a], need)
        p[a] -= take
        need -= take
    return CtBackupResult(value=float(w @ p), policy=p)


def l1_dual_discrepancy(w, reference, radius) -> DualDiscrepancy:
    """Evaluate the published L1 dual expression verbatim and report the gap.

    The expression w.ref + (radius/2) * min_{mu >= 0} [max(w + mu) -
    min(w + mu)] is minimized exactly by mu = max(w) - w, where the range
    term vanishes, so it evaluates to w.ref; the greedy primal exceeds it
    whenever the budget buys anything.
    """
    ref = _simplex_row(reference)
    w = np.asarray(w, dtype=float)
    primal = l1_constrained_backup(w, ref, radius).value
    mu = w.max() - w
    shifted = w + mu
    paper = float(w @ ref) + (radius / 2.0) * float(shifted.max() - shifted.min())
    return DualDiscrepancy(
        value=primal, paper_dual_value=paper, gap=primal - paper,
        note="published min over mu >= 0 of the range is identically zero "
             "(mu = max(w) - w), so the expression reduces to dot(w, ref)")


def l2_dual_discrepancy(w, reference, radius) -> DualDiscrepancy:
    """Evaluate the published L2 dual expression verbatim and report the gap.

    Expression: min_{mu >= 0} sum_a ref_a (w_a + mu_a)
    + sqrt(radius * sum_a ref_a (w_a + mu_a)^2), a convex program solved
    numerically with bound constraints.
    """
    ref = _simplex_row(reference)
    w = np.asarray(w, dtype=float)
    primal = l2_constrained_backup(w, ref, radius).value

    def objective(mu):
        v = w + mu
        return float(ref @ v + np.sqrt(max(radius, 0.0) * float(ref @ (v * v))))

    res = minimize(objective, np.clip(-w, 0.0, None), method="L-BFGS-B",
                   bounds=[(0.0, None)] * w.shape[0])
    start2 = minimize(objective, np.zeros_like(w), method="L-BFGS-B",
                      bounds=[(0.0, None)] * w.shape[0])
    paper = float(min(res.fun, start2.fun))
    return DualDiscrepancy(value=primal, paper_dual_value=paper,
                           gap=primal - paper,
                           note="orientation of the published expression is "
                                "ambiguous; primal from projection ascent is "
                                "authoritative")


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, v.shape[0] + 1)
    cond = u - (css - 1.0) / idx > 0
    rho = int(np.max(np.nonzero(cond)[0])) + 1
    theta = (css[rho - 1] - 1.0) / rho
    return np.clip(v - theta, 0.0, None)


def _project_chi_ball(p, ref, radius):
    z = (p - ref) / np.sqrt(ref)
    n2 = float(z @ z)
    if n2 <= radius or n2 == 0.0:
        return p
    return ref + np.sqrt(ref) * z * np.sqrt(radius / n2)


def _dykstra_projection(v, ref, radius, iters=200, tol=1e-14):
    """Projection onto simplex-intersect-chi-square-ball by Dykstra's scheme."""
    x = v.copy()
    inc_p = np.zeros_like(v)
    inc_q = np.zeros_like(v)
    for _ in range(iters):
        y = project_simplex(x + inc_p)
        inc_p = x + inc_p - y
        x_new = _project_chi_ball(y + inc_q, ref, radius)
        inc_q = y + inc_q - x_new
        moved = float(np.max(np.abs(x_new - x)))
        x = x_new
        if moved < tol and chi_square(project_simplex(x), ref) <= radius + 1e-12:
            break
    x = project_simplex(x)
    if chi_square(x, ref) > radius:
        x = project_simplex(_project_chi_ball(x, ref, radius))
    return x


def _l2_face_solution(w, ref, radius, support):
    """Exact maximizer on one face with the ball active, or None.

    On support S with the other entries pinned to zero, stationarity gives
    p_a = ref_a + ref_a (w_a - nu) / t with closed-form t and nu; the zero
    entries consume sum(ref[Z]) of the chi-square budget.
    """
    z_mask = ~support
    c_eff = radius - float(ref[z_mask].sum())
    refs = ref[support]
    ws = w[support]
    m = float(refs.sum())
    beta = 1.0 - m
    if c_eff <= beta * beta / m + 1e-18:
        return None
    big_r = float(refs @ ws)
    big_q = float(refs @ (ws * ws))
    var = big_q - big_r * big_r / m
    t2 = var / (c_eff - beta * beta / m)
    if t2 <= 0:
        return None
    t = np.sqrt(t2)
    nu = (big_r - t * beta) / m
    ps = refs + refs * (ws - nu) / t
    if np.any(ps < -1e-12):
        return None
    p = np.zeros_like(w)
    p[support] = np.clip(ps, 0.0, None)
    s = p.sum()
    if s <= 0:
        return None
    return p / s


def l2_constrained_backup(w, reference, radius, tol=1e-12,
                          max_iter=10000) -> CtBackupResult:
    """max w.p over the chi-square ball intersected with the simplex.

    Projected gradient ascent (the gradient is w itself) with Dykstra-style
    alternating projections locates the solution; for up to 12 actions an
    exact active-set pass then polishes it to closed-form precision, which
    the translation-invariance guarantees rely on.
    """
    ref = _clean_reference(reference)
    if radius < 0:
        raise ValueError(f"radius must be nonnegative, got {radius}")
    w = np.asarray(w, dtype=float)
    n = w.shape[0]
    if radius == 0.0 or np.all(w == w[0]):
        return CtBackupResult(value=float(w @ ref), policy=ref)
    wc = w - w.max()
    step = 1.0 / (1.0 + float(np.max(np.abs(wc))))
    p = ref.copy()
    for _ in range(min(max_iter, 2000)):
        p_new = _dykstra_projection(p + step * wc, ref, radius)
        if float(np.max(np.abs(p_new - p))) < max(tol, 1e-13):
            p = p_new
            break
        p = p_new
    best_val = float(wc @ p)
    best_p = p
    # exact polish: one-hot vertices inside the ball, plus every face with
    # the ball active
    if n <= 12:
        for a in range(n):
            e = np.zeros(n)
            e[a] = 1.0
            if chi_square(e, ref) <= radius and float(wc[a]) > best_val:
                best_val = float(wc[a])
                best_p = e
        for mask in range(1, 2 ** n):
            support = np.array([(mask >> a) & 1 == 1 for a in range(n)])
            cand = _l2_face_solution(wc, ref, radius, support)
            if cand is None:
                continue
            if chi_square(cand, ref) > radius + 1e-9:
                continue
            val = float(wc @ cand)
            if val > best_val:
                best_val = val
                best_p = cand
    return CtBackupResult(value=best_val + float(w.max()), policy=best_p)


def grid_oracle_backup(w, constraint, resolution=None):
    """Brute-force max of w.p over feasible grid points (2 or 3 actions).

    Resolution defaults to 1e5 intervals for two actions and 1e3 per
    dimension for three.  The reference row (or singleton row) is always
    included as a candidate so the feasible set is never empty.
    """
    w = np.asarray(w, dtype=float)
    n = w.shape[0]
    if isinstance(constraint, Singleton):
        return float(w @ constraint.row), constraint.row
    if isinstance(constraint, FullSimplex):
        return standard_backup(w)
    if n == 1:
        return float(w[0]), np.ones(1)
    if n == 2:
        res = 100000 if resolution is None else int(resolution)
        p0 = np.linspace(0.0, 1.0, res + 1)
        pts = np.column_stack([p0, 1.0 - p0])
    elif n == 3:
        res = 1000 if resolution is None else int(resolution)
        i, j = np.meshgrid(np.arange(res + 1), np.arange(res + 1),
                           indexing="ij")
        keep = (i + j) <= res
        p0 = i[keep] / res
        p1 = j[keep] / res
        pts = np.column_stack([p0, p1, 1.0 - p0 - p1])
    else:
        raise ValueError("grid oracle supports at most 3 actions")
    mask = _feasible_mask(constraint, pts)
    cands = pts[mask]
    extra = getattr(constraint, "reference", None)
    if extra is not None:
        cands = np.vstack([cands, extra]) if cands.size else extra[None, :]
    if cands.size == 0:
        raise ValueError("no feasible grid point; constraint too tight")
    vals = cands @ w
    k = int(np.argmax(vals))
    return float(vals[k]), cands[k]


def _feasible_mask(constraint, pts):
    if isinstance(constraint, KlBall):
        ref = constraint.reference
        logs = np.where(pts > 0, np.log(np.where(pts > 0, pts, 1.0) / ref), 0.0)
        return np.einsum("ij,ij->i", pts, logs) <= constraint.radius + 1e-12
    if isinstance(constraint, L1Ball):
        return np.abs(pts - constraint.reference).sum(axis=1) \
            <= constraint.radius + 1e-12
    if isinstance(constraint, L2ChiSquareBall):
        d = pts - constraint.reference
        return np.einsum("ij,ij->i", d * d, 1.0 / constraint.reference[None, :]) \
            <= constraint.radius + 1e-12
    if isinstance(constraint, PhiBall):
        phi = constraint.phi
        vals = np.array([phi.value(row) for row in pts])
        return -vals <= constraint.radius + 1e-10
    raise TypeError(f"grid oracle does not handle {type(constraint).__name__}")


def generic_phi_ball_backup(w, phi, radius, tol=1e-10,
                            inner_tol=1e-12) -> CtBackupResult:
    """max w.p subject to -phi(p) <= radius via bisection on the multiplier.

    The inner problem max w.p + lam*phi(p) is the scaled conjugate; phi's
    value at the inner argmax rises with lam, so bisection drives the
    constraint active.  Returns the feasible-side iterate with duality gap
    lam*(radius + phi(p)) <= tol.  Raises ValueError when the set has no
    Slater point (phi never exceeds -radius).
    """
    w = np.asarray(w, dtype=float)
    evals = 0

    def inner(lam):
        nonlocal evals
        evals += 1
        scaled = ScaledRegularizer(phi, lam)
        res = scaled.conjugate(w)
        if res is None:
            res = numeric_conjugate(w, scaled, tol=inner_tol)
        return res

    val0, row0 = standard_backup(w)
    if -phi.value(row0) <= radius:
        return CtBackupResult(value=val0, policy=row0, multiplier=0.0,
                              dual_value=val0, dual_evals=evals)
    lam_lo, lam_hi = 0.0, 1.0
    res_hi = inner(lam_hi)
    grow = 0
    while -phi.value(res_hi.argmax) > radius:
        lam_lo = lam_hi
        lam_hi *= 2.0
        res_hi = inner(lam_hi)
        grow += 1
        if grow > 60:
            raise ValueError("constraint admits no Slater point: phi stays "
                             f"below {-radius} on the simplex")
    for _ in range(200):
        p = res_hi.argmax
        gap = lam_hi * (radius + phi.value(p))
        if gap <= tol:
            break
        lam_mid = 0.5 * (lam_lo + lam_hi)
        res_mid = inner(lam_mid)
        if -phi.value(res_mid.argmax) > radius:
            lam_lo = lam_mid
        else:
            lam_hi, res_hi = lam_mid, res_mid
    p = res_hi.argmax
    dual = lam_hi * radius + res_hi.value
    return CtBackupResult(value=float(w @ p), policy=p, multiplier=lam_hi,
                          dual_value=float(dual), dual_evals=evals)


def constrained_backup(w, constraint, tol=1e-12) -> CtBackupResult:
    """Dispatch one backup on any supported constraint kind."""
    if isinstance(constraint, FullSimplex):
        val, row = standard_backup(w)
        return CtBackupResult(value=val, policy=row)
    if isinstance(constraint, Singleton):
        w = np.asarray(w, dtype=float)
        return CtBackupResult(value=float(w @ constraint.row),
                              policy=constraint.row)
    if isinstance(constraint, KlBall):
        return kl_constrained_backup(w, constraint.reference,
                                     constraint.radius, tol=tol)
    if isinstance(constraint, L1Ball):
        return l1_constrained_backup(w, constraint.reference, constraint.radius)
    if isinstance(constraint, L2ChiSquareBall):
        return l2_constrained_backup(w, constraint.reference,
                                     constraint.radius, tol=tol)
    if isinstance(constraint, PhiBall):
        return generic_phi_ball_backup(w, constraint.phi, constraint.radius,
                                       tol=max(tol, 1e-12))
    raise TypeError(f"unknown constraint {type(constraint).__name__}")


def ct_backup_operator(constraints, tol=1e-12):
    """Backup operator from per-state constraint sets (or one broadcast set)."""
    def op(w, state, sweep):
        c = constraints[state] if isinstance(constraints, (list, tuple)) \
            else constraints
        res = constrained_backup(w, c, tol=tol)
        return res.value, res.policy

    return op


class ChiSquareLagrangeRegularizer(Regularizer):
    """phi(p) = -lam * (chi_square(p, ref) - radius), with a closed-form conjugate."""

    def __init__(self, lam, reference, radius):
        if lam <= 0:
            raise ValueError("multiplier must be positive")
        self.lam = float(lam)
        self.reference = _clean_reference(reference)
        self.radius = float(radius)

    def value(self, p):
        return -self.lam * (chi_square(p, self.reference) - self.radius)

    def gradient(self, p):
        p = np.asarray(p, dtype=float)
        return -2.0 * self.lam * (p - self.reference) / self.reference

    def conjugate(self, w):
        p = _weighted_quadratic_argmax(np.asarray(w, dtype=float),
                                       self.reference, self.lam)
        return ConjugateResult(value=float(w @ p) + self.value(p), argmax=p)


class ZeroRegularizer(Regularizer):
    """phi identically 0; conjugate is the hard max."""

    def value(self, p):
        return 0.0

    def gradient(self, p):
        return np.zeros(np.asarray(p).shape[0])

    def conjugate(self, w):
        val, row = standard_backup(w)
        return ConjugateResult(value=val, argmax=row)


def _weighted_quadratic_argmax(w, ref, lam):
    """argmax of w.p - lam * chi_square(p, ref) over the simplex.

    KKT rows are p_a = max(0, ref_a (1 + (w_a - nu)/(2 lam))); the simplex
    multiplier nu is a monotone scalar root.
    """
    def mass(nu):
        return float(np.clip(ref * (1.0 + (w - nu) / (2.0 * lam)), 0.0,
                             None).sum()) - 1.0

    lo = float(w.min()) - 2.0 * lam
    hi = float(w.max()) + 2.0 * lam
    while mass(lo) < 0:
        lo -= (hi - lo)
    while mass(hi) > 0:
        hi += (hi - lo)
    nu = brentq(mass, lo, hi, xtol=1e-14, rtol=8.9e-16, maxiter=300)
    p = np.clip(ref * (1.0 + (w - nu) / (2.0 * lam)), 0.0, None)
    return p / p.sum()


@dataclass
class CtConversion:
    """Constrained model induced by a solved regularized model."""

    ct_model: MdpModel
    constraints: list
    constants: np.ndarray
    base_value: np.ndarray
    base_policy: np.ndarray


def r_to_ct_convert(model, phi_per_state, solve_tol=1e-10) -> CtConversion:
    """Build the constrained twin of a regularized model.

    Solve the regularized model; per state, the constant c_s = -phi_s at the
    optimal row defines both the reward shift (r - c_s across the state's
    actions) and the feasible set {-phi_s(p) <= c_s}.  Entropy and
    KL-to-reference regularizers produce KL balls (radius c_s/eta + ln|A|
    around uniform, respectively c_s/eta around the reference); any other
    regularizer produces its own level set.
    """
    from .regularized import regularized_backup_operator

    phis = phi_per_state if isinstance(phi_per_state, (list, tuple)) \
        else [phi_per_state] * model.num_states
    base = value_iteration(model, regularized_backup_operator(phis),
                           tol=solve_tol)
    constants = np.array([-phis[s].value(base.policy[s])
                          for s in range(model.num_states)])
    constraints = []
    for s, phi in enumerate(phis):
        c = float(constants[s])
        if isinstance(phi, EntropyRegularizer):
            n = model.num_actions
            radius = max(c / phi.eta + np.log(n), 0.0)
            constraints.append(KlBall(np.full(n, 1.0 / n), radius))
        elif isinstance(phi, KlRegularizer):
            constraints.append(KlBall(phi.reference, max(c / phi.eta, 0.0)))
        else:
            constraints.append(PhiBall(phi, c))
    reward = model.reward - constants[:, None]
    ct_model = MdpModel(num_states=model.num_states,
                        num_actions=model.num_actions,
                        transition=model.transition, reward=reward,
                        discount=model.discount)
    return CtConversion(ct_model=ct_model, constraints=constraints,
                        constants=constants, base_value=base.value,
                        base_policy=base.policy)


@dataclass
class LagrangeConversion:
    """Regularized model induced by a solved constrained model."""

    multipliers: np.ndarray
    regularizers: list
    ct_value: np.ndarray
    ct_policy: np.ndarray
    slackness: np.ndarray


def ct_to_r_convert(model, constraints, tol=1e-10) -> LagrangeConversion:
    """Recover per-state multipliers and the induced regularizers.

    Solves the constrained model, then per state reads the Lagrange
    multiplier of the single smooth constraint at the optimal action values
    and forms phi_s(p) = -lam_s * (l_s(p) - c_s).  Requires a Slater point
    (radius > 0) for ball constraints; L1 balls (non-smooth) and singletons
    (no interior) are rejected.
    """
    sets = constraints if isinstance(constraints, (list, tuple)) \
        else [constraints] * model.num_states
    for s, con in enumerate(sets):
        if isinstance(con, (L1Ball, Singleton)):
            raise ValueError(
                f"state {s}: conversion needs a single smooth constraint "
                f"with interior, not {type(con).__name__}")
        if isinstance(con, (KlBall, L2ChiSquareBall)) and con.radius <= 0:
            raise ValueError(f"state {s}: radius 0 admits no Slater point")
    sol = value_iteration(model, ct_backup_operator(sets), tol=tol)
    multipliers = np.zeros(model.num_states)
    regs = []
    slack = np.zeros(model.num_states)
    for s, con in enumerate(sets):
        w = q_vector(model, sol.value, s)
        if isinstance(con, FullSimplex):
            lam = 0.0
            reg = ZeroRegularizer()
        elif isinstance(con, KlBall):
            res = kl_constrained_backup(w, con.reference, con.radius, tol=1e-14)
            val0, row0 = standard_backup(w)
            if kl_divergence(row0, con.reference) <= con.radius:
                lam = 0.0
                reg = ZeroRegularizer()
            else:
                lam = float(res.multiplier)
                reg = OffsetRegularizer(KlRegularizer(lam, con.reference),
                                        lam * con.radius)
        elif isinstance(con, L2ChiSquareBall):
            lam = _l2_multiplier(w, con.reference, con.radius)
            if lam == 0.0:
                reg = ZeroRegularizer()
            else:
                reg = ChiSquareLagrangeRegularizer(lam, con.reference,
                                                   con.radius)
        elif isinstance(con, PhiBall):
            res = generic_phi_ball_backup(w, con.phi, con.radius, tol=1e-12)
            lam = float(res.multiplier)
            if lam == 0.0:
                reg = ZeroRegularizer()
            else:
                reg = OffsetRegularizer(ScaledRegularizer(con.phi, lam),
                                        lam * con.radius)
        else:
            raise TypeError(f"unknown constraint {type(con).__name__}")
        multipliers[s] = lam
        regs.append(reg)
        slack[s] = abs(lam * constraint_violation(con, sol.policy[s]))
    return LagrangeConversion(multipliers=multipliers, regularizers=regs,
                              ct_value=sol.value, ct_policy=sol.policy,
                              slackness=slack)


def _l2_multiplier(w, ref, radius):
    """Multiplier of the chi-square ball constraint at action values w."""
    one_hot = np.zeros_like(w)
    one_hot[int(np.argmax(w))] = 1.0
    if chi_square(one_hot, ref) <= radius:
        return 0.0

    def excess(lam):
        p = _weighted_quadratic_argmax(w, ref, lam)
        return chi_square(p, ref) - radius

    lam_hi = 1.0
    while excess(lam_hi) > 0:
        lam_hi *= 2.0
        if lam_hi > 1e12:
            raise RuntimeError("L2 multiplier search failed to bracket")
    lam_lo = lam_hi / 2.0
    while lam_lo > 1e-14 and excess(lam_lo) < 0:
        lam_lo /= 2.0
    return float(brentq(excess, lam_lo, lam_hi, xtol=1e-14, maxiter=300))
