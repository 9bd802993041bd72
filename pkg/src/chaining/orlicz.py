"""Orlicz N-function calculus.

Evaluators, convex (Young-Fenchel) conjugates, monotone inverses, and the two
regularity certificates the chaining machinery depends on: the quadratic
behaviour near zero and the doubling behaviour of the conjugate inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    Delta2Fails,
    Delta2Missing,
    GridTooCoarse,
    InvalidNFunction,
    InvalidParams,
    OutOfRange,
)

__all__ = [
    "GridSpec",
    "YoungFunction",
    "OrliczFunction",
    "ConditionCertificate",
    "make_orlicz",
    "conjugate",
    "inverse_at",
    "delta2_modulus",
    "q_condition_constant",
    "psi_square_transform",
    "standardize_near_zero",
    "ensure_delta2",
]

_INVERSE_REL_TOL = 1e-10
_HARD_X_CAP = 2.0**80


@dataclass(frozen=True)
class GridSpec:
    """Evaluation grid for numeric conjugation: [0, x_max] with n_points samples."""

    x_max: float = 64.0
    n_points: int = 2**14

    def points(self) -> np.ndarray:
        return np.linspace(0.0, self.x_max, self.n_points)


@dataclass
class ConditionCertificate:
    """Grid-audited regularity record attached to an Orlicz function.

    q_constant is the estimated lower limit of phi(x)/x^2 near zero (0 means
    the quadratic-lower-bound condition failed).  delta2_modulus maps an
    audited factor b to the modulus M_b in (0, 1) witnessing that the
    conjugate inverse grows by at least 1/(1-M_b) under multiplication by b.
    """

    q_constant: float | None = None
    q_ok: bool | None = None
    delta2_modulus: dict = field(default_factory=dict)
    audited_grid: dict = field(default_factory=dict)


class YoungFunction:
    """Even, nonnegative convex function with numeric conjugation and inverses.

    Instances are immutable after construction; internal caches are
    insert-only, so values are safe to share across concurrent evaluators.
    """

    def __init__(self, kind, params, evaluator, conjugate_form="numeric",
                 grid=None, unbounded_eval=True):
        self.kind = kind
        self.params = tuple(params)
        self._evaluator = evaluator
        self.conjugate_form = conjugate_form
        self.grid = grid or GridSpec()
        # evaluator trusted beyond grid.x_max (analytic forms) or not (grid-backed)
        self.unbounded_eval = unbounded_eval
        self._conjugate_cache = None

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        out = np.asarray(self._evaluator(np.abs(arr)))
        return float(out.reshape(())) if arr.ndim == 0 else out

    def __repr__(self):
        ps = ", ".join(f"{p:g}" for p in self.params)
        return f"{type(self).__name__}({self.kind}{'(' + ps + ')' if ps else ''})"

    # -- conjugation -------------------------------------------------------

    def conjugate(self) -> "YoungFunction":
        if self._conjugate_cache is None:
            self._conjugate_cache = conjugate(self)
        return self._conjugate_cache

    def eval_x_max(self) -> float:
        return _HARD_X_CAP if self.unbounded_eval else self.grid.x_max

    # -- inverses ----------------------------------------------------------

    def inverse(self, y) -> float:
        """Smallest x >= 0 with value y, by monotone bisection."""
        y = float(y)
        if y < 0:
            raise InvalidParams("inverse target must be nonnegative")
        if y == 0.0:
            return 0.0
        lo, hi = 0.0, self.grid.x_max
        fhi = self(hi)
        if fhi < y:
            if not self.unbounded_eval:
                raise OutOfRange(
                    f"target {y:g} exceeds value {fhi:g} at grid edge {hi:g}")
            while fhi < y:
                hi *= 2.0
                if hi > _HARD_X_CAP:
                    raise OutOfRange(f"target {y:g} beyond expandable bracket")
                fhi = self(hi)
        for _ in range(200):
            if hi - lo <= _INVERSE_REL_TOL * max(hi, 1.0e-300):
                break
            mid = 0.5 * (lo + hi)
            if self(mid) < y:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def conjugate_inverse(self, y) -> float:
        return self.conjugate().inverse(y)


class OrliczFunction(YoungFunction):
    """Young function that passed (or is trusted to satisfy) the N-function audit."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.certificate = ConditionCertificate()


# -- catalog ----------------------------------------------------------------


def _quiet(fn):
    def ev(x):
        with np.errstate(over="ignore"):
            return fn(x)
    return ev


def _power_evaluator(c, a):
    return _quiet(lambda x: c * np.power(x, a))


def _exp_power_evaluator(c, alpha):
    return _quiet(lambda x: c * np.expm1(np.power(x, alpha)))


def _exp_minus_linear_evaluator():
    return _quiet(lambda x: np.expm1(x) - x)


def _half_square_evaluator():
    return lambda x: 0.5 * x * x


def _xlogx_evaluator():
    # conjugate of exp(|x|)-|x|-1
    return lambda x: (x + 1.0) * np.log1p(x) - x


def make_orlicz(kind, params=(), evaluator=None, grid=None,
                validate=None) -> OrliczFunction:
    """Construct a catalog or custom Orlicz N-function.

    Catalog kinds validate their parameters; custom evaluators are audited
    against the N-function invariants and rejected on failure.
    """
    params = tuple(float(p) for p in params)
    grid = grid or GridSpec()
    if kind == "power":
        if len(params) != 2:
            raise InvalidParams("power takes (c, a)")
        c, a = params
        if not (c > 0 and a > 1):
            raise InvalidParams(f"power requires c>0 and a>1, got c={c:g}, a={a:g}")
        fn = OrliczFunction(kind, params, _power_evaluator(c, a), "closed", grid)
    elif kind == "exp_power":
        if len(params) != 2:
            raise InvalidParams("exp_power takes (c, alpha)")
        c, alpha = params
        if not (c > 0 and alpha > 1):
            raise InvalidParams(
                f"exp_power requires c>0 and alpha>1, got c={c:g}, alpha={alpha:g}")
        fn = OrliczFunction(kind, params, _exp_power_evaluator(c, alpha),
                            "numeric", grid)
    elif kind == "exp_minus_linear":
        fn = OrliczFunction(kind, (), _exp_minus_linear_evaluator(), "closed", grid)
    elif kind == "half_square":
        fn = OrliczFunction(kind, (), _half_square_evaluator(), "closed", grid)
    elif kind == "custom":
        if evaluator is None:
            raise InvalidParams("custom kind needs an evaluator")
        wrapped = lambda x: np.asarray(evaluator(x), dtype=float)
        fn = OrliczFunction(kind, params, wrapped, "numeric", grid)
        _validate_n_function(fn)
        return fn
    else:
        raise InvalidParams(f"unknown kind {kind!r}")
    if validate:
        _validate_n_function(fn)
    return fn


def _validate_n_function(fn: YoungFunction) -> None:
    g = fn.grid
    xs = np.linspace(0.0, g.x_max, 1025)
    vals = fn(xs)
    if not np.all(np.isfinite(vals[:-1])):
        raise InvalidNFunction("evaluator not finite on the grid")
    if abs(fn(0.0)) > 1e-12:
        raise InvalidNFunction("phi(0) != 0")
    neg = fn(-xs)
    scale = 1.0 + np.abs(vals)
    if np.any(np.abs(vals - neg) > 1e-12 * scale):
        raise InvalidNFunction("evenness fails on the grid")
    if np.any(np.diff(vals) < -1e-12 * scale[1:]):
        raise InvalidNFunction("not nondecreasing on x > 0")
    mid = fn(0.5 * (xs[:-1] + xs[1:]))
    if np.any(mid > 0.5 * (vals[:-1] + vals[1:]) + 1e-10):
        raise InvalidNFunction("midpoint convexity fails on the grid")
    # sublinear near 0, superlinear at the top of the grid
    lo = g.x_max * 1e-12
    ratio_lo = fn(lo) / lo
    ratio_hi = fn(g.x_max) / g.x_max
    if not ratio_lo < 1e-3 * ratio_hi:
        raise InvalidNFunction("phi(x)/x limit check fails (not an N-function shape)")
    for beta in (1.5, 2.0, 4.0):
        sub = xs[xs * beta <= g.x_max]
        if np.any(fn(beta * sub) < beta * fn(sub) - 1e-10 * (1.0 + fn(beta * sub))):
            raise InvalidNFunction(f"phi({beta:g} x) >= {beta:g} phi(x) fails")


# -- conjugation ------------------------------------------------------------

_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(fun, lo, hi, iters=80):
    a, b = lo, hi
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            fd = fun(d)
        if b - a < 1e-14 * max(1.0, abs(b)):
            break
    return max(fc, fd)


class _NumericConjugate(YoungFunction):
    """Legendre transform of a Young function, maximised on a grid with local refinement.

    For analytic bases the search grid gets a geometric tail beyond x_max so
    that maximisers with large slopes are still bracketed; the profile
    x*y - f(y) is concave in y, so bracket-plus-golden-section is exact at any
    grid spacing.
    """

    def __init__(self, base: YoungFunction):
        self._base = base
        ys = base.grid.points()
        if base.unbounded_eval:
            tail = np.geomspace(base.grid.x_max, 2.0**60, 256)[1:]
            ys = np.concatenate([ys, tail])
        self._ys = ys
        with np.errstate(over="ignore"):
            self._fys = base(ys)
        super().__init__(
            kind=f"conjugate[{base.kind}]", params=base.params,
            evaluator=self._eval, conjugate_form="numeric",
            grid=base.grid, unbounded_eval=False)
        self._audit_convexity()

    def _eval_scalar(self, x):
        with np.errstate(invalid="ignore"):
            vals = x * self._ys - self._fys
        i = int(np.nanargmax(vals))
        lo = self._ys[max(i - 1, 0)]
        hi = self._ys[min(i + 1, len(self._ys) - 1)]
        best = vals[i]
        if hi > lo:
            with np.errstate(over="ignore"):
                best = max(best, _golden_max(
                    lambda y: x * y - float(self._base(y)), lo, hi))
        return max(best, 0.0)

    def _eval(self, x):
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.array([self._eval_scalar(v) for v in arr.ravel()])
        return out.reshape(arr.shape) if arr.shape else float(out[0])

    def _audit_convexity(self):
        xs = np.linspace(0.0, self.grid.x_max, 129)
        vals = self._eval(xs)
        mid = self._eval(0.5 * (xs[:-1] + xs[1:]))
        slack = mid - 0.5 * (vals[:-1] + vals[1:])
        if np.any(slack > 1e-8 * (1.0 + np.abs(mid))):
            raise GridTooCoarse("numeric conjugate non-convex beyond tolerance")


def conjugate(fn: YoungFunction) -> YoungFunction:
    """Convex conjugate sup_y (xy - f(y)); closed forms for catalog kinds."""
    grid = fn.grid
    if fn.conjugate_form == "closed":
        if fn.kind == "half_square":
            return YoungFunction("half_square", (), _half_square_evaluator(),
                                 "closed", grid)
        if fn.kind == "power":
            c, a = fn.params
            b = a / (a - 1.0)
            c1 = (c * a) ** (-b / a) / b
            return YoungFunction("power", (c1, b), _power_evaluator(c1, b),
                                 "closed", grid)
        if fn.kind == "exp_minus_linear":
            return YoungFunction("xlogx", (), _xlogx_evaluator(), "numeric", grid)
    return _NumericConjugate(fn)


def inverse_at(fn: YoungFunction, y, which="direct") -> float:
    """x >= 0 with f(x) = y (direct) or f*(x) = y (conjugate), by bisection."""
    if which == "direct":
        return fn.inverse(y)
    if which == "conjugate":
        return fn.conjugate_inverse(y)
    raise InvalidParams(f"which must be 'direct' or 'conjugate', got {which!r}")


# -- certificates ------------------------------------------------------------


def delta2_modulus(fn: OrliczFunction, b, x_grid=None) -> float:
    """Doubling modulus M_b = 1 - sup_x f*^{-1}(x)/f*^{-1}(bx) over x >= 2.

    Records the audited value in the certificate; a supremum at or above 1
    (no valid modulus) raises Delta2Fails.
    """
    b = float(b)
    if b < 1.0:
        raise InvalidParams("b must be >= 1")
    conj = fn.conjugate()
    if x_grid is None:
        hi = 2.0**20
        if not conj.unbounded_eval:
            hi = min(hi, 0.98 * float(conj(conj.grid.x_max)) / b)
        if hi <= 2.0:
            raise Delta2Fails("audit grid collapses below x = 2")
        x_grid = np.geomspace(2.0, hi, 64)
    else:
        x_grid = np.asarray(x_grid, dtype=float)
        if np.any(x_grid < 2.0):
            raise InvalidParams("audit grid points must satisfy x >= 2")
    sup = 0.0
    for x in x_grid:
        num = conj.inverse(x)
        den = conj.inverse(b * x)
        if den <= 0:
            raise Delta2Fails("conjugate inverse vanished on the audit grid")
        sup = max(sup, num / den)
    m_b = 1.0 - sup
    if not (0.0 < m_b < 1.0):
        raise Delta2Fails(f"supremum ratio {sup:g} leaves no modulus in (0,1)")
    fn.certificate.delta2_modulus[b] = m_b
    fn.certificate.audited_grid[b] = (float(x_grid[0]), float(x_grid[-1]), len(x_grid))
    return m_b


def ensure_delta2(fn: OrliczFunction, b=2.0) -> float:
    """Recorded modulus for factor b, raising Delta2Missing when absent."""
    try:
        return fn.certificate.delta2_modulus[float(b)]
    except (AttributeError, KeyError):
        raise Delta2Missing(
            f"no doubling certificate for b={b:g}; run delta2_modulus first")


def q_condition_constant(fn: OrliczFunction) -> float:
    """Estimate of liminf phi(x)/x^2 near zero on the dyadic grid 2^{-4..40}.

    Returns the grid minimum and flags the certificate; values below 1e-8
    mark the quadratic lower-bound condition as failed.
    """
    ks = np.arange(4, 41)
    xs = 2.0 ** (-ks)
    vals = fn(xs) / (xs * xs)
    est = float(np.min(vals))
    ok = est >= 1e-8
    fn.certificate.q_constant = est if ok else 0.0
    fn.certificate.q_ok = ok
    return est if ok else 0.0


# -- derived transforms -------------------------------------------------------


def psi_square_transform(fn: OrliczFunction) -> YoungFunction:
    """Young function psi(x) = phi(sqrt(|x|)) for squares of tail-controlled variables.

    psi may be linear near zero, so it skips the N-function audit; its numeric
    conjugate carries the usual grid cap (a linear psi has a conjugate that is
    zero on a ball and effectively infinite outside).
    """
    base_eval = fn._evaluator
    return YoungFunction(
        kind=f"psi_square[{fn.kind}]", params=fn.params,
        evaluator=lambda x: base_eval(np.sqrt(x)),
        conjugate_form="numeric", grid=fn.grid,
        unbounded_eval=fn.unbounded_eval)


def standardize_near_zero(fn: OrliczFunction) -> YoungFunction:
    """Splice x^2/2 below |x| = sqrt(2) onto phi shifted for continuity.

    The splice is continuous but may have a slope kink at the junction, so the
    result is typed as a plain Young function.
    """
    base_eval = fn._evaluator
    cut = math.sqrt(2.0)
    offset = 1.0 - float(fn(cut))

    def evaluator(x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= cut, 0.5 * x * x, base_eval(x) + offset)

    return YoungFunction(
        kind=f"standardized[{fn.kind}]", params=fn.params, evaluator=evaluator,
        conjugate_form="numeric", grid=fn.grid, unbounded_eval=fn.unbounded_eval)
