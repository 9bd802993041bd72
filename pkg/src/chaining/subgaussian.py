"""Tail-controlled random drivers and empirical norm/tail machinery.

Drivers sample centered random variables whose moment generating function is
dominated by exp(phi(a*lambda)) for some scale a; the smallest such a is the
norm this module estimates empirically.  Tail audits check the increment
inequality P(|xi| >= u * a) <= 2 exp(-phistar(u)) against Monte Carlo
exceedance frequencies with Wilson intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams, MGFOverflow, ResolutionTooLow, AlphaUnsupported
from .orlicz import OrliczFunction, YoungFunction
from .rng import stream

__all__ = [
    "ProcessDriver",
    "gaussian_driver",
    "rademacher_driver",
    "uniform_driver",
    "weibull_driver",
    "TauEstimate",
    "tau_phi_estimate",
    "TailAuditReport",
    "increment_tail_audit",
    "moment_to_tail_threshold",
    "tail_to_moment_bound",
    "gaussian_moment_bound",
    "wilson_upper",
    "TAIL_MOMENT_CONSTANTS",
]

_CHUNK = 1 << 16
_WILSON_Z = 1.96

# sup over p in [1, 8] of (integral_0^inf p u^{p-1} exp(-p u^alpha / 4) du)^{1/p},
# precomputed by quadrature (attained at p = 1): alpha=1 -> 4, alpha=2 -> sqrt(pi)
TAIL_MOMENT_CONSTANTS = {1.0: 4.0, 2.0: math.sqrt(math.pi)}


@dataclass(frozen=True)
class ProcessDriver:
    """Centered sampler with counter-based reproducible draws.

    claimed_tau is the known norm per unit scale when the pairing with the
    quadratic generator makes it exact; drivers without a closed form carry
    None and must be paired with tau_phi_estimate.
    """

    kind: str
    params: tuple = ()
    claimed_tau: float | None = None
    sampler: object = None
    sd_hint: float | None = None

    def sd(self) -> float:
        if self.kind == "gaussian":
            return self.params[0]
        if self.kind == "rademacher":
            return 1.0
        if self.kind == "uniform_bounded":
            return self.params[0] / math.sqrt(3.0)
        if self.kind == "weibull_centered":
            q, kappa = self.params
            m1 = math.gamma(1.0 + 1.0 / q)
            m2 = math.gamma(1.0 + 2.0 / q)
            return kappa * math.sqrt(m2 - m1 * m1)
        if self.sd_hint is not None:
            return self.sd_hint
        # deterministic pilot estimate for custom samplers
        return float(self.sample(4096, seed=0, label="sd-pilot").std())

    def sample(self, n, seed, label=0) -> np.ndarray:
        rng = stream(seed, label)
        return self.sample_from(rng, n)

    def sample_from(self, rng, n) -> np.ndarray:
        if self.kind == "gaussian":
            return self.params[0] * rng.standard_normal(n)
        if self.kind == "rademacher":
            return rng.integers(0, 2, size=n) * 2.0 - 1.0
        if self.kind == "uniform_bounded":
            b = self.params[0]
            return rng.uniform(-b, b, size=n)
        if self.kind == "weibull_centered":
            q, kappa = self.params
            return kappa * (rng.weibull(q, size=n) - math.gamma(1.0 + 1.0 / q))
        if self.kind == "custom":
            return np.asarray(self.sampler(rng, n), dtype=float)
        raise InvalidParams(f"unknown driver kind {self.kind!r}")

    def scaled(self, s: float) -> "ProcessDriver":
        if self.kind == "gaussian":
            return gaussian_driver(self.params[0] * s)
        base = self

        def sampler(rng, n):
            return s * base.sample_from(rng, n)

        tau = None if base.claimed_tau is None else s * base.claimed_tau
        return ProcessDriver("custom", (s,) + base.params, tau, sampler,
                             sd_hint=s * base.sd())


def gaussian_driver(sigma=1.0) -> ProcessDriver:
    if sigma <= 0:
        raise InvalidParams("sigma must be positive")
    return ProcessDriver("gaussian", (float(sigma),), claimed_tau=float(sigma))


def rademacher_driver() -> ProcessDriver:
    return ProcessDriver("rademacher", (), claimed_tau=1.0)


def uniform_driver(b=1.0) -> ProcessDriver:
    if b <= 0:
        raise InvalidParams("bound must be positive")
    return ProcessDriver("uniform_bounded", (float(b),),
                         claimed_tau=float(b) / math.sqrt(3.0))


def weibull_driver(q=1.5, kappa=2.0) -> ProcessDriver:
    # finite MGF everywhere needs shape q > 1; the sampler subtracts the mean
    if q <= 1:
        raise InvalidParams("shape must exceed 1 for a finite MGF")
    if kappa <= 1:
        raise InvalidParams("scale must exceed 1")
    return ProcessDriver("weibull_centered", (float(q), float(kappa)))


def audit_centering(driver: ProcessDriver, n=10**6, seed=0) -> dict:
    draws = driver.sample(n, seed, "centering")
    mean = float(draws.mean())
    sd = float(draws.std())
    tol = 4.0 * sd / 1000.0
    return {"mean": mean, "sd": sd, "tolerance": tol, "passed": abs(mean) <= tol}


# -- empirical norm -------------------------------------------------------------


@dataclass
class TauEstimate:
    value: float
    argmax_lambda: float
    jackknife_se: float
    per_lambda: dict = field(default_factory=dict)
    truncated: list = field(default_factory=list)
    n_samples: int = 0
    seed: int = 0


def default_lambda_grid(driver: ProcessDriver, n_magnitudes=7):
    """Symmetric log-spaced magnitudes scaled to the driver's spread.

    The window [0.5, 2.0] per unit of standard deviation keeps the empirical
    MGF away from both the small-lambda noise blowup and the heavy-tail
    undersampling at large lambda.
    """
    s = driver.sd()
    mags = np.geomspace(0.5, 2.0, n_magnitudes) / s
    return np.concatenate([-mags[::-1], mags])


def tau_phi_estimate(driver: ProcessDriver, phi: OrliczFunction,
                     lambda_grid=None, n_samples=10**5, seed=0,
                     n_blocks=20) -> TauEstimate:
    """sup over the grid of phi^{-1}(log empirical MGF(lambda)) / |lambda|.

    Uses streaming log-sum-exp per block for overflow control; lambdas whose
    MGF overflows are dropped and flagged.  A delete-one block jackknife gives
    the error estimate.
    """
    if lambda_grid is None:
        lambda_grid = default_lambda_grid(driver)
    lam = np.asarray(lambda_grid, dtype=float)
    if np.any(lam == 0.0):
        raise InvalidParams("lambda grid must exclude 0")
    block_size = max(1, n_samples // n_blocks)
    block_lse = np.full((n_blocks, lam.size), -np.inf)
    block_counts = np.zeros(n_blocks, dtype=int)
    for b in range(n_blocks):
        count = block_size if b < n_blocks - 1 else n_samples - block_size * (n_blocks - 1)
        rng = stream(seed, ("tau", b))
        remaining = count
        lse = np.full(lam.size, -np.inf)
        while remaining > 0:
            take = min(_CHUNK, remaining)
            draws = driver.sample_from(rng, take)
            z = lam[:, None] * draws[None, :]
            with np.errstate(over="ignore"):
                chunk_lse = np.logaddexp.reduce(z, axis=1)
            lse = np.logaddexp(lse, chunk_lse)
            remaining -= take
        block_lse[b] = lse
        block_counts[b] = count

    def tau_from(lse_total, total):
        log_mgf = lse_total - math.log(total)
        vals = np.zeros(lam.size)
        truncated = []
        for i, (lg, l) in enumerate(zip(log_mgf, lam)):
            if not np.isfinite(lg):
                truncated.append(float(l))
                continue
            if lg <= 0:
                continue
            vals[i] = phi.inverse(lg) / abs(l)
        return vals, truncated

    total_lse = np.logaddexp.reduce(block_lse, axis=0)
    vals, truncated = tau_from(total_lse, n_samples)
    if len(truncated) == lam.size:
        raise MGFOverflow("empirical MGF overflowed at every grid lambda")
    best = int(np.argmax(vals))
    # delete-one-block jackknife of the supremum statistic
    jacks = []
    for b in range(n_blocks):
        keep = [i for i in range(n_blocks) if i != b]
        lse_wo = np.logaddexp.reduce(block_lse[keep], axis=0)
        v, _ = tau_from(lse_wo, n_samples - block_counts[b])
        jacks.append(v.max())
    jacks = np.array(jacks)
    se = math.sqrt(max(0.0, (n_blocks - 1) / n_blocks
                       * float(((jacks - jacks.mean()) ** 2).sum())))
    return TauEstimate(
        value=float(vals.max()), argmax_lambda=float(lam[best]),
        jackknife_se=se,
        per_lambda={float(l): float(v) for l, v in zip(lam, vals)},
        truncated=truncated, n_samples=n_samples, seed=seed)


# -- tail audits -----------------------------------------------------------------


def wilson_upper(successes, n, z=_WILSON_Z):
    """Upper Wilson score bound for a binomial proportion."""
    if n == 0:
        return 1.0
    phat = successes / n
    denom = 1.0 + z * z / n
    center = phat + z * z / (2 * n)
    rad = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n))
    return (center + rad) / denom


@dataclass
class TailAuditReport:
    u_grid: list
    empirical: list
    wilson_up: list
    bounds: list
    verdicts: list
    n_samples: int
    seed: int
    tau: float

    @property
    def passed(self) -> bool:
        return all(self.verdicts)


def increment_tail_audit(driver, tau, phi, u_grid, n_samples=10**5,
                         seed=0) -> TailAuditReport:
    """Empirical check of P(|xi| >= u tau) <= 2 exp(-phistar(u)) on the grid.

    Accepts a single centered driver or a pair (independent difference).
    Grid points whose bound falls below 10/n_samples are unresolvable and
    rejected up front.
    """
    if tau <= 0:
        raise InvalidParams("tau must be positive")
    u = np.asarray(u_grid, dtype=float)
    if np.any(u < 0):
        raise InvalidParams("u grid must be nonnegative")
    conj = phi.conjugate() if isinstance(phi, (OrliczFunction, YoungFunction)) else phi
    bounds = np.minimum(2.0 * np.exp(-conj(u)), 2.0)
    floor = 10.0 / n_samples
    bad = [float(x) for x, bd in zip(u, bounds) if bd < floor and x > 0]
    if bad:
        raise ResolutionTooLow(
            f"bound below Monte Carlo resolution {floor:g} at u = {bad}")
    pair = isinstance(driver, tuple)
    counts = np.zeros(u.size, dtype=np.int64)
    remaining = n_samples
    rng_a = stream(seed, "tail-a")
    rng_b = stream(seed, "tail-b")
    thresholds = u * tau
    while remaining > 0:
        take = min(_CHUNK, remaining)
        if pair:
            draws = (driver[0].sample_from(rng_a, take)
                     - driver[1].sample_from(rng_b, take))
        else:
            draws = driver.sample_from(rng_a, take)
        a = np.abs(draws)
        counts += (a[None, :] >= thresholds[:, None]).sum(axis=1)
        remaining -= take
    emp = counts / n_samples
    wup = [wilson_upper(int(c), n_samples) for c in counts]
    verdicts = [w <= b + 1e-12 for w, b in zip(wup, bounds)]
    return TailAuditReport(
        u_grid=[float(x) for x in u], empirical=[float(e) for e in emp],
        wilson_up=[float(w) for w in wup], bounds=[float(b) for b in bounds],
        verdicts=verdicts, n_samples=n_samples, seed=seed, tau=float(tau))


def max_resolvable_u(phi, n_samples) -> float:
    """Largest u with 2 exp(-phistar(u)) >= 10/n_samples."""
    conj = phi.conjugate()
    target = math.log(2.0 * n_samples / 10.0)
    return conj.inverse(target)


# -- moment/tail conversion -------------------------------------------------------


def moment_to_tail_threshold(c1, c2, c3, u) -> float:
    """Threshold e*(c1 u + c2 sqrt(u) + c3) at which the tail drops below exp(-u).

    Valid whenever the p-th moment roots are bounded by c1 p + c2 sqrt(p) + c3
    for all p >= 1; requires u >= 1.
    """
    if u < 1:
        raise InvalidParams("u must be at least 1")
    if min(c1, c2, c3) < 0:
        raise InvalidParams("coefficients must be nonnegative")
    return math.e * (c1 * u + c2 * math.sqrt(u) + c3)


def tail_to_moment_bound(gamma, c, u_star, alpha, p=None) -> float:
    """Moment root bound gamma * (c_alpha * c + u_star) from a tail bound
    c exp(-p u^alpha / 4) valid for u >= u_star.

    c_alpha comes from a precomputed quadrature table (alpha in {1, 2}).
    """
    if gamma < 0 or u_star <= 0 or c < 1:
        raise InvalidParams("need gamma >= 0, u_star > 0, c >= 1")
    try:
        c_alpha = TAIL_MOMENT_CONSTANTS[float(alpha)]
    except KeyError:
        raise AlphaUnsupported(f"no precomputed constant for alpha={alpha}")
    return gamma * (c_alpha * c + u_star)


def gaussian_moment_bound(alpha) -> float:
    """sqrt(e/(e-1)) * alpha^(alpha/2), an upper bound for E|g|^alpha, alpha >= 1."""
    if alpha < 1:
        raise InvalidParams("alpha must be at least 1")
    return math.sqrt(math.e / (math.e - 1.0)) * alpha ** (alpha / 2.0)
