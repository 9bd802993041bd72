"""Growth-condition machinery: separation tests, growth audits for set
functionals, and the recursive partition-building construction that turns a
functional satisfying the growth condition into an admissible partition
sequence with a controlled chaining value."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams, OracleUnavailable, PackingTooLarge
from .functionals import estimate_gamma, eval_gamma_partitions, k_index
from .metric import AdmissiblePartitions, FiniteMetricSpace, diameter, level_cardinality_cap
from .orlicz import OrliczFunction

__all__ = [
    "GrowthParams",
    "SetFunctional",
    "exact_gamma_tilde_functional",
    "check_separated",
    "sample_separated_family",
    "growth_condition_audit",
    "partition_step",
    "build_partition_scheme",
]

_ORACLE_CAP = 8


@dataclass(frozen=True)
class GrowthParams:
    """Separation/growth parameters: ratio r >= 8, constant c* > 0, moment order p."""

    r: int = 16
    c_star: float = 0.125
    p: float = 1.0

    def __post_init__(self):
        if self.r < 8:
            raise InvalidParams(f"r must be >= 8, got {self.r}")
        if self.c_star <= 0:
            raise InvalidParams("c_star must be positive")
        if self.p < 1:
            raise InvalidParams("p must be >= 1")


class SetFunctional:
    """Nonnegative monotone map from index subsets of a fixed space to reals.

    Evaluations are memoized on the sorted index tuple; the memo is insert-only
    with deterministic values, so concurrent reads are safe.
    """

    def __init__(self, tag, evaluator):
        self.tag = tag
        self._evaluator = evaluator
        self._memo = {}

    def __call__(self, subset) -> float:
        key = tuple(sorted(int(i) for i in subset))
        if not key:
            return 0.0
        if key not in self._memo:
            value = float(self._evaluator(key))
            if value < 0:
                raise InvalidParams(f"functional {self.tag} returned {value:g} < 0")
            self._memo[key] = value
        return self._memo[key]

    def audit_monotone(self, space, rng, n_chains=20):
        """Check F(H) <= F(H') on sampled nested chains; returns violations."""
        violations = []
        n = space.n_points
        for _ in range(n_chains):
            size = int(rng.integers(1, n + 1))
            perm = rng.permutation(n)
            chain = [perm[:k] for k in range(1, size + 1)]
            vals = [self(c) for c in chain]
            for a, b in zip(vals, vals[1:]):
                if a > b + 1e-9:
                    violations.append((a, b))
        return violations


def exact_gamma_tilde_functional(space: FiniteMetricSpace, phi: OrliczFunction,
                                 p=1.0) -> SetFunctional:
    """Exact-oracle chaining functional on subsets of the given space.

    Nets are drawn from the whole space, not the queried subset, which makes
    the functional monotone (a larger subset only enlarges the supremum) while
    agreeing with the plain oracle on the full set.
    """
    from .functionals import _nontrivial_levels, _subsets_upto, _level_weight

    npts = space.n_points
    if npts > _ORACLE_CAP:
        raise OracleUnavailable(
            f"exact subset oracle capped at {_ORACLE_CAP} points, got {npts}")
    kp = k_index(p)
    levels = _nontrivial_levels(npts, kp)
    D = space.distances
    # per level: distances to every candidate net, shape (n_subsets, n_points)
    level_dists = []
    for n in levels:
        subs = _subsets_upto(npts, int(level_cardinality_cap(n)))
        weight = _level_weight(phi, n)
        level_dists.append(weight * np.stack([D[:, s].min(axis=1) for s in subs]))

    def evaluate(key):
        idx = np.asarray(key, dtype=int)
        if not levels:
            return 0.0
        acc = level_dists[0][:, idx]
        for mat in level_dists[1:]:
            acc = (acc[:, None, :] + mat[None, :, idx]).reshape(-1, idx.size)
        return float(acc.max(axis=1).min())

    return SetFunctional("gamma_tilde", evaluate)


def check_separated(space: FiniteMetricSpace, subsets, centers, a,
                    params: GrowthParams) -> bool:
    """True iff the subsets sit in radius-2a/r balls around centers that are
    pairwise between a and 2ar apart."""
    if a <= 0:
        raise InvalidParams("a must be positive")
    if len(subsets) != len(centers) or len(subsets) < 2:
        return False
    D = space.distances
    radius = 2.0 * a / params.r
    for subset, center in zip(subsets, centers):
        idx = np.asarray(list(subset), dtype=int)
        if idx.size == 0:
            return False
        if D[idx, center].max() > radius + 1e-12:
            return False
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            d = D[centers[i], centers[j]]
            if d < a - 1e-12 or d > 2.0 * a * params.r + 1e-12:
                return False
    return True


def sample_separated_family(rng, params: GrowthParams, n_level=None,
                            max_points=_ORACLE_CAP):
    """Random separated family in the plane sized for the exact oracle.

    Returns (space, subsets, centers, a, n_level): 2^(2^n_level) clusters of
    one or two points, centers pairwise between a and 2ar apart, cluster
    radius at most 2a/r.
    """
    if n_level is None:
        n_level = 1 + k_index(params.p)
    m = int(level_cardinality_cap(n_level))
    if m > max_points:
        raise InvalidParams(
            f"level {n_level} needs {m} clusters > cap {max_points}")
    a = float(rng.uniform(0.5, 2.0))
    radius = 2.0 * a / params.r
    # centers on a circle of radius between a and a*r/4: pairwise distances
    # land in [a, 2ar] after a light rejection loop
    for _ in range(200):
        R = float(rng.uniform(a, a * params.r / 4.0))
        angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, m))
        pts = R * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        pd = np.sqrt(((pts[:, None] - pts[None, :]) ** 2).sum(-1))
        off = pd[np.triu_indices(m, 1)]
        if off.min() >= a and off.max() <= 2.0 * a * params.r:
            break
    else:
        raise InvalidParams("failed to sample a separated configuration")
    points = []
    subsets = []
    centers = []
    budget = max_points - m
    for i in range(m):
        centers.append(len(points))
        cluster = [len(points)]
        points.append(pts[i])
        if budget > 0 and rng.random() < 0.5:
            theta = rng.uniform(0, 2 * math.pi)
            rho = rng.uniform(0, radius)
            cluster.append(len(points))
            points.append(pts[i] + rho * np.array([math.cos(theta), math.sin(theta)]))
            budget -= 1
        subsets.append(np.array(cluster, dtype=int))
    space = FiniteMetricSpace.from_vectors(np.array(points))
    return space, subsets, centers, a, n_level


def growth_condition_audit(space: FiniteMetricSpace, F: SetFunctional,
                           phi: OrliczFunction, params: GrowthParams,
                           instances) -> dict:
    """Check F(union) >= c* a w(n) + min_l F(H_l) on separated families.

    Instances violating the separation predicate are rejected before
    evaluation; the report carries margins and any violation witnesses.
    """
    if params.r < 16:
        raise InvalidParams("growth audits for chaining functionals need r >= 16")
    checked, rejected, violations, margins = 0, 0, [], []
    for subsets, centers, a, n_level in instances:
        if n_level < 1 + k_index(params.p):
            rejected += 1
            continue
        if len(subsets) != int(level_cardinality_cap(n_level)):
            rejected += 1
            continue
        if not check_separated(space, subsets, centers, a, params):
            rejected += 1
            continue
        union = np.concatenate(subsets)
        lhs = F(union)
        rhs = (params.c_star * a * phi.conjugate_inverse(2.0 ** n_level)
               + min(F(s) for s in subsets))
        margins.append(lhs - rhs)
        checked += 1
        if lhs < rhs - 1e-9:
            violations.append({
                "a": a, "n": n_level, "lhs": lhs, "rhs": rhs,
                "subsets": [list(map(int, s)) for s in subsets],
            })
    return {
        "checked": checked,
        "rejected": rejected,
        "violations": violations,
        "min_margin": min(margins) if margins else None,
        "passed": checked > 0 and not violations,
    }


# -- the partitioning construction ---------------------------------------------


@dataclass
class PartitionCell:
    indices: np.ndarray
    tag: str            # "small" | "large"
    j: int              # scale index after the split
    parent_j: int       # scale index of the parent cell
    level: int          # level n at which the split happened
    parent_indices: np.ndarray = None


def partition_step(space: FiniteMetricSpace, B, F: SetFunctional, j: int,
                   n: int, params: GrowthParams, phi: OrliczFunction):
    """Split B (diam <= 2 r^-j) into at most 2^(2^n) cells.

    Small cells have diameter at most 2 r^-(j+1); every point t of the large
    cell satisfies F(B intersect ball(t, 2 r^-(j+2))) <= F(B) - c* w(n) r^-(j+1).
    Raises PackingTooLarge when a maximal separated set inside the retained
    region reaches 2^(2^n) points, i.e. the growth condition fails on B.
    """
    B = np.asarray(sorted(int(i) for i in B), dtype=int)
    r = float(params.r)
    m_cap = level_cardinality_cap(n)
    D = space.distances
    ball_radius = 2.0 * r ** (-j - 2)
    sep = r ** (-j - 1)
    decrement = params.c_star * phi.conjugate_inverse(2.0 ** n) * sep
    f_b = F(B)
    threshold = f_b - decrement
    retained = []
    for t in B:
        ball = B[D[t, B] <= ball_radius + 1e-15]
        if F(ball) > threshold:
            retained.append(t)
    retained = np.array(retained, dtype=int)
    cells = []
    if retained.size:
        packing = []
        for t in retained:
            if all(D[t, s] >= sep for s in packing):
                packing.append(int(t))
                if len(packing) >= m_cap:
                    raise PackingTooLarge(
                        f"maximal {sep:g}-separated set reached 2^(2^{n}) points",
                        points=packing, a=sep, level=n, j=j)
        taken = np.zeros(space.n_points, dtype=bool)
        for center in packing:
            members = retained[(D[center, retained] <= sep + 1e-15)
                               & ~taken[retained]]
            if members.size:
                taken[members] = True
                cells.append(PartitionCell(
                    indices=members, tag="small", j=j + 1, parent_j=j, level=n))
        assert taken[retained].all(), "packing maximality failed to cover"
    large = np.setdiff1d(B, retained)
    if large.size:
        cells.append(PartitionCell(
            indices=large, tag="large", j=j, parent_j=j, level=n))
    return cells


@dataclass
class SchemeResult:
    partitions: AdmissiblePartitions
    value: float
    fitted_ratio: float
    f_total: float
    diam: float
    scale: float
    cells_by_level: list = field(default_factory=list)

    def verify_tags(self, space, F, params, phi):
        """Re-check every small/large tag from the recorded split data.

        Checks run in the rescaled units the construction used; F is the
        original functional and is rescaled to match.
        """
        r = float(params.r)
        scaled = space.scaled(self.scale)
        D = scaled.distances
        failures = []
        for cell in self.cells_by_level:
            idx = cell.indices
            j, n = cell.parent_j, cell.level
            if cell.tag == "small":
                if diameter(scaled, idx) > 2.0 * r ** (-cell.j) + 1e-12:
                    failures.append(("small-diameter", cell))
            else:
                parent = cell.parent_indices
                decrement = (params.c_star * phi.conjugate_inverse(2.0 ** n)
                             * r ** (-j - 1))
                bound = self.scale * F(parent) - decrement
                ball_radius = 2.0 * r ** (-j - 2)
                for t in idx:
                    ball = parent[D[t, parent] <= ball_radius + 1e-15]
                    if self.scale * F(ball) > bound + 1e-9:
                        failures.append(("large-decrement", cell))
                        break
        return failures


def build_partition_scheme(space: FiniteMetricSpace, F: SetFunctional,
                           params: GrowthParams, phi: OrliczFunction,
                           max_level=60) -> SchemeResult:
    """Run the recursive splitting driven by F and return the admissible
    partition sequence together with its chaining value.

    Distances are rescaled by a power of r so the root scale index is 0;
    levels up to k_p + 1 keep the whole set (the growth condition is only
    available from level 1 + k_p onward) and those levels are absorbed by the
    diameter term of the conclusion.
    """
    delta = diameter(space)
    if delta <= 0:
        parts = AdmissiblePartitions(
            [(0, np.zeros(space.n_points, dtype=int))], space.n_points)
        return SchemeResult(parts, 0.0, 0.0, F(np.arange(space.n_points)),
                            0.0, 1.0, [])
    r = float(params.r)
    # scale so that diam <= 2 with j_0 = 0; powers of r=2^k scale floats exactly
    j0_raw = math.floor(math.log(2.0 / delta, r))
    scale = r ** j0_raw
    scaled = space.scaled(scale)

    def F_scaled(subset):
        return scale * F(subset)

    kp = k_index(params.p)
    n_start = kp + 1
    all_idx = np.arange(space.n_points)
    labels = np.zeros(space.n_points, dtype=int)
    levels = [(m, labels.copy()) for m in range(n_start + 1)]
    scaled_F = SetFunctional(F.tag, lambda key: F_scaled(key))
    cell_j = {tuple(all_idx): 0}
    cells_by_level = []
    n = n_start
    D = scaled.distances
    while True:
        current_cells = [np.nonzero(levels[-1][1] == c)[0]
                         for c in np.unique(levels[-1][1])]
        if all(D[np.ix_(c, c)].max() == 0.0 for c in current_cells):
            break
        if n > max_level:
            raise InvalidParams(f"partition scheme exceeded level cap {max_level}")
        new_labels = np.empty(space.n_points, dtype=int)
        next_label = 0
        for cell in current_cells:
            j = cell_j[tuple(cell)]
            if D[np.ix_(cell, cell)].max() == 0.0:
                new_labels[cell] = next_label
                next_label += 1
                cell_j[tuple(cell)] = j + 1
                continue
            pieces = partition_step(scaled, cell, scaled_F, j, n, params, phi)
            for piece in pieces:
                piece.parent_indices = cell
                new_labels[piece.indices] = next_label
                next_label += 1
                cell_j[tuple(piece.indices)] = piece.j
                cells_by_level.append(piece)
        n += 1
        levels.append((n, new_labels.copy()))
    parts = AdmissiblePartitions(levels, space.n_points)
    parts.validate()
    value_scaled = eval_gamma_partitions(scaled, phi, params.p, parts)
    value = value_scaled / scale
    f_total = F(all_idx)
    denom = f_total + delta
    return SchemeResult(
        partitions=parts, value=value,
        fitted_ratio=value / denom if denom > 0 else 0.0,
        f_total=f_total, diam=delta, scale=scale,
        cells_by_level=cells_by_level)
