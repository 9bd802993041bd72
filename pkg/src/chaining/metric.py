"""Finite metric spaces: covering numbers, entropy numbers, greedy nets,
and admissible sequences of nets and partitions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySubset, ExactTooLarge, InvalidParams, NotAdmissible, ValidationError
from .rng import stream

__all__ = [
    "FiniteMetricSpace",
    "AdmissibleNets",
    "AdmissiblePartitions",
    "FlaggedFloat",
    "level_cardinality_cap",
    "diameter",
    "covering_number",
    "entropy_number",
    "greedy_net",
    "build_admissible",
]

_EXACT_COVER_CAP = 16
_BNB_COVER_CAP = 64
_TRIANGLE_FULL_CAP = 512
_TRIANGLE_SLACK = 1e-9


class FlaggedFloat(float):
    """Float carrying an exactness flag (True when an exhaustive search produced it)."""

    def __new__(cls, value, exact=True):
        obj = super().__new__(cls, value)
        obj.exact = bool(exact)
        return obj


def level_cardinality_cap(n: int) -> float:
    """Cardinality cap 2^(2^n) for level n, as a float (inf-safe for large n)."""
    if n >= 10:
        return math.inf
    return float(2 ** (2 ** n))


class FiniteMetricSpace:
    """Index set {0..n-1} with a validated symmetric distance matrix.

    Immutable after construction; all operations on it are pure.
    """

    def __init__(self, distances: np.ndarray, source="matrix", validated=False):
        D = np.asarray(distances, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValidationError(f"distance matrix must be square, got {D.shape}")
        self.n_points = D.shape[0]
        self.source = source
        if not validated:
            self._validate(D)
        self.distances = D.copy()
        self.distances.setflags(write=False)

    @staticmethod
    def _validate(D: np.ndarray) -> None:
        n = D.shape[0]
        if not np.all(np.isfinite(D)):
            raise ValidationError("distances must be finite")
        if np.any(np.abs(np.diag(D)) > 0):
            i = int(np.argmax(np.abs(np.diag(D)) > 0))
            raise ValidationError(f"nonzero diagonal at index {i}")
        if np.any(D < 0):
            i, j = np.unravel_index(int(np.argmin(D)), D.shape)
            raise ValidationError(f"negative distance at pair ({i}, {j})")
        asym = np.abs(D - D.T)
        if np.any(asym > 1e-12 * (1.0 + np.abs(D))):
            i, j = np.unravel_index(int(np.argmax(asym)), D.shape)
            raise ValidationError(f"asymmetric distance at pair ({i}, {j})")
        if n <= _TRIANGLE_FULL_CAP:
            for k in range(n):
                slack = D - (D[:, k][:, None] + D[k, :][None, :])
                if np.any(slack > _TRIANGLE_SLACK):
                    i, j = np.unravel_index(int(np.argmax(slack)), D.shape)
                    raise ValidationError(
                        f"triangle inequality fails on triple ({i}, {k}, {j})")
        else:
            rng = stream(0, "triangle-audit")
            for _ in range(64):
                ks = rng.integers(0, n, size=4)
                for k in ks:
                    slack = D - (D[:, k][:, None] + D[k, :][None, :])
                    if np.any(slack > _TRIANGLE_SLACK):
                        i, j = np.unravel_index(int(np.argmax(slack)), D.shape)
                        raise ValidationError(
                            f"triangle inequality fails on triple ({i}, {k}, {j})")

    @classmethod
    def from_vectors(cls, vectors, metric="euclidean") -> "FiniteMetricSpace":
        X = np.asarray(vectors, dtype=float)
        if X.ndim != 2:
            raise ValidationError(f"expected 2-d array of vectors, got shape {X.shape}")
        if metric == "euclidean":
            diff = X[:, None, :] - X[None, :, :]
            D = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
            D = 0.5 * (D + D.T)
            np.fill_diagonal(D, 0.0)
            return cls(D, source="vectors", validated=True)
        if callable(metric):
            n = X.shape[0]
            D = np.zeros((n, n))
            for i in range(n):
                for j in range(i + 1, n):
                    D[i, j] = D[j, i] = float(metric(X[i], X[j]))
            return cls(D, source="vectors")
        raise InvalidParams(f"unknown metric {metric!r}")

    @classmethod
    def from_matrix(cls, matrix) -> "FiniteMetricSpace":
        return cls(np.asarray(matrix, dtype=float), source="matrix")

    def subspace(self, indices) -> "FiniteMetricSpace":
        idx = np.asarray(sorted(indices), dtype=int)
        if idx.size == 0:
            raise EmptySubset("subspace needs at least one point")
        sub = self.distances[np.ix_(idx, idx)]
        return FiniteMetricSpace(sub, source=self.source, validated=True)

    def scaled(self, factor: float) -> "FiniteMetricSpace":
        if factor <= 0:
            raise InvalidParams("scale factor must be positive")
        return FiniteMetricSpace(self.distances * factor, source=self.source,
                                 validated=True)


def diameter(space: FiniteMetricSpace, subset=None) -> float:
    """Largest pairwise distance over the subset (default: all points)."""
    if subset is None:
        D = space.distances
    else:
        idx = np.asarray(list(subset), dtype=int)
        if idx.size == 0:
            raise EmptySubset("diameter of an empty subset")
        D = space.distances[np.ix_(idx, idx)]
    return float(D.max()) if D.size else 0.0


# -- covering and entropy -----------------------------------------------------


def _ball_masks(space, eps):
    """Bitmask per candidate center of the points its closed eps-ball covers."""
    D = space.distances
    masks = []
    for i in range(space.n_points):
        covered = np.nonzero(D[i] <= eps + 1e-12)[0]
        m = 0
        for j in covered:
            m |= 1 << int(j)
        masks.append(m)
    return masks


def _greedy_cover(masks, full):
    count, covered = 0, 0
    while covered != full:
        best, best_gain = -1, -1
        for i, m in enumerate(masks):
            gain = bin(m & ~covered).count("1")
            if gain > best_gain:
                best, best_gain = i, gain
        if best_gain <= 0:
            raise ValidationError("greedy cover stalled; balls do not cover the space")
        covered |= masks[best]
        count += 1
    return count


def _exhaustive_cover(masks, full, n):
    for k in range(1, n + 1):
        for centers in itertools.combinations(range(n), k):
            m = 0
            for c in centers:
                m |= masks[c]
            if m == full:
                return k
    return n


def _bnb_cover(masks, full, n, upper):
    cover_of = [[] for _ in range(n)]
    for c, m in enumerate(masks):
        for j in range(n):
            if m >> j & 1:
                cover_of[j].append(c)
    best = [upper]

    def recurse(covered, used):
        if covered == full:
            best[0] = min(best[0], used)
            return
        if used + 1 >= best[0]:
            return
        # branch on the uncovered point with fewest candidate balls
        pick, fewest = -1, None
        for j in range(n):
            if not covered >> j & 1:
                cands = [c for c in cover_of[j] if masks[c] & ~covered]
                if fewest is None or len(cands) < len(fewest):
                    pick, fewest = j, cands
                    if len(cands) <= 1:
                        break
        if not fewest:
            return
        fewest.sort(key=lambda c: -bin(masks[c] & ~covered).count("1"))
        for c in fewest:
            recurse(covered | masks[c], used + 1)

    recurse(0, 0)
    return best[0]


def covering_number(space: FiniteMetricSpace, eps: float, mode="exact") -> int:
    """Minimum (exact) or greedy (upper bound) number of closed eps-balls
    centered at points of the space that cover it."""
    if eps <= 0:
        raise InvalidParams("eps must be positive")
    n = space.n_points
    masks = _ball_masks(space, eps)
    full = (1 << n) - 1
    if mode == "greedy":
        return _greedy_cover(masks, full)
    if mode != "exact":
        raise InvalidParams(f"mode must be 'exact' or 'greedy', got {mode!r}")
    if n > _BNB_COVER_CAP:
        raise ExactTooLarge(f"exact covering capped at n={_BNB_COVER_CAP}, got {n}")
    if n <= _EXACT_COVER_CAP:
        return _exhaustive_cover(masks, full, n)
    upper = _greedy_cover(masks, full)
    return _bnb_cover(masks, full, n, upper)


def entropy_number(space: FiniteMetricSpace, n: int) -> FlaggedFloat:
    """Smallest worst-case distance to a subset of cardinality <= 2^(2^n).

    Exact (exhaustive over subsets) for spaces of at most 16 points, greedy
    farthest-point upper bound otherwise; the flag records which.
    """
    if n < 0:
        raise InvalidParams("level must be nonnegative")
    npts = space.n_points
    cap = level_cardinality_cap(n)
    if cap >= npts:
        return FlaggedFloat(0.0, exact=True)
    cap = int(cap)
    D = space.distances
    if npts <= _EXACT_COVER_CAP:
        best = math.inf
        for sub in itertools.combinations(range(npts), cap):
            r = float(D[:, sub].min(axis=1).max())
            if r < best:
                best = r
        return FlaggedFloat(best, exact=True)
    net = greedy_net(space, cap)
    return FlaggedFloat(float(D[:, net].min(axis=1).max()), exact=False)


def greedy_net(space: FiniteMetricSpace, k: int, seed_point: int = 0) -> np.ndarray:
    """Deterministic farthest-point-first net of size min(k, n_points).

    Ties break toward the lowest index.
    """
    n = space.n_points
    if not 1 <= k:
        raise InvalidParams("net size must be at least 1")
    if not 0 <= seed_point < n:
        raise InvalidParams(f"seed point {seed_point} out of range")
    k = min(k, n)
    D = space.distances
    chosen = [seed_point]
    dist = D[seed_point].copy()
    while len(chosen) < k:
        nxt = int(np.argmax(dist))  # argmax returns the first (lowest) index on ties
        chosen.append(nxt)
        np.minimum(dist, D[nxt], out=dist)
    return np.array(chosen, dtype=int)


# -- admissible sequences ------------------------------------------------------


@dataclass
class AdmissibleNets:
    """Levels (n, subset of point indices) with card(T_n) <= 2^(2^n)."""

    levels: list
    k_start: int
    n_points: int

    def validate(self):
        if not self.levels:
            raise NotAdmissible("no levels")
        prev = None
        for n, net in self.levels:
            if prev is not None and n != prev + 1:
                raise NotAdmissible(f"levels must be consecutive, got {prev} -> {n}")
            prev = n
            if len(net) == 0:
                raise NotAdmissible(f"empty net at level {n}")
            if len(net) > level_cardinality_cap(n):
                raise NotAdmissible(
                    f"card(T_{n}) = {len(net)} exceeds cap 2^(2^{n})")
            if len(set(int(i) for i in net)) != len(net):
                raise NotAdmissible(f"duplicate indices in net at level {n}")
        if self.levels[0][0] != self.k_start:
            raise NotAdmissible("first level does not match k_start")


@dataclass
class AdmissiblePartitions:
    """Levels (n, labels) of nested partitions: card(A_0) = 1, card(A_n) <= 2^(2^n)."""

    levels: list
    n_points: int

    def validate(self):
        if not self.levels:
            raise NotAdmissible("no levels")
        if self.levels[0][0] != 0:
            raise NotAdmissible("partitions must start at level 0")
        if len(np.unique(self.levels[0][1])) != 1:
            raise NotAdmissible("card(A_0) must be 1")
        prev_labels = None
        prev_n = None
        for n, labels in self.levels:
            labels = np.asarray(labels)
            if prev_n is not None and n != prev_n + 1:
                raise NotAdmissible(f"levels must be consecutive, got {prev_n} -> {n}")
            prev_n = n
            ncells = len(np.unique(labels))
            if ncells > level_cardinality_cap(n):
                raise NotAdmissible(f"card(A_{n}) = {ncells} exceeds cap 2^(2^{n})")
            if prev_labels is not None:
                # refinement: every new cell sits inside one old cell
                for cell in np.unique(labels):
                    parents = np.unique(prev_labels[labels == cell])
                    if len(parents) != 1:
                        raise NotAdmissible(
                            f"cell {cell} at level {n} straddles {len(parents)} parents")
            prev_labels = labels

    def cells(self, level_index):
        n, labels = self.levels[level_index]
        return [np.nonzero(labels == c)[0] for c in np.unique(labels)]


def build_admissible(space: FiniteMetricSpace, p: float, form: str):
    """Greedy admissible sequence: farthest-point nets, or their per-cell
    Voronoi refinements for the partition form."""
    from .functionals import k_index  # local import to avoid a cycle

    kp = k_index(p)
    if form == "nets":
        levels = []
        n = kp
        while True:
            size = level_cardinality_cap(n)
            size = space.n_points if size >= space.n_points else int(size)
            net = greedy_net(space, size)
            levels.append((n, net))
            if float(space.distances[:, net].min(axis=1).max()) == 0.0:
                break
            n += 1
        return AdmissibleNets(levels=levels, k_start=kp, n_points=space.n_points)
    if form == "partitions":
        D = space.distances
        labels = np.zeros(space.n_points, dtype=int)
        levels = [(0, labels.copy())]
        n = 0
        while True:
            cells = [np.nonzero(labels == c)[0] for c in np.unique(labels)]
            if all(D[np.ix_(c, c)].max() == 0.0 for c in cells):
                break
            total_cap = level_cardinality_cap(n + 1)
            per_cell = (math.inf if total_cap == math.inf
                        else max(2, int(total_cap // len(cells))))
            new_labels = np.empty(space.n_points, dtype=int)
            next_label = 0
            for cell in cells:
                if len(cell) == 1 or D[np.ix_(cell, cell)].max() == 0.0:
                    new_labels[cell] = next_label
                    next_label += 1
                    continue
                sub = space.subspace(cell)
                budget = len(cell) if per_cell == math.inf else int(min(per_cell, len(cell)))
                net_local = greedy_net(sub, budget)
                assign = np.argmin(sub.distances[:, np.sort(net_local)], axis=1)
                for a in np.unique(assign):
                    new_labels[cell[assign == a]] = next_label
                    next_label += 1
            labels = new_labels
            n += 1
            levels.append((n, labels.copy()))
        parts = AdmissiblePartitions(levels=levels, n_points=space.n_points)
        parts.validate()
        return parts
    raise InvalidParams(f"form must be 'nets' or 'partitions', got {form!r}")
