import math

import numpy as np
import pytest

from chaining.errors import (
    Delta2Missing,
    ExactTooLarge,
    InvalidP,
    NotAdmissible,
)
from chaining.functionals import (
    dudley_bound,
    equivalence_ratio_audit,
    estimate_gamma,
    eval_gamma_nets,
    eval_gamma_partitions,
    finite_cardinality_bound,
    k_index,
)
from chaining.metric import (
    AdmissibleNets,
    AdmissiblePartitions,
    FiniteMetricSpace,
    diameter,
)
from chaining.orlicz import delta2_modulus, make_orlicz


@pytest.fixture(scope="module")
def half_square():
    phi = make_orlicz("half_square")
    delta2_modulus(phi, 2.0)
    return phi


@pytest.fixture(scope="module")
def cubic():
    phi = make_orlicz("power", (1, 3))
    delta2_modulus(phi, 2.0)
    return phi


def equilateral(n, side=1.0):
    return FiniteMetricSpace(side * (np.ones((n, n)) - np.eye(n)), validated=True)


def two_point(d=1.0):
    return FiniteMetricSpace.from_matrix([[0.0, d], [d, 0.0]])


def random_space(rng, n, dim=2):
    return FiniteMetricSpace.from_vectors(rng.uniform(0, 1, (n, dim)))


class TestKIndex:
    @pytest.mark.parametrize("p,k", [(1, 0), (2, 1), (3, 1), (4, 2), (7, 2), (8, 3)])
    def test_values(self, p, k):
        assert k_index(p) == k

    def test_rejects_below_one(self):
        with pytest.raises(InvalidP):
            k_index(0.5)


class TestEvalNets:
    def test_covering_net_zero(self, half_square):
        space = two_point()
        nets = AdmissibleNets([(0, np.array([0, 1]))], k_start=0, n_points=2)
        assert eval_gamma_nets(space, half_square, 1, nets) == 0.0

    def test_single_nonzero_term(self, half_square):
        # T_0 = {0} leaves point 1 at distance 1; weight sqrt(2)
        space = two_point()
        nets = AdmissibleNets(
            [(0, np.array([0])), (1, np.array([0, 1]))], k_start=0, n_points=2)
        value = eval_gamma_nets(space, half_square, 1, nets)
        assert value == pytest.approx(math.sqrt(2.0))

    def test_singleton_space(self, half_square):
        space = FiniteMetricSpace.from_matrix([[0.0]])
        nets = AdmissibleNets([(0, np.array([0]))], k_start=0, n_points=1)
        assert eval_gamma_nets(space, half_square, 1, nets) == 0.0

    def test_non_covering_rejected(self, half_square):
        space = two_point()
        nets = AdmissibleNets([(0, np.array([0]))], k_start=0, n_points=2)
        with pytest.raises(NotAdmissible):
            eval_gamma_nets(space, half_square, 1, nets)

    def test_cap_violation_rejected(self, half_square):
        space = equilateral(3)
        nets = AdmissibleNets([(0, np.array([0, 1, 2]))], k_start=0, n_points=3)
        with pytest.raises(NotAdmissible):
            eval_gamma_nets(space, half_square, 1, nets)


class TestEvalPartitions:
    def test_two_point_split_at_one(self, half_square):
        space = two_point()
        parts = AdmissiblePartitions(
            [(0, np.zeros(2, dtype=int)), (1, np.array([0, 1]))], n_points=2)
        value = eval_gamma_partitions(space, half_square, 1, parts)
        assert value == pytest.approx(math.sqrt(2.0))

    def test_singleton(self, half_square):
        space = FiniteMetricSpace.from_matrix([[0.0]])
        parts = AdmissiblePartitions([(0, np.zeros(1, dtype=int))], n_points=1)
        assert eval_gamma_partitions(space, half_square, 1, parts) == 0.0

    def test_sum_starts_at_kp(self, half_square):
        # p = 2 starts at level 1 where the cells are singletons
        space = two_point()
        parts = AdmissiblePartitions(
            [(0, np.zeros(2, dtype=int)), (1, np.array([0, 1]))], n_points=2)
        assert eval_gamma_partitions(space, half_square, 2, parts) == 0.0


class TestExactOracle:
    def test_two_point_gamma_tilde_zero(self, half_square):
        cv = estimate_gamma(two_point(), half_square, 1, "gamma_tilde", "exact")
        assert cv.value == 0.0
        assert cv.exactness == "exact_oracle"

    def test_two_point_gamma(self, half_square):
        cv = estimate_gamma(two_point(), half_square, 1, "gamma", "exact")
        assert cv.value == pytest.approx(math.sqrt(2.0))

    def test_gamma_scales_with_diameter(self, half_square):
        cv = estimate_gamma(two_point(3.0), half_square, 1, "gamma", "exact")
        assert cv.value == pytest.approx(3.0 * math.sqrt(2.0))

    def test_five_point_equilateral_gamma_tilde(self, half_square):
        # frozen from the level-by-level argument: the point left out of the
        # level-1 net pays weight(1) * 1 and nothing else is worse
        cv = estimate_gamma(equilateral(5), half_square, 1, "gamma_tilde", "exact")
        assert cv.value == pytest.approx(2.0)

    def test_cap(self, half_square):
        rng = np.random.default_rng(0)
        with pytest.raises(ExactTooLarge):
            estimate_gamma(random_space(rng, 9), half_square, 1, mode="exact")

    def test_tilde_below_gamma(self, half_square):
        rng = np.random.default_rng(1)
        for _ in range(12):
            space = random_space(rng, int(rng.integers(2, 9)))
            gt = estimate_gamma(space, half_square, 1, "gamma_tilde", "exact").value
            g = estimate_gamma(space, half_square, 1, "gamma", "exact").value
            assert gt <= g + 1e-12

    def test_heuristic_at_least_exact(self, half_square):
        rng = np.random.default_rng(2)
        for _ in range(10):
            space = random_space(rng, int(rng.integers(2, 9)))
            for kind in ("gamma_tilde", "gamma"):
                ex = estimate_gamma(space, half_square, 1, kind, "exact").value
                he = estimate_gamma(space, half_square, 1, kind, "heuristic").value
                assert he >= ex - 1e-12

    def test_monotone_in_p(self, half_square):
        rng = np.random.default_rng(3)
        for _ in range(6):
            space = random_space(rng, 7)
            for kind in ("gamma_tilde", "gamma"):
                vals = [estimate_gamma(space, half_square, p, kind, "exact").value
                        for p in (1, 2, 4)]
                assert vals[0] >= vals[1] >= vals[2]

    def test_scale_equivariance_exact(self, half_square):
        rng = np.random.default_rng(4)
        space = random_space(rng, 7)
        for kind in ("gamma_tilde", "gamma"):
            base = estimate_gamma(space, half_square, 1, kind, "exact").value
            doubled = estimate_gamma(space.scaled(2.0), half_square, 1,
                                     kind, "exact").value
            assert doubled == 2.0 * base

    def test_witness_attains_value(self, half_square):
        rng = np.random.default_rng(5)
        space = random_space(rng, 6)
        cv = estimate_gamma(space, half_square, 1, "gamma_tilde", "exact")
        assert eval_gamma_nets(space, half_square, 1, cv.witness) == pytest.approx(cv.value)
        cg = estimate_gamma(space, half_square, 1, "gamma", "exact")
        assert eval_gamma_partitions(space, half_square, 1, cg.witness) == pytest.approx(cg.value)


class TestDudley:
    def test_two_point_zero(self, half_square):
        assert dudley_bound(two_point(), half_square, 1) == 0.0

    def test_equilateral_value(self, half_square):
        # N(eps) = 3 on [0, 1), e_0 = 1: integral = sqrt(2 * 3) * 1
        value = dudley_bound(equilateral(3), half_square, 1)
        assert value == pytest.approx(math.sqrt(6.0))
        assert value.exact

    def test_singleton(self, half_square):
        space = FiniteMetricSpace.from_matrix([[0.0]])
        assert dudley_bound(space, half_square, 1) == 0.0

    def test_requires_certificate(self):
        phi = make_orlicz("half_square")   # fresh, no audit recorded
        with pytest.raises(Delta2Missing):
            dudley_bound(equilateral(3), phi, 1)

    def test_dominates_exact_gamma_tilde(self, half_square, cubic):
        rng = np.random.default_rng(6)
        for phi in (half_square, cubic):
            for _ in range(25):
                n = int(rng.integers(3, 9))
                dim = int(rng.integers(1, 4))
                space = random_space(rng, n, dim)
                gt = estimate_gamma(space, phi, 1, "gamma_tilde", "exact").value
                assert gt <= dudley_bound(space, phi, 1) + 1e-9

    def test_dominates_on_equilateral(self, half_square):
        # near-equilateral geometry maximises the chaining value
        for n in (5, 8):
            gt = estimate_gamma(equilateral(n), half_square, 1,
                                "gamma_tilde", "exact").value
            assert gt <= dudley_bound(equilateral(n), half_square, 1) + 1e-9


class TestFiniteCardinality:
    def test_two_point_value(self, half_square):
        value = finite_cardinality_bound(two_point(), half_square)
        assert value == pytest.approx(math.sqrt(2.0 * math.log(2.0)))

    def test_scaling(self, half_square):
        rng = np.random.default_rng(7)
        space = random_space(rng, 12)
        base = finite_cardinality_bound(space, half_square)
        assert finite_cardinality_bound(space.scaled(2.0), half_square) == pytest.approx(2 * base)

    def test_singleton_zero(self, half_square):
        space = FiniteMetricSpace.from_matrix([[0.0]])
        assert finite_cardinality_bound(space, half_square) == 0.0


class TestEquivalence:
    def test_ratio_bounded_on_family(self, half_square):
        rng = np.random.default_rng(8)
        spaces = [random_space(rng, int(rng.integers(2, 9))) for _ in range(50)]
        report = equivalence_ratio_audit(spaces, half_square, p=1)
        assert report["n_instances"] == 50
        assert np.isfinite(report["max_ratio"])
        assert report["max_ratio"] < 10.0
