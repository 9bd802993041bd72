import math

import numpy as np
import pytest

from chaining.errors import (
    Delta2Fails,
    Delta2Missing,
    InvalidNFunction,
    InvalidParams,
    OutOfRange,
)
from chaining.orlicz import (
    conjugate,
    delta2_modulus,
    ensure_delta2,
    inverse_at,
    make_orlicz,
    psi_square_transform,
    q_condition_constant,
    standardize_near_zero,
)


def closed_power_conjugate(c, a):
    b = a / (a - 1.0)
    c1 = (c * a) ** (-b / a) / b
    return lambda x: c1 * np.abs(x) ** b, b, c1


class TestMakeOrlicz:
    def test_half_square_value(self):
        phi = make_orlicz("half_square")
        assert phi(2.0) == pytest.approx(2.0)

    def test_power_value(self):
        phi = make_orlicz("power", (1, 3))
        assert phi(2.0) == pytest.approx(8.0)

    def test_power_rejects_small_exponent(self):
        with pytest.raises(InvalidParams):
            make_orlicz("power", (1, 0.5))

    def test_power_rejects_bad_scale(self):
        with pytest.raises(InvalidParams):
            make_orlicz("power", (-1, 2))

    def test_unknown_kind(self):
        with pytest.raises(InvalidParams):
            make_orlicz("quartic")

    def test_custom_valid(self):
        phi = make_orlicz("custom", evaluator=lambda x: np.cosh(x) - 1.0)
        assert phi(0.0) == 0.0
        assert phi(1.0) == pytest.approx(math.cosh(1) - 1)

    def test_custom_rejects_linear(self):
        with pytest.raises(InvalidNFunction):
            make_orlicz("custom", evaluator=lambda x: np.abs(x))

    def test_custom_rejects_concave(self):
        with pytest.raises(InvalidNFunction):
            make_orlicz("custom", evaluator=lambda x: np.sqrt(np.abs(x)))

    def test_custom_rejects_nonzero_origin(self):
        with pytest.raises(InvalidNFunction):
            make_orlicz("custom", evaluator=lambda x: x * x + 1.0)


class TestConjugate:
    def test_half_square_self_conjugate(self):
        phi = make_orlicz("half_square")
        assert phi.conjugate()(2.0) == pytest.approx(2.0)

    def test_exp_minus_linear_closed_form(self):
        phi = make_orlicz("exp_minus_linear")
        xs = np.linspace(0.0, 32.0, 201)
        expected = (xs + 1.0) * np.log1p(xs) - xs
        np.testing.assert_allclose(phi.conjugate()(xs), expected, rtol=1e-12)

    def test_cubic_closed_form(self):
        phi = make_orlicz("power", (1, 3))
        closed, b, c1 = closed_power_conjugate(1.0, 3.0)
        assert b == pytest.approx(1.5)
        xs = np.linspace(0.0, 32.0, 101)
        np.testing.assert_allclose(phi.conjugate()(xs), closed(xs), rtol=1e-12)

    @pytest.mark.parametrize("kind,params", [
        ("half_square", ()),
        ("power", (1, 3)),
        ("exp_minus_linear", ()),
    ])
    def test_numeric_matches_closed(self, kind, params):
        phi = make_orlicz(kind, params)
        closed = phi.conjugate()
        numeric = conjugate(make_orlicz("custom", evaluator=phi._evaluator))
        xs = np.linspace(0.0, 32.0, 65)
        a = numeric(xs)
        b = closed(xs)
        assert np.all(np.abs(a - b) <= 1e-6 * np.maximum(np.abs(b), 1e-9))

    @pytest.mark.parametrize("kind,params", [
        ("half_square", ()),
        ("power", (1, 3)),
        ("exp_minus_linear", ()),
    ])
    def test_involution(self, kind, params):
        phi = make_orlicz(kind, params)
        back = conjugate(phi.conjugate())
        xs = np.linspace(0.0, 32.0, 65)
        a = back(xs)
        b = phi(xs)
        assert np.all(np.abs(a - b) <= 1e-6 * np.maximum(np.abs(b), 1e-9))

    @pytest.mark.parametrize("kind,params", [
        ("half_square", ()),
        ("power", (1, 2.5)),
        ("exp_minus_linear", ()),
        ("exp_power", (0.5, 2)),
    ])
    def test_young_inequality(self, kind, params):
        phi = make_orlicz(kind, params)
        conj = phi.conjugate()
        xs = np.linspace(0.0, 16.0, 64)
        ys = np.linspace(0.0, 16.0, 64)
        fx = phi(xs)
        gy = conj(ys)
        slack = fx[:, None] + gy[None, :] - xs[:, None] * ys[None, :]
        assert slack.min() >= -1e-10


class TestInverse:
    def test_direct(self):
        phi = make_orlicz("half_square")
        assert inverse_at(phi, 2.0, "direct") == pytest.approx(2.0, rel=1e-8)

    def test_conjugate(self):
        phi = make_orlicz("half_square")
        assert inverse_at(phi, 8.0, "conjugate") == pytest.approx(4.0, rel=1e-8)

    def test_exp_minus_linear_root(self):
        # independent bracketing of exp(x) - x - 1 = 1 to 1e-12
        lo, hi = 0.0, 4.0
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            if math.expm1(mid) - mid < 1.0:
                lo = mid
            else:
                hi = mid
        phi = make_orlicz("exp_minus_linear")
        assert inverse_at(phi, 1.0, "direct") == pytest.approx(0.5 * (lo + hi), abs=1e-8)

    def test_zero(self):
        phi = make_orlicz("power", (2, 4))
        assert inverse_at(phi, 0.0, "direct") == 0.0

    def test_round_trip_log_grid(self):
        phi = make_orlicz("power", (0.7, 2.3))
        for y in np.geomspace(1e-4, 1e3, 15):
            x = inverse_at(phi, y, "direct")
            assert phi(x) == pytest.approx(y, rel=1e-8)

    def test_out_of_range_for_grid_backed(self):
        # numeric conjugates carry the grid cap; no expandable bracket
        num = conjugate(make_orlicz("custom", evaluator=lambda x: 0.5 * np.square(x)))
        with pytest.raises(OutOfRange):
            num.inverse(1e9)

    def test_expanding_bracket_for_closed_forms(self):
        phi = make_orlicz("half_square")
        assert phi.conjugate_inverse(2.0**20) == pytest.approx(
            math.sqrt(2.0 * 2.0**20), rel=1e-8)

    def test_inverse_scaling(self):
        phi = make_orlicz("power", (1, 3))
        xs = np.geomspace(0.01, 20.0, 12)
        for beta in (1.5, 3.0):
            for x in xs:
                left = phi.inverse(beta * x)
                assert left <= beta * phi.inverse(x) + 1e-10
        for beta in (0.3, 0.9):
            for x in xs:
                left = phi.inverse(beta * x)
                assert left >= beta * phi.inverse(x) - 1e-10

    def test_ratio_monotone(self):
        phi = make_orlicz("exp_minus_linear")
        xs = np.linspace(0.25, 60.0, 121)
        ratio = phi(xs) / xs
        assert np.all(np.diff(ratio) >= -1e-12)


class TestDelta2:
    def test_half_square_closed_form(self):
        phi = make_orlicz("half_square")
        assert delta2_modulus(phi, 2.0) == pytest.approx(1.0 - 1.0 / math.sqrt(2), rel=1e-6)

    def test_cubic_closed_form(self):
        phi = make_orlicz("power", (1, 3))
        assert delta2_modulus(phi, 4.0) == pytest.approx(1.0 - 0.25 ** (2.0 / 3.0), rel=1e-6)

    def test_b_one_fails(self):
        phi = make_orlicz("half_square")
        with pytest.raises(Delta2Fails):
            delta2_modulus(phi, 1.0)

    def test_certificate_recorded(self):
        phi = make_orlicz("half_square")
        with pytest.raises(Delta2Missing):
            ensure_delta2(phi, 2.0)
        m = delta2_modulus(phi, 2.0)
        assert ensure_delta2(phi, 2.0) == m

    def test_grid_points_below_two_rejected(self):
        phi = make_orlicz("half_square")
        with pytest.raises(InvalidParams):
            delta2_modulus(phi, 2.0, x_grid=[1.0, 4.0])


class TestQCondition:
    def test_half_square(self):
        phi = make_orlicz("half_square")
        assert q_condition_constant(phi) == pytest.approx(0.5)

    def test_cubic_fails(self):
        phi = make_orlicz("power", (1, 3))
        assert q_condition_constant(phi) == 0.0
        assert phi.certificate.q_ok is False

    def test_exp_minus_linear(self):
        phi = make_orlicz("exp_minus_linear")
        assert q_condition_constant(phi) == pytest.approx(0.5, abs=1e-4)


class TestPsiTransform:
    def test_half_square_becomes_linear(self):
        psi = psi_square_transform(make_orlicz("half_square"))
        assert psi(4.0) == pytest.approx(2.0)

    def test_quartic_becomes_square(self):
        psi = psi_square_transform(make_orlicz("power", (1, 4)))
        assert psi(3.0) == pytest.approx(9.0)

    def test_conjugate_of_linear_psi(self):
        psi = psi_square_transform(make_orlicz("half_square"))
        star = psi.conjugate()
        assert star(0.4) == pytest.approx(0.0, abs=1e-9)
        assert star(0.49) == pytest.approx(0.0, abs=1e-9)
        # effectively infinite outside [-1/2, 1/2]: the grid cap gives a steep ramp
        assert star(0.6) > 5.0


class TestStandardize:
    def test_quadratic_below_splice(self):
        std = standardize_near_zero(make_orlicz("power", (1, 3)))
        assert std(1.0) == pytest.approx(0.5)
        assert std(math.sqrt(2.0)) == pytest.approx(1.0)

    def test_continuous_at_splice(self):
        phi = make_orlicz("exp_minus_linear")
        std = standardize_near_zero(phi)
        eps = 1e-9
        below = std(math.sqrt(2.0) - eps)
        above = std(math.sqrt(2.0) + eps)
        assert above - below == pytest.approx(0.0, abs=1e-7)
