import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import arch1_symbolic, rcar1_symbolic
from qarch.closed_moments import (
    Arch1Params, RcAr1Params, arch1_leverage, arch1_moments, match_params, rcar1_moments,
)
from qarch.coeffs import ParameterDomainError
from qarch.model import InnovationSpec

EXP = InnovationSpec("exponential")
GAUSS = InnovationSpec("gaussian")
UNIF = InnovationSpec("uniform")


class TestArch1:
    def test_reference_values(self):
        p = Arch1Params(0.5, 0.3, 1.0, mu4=3.0)
        m = arch1_moments(p, 1)
        assert m.m2 == pytest.approx(1.373626, abs=1e-6)
        assert m.m3 == pytest.approx(0.412088, abs=1e-6)
        assert m.rho4 == pytest.approx(0.38230, abs=1e-5)
        assert arch1_moments(p, 0).m4 == pytest.approx(6.1346, abs=1e-4)

    @pytest.mark.parametrize("a,b,c,mu4", [(0.5, 0.3, 1.0, 3.0), (-0.7, 0.45, 0.4, 1.8), (1.2, -0.5, 2.0, 1.0)])
    @pytest.mark.parametrize("t", [0, 1, 2, 5])
    def test_matches_symbolic_reduction(self, a, b, c, mu4, t):
        want = arch1_symbolic(a, b, c, mu4, t)
        got = arch1_moments(Arch1Params(a, b, c, mu4=mu4), t)
        assert (got.m2, got.m3, got.m4, got.rho4) == pytest.approx(want, rel=1e-11, abs=1e-13)

    def test_iid_case(self):
        p = Arch1Params(0.5, 0.0, 1.0)
        for t in (1, 3, 70):
            m = arch1_moments(p, t)
            assert m.m3 == 0.0 and m.rho4 == 0.0

    def test_zero_intercept(self):
        for t in (1, 4, 100):
            assert arch1_moments(Arch1Params(0.0, 0.6, 1.0), t).m3 == 0.0

    @given(st.floats(-2, 2), st.floats(-0.7, 0.7), st.floats(0.05, 2), st.floats(1.0, 4.0), st.integers(1, 40))
    def test_rho4_geometric(self, a, b, c, mu4, t):
        if mu4 * b ** 4 >= 1 or abs(b) < 1e-3:
            return
        p = Arch1Params(a, b, c, mu4=mu4)
        prev, cur = arch1_moments(p, t - 1).rho4, arch1_moments(p, t).rho4
        assert cur == pytest.approx(b * b * prev, rel=1e-9, abs=1e-12 * abs(prev))

    @given(st.floats(-2, 2), st.floats(-0.7, 0.7), st.floats(0.05, 2), st.integers(1, 64))
    def test_recursion_equals_closed_form(self, a, b, c, t):
        p = Arch1Params(a, b, c)
        if 3 * b ** 4 >= 1:
            return
        r, cl = arch1_moments(p, t, "recursion"), arch1_moments(p, t, "closed")
        scale = max(1.0, abs(r.m4))
        assert r.m3 == pytest.approx(cl.m3, rel=1e-10, abs=1e-14)
        assert r.m4 == pytest.approx(cl.m4, rel=1e-12)
        assert abs(r.rho4 - cl.rho4) <= 1e-11 * scale

    def test_long_lag_limit(self):
        p = Arch1Params(0.5, 0.3, 1.0)
        m = arch1_moments(p, 400)
        s = p.a ** 2 + p.c ** 2
        assert m.m4 == pytest.approx(m.m2 * s / (1 - p.b ** 2), rel=1e-14)
        assert m.m4 == pytest.approx(m.m2 ** 2, rel=1e-14)
        assert abs(m.rho4) < 1e-300

    def test_domain(self):
        with pytest.raises(ParameterDomainError):
            Arch1Params(0.5, 1.0, 1.0)
        with pytest.raises(ParameterDomainError):
            Arch1Params.from_innovations(0.5, 0.3, 1.0, EXP)
        with pytest.raises(ParameterDomainError):
            arch1_moments(Arch1Params(0.5, 0.8, 1.0, mu4=3.0), 0)


class TestRcAr1:
    @pytest.mark.parametrize("kappa,b,rho", [(1.118034, 0.5, 0.447214), (0.8, -0.3, -0.6), (1.0, 0.5, 0.0)])
    @pytest.mark.parametrize("pair", ["gaussian", "exp-gauss", "unif-exp"])
    @pytest.mark.parametrize("t", [0, 1, 2, 6])
    def test_matches_symbolic_reduction(self, kappa, b, rho, pair, t):
        if pair == "gaussian":
            p = RcAr1Params.gaussian(kappa, b, rho)
        elif pair == "exp-gauss":
            p = RcAr1Params.mixed(kappa, b, rho, EXP, GAUSS)
        else:
            p = RcAr1Params.mixed(kappa, b, rho, UNIF, EXP)
        want = rcar1_symbolic(kappa, b, p.nu, t)
        got = rcar1_moments(p, t)
        assert (got.m2, got.m3, got.m4, got.rho4) == pytest.approx(want, rel=1e-10, abs=1e-12)

    def test_symmetric_pair_rho4(self):
        p = RcAr1Params.mixed(1.3, 0.4, 0.5, UNIF, GAUSS)
        assert p.nu[(3, 0)] == pytest.approx(0.0, abs=1e-15) and p.nu[(1, 2)] == pytest.approx(0.0, abs=1e-15)
        m0 = rcar1_moments(p, 0)
        assert m0.m3 == pytest.approx(0.0, abs=1e-15)
        for t in (1, 2, 7):
            assert rcar1_moments(p, t).rho4 == pytest.approx((m0.m4 - m0.m2 ** 2) * 0.4 ** (2 * t), rel=1e-12)

    def test_iid_case(self):
        p = RcAr1Params.mixed(1.0, 0.0, 0.3, EXP, GAUSS)
        m = rcar1_moments(p, 0)
        assert m.m2 == 1.0
        assert m.m4 == pytest.approx(p.nu[(4, 0)], rel=1e-14)

    def test_gaussian_isserlis(self):
        rho = 0.6
        p = RcAr1Params.gaussian(1.0, 0.3, rho)
        assert p.nu[(2, 2)] == pytest.approx(1 + 2 * rho ** 2)
        # the fourth-moment matching condition holds for the Gaussian pair with mu4 = 3
        assert 6 * p.nu[(2, 2)] == pytest.approx(3.0 * (4 * rho ** 2 + 2), rel=1e-14)

    @given(st.floats(-0.6, 0.6), st.floats(-1, 1), st.integers(1, 64))
    def test_recursion_equals_closed_form(self, b, rho, t):
        p = RcAr1Params.mixed(1.2, b, rho, EXP, GAUSS)
        if p.nu[(0, 4)] * b ** 4 >= 1:
            return
        r, cl = rcar1_moments(p, t, "recursion"), rcar1_moments(p, t, "closed")
        scale = max(1.0, abs(r.m4))
        assert abs(r.m3 - cl.m3) <= 1e-12 * scale
        assert abs(r.m4 - cl.m4) <= 1e-12 * scale
        assert abs(r.rho4 - cl.rho4) <= 1e-11 * scale

    def test_domain(self):
        with pytest.raises(ParameterDomainError):
            RcAr1Params(1.0, 0.5, 1.5)
        with pytest.raises(ParameterDomainError):
            RcAr1Params(1.0, 0.5, 0.2, {(1, 1): 0.3})
        with pytest.raises(ParameterDomainError):
            rcar1_moments(RcAr1Params(1.0, 0.5, 0.2), 1)


class TestMatching:
    def test_examples(self):
        kappa, rho = match_params(0.5, 0.3, 1.0)
        assert kappa == pytest.approx(math.sqrt(1.25), rel=1e-15)
        assert kappa == pytest.approx(1.118034, abs=1e-6)
        assert rho == pytest.approx(0.447214, abs=1e-6)
        assert match_params(0.0, 0.3, 1.0) == (1.0, 0.0)
        assert match_params(1.0, 0.3, 0.0) == (1.0, 1.0)

    @given(st.floats(-3, 3), st.floats(-0.7, 0.7), st.floats(0.01, 3))
    def test_matched_second_moment(self, a, b, c):
        kappa, rho = match_params(a, b, c)
        assert kappa * rho == pytest.approx(a, rel=1e-12, abs=1e-15)
        arch = arch1_moments(Arch1Params(a, b, c), 0) if 3 * b ** 4 < 1 else None
        twin = RcAr1Params.gaussian(kappa, b, rho)
        m2_twin = kappa ** 2 / (1 - b * b)
        assert m2_twin == pytest.approx(Arch1Params(a, b, c).m2, rel=1e-13)
        if arch is not None:
            assert rcar1_moments(twin, 0).m2 == pytest.approx(arch.m2, rel=1e-13)

    @given(st.floats(-2, 2), st.floats(-0.7, 0.7), st.floats(0.05, 2), st.integers(0, 30))
    def test_gaussian_twins_share_rho4(self, a, b, c, t):
        if 3 * b ** 4 >= 1:
            return
        kappa, rho = match_params(a, b, c)
        arch = arch1_moments(Arch1Params(a, b, c, mu4=3.0), t)
        twin = rcar1_moments(RcAr1Params.gaussian(kappa, b, rho), t)
        assert twin.rho4 == pytest.approx(arch.rho4, rel=1e-12, abs=1e-12 * arch.m2 ** 2)


class TestArch1Leverage:
    def test_examples(self):
        p = Arch1Params(0.5, -0.4, 1.0)
        assert arch1_leverage(p, 1) == pytest.approx(-0.595238, abs=1e-6)
        assert arch1_leverage(p, 2) == pytest.approx(-0.0952381, abs=1e-7)
        assert arch1_leverage(Arch1Params(0.5, 0.0, 1.0), 3) == 0.0

    def test_equals_m3(self):
        p = Arch1Params(0.5, -0.4, 1.0)
        for j in range(1, 8):
            assert arch1_leverage(p, j) == pytest.approx(arch1_moments(p, j).m3, rel=1e-13)
