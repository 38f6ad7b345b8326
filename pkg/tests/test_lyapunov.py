import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renoise import lyapunov as ly
from renoise import renorm_pd as rp
from renoise.errors import ReconstructionMismatch


def shift_map(c=0.3):
    return ly.SimpleMap(lambda x: x + c, lambda x: np.ones_like(x))


def doubling_map():
    return ly.SimpleMap(lambda x: 2.0 * x, lambda x: 2.0 * np.ones_like(x))


@pytest.fixture(scope="module")
def g1():
    return rp.solve_fixed_point(1, 30, tol=1e-12)


class TestLambdaDirect:
    def test_translation_gives_n(self):
        f = shift_map()
        for n in (1, 7, 40):
            ev = ly.lambda_direct(f, 0.1, n, 2.7)
            assert ev.value == pytest.approx(n, rel=1e-12)
            assert ev.hat == pytest.approx(n + 1, rel=1e-12)

    def test_doubling_geometric_sum(self):
        f = doubling_map()
        for n, p in ((5, 1.0), (8, 3.0), (12, 2.0)):
            exact = (2 ** (n * p) - 1) / (2 ** p - 1)
            assert ly.lambda_direct(f, 0.01, n, p).value == \
                pytest.approx(exact, rel=1e-12)

    def test_zero_length_conventions(self):
        ev = ly.lambda_direct(shift_map(), 0.5, 0, 2.0)
        assert ev.value == 0.0 and ev.hat == 1.0

    def test_signed_bounded_by_unsigned(self, g1):
        ev = ly.lambda_direct(g1, 0.0, 50, 3.0)
        assert abs(ev.signed) <= ev.value

    def test_signed_equals_value_for_even_p(self, g1):
        ev = ly.lambda_direct(g1, 0.0, 50, 2.0)
        assert ev.signed == pytest.approx(ev.value, rel=1e-14)

    def test_signed_nan_for_fractional_p(self, g1):
        assert math.isnan(ly.lambda_direct(g1, 0.0, 10, 2.5).signed)

    def test_hat_at_least_one_and_monotone(self, g1):
        hats = [ly.lambda_direct(g1, 0.0, n, 2.0).hat for n in range(1, 30)]
        assert all(h >= 1.0 for h in hats)
        assert all(b >= a - 1e-12 for a, b in zip(hats, hats[1:]))

    def test_cauchy_inequality(self, g1):
        e1 = ly.lambda_direct(g1, 0.2, 64, 1.0)
        e2 = ly.lambda_direct(g1, 0.2, 64, 2.0)
        assert e2.value <= e1.value ** 2 * (1 + 1e-12)
        assert math.sqrt(e2.value) <= e1.value * (1 + 1e-12)

    def test_no_overflow_in_log_form(self):
        ev = ly.lambda_direct(doubling_map(), 1e-9, 400, 4.0)
        assert np.isfinite(ev.log_value)
        exact = 400 * 4 * math.log(2) - math.log(2 ** 4 - 1)
        assert ev.log_value == pytest.approx(exact, rel=1e-9)
        assert ev.value == math.inf   # the linear-scale field saturates

    def test_scaling_band(self, g1):
        # Lambda_2 at 0 over dyadic times grows like (lam^2 rho_2)^n with
        # a flat prefactor; rho_2 pinned independently by the collocation
        # spectrum in the operator tests
        rho2 = 43.81164433
        lam2 = g1.lam ** 2
        band = [ly.lambda_direct(g1, 0.0, 1 << n, 2.0).value
                / (lam2 * rho2) ** n for n in range(5, 12)]
        assert max(band) / min(band) < 1.01


class TestChainRule:
    def test_zero_extension_exact(self):
        out = ly.chain_rule_identity_check(doubling_map(), 0.01, 4, 0, 2.0)
        assert out["residual"] == 0.0

    def test_doubling_closed_form(self):
        out = ly.chain_rule_identity_check(doubling_map(), 0.0, 4, 1, 2.0)
        assert out["residual"] < 1e-14

    def test_fixed_point_deep_split(self, g1):
        out = ly.chain_rule_identity_check(g1, 0.0, 64, 64, 3.0)
        assert out["residual"] < 1e-10
        assert out["signed_residual"] < 1e-10

    @given(st.integers(1, 60), st.integers(0, 60))
    @settings(max_examples=25, deadline=None)
    def test_random_splits(self, n, m):
        out = ly.chain_rule_identity_check(shift_map(0.01), 0.0, n, m, 2.0)
        assert out["residual"] < 1e-11


class TestDecompose:
    def test_binary_examples(self):
        assert ly.decompose(5, "binary") == (2, 0)
        assert ly.decompose(12, "binary") == (3, 2)

    def test_zeckendorf_example(self):
        idx = ly.decompose(12, "zeckendorf")
        qs = ly.fibonacci_numbers(12)
        assert sum(qs[m - 1] for m in idx) == 12
        assert sorted((qs[m - 1] for m in idx), reverse=True) == [8, 3, 1]

    def test_zeckendorf_gaps(self):
        for n in range(1, 500):
            idx = ly.decompose(n, "zeckendorf")
            assert all(a - b >= 2 for a, b in zip(idx, idx[1:]))
            qs = ly.fibonacci_numbers(n)
            assert sum(qs[m - 1] for m in idx) == n

    def test_binary_reconstructs(self):
        for n in range(1, 2000):
            exps = ly.decompose(n, "binary")
            assert sum(1 << m for m in exps) == n
            assert list(exps) == sorted(exps, reverse=True)

    def test_block_count_bounded_by_leading_exponent(self):
        for n in range(2, 10 ** 4):
            exps = ly.decompose(n, "binary")
            assert len(exps) - 1 <= exps[0]

    def test_invalid(self):
        with pytest.raises(ValueError):
            ly.decompose(0)
        with pytest.raises(ValueError):
            ly.decompose(5, "ternary")


class TestLambdaBlocks:
    def test_doubling_two_block_split(self):
        f = doubling_map()
        p = 2.0
        bd = ly.lambda_blocks(f, 0.0, 5, p)
        exact = (2 ** (5 * p) - 1) / (2 ** p - 1)
        assert np.exp(bd.blocks_log_value) == pytest.approx(exact, rel=1e-12)

    def test_fixed_point_hundred_steps(self, g1):
        bd = ly.lambda_blocks(g1, 0.0, 100, 2.0)
        assert bd.lengths == (64, 32, 4)
        assert bd.rel_error < 1e-9

    def test_random_cases_binary(self, g1):
        rng = np.random.default_rng(17)
        for _ in range(50):
            n = int(rng.integers(1, 2001))
            p = float(rng.choice([1, 2, 3, 4]))
            x = float(rng.uniform(-0.6, 0.6))
            assert ly.lambda_blocks(g1, x, n, p).rel_error < 1e-9

    def test_zeckendorf_scheme(self, g1):
        bd = ly.lambda_blocks(g1, 0.0, 12, 2.0, scheme="zeckendorf")
        assert sum(bd.lengths) == 12
        assert bd.rel_error < 1e-9

    def test_return_points_follow_orbit(self, g1):
        bd = ly.lambda_blocks(g1, 0.0, 100, 2.0)
        y = 0.0
        for L, pt in zip(bd.lengths, bd.return_points):
            for _ in range(L):
                y = float(g1(y))
            assert y == pytest.approx(pt, abs=1e-14)

    def test_mismatch_raises(self, g1):
        with pytest.raises(ReconstructionMismatch) as exc:
            ly.lambda_blocks(g1, 0.0, 100, 2.0, tol=0.0)
        assert exc.value.direct is not None


class TestRatioCurve:
    def test_translation_classical_decay(self):
        rc = ly.lyapunov_ratio_curve(shift_map(), 0.0, 3.0, 64,
                                     schedule="all_n")
        expect = rc.n_values ** (-0.5)
        assert np.allclose(rc.ratio(), expect, rtol=1e-10)

    def test_doubling_no_decay(self):
        rc = ly.lyapunov_ratio_curve(doubling_map(), 1e-6, 3.0, 2 ** 10)
        assert rc.ratio()[-1] > 0.1
        assert rc.per_step_factor == pytest.approx(1.0, abs=0.05)

    def test_fixed_point_per_doubling_factor(self, g1):
        rc = ly.lyapunov_ratio_curve(g1, 0.0, 3.0, 2 ** 13)
        target = 254.9407091 / 43.81164433 ** 1.5
        assert rc.per_step_factor == pytest.approx(target, rel=0.10)
        assert rc.decreasing_fraction == 1.0

    def test_requires_p_above_two(self, g1):
        with pytest.raises(ValueError):
            ly.lyapunov_ratio_curve(g1, 0.0, 2.0, 64)

    def test_csv_shape(self, g1):
        rc = ly.lyapunov_ratio_curve(g1, 0.0, 3.0, 2 ** 6)
        lines = rc.to_csv().splitlines()
        assert lines[0].startswith("n,Lambda2,Lambda3,Lambda4,LambdaHat")
        assert len(lines) == 1 + len(rc.n_values)

    def test_schedules(self, g1):
        fib = ly.lyapunov_ratio_curve(g1, 0.0, 3.0, 21,
                                      schedule="fibonacci")
        assert list(fib.n_values) == [1, 2, 3, 5, 8, 13, 21]
        with pytest.raises(ValueError):
            ly.lyapunov_ratio_curve(g1, 0.0, 3.0, 64, schedule="weekly")


class TestGrowthBounds:
    def test_constants_combination(self, g1):
        cst = ly.sandwich_constants(g1)
        assert 1.0 < cst["combo"] < cst["d"]
        assert cst["combo_ok"]

    def test_bounds_along_orbit_of_zero(self, g1):
        cst = ly.sandwich_constants(g1)
        for n in (37, 100, 777, 1500):
            rep = ly.growth_bounds_report(
                g1, 0.0, ly.decompose(n, "binary"), cst)
            assert rep["point_bounds_ok"]
            assert rep["deriv_bounds_ok"]
