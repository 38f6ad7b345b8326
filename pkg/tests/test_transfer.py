import math

import numpy as np
import pytest
from numpy.polynomial import chebyshev as C

from renoise import funcspace as fs
from renoise import renorm_pd as rp
from renoise import transfer as tr
from renoise.errors import DomainEscape, PositivityViolated, RangeEscape

DOM = fs.Interval(-1.6, 1.6)
ALPHA = -0.776


@pytest.fixture(scope="module")
def g1():
    return rp.solve_fixed_point(1, 30, tol=1e-12)


@pytest.fixture(scope="module")
def nearly_linear():
    # increasing analytic map with positive derivative on the fit interval
    return fs.fit(lambda x: x - 0.1 * math.sin(x), DOM, 40)


@pytest.fixture(scope="module")
def rho_by_p(g1):
    return {p: tr.spectral_radius(tr.build_pd_operator(g1, float(p)))["rho"]
            for p in (0, 1, 2, 3, 4)}


class FakeMap:
    """Minimal stand-in used to trigger the builder guards."""

    k = 1

    def __init__(self, lam, scale=1.0, slope=-2.0):
        self.lam = lam
        self.scale = scale
        self.slope = slope

    def __call__(self, x):
        return self.scale * (1.0 - np.asarray(x) ** 2)

    def deriv(self, x):
        return self.slope * np.asarray(x)


class TestBuildPdOperator:
    def test_constant_maps_to_two(self, g1):
        op = tr.build_pd_operator(g1, 0.0)
        h = np.zeros(op.degree + 1)
        h[0] = 1.0
        out = op.apply(h)
        z = np.linspace(-1, 1, 11)
        assert np.allclose(C.chebval(z, out), 2.0, atol=1e-11)

    def test_value_at_zero_constant_input(self, g1):
        p = 1.7
        op = tr.build_pd_operator(g1, p)
        h = np.zeros(op.degree + 1)
        h[0] = 1.0
        lam = g1.lam
        expected = (-lam) ** (-p) * ((-float(g1.deriv(1.0))) ** p + 1.0)
        assert C.chebval(0.0, op.apply(h)) == pytest.approx(expected, rel=1e-12)

    def test_matrix_matches_pointwise_formula(self, g1):
        p = 1.7
        op = tr.build_pd_operator(g1, p)
        h = np.zeros(op.degree + 1)
        h[3] = 1.0   # T3
        out = op.apply(h)
        rng = np.random.default_rng(11)
        z = rng.uniform(-1, 1, 30)
        lam = g1.lam
        inner = g1(lam * z)
        direct = (-lam) ** (-p) * (
            (-np.asarray(g1.deriv(inner))) ** p * C.chebval(lam * z, [0, 0, 0, 1])
            + C.chebval(inner, [0, 0, 0, 1]))
        assert np.max(np.abs(C.chebval(z, out) - direct)) < 1e-9

    def test_signed_requires_integer_p(self, g1):
        with pytest.raises(ValueError):
            tr.build_pd_operator(g1, 1.5, signed=True)

    def test_signed_matches_unsigned_for_even_p(self, g1):
        a = tr.build_pd_operator(g1, 2, signed=True)
        b = tr.build_pd_operator(g1, 2.0)
        assert np.allclose(a.matrix, b.matrix, atol=1e-12)

    def test_signed_differs_for_odd_p(self, g1):
        a = tr.build_pd_operator(g1, 3, signed=True)
        b = tr.build_pd_operator(g1, 3.0)
        assert not np.allclose(a.matrix, b.matrix, atol=1e-6)

    def test_positivity_guard(self):
        # rising derivative branch makes -f'(f(lam z)) change sign
        with pytest.raises(PositivityViolated) as exc:
            tr.build_pd_operator(FakeMap(-0.4, slope=2.0), 1.0)
        assert exc.value.node is not None

    def test_range_guard(self):
        with pytest.raises(RangeEscape):
            tr.build_pd_operator(FakeMap(-0.4, scale=1.5), 1.0)

    def test_cone_preservation(self, g1):
        op = tr.build_pd_operator(g1, 2.0)
        rng = np.random.default_rng(3)
        z = fs.chebyshev_nodes(op.domain, op.degree + 1)
        for _ in range(50):
            c = rng.normal(size=6) * 0.1
            h = fs.fit(lambda x: 1.0 + 0.5 * float(C.chebval(x, c)) ** 2,
                       op.domain, op.degree)
            out = op.apply(np.asarray(h.coeffs))
            assert np.all(C.chebval(op.domain.to_unit(z), out) > 0)

    def test_matrix_immutable(self, g1):
        op = tr.build_pd_operator(g1, 1.0)
        with pytest.raises(ValueError):
            op.matrix[0, 0] = 99.0


class TestSpectralRadius:
    def test_p_zero_gives_two(self, rho_by_p):
        assert rho_by_p[0] == pytest.approx(2.0, abs=1e-10)

    def test_two_sided_bounds(self, g1, rho_by_p):
        lam = abs(g1.lam)
        for p in (1, 2, 3, 4):
            scaled = lam ** (2 * p) * rho_by_p[p]
            assert 1.0 < scaled < 1.0 + lam ** p

    def test_derivative_power_lower_bound(self, g1, rho_by_p):
        lam = abs(g1.lam)
        for p in (1, 2, 3, 4):
            assert rho_by_p[p] > lam ** (-2 * p)

    def test_dense_agreement(self, g1):
        rec = tr.spectral_radius(tr.build_pd_operator(g1, 2.0))
        assert rec["rho"] == pytest.approx(rec["rho_dense"], rel=1e-6)

    def test_eigenfunction_positive(self, g1):
        rec = tr.spectral_radius(tr.build_pd_operator(g1, 1.0))
        (eig,) = rec["eigfn"]
        x = np.linspace(-1, 1, 201)
        assert np.all(eig(x) > 0)

    def test_discretization_independence(self, g1):
        r48 = tr.spectral_radius(tr.build_pd_operator(g1, 2.0, degree=48))["rho"]
        r64 = tr.spectral_radius(tr.build_pd_operator(g1, 2.0, degree=64))["rho"]
        assert r48 == pytest.approx(r64, rel=1e-7)


@pytest.fixture(scope="module")
def report(g1):
    return tr.convexity_report(g1, [0.5, 1, 1.5, 2, 2.5, 3, 4])


class TestConvexityReport:
    def test_all_verdicts(self, report):
        assert report.monotone_ok
        assert report.logconvex_ok
        assert report.logrho_over_p_decreasing_ok
        assert report.bounds_ok
        assert all(v > 0 for v in report.margins.values())

    def test_growth_exponent(self, report):
        assert report.gamma == pytest.approx(3.8836, abs=0.01)

    def test_two_resolution_agreement(self, report):
        assert report.two_resolution_max_diff < 1e-7

    def test_grid_validation(self, g1):
        with pytest.raises(ValueError):
            tr.convexity_report(g1, [1, 2, 3])
        with pytest.raises(ValueError):
            tr.convexity_report(g1, [-1, 1, 2, 3])

    def test_json_round_trip(self, report):
        import json
        data = json.loads(report.to_json())
        assert data["monotone_ok"] is True
        assert len(data["rho"]) == len(data["p_grid"])

    def test_csv_columns(self, report):
        lines = report.rho_csv().splitlines()
        assert lines[0] == "p,rho,log_rho,logrho_over_p,bound_lo,bound_hi"
        assert len(lines) == 1 + len(report.p_grid)
        row = [float(v) for v in lines[2].split(",")]
        assert row[4] < row[1] < row[5]


class TestProductGrowth:
    def test_fixed_point_ratios_settle(self, g1, rho_by_p):
        pg = tr.product_growth([g1] * 10, 1.0, 10, rho_by_p[1])
        lo, hi = pg["step_ratios"][-1]
        assert 1 - 1e-4 < lo <= hi < 1 + 1e-4

    def test_accumulation_alignment_stable(self, g1, rho_by_p):
        f = rp.quadratic_map(rp.accumulation_parameter(13))
        maps = [f]
        for _ in range(11):
            maps.append(rp.renormalize(maps[-1], degree=30))
        pg = tr.product_growth(maps, 1.0, 12, rho_by_p[1])
        levels = pg["alignment_levels"][4:]
        assert np.max(levels) / np.min(levels) < 1.001
        assert pg["alignment_inf"] > 0

    def test_short_trajectory_rejected(self, g1, rho_by_p):
        with pytest.raises(ValueError):
            tr.product_growth([g1], 1.0, 3, rho_by_p[1])


class TestCircleOperator:
    def test_constant_pair(self, nearly_linear):
        for hat in (False, True):
            op = tr.build_circle_operator(nearly_linear, nearly_linear,
                                          ALPHA, ALPHA, 0.0, hat=hat)
            n1 = op.degree + 1
            c = np.zeros(2 * n1)
            c[0] = c[n1] = 1.0
            out = op.apply(c)
            z = np.linspace(-1.5, 1.5, 9)
            u = DOM.to_unit(z)
            assert np.allclose(C.chebval(u, out[:n1]), 2.0, atol=1e-11)
            assert np.allclose(C.chebval(u, out[n1:]), 1.0, atol=1e-11)

    def test_second_component_copies_first(self, nearly_linear):
        op = tr.build_circle_operator(nearly_linear, nearly_linear,
                                      ALPHA, ALPHA, 1.0)
        n1 = op.degree + 1
        c = np.zeros(2 * n1)
        c[1] = 1.0
        out = op.apply(c)
        assert np.allclose(out[n1:], c[:n1], atol=0.0)

    def test_matrix_matches_pointwise_formula(self, nearly_linear):
        p = 1.3
        f = nearly_linear
        op = tr.build_circle_operator(f, f, ALPHA, ALPHA, p)
        n1 = op.degree + 1
        c = np.zeros(2 * n1)
        c[1] = 1.0        # first component T1
        c[n1 + 2] = 1.0   # second component T2
        out = op.apply(c)
        z = fs.chebyshev_nodes(DOM, 20)
        arg = ALPHA * ALPHA * z
        mid = np.asarray(f(arg)) / ALPHA
        fp = f.derivative()
        direct = (C.chebval(DOM.to_unit(mid), [0, 1])
                  + np.asarray(fp(mid)) ** p * C.chebval(DOM.to_unit(arg), [0, 0, 1]))
        got = C.chebval(DOM.to_unit(z), out[:n1])
        assert np.max(np.abs(got - direct)) < 1e-9

    def test_spectral_radius_and_chain(self, nearly_linear):
        op = tr.build_circle_operator(nearly_linear, nearly_linear,
                                      ALPHA, ALPHA, 1.0)
        rec = tr.spectral_radius(op)
        assert rec["rho"] > 0
        assert len(rec["eigfn"]) == 2
        pg = tr.circle_product_growth([op] * 8, rec["rho"])
        assert 0 < pg["alignment_inf"] <= pg["alignment_sup"]

    def test_domain_guard_names_suboperator(self, nearly_linear):
        with pytest.raises(DomainEscape) as exc:
            tr.build_circle_operator(nearly_linear, nearly_linear,
                                     1.2, 1.2, 1.0)
        assert "inner" in str(exc.value)

    def test_mismatched_domains_rejected(self, nearly_linear):
        other = fs.fit(lambda x: x, fs.Interval(-1.0, 1.0), 10)
        with pytest.raises(ValueError):
            tr.build_circle_operator(nearly_linear, other, ALPHA, ALPHA, 1.0)
