"""Ensemble averages, integral-scale quantities, cascade/locality checks."""

import numpy as np
import pytest

from mhdlab.covers import CoverParams, generate_cover
from mhdlab.cutoffs import CutoffParams
from mhdlab.ensemble import (
    AnalysisParams,
    EnsembleReport,
    IntegralScaleQuantities,
    NegativeDensityError,
    ScaleFluxStats,
    cascade_check,
    ensemble_average,
    flux_table_csv,
    integral_quantities,
    interpolation_check,
    locality_check,
    raw_ensemble_flux,
)

R0 = 2.0 * np.pi / 8.0


def params32(T=0.25, scales=(R0, R0 / 2.0)):
    return AnalysisParams(
        K1=8, K2=8, K_star=8.0, T=T, R0=R0, scales=tuple(scales)
    )


class TestAnalysisParams:
    def test_k_star_floor_enforced(self):
        with pytest.raises(ValueError):
            AnalysisParams(K1=8, K2=8, K_star=4.0, T=1.0, R0=R0, scales=(R0,))

    def test_beta_range(self):
        with pytest.raises(ValueError):
            AnalysisParams(K1=8, K2=8, K_star=8.0, T=1.0, R0=R0, scales=(R0,), beta=1.5)

    def test_scales_within_r0(self):
        with pytest.raises(ValueError):
            AnalysisParams(K1=8, K2=8, K_star=8.0, T=1.0, R0=R0, scales=(2.0 * R0,))


class TestIntegralQuantities:
    def test_positive_and_consistent(self, run32):
        q = integral_quantities(run32, params32())
        assert q.e0 > 0 and q.E0 > 0 and q.P0 > 0
        assert not q.degenerate
        assert q.curly_E0 == pytest.approx((q.E0 / q.P0) ** 0.5, rel=1e-12)
        assert q.eps0 == pytest.approx((q.e0 / q.P0) ** 0.25, rel=1e-12)
        assert q.sigma0 == max(q.curly_E0, q.eps0)


class TestEnsembleAverage:
    def test_positive_density_gives_positive_average(self, run32):
        cover = generate_cover(CoverParams(K1=8, K2=8, R0=R0, R=R0 / 2.0), seed=0)
        avg = ensemble_average(run32, cover, "enstrophy", delta_power=0.8)
        assert avg > 0

    def test_flux_average_matches_raw(self, run32):
        cover = generate_cover(CoverParams(K1=8, K2=8, R0=R0, R=R0 / 2.0), seed=1)
        cp = CutoffParams(T=0.25)
        avg = ensemble_average(run32, cover, "flux", cutoff_params=cp)
        raw = raw_ensemble_flux(run32, cover, cp)
        assert avg == pytest.approx(raw / (R0 / 2.0) ** 3, rel=1e-12)


class TestInterpolation:
    @pytest.mark.parametrize("density", ["enstrophy", "energy"])
    def test_inequality_holds(self, run32, density):
        cover = generate_cover(CoverParams(K1=8, K2=8, R0=R0, R=R0 / 2.0), seed=2)
        res = interpolation_check(run32, cover, density, params32())
        assert res.theta0 > 0
        assert res.lower <= res.value <= res.upper
        assert res.passed

    def test_flux_density_rejected(self, run32):
        cover = generate_cover(CoverParams(K1=8, K2=8, R0=R0, R=R0 / 2.0), seed=3)
        with pytest.raises(NegativeDensityError):
            interpolation_check(run32, cover, "flux", params32())

    def test_negative_density_rejected(self, run32):
        cover = generate_cover(CoverParams(K1=8, K2=8, R0=R0, R=R0 / 2.0), seed=4)
        with pytest.raises(NegativeDensityError):
            interpolation_check(
                run32, cover,
                lambda s: -np.ones(s.grid.physical_shape), params32(),
            )


@pytest.fixture(scope="module")
def report(run32):
    return cascade_check(run32, params32(), covers_per_scale=2, seed=0)


class TestCascade:
    def test_report_structure(self, report):
        assert len(report.scales) == 2
        for s in report.scales:
            assert len(s.per_cover) == 2
            assert s.min_flux <= s.mean_flux <= s.max_flux
            assert s.lower_bound > 0 and s.upper_bound > s.lower_bound
        lo, hi = report.admissible_range
        assert hi == R0
        assert lo == report.integral.sigma0 / 0.5

    def test_out_of_band_never_raises(self, report):
        # band membership is conditional physics; it is reported only
        assert all(isinstance(s.in_band, bool) for s in report.scales)

    def test_deterministic_given_seed(self, run32, report):
        again = cascade_check(run32, params32(), covers_per_scale=2, seed=0)
        for a, b in zip(report.scales, again.scales):
            assert a.per_cover == b.per_cover

    def test_csv_format(self, report):
        csv = flux_table_csv(report)
        lines = csv.strip().split("\n")
        assert lines[0] == "R,mean_flux,min,max,lower_bound,upper_bound,in_band"
        assert len(lines) == 1 + len(report.scales)
        assert lines[1].split(",")[6] in ("true", "false")


class TestLocality:
    def flat_report(self, phi=2.0, scales=(R0, R0 / 2.0, R0 / 4.0)):
        stats = [
            ScaleFluxStats(
                R=R, mean_flux=phi, min_flux=phi, max_flux=phi,
                per_cover=[phi], n_elements=1,
                lower_bound=0.1, upper_bound=10.0, in_band=True, spread=1.0,
            )
            for R in scales
        ]
        integral = IntegralScaleQuantities(
            e0=1.0, E0=1.0, P0=1.0, curly_E0=1.0, eps0=1.0, sigma0=1.0,
            degenerate=False,
        )
        return EnsembleReport(
            scales=stats, integral=integral,
            admissible_range=(0.0, R0), K_star=8.0, degenerate=False,
        )

    def test_flat_flux_ratio_is_cube_exactly(self):
        res = locality_check(self.flat_report(), K_star=8.0)
        assert res.identity_ok
        assert not res.degenerate
        for p in res.pairs:
            assert p.ratio == pytest.approx((p.r / p.R) ** 3, rel=1e-14)
            assert p.lower < p.ratio < p.upper
        assert res.all_within

    def test_degenerate_when_all_zero(self):
        res = locality_check(self.flat_report(phi=0.0), K_star=8.0)
        assert res.degenerate
        assert res.pairs == []

    def test_real_report_identity(self, run32):
        report = cascade_check(run32, params32(), covers_per_scale=1, seed=3)
        res = locality_check(report, K_star=8.0)
        assert res.identity_ok
