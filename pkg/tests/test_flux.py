"""Localized enstrophy fluxes and budget closure."""

import numpy as np
import pytest

from mhdlab.cutoffs import CutoffParams, make_interior_cutoff
from mhdlab.flux import (
    InsufficientSnapshotsError,
    budget_terms,
    combined_flux,
    flux_samples,
    local_flux_kinetic,
    local_flux_magnetic,
    time_averaged_flux,
)
from mhdlab.grid import GridSpec, VectorField, curl, divergence, gradient_tensor
from mhdlab.solver import MhdState, SnapshotSeries, init_random_solenoidal

R0 = 2.0 * np.pi / 8.0


def interior_cutoff(T, R=R0 / 2.0):
    return make_interior_cutoff(np.zeros(3), R, CutoffParams(T=T), R0=R0)


def scaled_state(state, fu=1.0, fb=1.0):
    return MhdState(
        u=VectorField(state.grid, fu * state.u.to_physical().data),
        b=VectorField(state.grid, fb * state.b.to_physical().data),
        time=state.time,
    )


class TestLocalFlux:
    def test_direct_quadrature_oracle(self, run32):
        # independent recoding of the integrand on the same grid sampling
        state = run32[-1]
        t = state.time
        c = interior_cutoff(T=0.25)
        grid = state.grid
        pts = np.stack(np.meshgrid(*[grid.axis_coords] * 3, indexing="ij"), axis=-1)
        grad = c.grad_psi(pts.reshape(-1, 3)).reshape(grid.physical_shape + (3,))
        u = state.u.to_physical().data
        w = curl(state.u).data
        dens = np.zeros(grid.physical_shape)
        for i in range(3):
            dens += u[i] * grad[..., i]
        oracle = float(c.eta(t)) * np.sum(0.5 * np.sum(w * w, axis=0) * dens) * grid.spacing**3
        value = local_flux_kinetic(state.u, curl(state.u), c, t)
        assert value == pytest.approx(oracle, rel=1e-10)

    def test_discrete_divergence_theorem(self, run32):
        # with matched spectral operators on sampled psi the two sides of
        # int F . grad(psi) = -int div(F) psi agree to summation-by-parts
        state = run32[-1]
        grid = state.grid
        c = interior_cutoff(T=0.25)
        pts = np.stack(np.meshgrid(*[grid.axis_coords] * 3, indexing="ij"), axis=-1)
        psi = c.psi(pts.reshape(-1, 3)).reshape(grid.physical_shape)

        u = state.u.to_physical().data
        w = curl(state.u).data
        F = VectorField(grid, 0.5 * np.sum(w * w, axis=0) * u)

        from mhdlab.grid import ScalarField, gradient
        gpsi = gradient(ScalarField(grid, psi)).data
        lhs = float(np.sum(F.data * gpsi))
        rhs = -float(np.sum(divergence(F).values * psi))
        scale = max(np.sum(np.abs(F.data * gpsi)), 1e-300)
        assert abs(lhs - rhs) / scale <= 1e-8

    def test_quadratic_scaling(self, run32):
        state = run32[-1]
        c = interior_cutoff(T=0.25)
        t = state.time
        base_k = local_flux_kinetic(state.u, curl(state.u), c, t)
        base_m = local_flux_magnetic(state.u, curl(state.b), c, t)
        doubled = scaled_state(state, fu=2.0)
        assert local_flux_kinetic(doubled.u, curl(doubled.u), c, t) == pytest.approx(
            8.0 * base_k, rel=1e-12)
        b2 = scaled_state(state, fb=2.0)
        assert local_flux_magnetic(b2.u, curl(b2.b), c, t) == pytest.approx(
            4.0 * base_m, rel=1e-12)

    def test_velocity_reversal_antisymmetry(self, run32):
        state = run32[-1]
        c = interior_cutoff(T=0.25)
        t = state.time
        fwd = local_flux_kinetic(state.u, curl(state.u), c, t)
        rev_state = scaled_state(state, fu=-1.0)
        rev = local_flux_kinetic(rev_state.u, curl(rev_state.u), c, t)
        assert rev == pytest.approx(-fwd, rel=1e-12)

    def test_combined_is_sum(self, run32):
        state = run32[-1]
        c = interior_cutoff(T=0.25)
        t = state.time
        w, j = curl(state.u), curl(state.b)
        assert combined_flux(state.u, w, j, c, t) == pytest.approx(
            local_flux_kinetic(state.u, w, c, t) + local_flux_magnetic(state.u, j, c, t),
            rel=1e-14,
        )

    def test_zero_outside_temporal_ramp(self, run32):
        state = run32[0]  # t = 0, eta = 0
        c = interior_cutoff(T=0.25)
        assert local_flux_kinetic(state.u, curl(state.u), c, 0.0) == 0.0


@pytest.fixture(scope="module")
def budget32(run32):
    c = interior_cutoff(T=0.25)
    return budget_terms(run32, c, viscosity=0.05, resistivity=0.05)


class TestBudget:
    def test_closure_residuals(self, budget32):
        # closure is resolution-limited; at 32^3 only a loose bound holds
        # (the tight check runs in the acceptance suite at 64^3)
        assert budget32.closure_residual_kinetic <= 0.6
        assert budget32.closure_residual_magnetic <= 0.6

    def test_stretching_exchange_identity(self, budget32):
        # (j . grad) b against phi omega equals (omega . grad) b against
        # phi j once j = curl b: the difference contracts an antisymmetric
        # gradient against a symmetric product
        assert budget32.N2_omega == pytest.approx(budget32.N1_j, rel=1e-10)

    def test_zero_b_degeneracy(self, run32):
        c = interior_cutoff(T=0.25)
        grid = run32[0].grid
        zero = np.zeros((3,) + grid.physical_shape)
        hydro = SnapshotSeries()
        for s in run32.states:
            hydro.append(MhdState(u=s.u, b=VectorField(grid, zero), time=s.time))
        budget = budget_terms(hydro, c, viscosity=0.05, resistivity=0.05)
        for name in (
            "flux_magnetic", "endpoint_enstrophy_magnetic", "dissipation_magnetic",
            "H_j", "N1_j", "N2_j", "L_j", "L_omega", "N2_omega", "X",
        ):
            assert getattr(budget, name) == 0.0
        assert budget.flux_kinetic != 0.0

    def test_to_json_complete(self, budget32):
        doc = budget32.to_json()
        assert doc["flux_kinetic"] == budget32.flux_kinetic
        assert len(doc) == 17


class TestPreconditions:
    def test_short_series_rejected(self, run32):
        sparse = SnapshotSeries()
        for s in run32.states[::16]:
            sparse.append(s)
        c = interior_cutoff(T=0.25)
        with pytest.raises(InsufficientSnapshotsError):
            budget_terms(sparse, c)

    def test_wrong_horizon_rejected(self, run32):
        c = interior_cutoff(T=0.5)  # series ends at 0.25
        with pytest.raises(InsufficientSnapshotsError):
            budget_terms(run32, c)

    def test_late_start_rejected(self, run32):
        late = SnapshotSeries()
        for s in run32.states[40:]:
            late.append(s)
        c = interior_cutoff(T=0.25)
        with pytest.raises(InsufficientSnapshotsError):
            budget_terms(late, c)


class TestTimeQuadrature:
    def test_time_average_matches_samples(self, run32):
        c = interior_cutoff(T=0.25)
        times = run32.times
        vals = flux_samples(run32, c)
        expected = float(np.trapezoid(vals, times)) / 0.25
        assert time_averaged_flux(run32, c) == pytest.approx(expected, rel=1e-14)

    def test_trapezoid_second_order(self, run32):
        # quadrature error against the finest sampling drops roughly 16x
        # when the snapshot spacing is coarsened 4x (second order); strides
        # below 8 sit on a superconvergent floor, so measure at 8 vs 32
        c = interior_cutoff(T=0.25)
        times = run32.times
        vals = flux_samples(run32, c)

        def integral(stride):
            return float(np.trapezoid(vals[::stride], times[::stride]))

        ref = integral(1)
        ratio = abs(integral(32) - ref) / max(abs(integral(8) - ref), 1e-300)
        assert 8.0 <= ratio <= 32.0
