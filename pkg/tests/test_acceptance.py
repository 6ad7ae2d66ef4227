"""
Acceptance gate: one test per release criterion, in order.

Each test prints a single summary line (visible with -v as the test
outcome) and asserts the stated tolerances; the heavy shared solver runs
live in session fixtures.
"""

import json
import time

import numpy as np
import pytest

from mhdlab.covers import CoverParams, generate_cover, verify_cover
from mhdlab.cutoffs import (
    Cutoff,
    CutoffParams,
    cutoff_for_cover_element,
    make_integral_cutoff,
    make_interior_cutoff,
    make_radial_profile,
    verify_cutoff_bounds,
)
from mhdlab.ensemble import (
    AnalysisParams,
    cascade_check,
    interpolation_check,
    locality_check,
)
from mhdlab.flux import budget_terms, flux_samples
from mhdlab.grid import (
    GridSpec,
    ScalarField,
    VectorField,
    curl,
    divergence,
    gradient,
    leray_project_spectral,
)
from mhdlab.kinematics import sigma_kernel, strain_decomposition_check
from mhdlab.solver import MhdState, SnapshotSeries, init_random_solenoidal

from conftest import BOX, R0_DEFAULT, memoized_density
from test_kinematics import INTERIOR_POINTS, fibonacci_sphere, oracle_errors
from test_solver import fourth_order_factor, shear_mode

R0 = R0_DEFAULT


def params64(scales):
    return AnalysisParams(
        K1=8, K2=8, K_star=8.0, T=0.5, R0=R0, scales=tuple(scales)
    )


def elapsed_since(t0, budget, label):
    dt = time.perf_counter() - t0
    print(f"{label}: {dt:.1f} s (budget {budget:.0f} s)")
    assert dt < budget


def test_criterion_01_operator_identities():
    t0 = time.perf_counter()
    grid = GridSpec(32, BOX)
    rng = np.random.default_rng(0)

    phi = ScalarField(grid, rng.standard_normal(grid.physical_shape))
    g = gradient(phi)
    scale = np.max(np.abs(g.data))
    assert np.max(np.abs(curl(g).data)) <= 1e-10 * scale

    v = VectorField(grid, rng.standard_normal((3,) + grid.physical_shape))
    w = curl(v)
    assert np.max(np.abs(divergence(w).values)) <= 1e-10 * np.max(np.abs(w.data))

    vh = v.to_spectral().data
    ph = leray_project_spectral(vh, grid)
    assert np.max(np.abs(leray_project_spectral(ph, grid) - ph)) <= 1e-10 * np.max(np.abs(ph))
    # projection residual is L2-orthogonal to the divergence-free part
    res = VectorField(grid, vh - ph, "spectral").to_physical().data
    proj = VectorField(grid, ph, "spectral").to_physical().data
    inner = abs(float(np.sum(res * proj)))
    assert inner <= 1e-10 * float(np.sum(proj * proj))

    state = init_random_solenoidal(grid, spectrum_slope=-2.0, seed=1)
    assert strain_decomposition_check(state.u) <= 1e-10
    elapsed_since(t0, 10.0, "criterion 1 (operator identities)")


def test_criterion_02_solver_validation(ot64):
    t0 = time.perf_counter()
    grid = GridSpec(16, BOX)
    nu = 0.7
    from mhdlab.solver import SolverConfig, step

    cfg = SolverConfig(viscosity=nu, resistivity=nu, dt=1e-3, t_end=1e-2)
    state = shear_mode(grid)
    amp0 = np.max(np.abs(state.u.data))
    for i in range(1, 11):
        state = step(state, cfg)
        exact = amp0 * np.exp(-nu * i * cfg.dt)
        assert np.max(np.abs(state.u.data)) == pytest.approx(exact, abs=1e-8 * amp0)

    factor = fourth_order_factor()
    print(f"dt-halving error factor: {factor:.2f}")
    assert 12.0 <= factor <= 20.0

    n_steps = round(ot64.times[-1] / 0.004)
    assert n_steps >= 50
    assert max(ot64.energy_residuals) <= 1e-2
    elapsed_since(t0, 300.0, "criterion 2 (solver validation)")


def test_criterion_03_cutoff_bounds():
    t0 = time.perf_counter()
    params = CutoffParams(delta=0.8, rho=0.8, T=1.0)
    R = R0 / 4.0
    interior = make_interior_cutoff(np.zeros(3), R, params, R0=R0)
    boundary = cutoff_for_cover_element(
        np.array([R0 - 0.4 * R, 0.0, 0.0]), R, R0, params
    )
    integral = make_integral_cutoff(R0, params)
    for c in (interior, boundary, integral):
        report = verify_cutoff_bounds(c, samples=100_000, seed=17)
        assert report.all_ok

    # boundary weight equals the analysis-domain cutoff at evaluation
    # points on the inner cone
    axis = boundary.center / np.linalg.norm(boundary.center)
    radii = np.linspace(0.9, 1.3, 40) * np.linalg.norm(boundary.center)
    pts = radii[:, None] * axis[None, :]
    np.testing.assert_array_equal(boundary.psi(pts), integral.psi(pts))

    # a linear transition profile must fail the sampled ratio bound
    broken = Cutoff(interior.center, interior.R, "interior", params,
                    make_radial_profile(params, power=1), interior.temporal, R0=R0)
    eps = np.logspace(-1, -9, 200)
    p = interior.center + (2.0 * R * (1.0 - eps))[:, None] * np.array([1.0, 0.0, 0.0])
    psi = broken.psi(p)
    sel = psi > 0.0
    worst = np.max(
        np.abs(broken.grad_psi(p[sel])).max(axis=1) * R / psi[sel] ** params.rho
    )
    assert worst > 10.0 * interior.recorded_constant
    elapsed_since(t0, 30.0, "criterion 3 (cutoff bounds)")


def test_criterion_04_cover_suite():
    t0 = time.perf_counter()
    scales = [R0, R0 / 2.0, R0 / 4.0]
    count = 0
    for si, R in enumerate(scales):
        n_covers = 34 if si == 0 else 33
        for k in range(n_covers):
            cover = generate_cover(
                CoverParams(K1=8, K2=8, R0=R0, R=R), seed=1000 * si + k
            )
            report = verify_cover(cover, sample_density=8)
            assert report.all_ok
            count += 1
    assert count == 100

    from mhdlab.covers import InfeasibleCoverError

    with pytest.raises(InfeasibleCoverError):
        generate_cover(CoverParams(K1=1, K2=8, R0=R0, R=R0 / 4.0), seed=0)
    with pytest.raises(ValueError):
        CoverParams(K1=8, K2=8, R0=R0, R=2.0 * R0)
    elapsed_since(t0, 60.0, "criterion 4 (cover suite)")


def test_criterion_05_interpolation_inequality(run64):
    t0 = time.perf_counter()
    scales = (R0, R0 / 2.0, R0 / 4.0)
    params = params64(scales)
    densities = {
        "enstrophy": memoized_density(run64, "enstrophy"),
        "energy": memoized_density(run64, "energy"),
    }
    for kind, density in densities.items():
        for si, R in enumerate(scales):
            for k in range(8):
                cover = generate_cover(
                    CoverParams(K1=8, K2=8, R0=R0, R=R), seed=100 * si + k
                )
                res = interpolation_check(run64, cover, density, params, slack=0.05)
                assert res.passed, (kind, R, k, res.to_json())
    elapsed_since(t0, 300.0, "criterion 5 (interpolation inequality)")


def test_criterion_06_budget_closure(run64):
    t0 = time.perf_counter()
    c = make_interior_cutoff(np.zeros(3), R0 / 2.0, CutoffParams(T=0.5), R0=R0)
    budget = budget_terms(run64, c, viscosity=0.02, resistivity=0.02)
    print(f"closure residuals: kinetic {budget.closure_residual_kinetic:.3%}, "
          f"magnetic {budget.closure_residual_magnetic:.3%}")
    assert budget.closure_residual_kinetic <= 0.05
    assert budget.closure_residual_magnetic <= 0.05

    # second-order decrease of the time quadrature under snapshot
    # coarsening: 4x wider spacing inflates the error ~16x
    vals = np.asarray(flux_samples(run64, c))
    times = np.asarray(run64.times)

    def integral(stride):
        return float(np.trapezoid(vals[::stride], times[::stride]))

    ref = integral(1)
    ratio = abs(integral(32) - ref) / max(abs(integral(8) - ref), 1e-300)
    print(f"snapshot-refinement error ratio (4x coarsening): {ratio:.1f}")
    assert 6.0 <= ratio <= 40.0

    grid = run64[0].grid
    zero_b = VectorField(grid, np.zeros((3,) + grid.physical_shape))
    hydro = SnapshotSeries()
    for s in run64.states:
        hydro.append(MhdState(u=s.u, b=zero_b, time=s.time))
    degen = budget_terms(hydro, c, viscosity=0.02, resistivity=0.02)
    for name in (
        "flux_magnetic", "endpoint_enstrophy_magnetic", "dissipation_magnetic",
        "H_j", "N1_j", "N2_j", "L_j", "L_omega", "N2_omega", "X",
    ):
        assert getattr(degen, name) == 0.0
    elapsed_since(t0, 600.0, "criterion 6 (budget closure)")


def test_criterion_07_kinematics():
    t0 = time.perf_counter()
    pts = fibonacci_sphere(2000)
    assert np.max(np.abs(np.mean([sigma_kernel(p) for p in pts], axis=0))) <= 1e-3

    err = oracle_errors(64, INTERIOR_POINTS)
    print(f"interior reconstruction error at 64^3: {err:.3%}")
    assert err <= 0.02
    elapsed_since(t0, 300.0, "criterion 7 (kinematics)")


def test_criterion_08_flux_scaling_algebra(run32):
    t0 = time.perf_counter()
    params = AnalysisParams(
        K1=8, K2=8, K_star=8.0, T=0.25, R0=R0, scales=(R0, R0 / 2.0)
    )
    report = cascade_check(run32, params, covers_per_scale=2, seed=2)
    assert locality_check(report, K_star=8.0).identity_ok

    from test_ensemble import TestLocality

    flat = TestLocality().flat_report(phi=3.0)
    for k_star in (8.0, 12.0, 100.0):
        res = locality_check(flat, K_star=k_star)
        assert res.identity_ok
        for p in res.pairs:
            assert p.ratio == pytest.approx((p.r / p.R) ** 3, rel=1e-14)
            assert p.lower < p.ratio < p.upper
        assert res.all_within
    elapsed_since(t0, 120.0, "criterion 8 (flux scaling algebra)")


CONFIG_32 = f"""
[grid]
n = 32

[solver]
viscosity = 0.05
resistivity = 0.05
dt = {0.25 / 128.0}
t_end = 0.25
snapshot_stride = 2

[initial]
kind = "random"
seed = 7

[analysis]
scales = [{R0}, {R0 / 2.0}]
covers_per_scale = 2
a1_pair_samples = 2000
"""


def test_criterion_09_end_to_end_determinism(tmp_path):
    t0 = time.perf_counter()
    from mhdlab.cli import EXIT_OK, main

    cfg = tmp_path / "run.toml"
    cfg.write_text(CONFIG_32)
    snaps = tmp_path / "snaps"
    assert main(["simulate", "--config", str(cfg), "--out", str(snaps)]) == EXIT_OK

    outs = []
    for i in (1, 2):
        out = tmp_path / f"report{i}.json"
        assert main(["analyze", "--config", str(cfg),
                     "--snapshots", str(snaps), "--out", str(out)]) == EXIT_OK
        outs.append(out)
    assert outs[0].read_bytes() == outs[1].read_bytes()
    csv1 = (tmp_path / "report1.csv").read_bytes()
    csv2 = (tmp_path / "report2.csv").read_bytes()
    assert csv1 == csv2 and csv1.startswith(b"R,mean_flux")
    elapsed_since(t0, 180.0, "criterion 9 (end-to-end determinism)")


def test_criterion_10_cascade_report(run64_cascade):
    t0 = time.perf_counter()
    from mhdlab.kinematics import verify_a1, verify_a3

    scales = (R0, R0 / 2.0, R0 / 4.0)
    params = params64(scales)
    report = cascade_check(run64_cascade, params, covers_per_scale=4, seed=0)

    assert len(report.scales) == 3
    for s in report.scales:
        assert len(s.per_cover) == 4
        assert np.isfinite(s.mean_flux)
        assert isinstance(s.in_band, bool)
        assert s.spread is not None
    assert report.integral.sigma0 > 0
    lo, hi = report.admissible_range
    assert lo == report.integral.sigma0 / params.beta
    assert hi == params.R0

    a1 = verify_a1(run64_cascade, pair_samples=4000, seed=0, R0=R0)
    assert a1.points_tested > 0
    assert 0.0 <= a1.violation_fraction <= 1.0
    a3 = verify_a3(run64_cascade, params)
    assert np.isfinite(a3.localization_lhs)
    doc = {"a1": a1.to_json(), "a3": a3.to_json()}
    json.dumps(doc)  # serializable verifier outputs
    print(f"sigma0 {report.integral.sigma0:.4g}, admissible range "
          f"[{lo:.4g}, {hi:.4g}], in_band "
          f"{[s.in_band for s in report.scales]}")
    elapsed_since(t0, 600.0, "criterion 10 (cascade report)")
