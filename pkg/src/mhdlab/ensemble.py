"""
Ensemble averaging over covers, integral-scale quantities, and the
cascade/locality bound checks.

The ensemble average of a density θ at scale R is the mean over cover
elements of localized space-time averages ``(1/T)∫ (1/R³)∫ θ φ_i^δ``.
For non-negative densities this is pinched between multiples of the
integral-scale average (interpolation inequality); for the combined
enstrophy-flux density the cascade check compares it against the band
``[P0/(4K*), 4K* P0]`` built from the modified palenstrophy P0, across
the admissible scale range ``[σ0/β, R0]`` determined by the
Kraichnan-type scale σ0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .covers import Cover, CoverParams, generate_cover
from .cutoffs import Cutoff, CutoffParams, cutoff_for_cover_element, grid_slab, make_integral_cutoff
from .grid import curl, gradient_tensor
from .solver import SnapshotSeries


class NegativeDensityError(ValueError):
    """A density required to be non-negative takes negative values."""


class CutoffConstructionError(RuntimeError):
    """Cutoff construction failed for a cover element; carries the index."""

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"cutoff construction failed for cover element {index}: {cause}")
        self.index = index


@dataclass(frozen=True)
class AnalysisParams:
    """Cover/cutoff/threshold parameters for the ensemble analysis."""

    K1: int
    K2: int
    K_star: float
    T: float
    R0: float
    scales: tuple[float, ...]
    beta: float = 0.5
    M: float = 1.0
    C0_localization: float = 1.0
    delta: float = 0.8
    rho: float = 0.8

    def __post_init__(self) -> None:
        floor = max((self.K1 * self.K2) ** 0.5, 0.75 * self.K2, float(self.K1))
        if self.K_star < floor - 1e-12:
            raise ValueError(
                f"K_star={self.K_star} below the admissible floor {floor}"
            )
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.M <= 0 or self.C0_localization <= 0:
            raise ValueError("M and C0_localization must be positive")
        if self.T <= 0 or self.R0 <= 0:
            raise ValueError("T and R0 must be positive")
        if not self.scales:
            raise ValueError("need at least one scale")
        for R in self.scales:
            if not 0.0 < R <= self.R0 + 1e-12:
                raise ValueError(f"scale R={R} outside (0, R0]")

    @property
    def cutoff_params(self) -> CutoffParams:
        return CutoffParams(delta=self.delta, rho=self.rho, T=self.T)


@dataclass
class IntegralScaleQuantities:
    """Time-averaged integral-scale energy, enstrophy, and palenstrophy."""

    e0: float
    E0: float
    P0: float
    curly_E0: float
    eps0: float
    sigma0: float
    degenerate: bool

    def to_json(self) -> dict:
        return {
            "e0": self.e0, "E0": self.E0, "P0": self.P0,
            "curly_E0": self.curly_E0, "eps0": self.eps0,
            "sigma0": self.sigma0, "degenerate": self.degenerate,
        }


@dataclass
class ScaleFluxStats:
    """Per-scale ensemble-flux statistics across jittered covers."""

    R: float
    mean_flux: float
    min_flux: float
    max_flux: float
    per_cover: list[float]
    n_elements: int
    lower_bound: float
    upper_bound: float
    in_band: bool
    spread: float  # max/min when well defined, else inf/0 conventions

    def to_json(self) -> dict:
        return {
            "R": self.R, "mean_flux": self.mean_flux,
            "min_flux": self.min_flux, "max_flux": self.max_flux,
            "per_cover": self.per_cover, "n_elements": self.n_elements,
            "lower_bound": self.lower_bound, "upper_bound": self.upper_bound,
            "in_band": self.in_band,
            # inf is not valid JSON; render it as a string
            "spread": self.spread if np.isfinite(self.spread) else str(self.spread),
        }


@dataclass
class EnsembleReport:
    scales: list[ScaleFluxStats]
    integral: IntegralScaleQuantities
    admissible_range: tuple[float, float]
    K_star: float
    degenerate: bool
    assumptions: dict | None = None

    def to_json(self) -> dict:
        return {
            "scales": [s.to_json() for s in self.scales],
            "integral": self.integral.to_json(),
            "admissible_range": list(self.admissible_range),
            "K_star": self.K_star,
            "degenerate": self.degenerate,
            "assumptions": self.assumptions,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)


@dataclass
class CheckResult:
    passed: bool
    value: float
    lower: float
    upper: float
    theta0: float

    def to_json(self) -> dict:
        return {
            "passed": self.passed, "value": self.value,
            "lower": self.lower, "upper": self.upper, "theta0": self.theta0,
        }


@dataclass
class LocalityPair:
    r: float
    R: float
    ratio: float
    lower: float
    upper: float
    within: bool


@dataclass
class LocalityResult:
    pairs: list[LocalityPair]
    identity_ok: bool
    degenerate: bool

    @property
    def all_within(self) -> bool:
        return all(p.within for p in self.pairs)

    def to_json(self) -> dict:
        return {
            "pairs": [vars(p) for p in self.pairs],
            "identity_ok": self.identity_ok,
            "degenerate": self.degenerate,
            "all_within": self.all_within,
        }


def element_cutoffs(cover: Cover, params: CutoffParams) -> list[Cutoff]:
    """Interior/boundary cutoffs for every cover element."""
    out = []
    R, R0 = cover.params.R, cover.params.R0
    for i, center in enumerate(cover.centers):
        try:
            out.append(cutoff_for_cover_element(center, R, R0, params))
        except Exception as exc:
            raise CutoffConstructionError(i, exc) from exc
    return out


def _density_array(state, density):
    """Full-grid scalar samples of the selected density."""
    if callable(density):
        return np.asarray(density(state))
    if density == "enstrophy":
        w = curl(state.u).data
        j = curl(state.b).data
        return np.sum(w * w, axis=0) + np.sum(j * j, axis=0)
    if density == "energy":
        u = state.u.to_physical().data
        b = state.b.to_physical().data
        return 0.5 * (np.sum(u * u, axis=0) + np.sum(b * b, axis=0))
    raise ValueError(f"unknown density selector {density!r}")


def _flux_vector_density(state):
    """½(|ω|² + |j|²) u — contract with ∇φ_i per element."""
    u = state.u.to_physical().data
    w = curl(state.u).data
    j = curl(state.b).data
    return 0.5 * (np.sum(w * w, axis=0) + np.sum(j * j, axis=0)) * u


def _element_time_series(
    series: SnapshotSeries,
    cutoffs: list[Cutoff],
    density,
    delta_power: float,
    dens_cache: list | None = None,
):
    """Matrix of per-element spatial integrals at every snapshot time."""
    grid = series[0].grid
    times = series.times
    is_flux = density == "flux"
    slabs = []
    for c in cutoffs:
        sl, _, psi, grad, _ = grid_slab(c, grid, with_laplacian=False)
        if is_flux:
            slabs.append((sl, np.moveaxis(grad, -1, 0)))
        else:
            slabs.append((sl, psi**delta_power))
    dx3 = grid.spacing**3

    vals = np.zeros((len(cutoffs), len(times)))
    for idx, state in enumerate(series.states):
        t = times[idx]
        etas = np.array([float(c.eta(t)) for c in cutoffs])
        power = 1.0 if is_flux else delta_power
        weights = etas**power
        if not np.any(weights):
            continue
        if dens_cache is not None and dens_cache[idx] is not None:
            dens = dens_cache[idx]
        else:
            dens = _flux_vector_density(state) if is_flux else _density_array(state, density)
        for i, (sl, wgt) in enumerate(slabs):
            if weights[i] == 0.0:
                continue
            if is_flux:
                sample = np.sum(dens[(slice(None),) + sl] * wgt)
            else:
                sample = np.sum(dens[sl] * wgt)
            vals[i, idx] = weights[i] * sample * dx3
    return times, vals


def ensemble_average(
    series: SnapshotSeries,
    cover: Cover,
    density,
    delta_power: float = 1.0,
    cutoff_params: CutoffParams | None = None,
) -> float:
    """
    Mean over cover elements of (1/T)∫ (1/R³)∫ θ φ_i^δ dx dt.

    ``density`` is "flux" (combined enstrophy-flux density, weighted by φ
    to the first power via its gradient), "enstrophy", "energy", or a
    callable mapping a state to full-grid scalar samples.
    """
    if cutoff_params is None:
        cutoff_params = CutoffParams(T=float(series.times[-1]))
    cutoffs = element_cutoffs(cover, cutoff_params)
    times, vals = _element_time_series(series, cutoffs, density, delta_power)
    per_element = np.trapezoid(vals, times, axis=1) / (cutoff_params.T * cover.params.R**3)
    return float(np.mean(per_element))


def integral_quantities(series: SnapshotSeries, params: AnalysisParams) -> IntegralScaleQuantities:
    """e0, E0, P0 with the prescribed cutoff powers, and the derived scales."""
    grid = series[0].grid
    c0 = make_integral_cutoff(params.R0, params.cutoff_params)
    sl_, _, psi, _, _ = grid_slab(c0, grid, with_laplacian=False)
    sl = (slice(None),) + sl_
    rho = params.rho
    dx3 = grid.spacing**3
    times = series.times

    e_s = np.zeros(len(times))
    E_s = np.zeros(len(times))
    P_s = np.zeros(len(times))
    endpoint = 0.0
    for idx, state in enumerate(series.states):
        t = times[idx]
        eta = float(c0.eta(t))
        last = idx == len(times) - 1
        if eta == 0.0 and not last:
            continue
        u = state.u.to_physical().data[sl]
        b = state.b.to_physical().data[sl]
        w_full = curl(state.u)
        j_full = curl(state.b)
        w = w_full.data[sl]
        j = j_full.data[sl]
        w2 = np.sum(w * w, axis=0)
        if last:
            endpoint = 0.5 * float(np.sum(w2 * psi)) * dx3
        if eta == 0.0:
            continue
        e_s[idx] = eta ** (4 * rho - 3) * 0.5 * np.sum(
            (np.sum(u * u, axis=0) + np.sum(b * b, axis=0)) * psi ** (4 * rho - 3)
        )
        E_s[idx] = eta ** (2 * rho - 1) * np.sum(
            (w2 + np.sum(j * j, axis=0)) * psi ** (2 * rho - 1)
        )
        G_w = gradient_tensor(w_full)[(slice(None),) + sl]
        G_j = gradient_tensor(j_full)[(slice(None),) + sl]
        P_s[idx] = eta * np.sum(
            (np.sum(G_w * G_w, axis=(0, 1)) + np.sum(G_j * G_j, axis=(0, 1))) * psi
        )

    norm = 1.0 / (params.T * params.R0**3)
    e0 = float(np.trapezoid(e_s, times)) * dx3 * norm
    E0 = float(np.trapezoid(E_s, times)) * dx3 * norm
    P0 = float(np.trapezoid(P_s, times)) * dx3 * norm + endpoint * norm

    degenerate = P0 == 0.0
    curly = 0.0 if degenerate else float(np.sqrt(E0 / P0))
    eps = 0.0 if degenerate else float((e0 / P0) ** 0.25)
    return IntegralScaleQuantities(
        e0=e0, E0=E0, P0=P0, curly_E0=curly, eps0=eps,
        sigma0=max(curly, eps), degenerate=degenerate,
    )


def _assert_nonnegative(series: SnapshotSeries, density) -> None:
    worst = 0.0
    scale = 0.0
    for state in series.states:
        dens = _density_array(state, density)
        worst = min(worst, float(dens.min()))
        scale = max(scale, float(np.abs(dens).max()))
    if worst < -1e-12 * max(scale, 1.0):
        raise NegativeDensityError(
            f"density takes negative values (min {worst:g}); "
            "the interpolation inequality requires theta >= 0"
        )


def interpolation_check(
    series: SnapshotSeries,
    cover: Cover,
    density,
    params: AnalysisParams,
    slack: float = 0.05,
) -> CheckResult:
    """
    Verify (1/K1) Θ0 ≤ ⟨Θ⟩_R ≤ K2 Θ0 for a non-negative density.

    Θ0 is the integral-scale average with weight φ0^δ and the 1/R0³
    normalization; the comparison allows a quadrature slack factor.
    """
    if density == "flux":
        raise NegativeDensityError("the flux density is sign-varying")
    _assert_nonnegative(series, density)
    cp = params.cutoff_params
    avg = ensemble_average(series, cover, density, delta_power=params.delta, cutoff_params=cp)

    grid = series[0].grid
    c0 = make_integral_cutoff(params.R0, cp)
    sl, _, psi, _, _ = grid_slab(c0, grid, with_laplacian=False)
    times = series.times
    samples = np.zeros(len(times))
    for idx, state in enumerate(series.states):
        eta = float(c0.eta(times[idx]))
        if eta == 0.0:
            continue
        dens = _density_array(state, density)
        samples[idx] = eta**params.delta * np.sum(dens[sl] * psi**params.delta)
    theta0 = float(np.trapezoid(samples, times)) * grid.spacing**3 / (params.T * params.R0**3)

    lower = theta0 / params.K1 * (1.0 - slack)
    upper = theta0 * params.K2 * (1.0 + slack)
    return CheckResult(
        passed=lower <= avg <= upper, value=avg,
        lower=lower, upper=upper, theta0=theta0,
    )


def raw_ensemble_flux(
    series: SnapshotSeries,
    cover: Cover,
    cutoff_params: CutoffParams,
    dens_cache: list | None = None,
) -> float:
    """⟨Ψ⟩_R: mean over elements of the time-averaged raw flux (no 1/R³)."""
    cutoffs = element_cutoffs(cover, cutoff_params)
    times, vals = _element_time_series(series, cutoffs, "flux", 1.0, dens_cache)
    per_element = np.trapezoid(vals, times, axis=1) / cutoff_params.T
    return float(np.mean(per_element))


def _flux_density_cache(series: SnapshotSeries, cutoff_params: CutoffParams) -> list:
    """Per-snapshot flux vector densities where the temporal ramp is active."""
    probe = make_integral_cutoff(1.0, cutoff_params)
    cache = []
    for state in series.states:
        if float(probe.eta(state.time)) == 0.0:
            cache.append(None)
        else:
            cache.append(_flux_vector_density(state).astype(np.float32))
    return cache


def cascade_check(
    series: SnapshotSeries,
    params: AnalysisParams,
    covers_per_scale: int = 8,
    seed: int = 0,
) -> EnsembleReport:
    """
    Band-membership report for ⟨Φ⟩_R against [P0/(4K*), 4K* P0].

    For each configured scale, ``covers_per_scale`` jittered covers are
    generated deterministically from the seed; out-of-band values are
    reported, never raised — the bounds are conditional physics, not
    software invariants.
    """
    integral = integral_quantities(series, params)
    lower = integral.P0 / (4.0 * params.K_star)
    upper = 4.0 * params.K_star * integral.P0
    cp = params.cutoff_params
    dens_cache = _flux_density_cache(series, cp)

    stats: list[ScaleFluxStats] = []
    for si, R in enumerate(params.scales):
        per_cover = []
        n_elements = 0
        for k in range(covers_per_scale):
            cover = generate_cover(
                CoverParams(K1=params.K1, K2=params.K2, R0=params.R0, R=R),
                seed=seed + 7919 * si + k,
            )
            n_elements = max(n_elements, cover.n)
            per_cover.append(raw_ensemble_flux(series, cover, cp, dens_cache) / R**3)
        mean = float(np.mean(per_cover))
        lo, hi = float(np.min(per_cover)), float(np.max(per_cover))
        spread = hi / lo if lo > 0 else float("inf") if hi > 0 else 0.0
        stats.append(ScaleFluxStats(
            R=R, mean_flux=mean, min_flux=lo, max_flux=hi,
            per_cover=per_cover, n_elements=n_elements,
            lower_bound=lower, upper_bound=upper,
            in_band=lower <= mean <= upper, spread=spread,
        ))

    return EnsembleReport(
        scales=stats,
        integral=integral,
        admissible_range=(integral.sigma0 / params.beta, params.R0),
        K_star=params.K_star,
        degenerate=integral.degenerate,
    )


def locality_check(report: EnsembleReport, K_star: float) -> LocalityResult:
    """
    Scale-locality ratios of ⟨Ψ⟩ = R³⟨Φ⟩ against (1/16K*²)(r/R)³ bounds.

    Also confirms the bookkeeping identity Ψ = R³ Φ to 1e-12 relative.
    """
    psis = []
    identity_ok = True
    for s in report.scales:
        psi = s.R**3 * s.mean_flux
        recomputed = s.R**3 * float(np.mean(s.per_cover))
        if abs(psi - recomputed) > 1e-12 * max(abs(psi), 1e-300):
            identity_ok = False
        psis.append((s.R, psi))

    if all(p == 0.0 for _, p in psis):
        return LocalityResult(pairs=[], identity_ok=identity_ok, degenerate=True)

    pairs = []
    bound = 16.0 * K_star**2
    for i, (r, pr) in enumerate(psis):
        for R, pR in psis[i + 1:]:
            small, big = (r, pr), (R, pR)
            if small[0] > big[0]:
                small, big = big, small
            if big[1] == 0.0:
                continue
            ratio = small[1] / big[1]
            cube = (small[0] / big[0]) ** 3
            pairs.append(LocalityPair(
                r=small[0], R=big[0], ratio=ratio,
                lower=cube / bound, upper=cube * bound,
                within=cube / bound <= ratio <= cube * bound,
            ))
    return LocalityResult(pairs=pairs, identity_ok=identity_ok, degenerate=False)


def flux_table_csv(report: EnsembleReport) -> str:
    """Deterministic CSV rendering of the per-scale flux table."""
    lines = ["R,mean_flux,min,max,lower_bound,upper_bound,in_band"]
    for s in report.scales:
        lines.append(
            f"{s.R:.12e},{s.mean_flux:.12e},{s.min_flux:.12e},{s.max_flux:.12e},"
            f"{s.lower_bound:.12e},{s.upper_bound:.12e},{str(s.in_band).lower()}"
        )
    return "\n".join(lines) + "\n"
