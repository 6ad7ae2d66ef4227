"""
Singular-integral kinematics of the velocity gradient and numerical
verifiers for the hybrid-smoothness and localization/modulation
assumptions.

The velocity gradient decomposes as ``∇u = S − ½ ω×`` (columns are the
gradients of the scalar components ``u_l``), with ω and the strain S given
by singular integrals of the vorticity against the mean-zero kernels
``σ(ŷ) = 3 ŷ⊗ŷ − I`` and ``M(ŷ, f) = ½(ŷ⊗(ŷ×f) + (ŷ×f)⊗ŷ)``.
:func:`gradu_split` evaluates the near-field (principal-value, with the
ω(x) subtraction justified by the zero sphere-mean) and far-field parts of
this representation by direct summation on the grid.

Free-space caveat: the representation integrals are over all of space; on
the periodic box they are evaluated with minimal-image offsets, the far
field truncated at the box-inscribed radius, and a precondition that the
near-field ball does not wrap.  The neglected tail is reported via the
``‖ω‖₂ / R`` estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dataclass_fields

import numpy as np

from .cutoffs import make_integral_cutoff
from .grid import VectorField, curl, gradient_tensor
from .solver import SnapshotSeries

_UNIT_TOL = 1e-12


class NonUnitVectorError(ValueError):
    """Kernel direction argument is not a unit vector."""


class OutsideValidRegionError(ValueError):
    """Evaluation point's near-field ball wraps around the periodic box."""


def _check_unit(y_hat: np.ndarray) -> np.ndarray:
    y_hat = np.asarray(y_hat, dtype=float)
    if y_hat.shape != (3,):
        raise NonUnitVectorError(f"expected a 3-vector, got shape {y_hat.shape}")
    if abs(np.linalg.norm(y_hat) - 1.0) > _UNIT_TOL:
        raise NonUnitVectorError(f"|y_hat| = {np.linalg.norm(y_hat)!r} is not 1")
    return y_hat


def sigma_kernel(y_hat) -> np.ndarray:
    """σ(ŷ) = 3 ŷ⊗ŷ − I: symmetric, trace-free, zero sphere-mean."""
    y_hat = _check_unit(y_hat)
    return 3.0 * np.outer(y_hat, y_hat) - np.eye(3)


def m_kernel(y_hat, f) -> np.ndarray:
    """M(ŷ, f) = ½(ŷ⊗(ŷ×f) + (ŷ×f)⊗ŷ): symmetric, linear in f."""
    y_hat = _check_unit(y_hat)
    c = np.cross(y_hat, np.asarray(f, dtype=float))
    return 0.5 * (np.outer(y_hat, c) + np.outer(c, y_hat))


def cross_matrix(w: np.ndarray) -> np.ndarray:
    """The matrix [w×] with [w×] v = w × v."""
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


@dataclass
class KernelSplit:
    """
    Near/far decomposition of the velocity gradient at a point.

    ``I1`` and ``I2`` are 3×3 matrices whose columns are the near- and
    far-field contributions to ∇u_l assembled as S e_l − ½ ω×e_l; the sum
    approximates the matrix with columns ∇u_l.  ``tail_bound`` estimates
    the neglected far tail as ‖ω‖₂ divided by the truncation radius.
    """

    split_radius: float
    I1: np.ndarray
    I2: np.ndarray
    truncation_radius: float
    tail_bound: float

    def __post_init__(self) -> None:
        if self.split_radius <= 0:
            raise ValueError("split_radius must be positive")

    @property
    def total(self) -> np.ndarray:
        return self.I1 + self.I2


def _assemble(y_hat: np.ndarray, f: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Σ w [ (3/4π) M(ŷ,f) − ½ [ ((3/4π)(3(ŷ·f)ŷ − f)) × ] ] over samples."""
    c = np.cross(y_hat, f)
    wc = w[:, None] * c
    S = (3.0 / (8.0 * np.pi)) * (y_hat.T @ wc + wc.T @ y_hat)
    # the sigma representation of omega carries the same 3/4pi constant as
    # the strain representation (Fourier symbol of sigma(y)/|y|^3 on
    # divergence-free fields is 4pi/3)
    ydotf = np.sum(y_hat * f, axis=1)
    omega_part = (3.0 / (4.0 * np.pi)) * (
        3.0 * (w * ydotf) @ y_hat - w @ f
    )
    return S - 0.5 * cross_matrix(omega_part)


def gradu_split(omega: VectorField, x, R: float) -> KernelSplit:
    """
    Near/far singular-integral evaluation of ∇u at the grid point nearest
    ``x``, split at radius R^{2/3}.

    The near part integrates the kernels against ω(x+y) − ω(x) over
    0 < |y| < R^{2/3} (the subtraction implements the principal value); the
    far part integrates against ω(x+y) over R^{2/3} ≤ |y| < box-inscribed
    radius, with minimal-image offsets.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    grid = omega.grid
    L = grid.box_length
    r_split = R ** (2.0 / 3.0)
    r_trunc = 0.5 * L
    if r_split >= r_trunc:
        raise ValueError(f"split radius {r_split:g} exceeds the box-inscribed radius")

    x = np.asarray(x, dtype=float)
    if np.max(np.abs(x)) + r_split > r_trunc + 1e-12:
        raise OutsideValidRegionError(
            "near-field ball wraps around the periodic box"
        )
    # snap to the nearest grid point so ω(x+y) are exact samples
    idx = np.rint((x + 0.5 * L) / grid.spacing).astype(int) % grid.n
    x_snap = grid.axis_coords[idx]

    w_phys = omega.to_physical().data
    omega_x = w_phys[:, idx[0], idx[1], idx[2]]

    cx, cy, cz = grid.coords
    half = 0.5 * L
    yx = (cx - x_snap[0] + half) % L - half
    yy = (cy - x_snap[1] + half) % L - half
    yz = (cz - x_snap[2] + half) % L - half
    r2 = yx**2 + yy**2 + yz**2

    dx3 = grid.spacing**3
    near = (r2 > 0.0) & (r2 < r_split**2)
    far = (r2 >= r_split**2) & (r2 < r_trunc**2)

    def masked(mask, subtract):
        r = np.sqrt(r2[mask])
        y_hat = np.stack(
            [np.broadcast_to(a, r2.shape)[mask] for a in (yx, yy, yz)], axis=-1
        ) / r[:, None]
        f = np.stack([w_phys[i][mask] for i in range(3)], axis=-1)
        if subtract:
            f = f - omega_x
        return _assemble(y_hat, f, dx3 / r**3)

    I1 = masked(near, subtract=True) if near.any() else np.zeros((3, 3))
    I2 = masked(far, subtract=False) if far.any() else np.zeros((3, 3))

    omega_l2 = float(np.sqrt(np.sum(w_phys**2) * dx3))
    return KernelSplit(
        split_radius=r_split,
        I1=I1,
        I2=I2,
        truncation_radius=r_trunc,
        tail_bound=omega_l2 / r_trunc,
    )


@dataclass
class A1Report:
    """Sampled check of |ω(x+y) − ω(x)| ≤ |ω(x+y)| |y|^{1/2} on {|∇u| > M}."""

    threshold_M: float
    points_tested: int
    active_points: int
    violation_fraction: float
    worst_ratio: float

    def to_json(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclass_fields(self)}


def default_threshold(series: SnapshotSeries, percentile: float = 90.0) -> float:
    """Percentile of the Frobenius norm |∇u| at the final snapshot."""
    G = gradient_tensor(series[-1].u)
    mag = np.sqrt(np.sum(G * G, axis=(0, 1)))
    return float(np.percentile(mag, percentile))


def verify_a1(
    series: SnapshotSeries,
    M: float | None = None,
    pair_samples: int = 20_000,
    seed: int = 0,
    R0: float | None = None,
) -> A1Report:
    """
    Randomized, |y|-stratified sampling of the hybrid-smoothness ratio.

    Points x are drawn from {|∇u(·,t)| > M} (Frobenius norm, spectral
    gradient) at every snapshot; offsets |y| < 2R0 + R0^{2/3} are log-
    stratified down to the grid spacing and snapped to grid points.  Pairs
    with ω(x+y) = 0 are skipped.  A sampled check bounds the violation
    fraction; it cannot certify the continuum assumption.
    """
    if pair_samples < 1:
        raise ValueError("pair_samples must be positive")
    grid = series[0].grid
    if R0 is None:
        R0 = grid.box_length / 8.0
    if M is None:
        M = default_threshold(series)
    if M <= 0:
        raise ValueError("threshold M must be positive")
    y_max = min(2.0 * R0 + R0 ** (2.0 / 3.0), 0.5 * grid.box_length)
    y_min = grid.spacing

    rng = np.random.default_rng(seed)
    per_snap = max(1, pair_samples // len(series))
    n = grid.n

    tested = 0
    violations = 0
    active_total = 0
    worst = 0.0
    for state in series.states:
        G = gradient_tensor(state.u)
        mag = np.sqrt(np.sum(G * G, axis=(0, 1)))
        active = np.argwhere(mag > M)
        active_total += len(active)
        if len(active) == 0:
            continue
        w_phys = curl(state.u).to_physical().data
        pick = active[rng.integers(0, len(active), size=per_snap)]

        radii = np.exp(rng.uniform(np.log(y_min), np.log(y_max), size=per_snap))
        dirs = rng.normal(size=(per_snap, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        steps = np.rint(radii[:, None] * dirs / grid.spacing).astype(int)
        nontrivial = np.any(steps != 0, axis=1)
        pick, steps = pick[nontrivial], steps[nontrivial]

        tgt = (pick + steps) % n
        w_x = w_phys[:, pick[:, 0], pick[:, 1], pick[:, 2]]
        w_xy = w_phys[:, tgt[:, 0], tgt[:, 1], tgt[:, 2]]
        norm_xy = np.linalg.norm(w_xy, axis=0)
        ok = norm_xy > 0.0
        if not ok.any():
            continue
        dist = np.linalg.norm(steps[ok], axis=1) * grid.spacing
        ratio = (
            np.linalg.norm(w_xy[:, ok] - w_x[:, ok], axis=0)
            / (norm_xy[ok] * np.sqrt(dist))
        )
        tested += int(ok.sum())
        violations += int(np.sum(ratio > 1.0))
        worst = max(worst, float(ratio.max()))

    return A1Report(
        threshold_M=float(M),
        points_tested=tested,
        active_points=active_total,
        violation_fraction=violations / tested if tested else 0.0,
        worst_ratio=worst,
    )


@dataclass
class A3Report:
    """Localization of enstrophy near the analysis ball and endpoint modulation."""

    localization_lhs: float
    localization_bound: float
    localization_ok: bool
    modulation_ratio_omega: float
    modulation_ratio_j: float
    modulation_ok: bool
    degenerate: bool = False

    def to_json(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclass_fields(self)}


def verify_a3(series: SnapshotSeries, params) -> A3Report:
    """
    Check (∫₀ᵀ ‖ω‖²_{L²(B(0, 2R0 + R0^{2/3}))} ds)^{1/2} against
    1/C0_localization, and the endpoint-over-½·sup modulation ratios for
    the ψ0-weighted squared vorticity and current.
    """
    grid = series[0].grid
    times = series.times
    R0 = params.R0
    r_loc = 2.0 * R0 + R0 ** (2.0 / 3.0)
    cx, cy, cz = grid.coords
    ball = (cx**2 + cy**2 + cz**2) < r_loc**2
    dx3 = grid.spacing**3

    c0 = make_integral_cutoff(R0, params.cutoff_params)
    pts = np.stack(np.meshgrid(*[grid.axis_coords] * 3, indexing="ij"), axis=-1)
    psi0 = c0.psi(pts.reshape(-1, 3)).reshape(grid.physical_shape)

    loc_samples = np.zeros(len(times))
    mod_w = np.zeros(len(times))
    mod_j = np.zeros(len(times))
    for i, state in enumerate(series.states):
        w2 = np.sum(curl(state.u).to_physical().data ** 2, axis=0)
        j2 = np.sum(curl(state.b).to_physical().data ** 2, axis=0)
        loc_samples[i] = np.sum(w2[ball]) * dx3
        mod_w[i] = np.sum(w2 * psi0) * dx3
        mod_j[i] = np.sum(j2 * psi0) * dx3

    loc = float(np.sqrt(np.trapezoid(loc_samples, times)))
    bound = 1.0 / params.C0_localization

    sup_w, sup_j = float(mod_w.max()), float(mod_j.max())
    degenerate = sup_w == 0.0 or sup_j == 0.0
    ratio_w = mod_w[-1] / (0.5 * sup_w) if sup_w > 0 else 0.0
    ratio_j = mod_j[-1] / (0.5 * sup_j) if sup_j > 0 else 0.0

    return A3Report(
        localization_lhs=loc,
        localization_bound=bound,
        localization_ok=bool(loc <= bound),
        modulation_ratio_omega=float(ratio_w),
        modulation_ratio_j=float(ratio_j),
        modulation_ok=bool((not degenerate) and ratio_w >= 1.0 and ratio_j >= 1.0),
        degenerate=degenerate,
    )


def strain_decomposition_check(u: VectorField) -> float:
    """
    Max-norm relative residual of the identity ∇u = S − ½ ω× applied
    columnwise (∇u_l = S e_l − ½ ω×e_l), evaluated spectrally.
    """
    G = gradient_tensor(u)  # G[i, j] = d u_i / d x_j
    Gp = np.moveaxis(G, (0, 1), (1, 0))  # columns are grad u_l
    S = 0.5 * (G + Gp)
    w = curl(u).to_physical().data
    # [ω×] with matrix entries built from the vorticity components
    cross = np.zeros_like(G)
    cross[0, 1], cross[0, 2] = -w[2], w[1]
    cross[1, 0], cross[1, 2] = w[2], -w[0]
    cross[2, 0], cross[2, 1] = -w[1], w[0]
    resid = np.max(np.abs(Gp - (S - 0.5 * cross)))
    scale = np.max(np.abs(Gp))
    return float(resid / scale) if scale > 0 else float(resid)
