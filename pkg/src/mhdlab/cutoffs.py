"""
Refined space-time cutoff functions phi = eta(t) * psi(x) with verified
derivative-ratio bounds.

The spatial profile is a quintic smoothstep raised to the power
``m = ceil(2 / (1 - rho))``: near the support edge psi ~ t^(3m), so
|psi'| / psi^rho ~ t^(3m(1-rho)-1) stays bounded (exponent >= 5).  The
achieved ratio constants are measured at construction and recorded, never
imposed.

Three kinds are built: ``interior`` (radial bump around a cover center),
``integral`` (the radial cutoff of the analysis domain B(0, R0), supported
in B(0, 2R0)), and ``boundary`` (for cover balls poking out of B(0, R0):
inside the shell S(0, R0, 2R0) the cutoff follows the integral cutoff
within the inner cone through dB(c, R) ∩ dB(0, R0) and vanishes outside
the outer cone through dB(c, 2R) ∩ dB(0, R0), blended by an angular
smoothstep).  The boundary kind's angular thresholds follow the exact cap
angles inside B(0, R0) and freeze to the cone angles in the shell; the
freeze is smoothed over a thin radial band so the cutoff stays C².
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .grid import GridSpec

_EPS = 1e-300


class CutoffGeometryError(ValueError):
    """Degenerate or unsupported cutoff geometry."""


@dataclass(frozen=True)
class CutoffParams:
    delta: float = 0.8
    rho: float = 0.8
    T: float = 1.0
    C0: float = 0.0  # achieved constant, filled in by the constructors

    def __post_init__(self) -> None:
        if not 0.75 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (3/4, 1), got {self.delta}")
        if not 0.75 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (3/4, 1), got {self.rho}")
        if self.T <= 0:
            raise ValueError("T must be positive")


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def _smoothstep_d(t: np.ndarray) -> np.ndarray:
    tc = np.clip(t, 0.0, 1.0)
    inside = (t > 0.0) & (t < 1.0)
    return np.where(inside, 30.0 * tc * tc * (tc - 1.0) * (tc - 1.0), 0.0)


def _smoothstep_d2(t: np.ndarray) -> np.ndarray:
    tc = np.clip(t, 0.0, 1.0)
    inside = (t > 0.0) & (t < 1.0)
    return np.where(inside, 60.0 * tc * (2.0 * tc - 1.0) * (tc - 1.0), 0.0)


@dataclass(frozen=True)
class RadialProfile:
    """
    C² profile h with h = 1 on [0, 1] and h = 0 on [2, inf).

    ``power`` defaults to ceil(2 / (1 - rho)); passing power=1 yields a
    plain smoothstep whose ratio |h'| / h^rho diverges at the support edge
    (useful as a deliberately broken profile).
    """

    rho: float
    power: int
    ratio_first: float  # sup |h'| / h^rho
    ratio_second: float  # sup (|h''| + |h'|) / h^(2 rho - 1)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return _smoothstep(2.0 - np.asarray(r, dtype=float)) ** self.power

    def d(self, r: np.ndarray) -> np.ndarray:
        t = 2.0 - np.asarray(r, dtype=float)
        return -self.power * _smoothstep(t) ** (self.power - 1) * _smoothstep_d(t)

    def d2(self, r: np.ndarray) -> np.ndarray:
        t = 2.0 - np.asarray(r, dtype=float)
        s, ds, d2s = _smoothstep(t), _smoothstep_d(t), _smoothstep_d2(t)
        m = self.power
        if m == 1:
            return d2s
        return m * (m - 1) * s ** (m - 2) * ds * ds + m * s ** (m - 1) * d2s


@lru_cache(maxsize=None)
def make_radial_profile(params: CutoffParams, power: int | None = None) -> RadialProfile:
    """Build the profile and measure its achieved ratio constants by dense sampling."""
    rho = params.rho
    m = power if power is not None else math.ceil(2.0 / (1.0 - rho))
    probe = RadialProfile(rho=rho, power=m, ratio_first=np.inf, ratio_second=np.inf)
    r = np.linspace(1.0, 2.0, 200_001)[1:-1]
    h = probe(r)
    pos = h > _EPS
    r1 = float(np.max(np.abs(probe.d(r[pos])) / h[pos] ** rho))
    r2 = float(
        np.max((np.abs(probe.d2(r[pos])) + np.abs(probe.d(r[pos]))) / h[pos] ** (2 * rho - 1))
    )
    return RadialProfile(rho=rho, power=m, ratio_first=r1, ratio_second=r2)


@dataclass(frozen=True)
class TemporalProfile:
    """C¹ ramp: 0 on (0, T/3), 1 on (2T/3, T), smoothstep^power in between."""

    T: float
    power: int
    ratio: float  # sup |eta'| * T / eta^delta

    def _arg(self, t: np.ndarray) -> np.ndarray:
        return 3.0 * np.asarray(t, dtype=float) / self.T - 1.0

    def __call__(self, t: np.ndarray) -> np.ndarray:
        return _smoothstep(self._arg(t)) ** self.power

    def d(self, t: np.ndarray) -> np.ndarray:
        a = self._arg(t)
        return self.power * _smoothstep(a) ** (self.power - 1) * _smoothstep_d(a) * 3.0 / self.T


def make_temporal_cutoff(
    T: float, params: CutoffParams
) -> tuple[Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray], np.ndarray]]:
    """Return (eta, eta') with the ramp on (T/3, 2T/3)."""
    prof = _make_temporal_profile(T, params)
    return prof, prof.d


@lru_cache(maxsize=None)
def _make_temporal_profile(T: float, params: CutoffParams) -> TemporalProfile:
    delta = params.delta
    m = math.ceil(2.0 / (1.0 - delta))
    probe = TemporalProfile(T=T, power=m, ratio=np.inf)
    t = np.linspace(T / 3.0, 2.0 * T / 3.0, 200_001)[1:-1]
    eta = probe(t)
    pos = eta > _EPS
    ratio = float(np.max(np.abs(probe.d(t[pos])) * T / eta[pos] ** delta))
    return TemporalProfile(T=T, power=m, ratio=ratio)


def _unit(vec: np.ndarray, norm: np.ndarray) -> np.ndarray:
    safe = np.where(norm > 0, norm, 1.0)
    return vec / safe[..., None]


class Cutoff:
    """
    A space-time weight phi_i(x, t) = eta(t) * psi(x) with analytic psi,
    grad psi, Laplacian, Hessian, eta and eta' evaluators.

    Instances are immutable in practice; evaluation is pure.
    """

    def __init__(
        self,
        center: np.ndarray,
        R: float,
        kind: str,
        params: CutoffParams,
        profile: RadialProfile,
        temporal: TemporalProfile,
        R0: float | None = None,
    ):
        if kind not in ("interior", "boundary", "integral"):
            raise ValueError(f"unknown cutoff kind {kind!r}")
        self.center = np.asarray(center, dtype=float)
        self.R = float(R)
        self.kind = kind
        self.profile = profile
        self.temporal = temporal
        self.R0 = float(R0) if R0 is not None else None
        self.T = temporal.T

        if kind == "boundary":
            d = float(np.linalg.norm(self.center))
            if d <= R:
                raise CutoffGeometryError(
                    "boundary cutoff center must be farther than R from the origin"
                )
            self._d = d
            self._axis = self.center / d
            self._theta1 = _cap_angle(self.R0, d, R)
            self._theta2 = _cap_angle(self.R0, d, 2.0 * R)
            # blend bands must sit beyond the cap-angle maxima so both cap
            # angles are decreasing wherever the radius maps move points
            r_tan_in = math.sqrt(max(d * d - R * R, 0.0))
            r_tan_out = math.sqrt(max(d * d - 4.0 * R * R, 0.0))
            self._eps_in = min(0.2, 0.5 * (self.R0 - r_tan_in) / R)
            self._eps_out = min(0.2, 0.5 * (self.R0 - r_tan_out) / R)
            if self._eps_in <= 0 or self._eps_out <= 0:
                raise CutoffGeometryError(
                    "no room for a smooth angular-threshold freeze at r = R0"
                )
            if self.R0 - self._eps_out * R + d <= 2.0 * R:
                raise CutoffGeometryError(
                    "outer cap covers whole spheres inside the blend band; "
                    "scale R is too coarse for a boundary cutoff"
                )
            self._eps_blend = min(self._eps_in, self._eps_out)
        self._input_params = params
        self._recorded: float | None = None

    @property
    def params(self) -> CutoffParams:
        return CutoffParams(
            delta=self._input_params.delta,
            rho=self._input_params.rho,
            T=self._input_params.T,
            C0=self.recorded_constant,
        )

    @property
    def recorded_constant(self) -> float:
        """Achieved derivative-ratio constant, measured on first access."""
        if self._recorded is None:
            if self.kind == "boundary":
                self._recorded = self._measure_boundary_constant(self._input_params)
            else:
                self._recorded = max(
                    self.profile.ratio_first,
                    self.profile.ratio_second,
                    self.temporal.ratio,
                )
        return self._recorded

    # -- temporal ----------------------------------------------------------

    def eta(self, t) -> np.ndarray:
        return self.temporal(t)

    def deta(self, t) -> np.ndarray:
        return self.temporal.d(t)

    # -- spatial -----------------------------------------------------------

    def psi(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "boundary":
            return self._psi_boundary(points)
        rel = points - self.center
        r = np.linalg.norm(rel, axis=-1)
        return self.profile(r / self.R)

    def grad_psi(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "boundary":
            return self._grad_boundary(points)
        rel = points - self.center
        r = np.linalg.norm(rel, axis=-1)
        dh = self.profile.d(r / self.R) / self.R
        return dh[..., None] * _unit(rel, r)

    def laplacian_psi(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "boundary":
            return np.trace(self.hessian_psi(points), axis1=-2, axis2=-1)
        rel = points - self.center
        r = np.linalg.norm(rel, axis=-1)
        s = r / self.R
        d2h = self.profile.d2(s) / self.R**2
        dh = self.profile.d(s) / self.R
        rsafe = np.where(r > 0, r, 1.0)
        return d2h + np.where(r > 0, 2.0 * dh / rsafe, 0.0)

    def hessian_psi(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "boundary":
            return self._hessian_fd(points)
        rel = points - self.center
        r = np.linalg.norm(rel, axis=-1)
        s = r / self.R
        d2h = self.profile.d2(s) / self.R**2
        dh = self.profile.d(s) / self.R
        yhat = _unit(rel, r)
        outer = yhat[..., :, None] * yhat[..., None, :]
        eye = np.eye(3)
        rsafe = np.where(r > 0, r, 1.0)
        radial = np.where(r > 0, dh / rsafe, 0.0)
        return (
            d2h[..., None, None] * outer
            + radial[..., None, None] * (eye - outer)
        )

    def phi(self, points: np.ndarray, t: float) -> np.ndarray:
        return float(self.eta(t)) * self.psi(points)

    # -- boundary-kind geometry -------------------------------------------
    #
    # Angular thresholds: inside the ball they track the exact cap angles
    # of B(c, R) and B(c, 2R) at radius r; in the shell they are the frozen
    # cone angles.  The freeze is made C² by smooth radius maps mu <= r
    # (inner, widens the plateau cone slightly) and nu >= r (outer, narrows
    # the support cone slightly) whose slope and curvature vanish at R0.
    # Both maps move thresholds only in the allowed one-sided direction, so
    # every exactness requirement is preserved.

    def _radius_maps(self, r: np.ndarray):
        R0, R = self.R0, self.R
        rc = np.minimum(r, R0)
        drc = np.where(r < R0, 1.0, 0.0)

        e1, e2 = self._eps_in * R, self._eps_out * R
        s1 = np.clip((rc - (R0 - e1)) / e1, 0.0, 1.0)
        # integral of the quintic smoothstep: mu' = 1 - S(s1)
        IS = s1**4 * (s1 * (s1 - 3.0) + 2.5)
        mu = rc - e1 * IS
        dmu = drc * (1.0 - _smoothstep(s1))

        s2 = np.clip((rc - (R0 - e2)) / e2, 0.0, 1.0)
        # quintic with B(1)=1/2, B'(1)=-1, B''(1)=0: nu >= r, frozen C2 at R0
        B = s2**3 * (9.0 + s2 * (-14.5 + 6.0 * s2))
        dB = s2**2 * (27.0 + s2 * (-58.0 + 30.0 * s2))
        nu = rc + e2 * B
        dnu = drc * (1.0 + dB)
        return mu, dmu, nu, dnu

    def _angles(self, r: np.ndarray):
        """Angular thresholds (theta_in, theta_out) and their r-derivatives."""
        mu, dmu, nu, dnu = self._radius_maps(r)
        t_in, c_in = _cap_angle_and_d(mu, self._d, self.R)
        t_out, c_out = _cap_angle_and_d(nu, self._d, 2.0 * self.R)
        return t_in, t_out, c_in * dmu, c_out * dnu

    def _blend_weight(self, r: np.ndarray):
        """C² radial blend chi: 0 deep inside B(0, R0), 1 on the shell."""
        eb = self._eps_blend * self.R
        s = np.clip((r - (self.R0 - eb)) / eb, 0.0, 1.0)
        return _smoothstep(s), _smoothstep_d(s) / eb

    def _progress(self, points: np.ndarray):
        """
        Warped radial coordinate u in [0, 3] and its gradient: the cutoff is
        psi = h(r / R0) * G(u) with G the C² profile (1 for u <= 1, 0 for
        u >= 2).  Inside the ball u is the scaled distance |x - c| / R; on
        the shell it is the angular cone blend; a C² convex combination in
        the argument joins the two, so the profile's derivative-ratio
        bounds survive the transition.
        """
        r = np.linalg.norm(points, axis=-1)
        rsafe = np.where(r > 0, r, 1.0)
        rhat = points / rsafe[..., None]

        rel = points - self.center
        q = np.linalg.norm(rel, axis=-1)
        u_rad = np.minimum(q / self.R, 3.0)
        qhat = _unit(rel, q)
        grad_u_rad = np.where((q / self.R < 3.0)[..., None], qhat / self.R, 0.0)

        cosa = np.clip(points @ self._axis / rsafe, -1.0, 1.0)
        alpha = np.arccos(cosa)
        sina = np.sqrt(np.maximum(1.0 - cosa * cosa, 0.0))
        t_in, t_out, dt_in, dt_out = self._angles(r)
        span = np.maximum(t_out - t_in, 1e-12)
        tau = _angular_arg(alpha, t_in, t_out)
        live = (tau > 0.0) & (tau < 1.0)
        dtau_dr = np.where(
            live, (dt_out * span - (t_out - alpha) * (dt_out - dt_in)) / span**2, 0.0
        )
        dtau_dalpha = np.where(live, -1.0 / span, 0.0)
        denom = rsafe * np.where(sina > 1e-12, sina, 1.0)
        grad_alpha = np.where(
            (sina > 1e-12)[..., None],
            (cosa[..., None] * rhat - self._axis) / denom[..., None],
            0.0,
        )
        u_ang = 2.0 - tau
        grad_u_ang = -(dtau_dr[..., None] * rhat + dtau_dalpha[..., None] * grad_alpha)

        chi, dchi = self._blend_weight(r)
        u = (1.0 - chi) * u_rad + chi * u_ang
        grad_u = (
            (1.0 - chi)[..., None] * grad_u_rad
            + chi[..., None] * grad_u_ang
            + (dchi * (u_ang - u_rad))[..., None] * rhat
        )
        return r, rhat, u, grad_u

    def _psi_boundary(self, points: np.ndarray) -> np.ndarray:
        r, _, u, _ = self._progress(points)
        return self.profile(r / self.R0) * self.profile(u)

    def _grad_boundary(self, points: np.ndarray) -> np.ndarray:
        r, rhat, u, grad_u = self._progress(points)
        h = self.profile(r / self.R0)
        dh = self.profile.d(r / self.R0) / self.R0
        g = self.profile(u)
        dg = self.profile.d(u)
        return (dh * g)[..., None] * rhat + (h * dg)[..., None] * grad_u

    def _hessian_fd(self, points: np.ndarray) -> np.ndarray:
        # second derivatives for the boundary kind: centered differences of
        # the analytic gradient (closed-form Hessian of the cone blend is
        # not worth its complexity; step keeps O(h^2) error ~ 1e-10 * scale)
        step = 1e-4 * self.R
        out = np.empty(points.shape[:-1] + (3, 3))
        for j in range(3):
            dp = np.zeros(3)
            dp[j] = step
            gp = self._grad_boundary(points + dp)
            gm = self._grad_boundary(points - dp)
            out[..., :, j] = (gp - gm) / (2.0 * step)
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def _measure_boundary_constant(self, params: CutoffParams) -> float:
        """Probe the derivative ratios on a deterministic sample; record sup * margin."""
        rng = np.random.default_rng(1234)
        pts = rng.uniform(-2.0 * self.R0, 2.0 * self.R0, size=(200_000, 3))
        pts = pts[np.linalg.norm(pts, axis=1) <= 2.0 * self.R0]
        psi = self._psi_boundary(pts)
        pos = psi > 1e-9
        pts, psi = pts[pos], psi[pos]
        grad = self._grad_boundary(pts)
        ratio1 = np.max(np.abs(grad), axis=-1) * self.R / psi**params.rho
        stride = max(1, len(pts) // 40_000)
        hess = self._hessian_fd(pts[::stride])
        psi_h = psi[::stride]
        ratio2 = (
            np.max(np.abs(hess), axis=(-2, -1)) * self.R**2 / psi_h ** (2 * params.rho - 1)
        )
        base = max(float(np.max(ratio1)), float(np.max(ratio2)), self.temporal.ratio)
        return 1.25 * base


def _cap_angle(rv: float, d: float, rho: float) -> float:
    cosv = (rv * rv + d * d - rho * rho) / (2.0 * rv * d)
    return float(np.arccos(np.clip(cosv, -1.0, 1.0)))


def _cap_angle_and_d(rv: np.ndarray, d: float, rho: float):
    """Half-angle of the cap cut by B(axis*d, rho) on the sphere of radius rv, and d/d rv."""
    rv = np.asarray(rv, dtype=float)
    rsafe = np.where(rv > 1e-12, rv, 1.0)
    g = (rsafe * rsafe + d * d - rho * rho) / (2.0 * rsafe * d)
    g = np.where(rv > 1e-12, g, np.sign(d - rho) * 2.0)  # degenerate center: 0 or pi
    gc = np.clip(g, -1.0, 1.0)
    angle = np.arccos(gc)
    interior = (g > -1.0) & (g < 1.0)
    dg = (rsafe * rsafe - d * d + rho * rho) / (2.0 * rsafe * rsafe * d)
    root = np.sqrt(np.maximum(1.0 - gc * gc, 1e-12))
    dangle = np.where(interior, -dg / root, 0.0)
    return angle, dangle


def _angular_arg(alpha, t_in, t_out):
    span = t_out - t_in
    wide = span > 1e-12
    spansafe = np.where(wide, span, 1.0)
    tau = np.where(wide, (t_out - alpha) / spansafe, np.where(alpha <= t_in, 1.0, 0.0))
    return np.clip(tau, 0.0, 1.0)


# -- constructors ----------------------------------------------------------


def make_interior_cutoff(
    center, R: float, params: CutoffParams, R0: float | None = None
) -> Cutoff:
    """Radial cutoff: 1 on B(center, R), supported in B(center, 2R)."""
    center = np.asarray(center, dtype=float)
    if R0 is not None and np.linalg.norm(center) + 2.0 * R > 2.0 * R0 + 1e-12:
        raise CutoffGeometryError(
            "support B(center, 2R) is not contained in B(0, 2R0)"
        )
    profile = make_radial_profile(params)
    temporal = _make_temporal_profile(params.T, params)
    return Cutoff(center, R, "interior", params, profile, temporal, R0=R0)


def make_integral_cutoff(R0: float, params: CutoffParams) -> Cutoff:
    """The radial cutoff of the analysis domain: 1 on B(0, R0), supported in B(0, 2R0)."""
    if R0 <= 0:
        raise ValueError("R0 must be positive")
    profile = make_radial_profile(params)
    temporal = _make_temporal_profile(params.T, params)
    return Cutoff(np.zeros(3), R0, "integral", params, profile, temporal, R0=R0)


def make_boundary_cutoff(center, R: float, R0: float, params: CutoffParams) -> Cutoff:
    """Cone-blended cutoff for a cover ball not contained in B(0, R0)."""
    center = np.asarray(center, dtype=float)
    if np.linalg.norm(center) + R <= R0:
        raise CutoffGeometryError(
            "B(center, R) is contained in B(0, R0); use an interior cutoff"
        )
    profile = make_radial_profile(params)
    temporal = _make_temporal_profile(params.T, params)
    return Cutoff(center, R, "boundary", params, profile, temporal, R0=R0)


def cutoff_for_cover_element(
    center, R: float, R0: float, params: CutoffParams
) -> Cutoff:
    """Interior/boundary dispatch for one cover element."""
    if np.linalg.norm(np.asarray(center, dtype=float)) + R <= R0:
        return make_interior_cutoff(center, R, params, R0=R0)
    return make_boundary_cutoff(center, R, R0, params)


# -- verification ----------------------------------------------------------


@dataclass
class BoundReport:
    kind: str
    C0: float
    max_first_ratio: float
    max_second_ratio: float
    max_temporal_ratio: float
    first_ok: bool
    second_ok: bool
    temporal_ok: bool

    @property
    def all_ok(self) -> bool:
        return self.first_ok and self.second_ok and self.temporal_ok

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "C0": self.C0,
            "max_first_ratio": self.max_first_ratio,
            "max_second_ratio": self.max_second_ratio,
            "max_temporal_ratio": self.max_temporal_ratio,
            "first_ok": self.first_ok,
            "second_ok": self.second_ok,
            "temporal_ok": self.temporal_ok,
            "all_ok": self.all_ok,
        }


def verify_cutoff_bounds(c: Cutoff, samples: int = 100_000, seed: int = 7) -> BoundReport:
    """
    Sample the scaled derivative ratios against the recorded constant.

    Spatial ratios are |d_i psi| R / psi^rho and |d_i d_j psi| R^2 / psi^(2rho-1);
    the temporal ratio is |eta'| T / eta^delta.
    """
    rng = np.random.default_rng(seed)
    rho, delta = c.params.rho, c.params.delta
    if c.kind == "interior":
        lo, hi = c.center - 2.0 * c.R, c.center + 2.0 * c.R
    else:
        lo, hi = -2.0 * np.ones(3) * c.R0, 2.0 * np.ones(3) * c.R0
    pts = rng.uniform(lo, hi, size=(samples, 3))
    psi = c.psi(pts)
    pos = psi > 1e-9
    pts, psi = pts[pos], psi[pos]

    grad = c.grad_psi(pts)
    r1 = float(np.max(np.max(np.abs(grad), axis=-1) * c.R / psi**rho)) if len(pts) else 0.0
    sub = pts[:: max(1, len(pts) // 20_000)]
    psis = psi[:: max(1, len(pts) // 20_000)]
    hess = c.hessian_psi(sub)
    r2 = (
        float(np.max(np.max(np.abs(hess), axis=(-2, -1)) * c.R**2 / psis ** (2 * rho - 1)))
        if len(sub)
        else 0.0
    )

    ts = np.linspace(0.0, c.T, 10_001)[1:-1]
    eta = c.eta(ts)
    tpos = eta > 1e-9
    rt = float(np.max(np.abs(c.deta(ts[tpos])) * c.T / eta[tpos] ** delta)) if tpos.any() else 0.0

    C0 = c.params.C0
    tol = 1.0 + 1e-6
    return BoundReport(
        kind=c.kind,
        C0=C0,
        max_first_ratio=r1,
        max_second_ratio=r2,
        max_temporal_ratio=rt,
        first_ok=r1 <= C0 * tol,
        second_ok=r2 <= C0 * tol,
        temporal_ok=rt <= C0 * tol,
    )


def grid_slab(cutoff: Cutoff, grid: GridSpec, with_laplacian: bool = True):
    """
    Evaluate (psi, grad psi, laplacian psi) on the minimal grid slab
    containing the cutoff support.  Returns (slices, points_shape, psi,
    grad, lap) where slices index the full grid arrays.

    ``with_laplacian=False`` returns ``lap=None``; for boundary elements
    the Laplacian costs a finite-difference Hessian and flux integrands
    never need it.

    Supports never wrap: the configuration ties 2 R0 plus the maximal cover
    support to less than half the box.
    """
    if cutoff.kind == "interior":
        lo = cutoff.center - 2.0 * cutoff.R
        hi = cutoff.center + 2.0 * cutoff.R
    else:
        lo = -2.0 * cutoff.R0 * np.ones(3)
        hi = 2.0 * cutoff.R0 * np.ones(3)
    coords = grid.axis_coords
    slices = []
    axes = []
    for a in range(3):
        i0 = int(np.searchsorted(coords, lo[a] - grid.spacing))
        i1 = int(np.searchsorted(coords, hi[a] + grid.spacing))
        i0 = max(i0, 0)
        i1 = min(i1, grid.n)
        slices.append(slice(i0, i1))
        axes.append(coords[i0:i1])
    shape = tuple(len(ax) for ax in axes)
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
    psi = cutoff.psi(pts).reshape(shape)
    gradp = cutoff.grad_psi(pts).reshape(shape + (3,))
    lap = cutoff.laplacian_psi(pts).reshape(shape) if with_laplacian else None
    return tuple(slices), shape, psi, gradp, lap
