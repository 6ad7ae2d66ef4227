"""
Generation and validation of multiplicity-bounded ball covers of the
analysis domain B(0, R0) at a scale R.

A valid cover of n balls of radius R must satisfy
``(R0/R)^3 <= n <= K1 * (R0/R)^3`` with no point of B(0, R0) inside more
than K2 balls.  Generation uses a body-centered-cubic lattice shrunk so
that jittered centers still cover, with centers clamped into the closed
ball (the metric projection onto a convex set is non-expansive, so
clamping never breaks coverage).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

# BCC covering radius is sqrt(5)/4 times the cubic cell side.
_BCC_COVER_FACTOR = np.sqrt(5.0) / 4.0
DEFAULT_JITTER_FRACTION = 0.1


class InfeasibleCoverError(ValueError):
    """Requested (K1, K2) cannot be met by the lattice strategy."""


@dataclass(frozen=True)
class CoverParams:
    K1: int
    K2: int
    R0: float
    R: float

    def __post_init__(self) -> None:
        if self.K1 < 1 or self.K2 < 1:
            raise ValueError("K1 and K2 must be positive integers")
        if not 0 < self.R <= self.R0:
            raise ValueError(f"need 0 < R <= R0, got R={self.R}, R0={self.R0}")

    @property
    def count_bounds(self) -> tuple[float, float]:
        ratio = (self.R0 / self.R) ** 3
        return ratio, self.K1 * ratio


@dataclass(frozen=True)
class Cover:
    params: CoverParams
    centers: np.ndarray  # (n, 3)

    @property
    def n(self) -> int:
        return len(self.centers)

    def boundary_flags(self) -> np.ndarray:
        """True for elements whose R-ball is not contained in B(0, R0)."""
        return np.linalg.norm(self.centers, axis=1) + self.params.R > self.params.R0

    def to_json(self) -> dict:
        return {
            "params": {
                "K1": self.params.K1,
                "K2": self.params.K2,
                "R0": self.params.R0,
                "R": self.params.R,
            },
            "centers": self.centers.tolist(),
        }

    @staticmethod
    def from_json(obj: dict) -> "Cover":
        p = obj["params"]
        return Cover(
            params=CoverParams(K1=int(p["K1"]), K2=int(p["K2"]), R0=float(p["R0"]), R=float(p["R"])),
            centers=np.asarray(obj["centers"], dtype=float).reshape(-1, 3),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)

    @staticmethod
    def load(path) -> "Cover":
        with open(path) as fh:
            return Cover.from_json(json.load(fh))


@dataclass
class CoverReport:
    n: int
    count_lower: float
    count_upper: float
    coverage_fraction: float
    max_multiplicity: int
    count_ok: bool = field(init=False)
    coverage_ok: bool = field(init=False)
    multiplicity_ok: bool = False
    K2: int = 0

    def __post_init__(self) -> None:
        self.count_ok = self.count_lower <= self.n <= self.count_upper
        self.coverage_ok = self.coverage_fraction >= 1.0

    @property
    def all_ok(self) -> bool:
        return self.count_ok and self.coverage_ok and self.multiplicity_ok

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "count_lower": self.count_lower,
            "count_upper": self.count_upper,
            "count_ok": self.count_ok,
            "coverage_fraction": self.coverage_fraction,
            "coverage_ok": self.coverage_ok,
            "max_multiplicity": self.max_multiplicity,
            "K2": self.K2,
            "multiplicity_ok": self.multiplicity_ok,
            "all_ok": self.all_ok,
        }


def _bcc_lattice(cell: float, extent: float, offset: np.ndarray) -> np.ndarray:
    """BCC points (corner + body-centered sublattices) filling a cube of half-side extent."""
    m = int(np.ceil(extent / cell)) + 1
    idx = np.arange(-m, m + 1) * cell
    gx, gy, gz = np.meshgrid(idx, idx, idx, indexing="ij")
    corners = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
    body = corners + 0.5 * cell
    return np.concatenate([corners, body], axis=0) + offset


def generate_cover(
    params: CoverParams,
    seed: int,
    jitter_fraction: float = DEFAULT_JITTER_FRACTION,
) -> Cover:
    """
    Deterministic jittered BCC cover at scale ``params.R``.

    The lattice cell is sized so that covering radius + jitter <= R, then
    centers are clamped into the closed ball B(0, R0).  Raises
    :class:`InfeasibleCoverError` if the resulting count violates the K1
    bound (the lower count bound cannot fail for a covering family).
    """
    R, R0 = params.R, params.R0
    rng = np.random.default_rng(seed)

    if R >= R0:
        # a single ball at the origin covers; jitter would break coverage
        centers = np.zeros((1, 3))
    else:
        cell = (R * (1.0 - jitter_fraction)) / _BCC_COVER_FACTOR
        offset = rng.uniform(-0.5 * cell, 0.5 * cell, size=3)
        pts = _bcc_lattice(cell, R0 + cell, offset)
        pts = pts + rng.uniform(-1.0, 1.0, size=pts.shape) * (
            jitter_fraction * R / np.sqrt(3.0)
        )
        # keep centers whose ball can matter, then clamp into the closed ball
        norms = np.linalg.norm(pts, axis=1)
        keep = norms <= R0 + _BCC_COVER_FACTOR * cell
        pts, norms = pts[keep], norms[keep]
        outside = norms > R0
        pts[outside] *= (R0 / norms[outside])[:, None]
        centers = pts

    lower, upper = params.count_bounds
    n = len(centers)
    if n > upper:
        raise InfeasibleCoverError(
            f"lattice cover needs n={n} balls but K1 bound allows at most "
            f"{upper:.1f}; increase K1"
        )
    if n < lower - 1e-9:
        raise InfeasibleCoverError(
            f"lattice produced n={n} below the lower count bound {lower:.1f}"
        )
    return Cover(params=params, centers=centers)


def multiplicity_at(cover: Cover, x) -> int:
    """Number of cover balls strictly containing the point ``x``."""
    x = np.asarray(x, dtype=float)
    d = np.linalg.norm(cover.centers - x, axis=1)
    return int(np.sum(d < cover.params.R))


def verify_cover(cover: Cover, sample_density: int = 16) -> CoverReport:
    """
    Sampling oracle for the cover invariants.

    Samples a uniform grid of spacing <= R / sample_density over the cube
    enclosing B(0, R0); reports coverage fraction of the sampled ball and
    the maximum sampled multiplicity.  Violations are reported, not thrown.
    """
    R, R0, K2 = cover.params.R, cover.params.R0, cover.params.K2
    spacing = R / sample_density
    m = int(np.ceil(R0 / spacing))
    axis = np.arange(-m, m + 1) * spacing
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
    pts = pts[np.linalg.norm(pts, axis=1) <= R0]

    tree = cKDTree(cover.centers)
    counts = tree.query_ball_point(pts, r=R, return_length=True, workers=-1)

    lower, upper = cover.params.count_bounds
    report = CoverReport(
        n=cover.n,
        count_lower=lower,
        count_upper=upper,
        coverage_fraction=float(np.mean(counts >= 1)),
        max_multiplicity=int(counts.max()) if len(counts) else 0,
    )
    report.K2 = K2
    report.multiplicity_ok = report.max_multiplicity <= K2
    return report
