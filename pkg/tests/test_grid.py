"""Spectral operator identities and field container invariants."""

import numpy as np
import pytest

from mhdlab.grid import (
    GridMismatchError,
    GridSpec,
    ScalarField,
    VectorField,
    curl,
    divergence,
    gradient,
    gradient_tensor,
    integrate,
    l2_norm_squared,
    leray_project,
)


def random_vector(grid, seed):
    rng = np.random.default_rng(seed)
    return VectorField(grid, rng.standard_normal((3,) + grid.physical_shape))


def smooth_scalar(grid):
    x, y, z = grid.coords
    vals = np.sin(x) * np.cos(2.0 * y) + np.cos(z) * np.ones_like(x * y)
    return ScalarField(grid, np.broadcast_to(vals, grid.physical_shape).copy())


class TestOperatorIdentities:
    def test_curl_of_gradient_vanishes(self, grid32):
        g = gradient(smooth_scalar(grid32))
        resid = np.max(np.abs(curl(g).data))
        assert resid <= 1e-10 * max(np.max(np.abs(g.data)), 1.0)

    def test_divergence_of_curl_vanishes(self, grid32):
        f = random_vector(grid32, 0)
        w = curl(f)
        resid = np.max(np.abs(divergence(w).values))
        assert resid <= 1e-10 * np.max(np.abs(w.data)) * grid32.n

    def test_leray_idempotent(self, grid32):
        f = random_vector(grid32, 1)
        once = leray_project(f)
        twice = leray_project(once)
        assert np.max(np.abs(twice.data - once.data)) <= 1e-10 * np.max(np.abs(once.data))

    def test_leray_output_divergence_free(self, grid32):
        f = random_vector(grid32, 2)
        p = leray_project(f)
        assert np.max(np.abs(divergence(p).values)) <= 1e-10 * np.max(np.abs(p.data)) * grid32.n

    def test_leray_orthogonality(self, grid32):
        # <P f, f - P f> = 0 for an orthogonal projection
        f = random_vector(grid32, 3)
        p = leray_project(f)
        q = VectorField(grid32, f.data - p.data)
        inner = float(np.sum(p.data * q.data)) * grid32.spacing**3
        assert abs(inner) <= 1e-10 * l2_norm_squared(f)

    def test_gradient_tensor_matches_curl(self, grid32):
        f = random_vector(grid32, 4)
        G = gradient_tensor(f)
        w = curl(f).data
        assert np.allclose(G[2, 1] - G[1, 2], w[0], atol=1e-10 * np.max(np.abs(w)))

    def test_integrate_constant(self, grid32):
        s = ScalarField(grid32, np.full(grid32.physical_shape, 2.5))
        assert integrate(s) == pytest.approx(2.5 * grid32.box_length**3, rel=1e-14)


class TestGridSpec:
    def test_nyquist_wavenumbers_zeroed(self, grid32):
        kx, ky, kz = grid32.wavenumbers
        assert kx[grid32.n // 2, 0, 0] == 0.0
        assert kz[0, 0, -1] == 0.0

    def test_rejects_odd_or_tiny_n(self):
        with pytest.raises(ValueError):
            GridSpec(n=9, box_length=1.0)
        with pytest.raises(ValueError):
            GridSpec(n=4, box_length=1.0)

    def test_spectral_roundtrip_exact(self, grid32):
        f = random_vector(grid32, 5)
        back = f.to_spectral().to_physical()
        assert np.max(np.abs(back.data - f.data)) < 1e-12

    def test_shape_mismatch_raises(self, grid32):
        with pytest.raises(GridMismatchError):
            VectorField(grid32, np.zeros((3, 8, 8, 8)))

    def test_dealias_mask_fraction(self, grid32):
        mask = grid32.dealias_mask()
        assert mask[0, 0, 0]
        # the first axis wavenumber at index n//3 + 1 exceeds the 2/3 cut
        assert not mask[grid32.n // 3 + 1, 0, 0]
        assert 0 < mask.sum() < mask.size
