"""Tests for per-mode operators, decay measurement, flatness, and commutator."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import random_real_field

from shearspec.linear import (
    ShearProfile,
    build_mode_operator,
    commutator_matrix,
    commutator_R,
    detect_flatness_order,
    dissipation_norm,
    duhamel_identity_check,
    fit_decay_rate,
    kolmogorov,
    measure_mode_decay,
    propagate_mode,
    propagator,
    semigroup_norm,
    semigroup_norm_nonzero,
)
from shearspec.spectral import (
    SpectralField2D,
    TorusGrid,
    dealias,
    from_physical_1d,
    norms,
)


def sin_cubed(ny=128):
    return ShearProfile.from_callable(ny, lambda y: np.sin(y) ** 3,
                                      name="sin3-y")


def zero_profile(ny=16):
    return ShearProfile.from_samples(np.zeros(ny), name="zero")


def bump_field(grid):
    """e^{ix} times an analytic y-bump: a single-k, broad-l test field."""
    g = np.exp(-4.0 * (1.0 - np.cos(grid.y)))
    ghat = from_physical_1d(grid.ny, g).coeffs
    c = np.zeros((grid.nx, grid.ny), dtype=np.complex128)
    c[1, :] = ghat
    return dealias(SpectralField2D(grid, c))


class TestShearProfile:
    def test_kolmogorov_coefficients(self):
        u = kolmogorov(64)
        assert abs(u.coefficient(1) - 0.5) < 1e-14
        assert abs(u.coefficient(-1) - 0.5) < 1e-14
        assert abs(u.coefficient(0)) < 1e-15
        assert abs(u.coefficient(2)) < 1e-14
        # beyond the resolved band the coefficient is declared zero
        assert u.coefficient(40) == 0.0

    def test_sin_cubed_coefficients(self):
        # sin^3 y = (3 sin y - sin 3y)/4
        u = sin_cubed(64)
        assert abs(u.coefficient(1) - (-0.375j)) < 1e-14
        assert abs(u.coefficient(3) - 0.125j) < 1e-14
        assert abs(u.coefficient(2)) < 1e-14

    def test_extrema(self):
        u = kolmogorov(128)
        assert u.umin == pytest.approx(-1.0, abs=1e-12)
        assert u.umax == pytest.approx(1.0, abs=1e-12)

    def test_resolved_flags(self):
        assert kolmogorov(32).resolved
        rough = ShearProfile.from_callable(
            64, lambda y: np.sign(np.sin(y)), name="step")
        assert not rough.resolved

    def test_spectral_interpolant(self):
        u = kolmogorov(64)
        ys = np.array([0.3, -1.1, 2.7])
        assert_allclose(u.evaluate(ys), np.cos(ys), atol=1e-13)
        assert_allclose(u.evaluate(ys, order=1), -np.sin(ys), atol=1e-12)
        assert_allclose(u.evaluate(ys, order=2), -np.cos(ys), atol=1e-10)


class TestModeOperator:
    def test_zero_shear_is_diagonal(self):
        op = build_mode_operator(zero_profile(), k=2, nu=0.3, alpha=1.5, L=8)
        ls = np.arange(-8, 9)
        expected = 0.3 * (4.0 + ls * ls) ** 0.75
        assert_allclose(op.matrix, np.diag(expected), atol=1e-15)

    def test_kolmogorov_structure(self):
        k, nu, alpha, L = 3, 0.01, 1.5, 6
        op = build_mode_operator(kolmogorov(64), k, nu, alpha, L)
        M = op.matrix
        ls = np.arange(-L, L + 1)
        diag = nu * (k * k + ls * ls).astype(float) ** 0.75
        assert_allclose(np.diag(M), diag, rtol=1e-15, atol=1e-15)
        # cos y couples neighbours with weight ik/2
        off = np.diag(M, 1)
        assert_allclose(off, np.full(2 * L, 0.5j * k), atol=1e-14)
        assert_allclose(np.diag(M, -1), np.full(2 * L, 0.5j * k), atol=1e-14)
        assert_allclose(np.diag(M, 2), 0.0, atol=1e-14)

    def test_hermitian_part_is_dissipation(self):
        # real shear => advection is anti-Hermitian, so the Hermitian part
        # of M is exactly the diagonal dissipation
        rng = np.random.default_rng(7)
        coeffs = rng.normal(size=5)
        u = ShearProfile.from_callable(
            64,
            lambda y: sum(c * np.cos((j + 1) * y + j)
                          for j, c in enumerate(coeffs)),
            name="random-trig",
        )
        op = build_mode_operator(u, k=2, nu=1e-3, alpha=1.2, L=16)
        herm = 0.5 * (op.matrix + op.matrix.conj().T)
        ls = np.arange(-16, 17)
        expected = np.diag(1e-3 * (4.0 + ls * ls) ** 0.6)
        assert_allclose(herm, expected, atol=1e-14)

    def test_accretivity_random_vectors(self):
        # the quadratic form has real part >= nu |k|^alpha on every vector
        op = build_mode_operator(kolmogorov(64), k=1, nu=1e-3, alpha=1.5,
                                 L=12)
        rng = np.random.default_rng(11)
        for _ in range(1000):
            v = rng.normal(size=25) + 1j * rng.normal(size=25)
            quad = np.vdot(v, op.matrix @ v).real
            assert quad >= 0.99e-3 * np.vdot(v, v).real

    def test_validation(self):
        u = kolmogorov(32)
        with pytest.raises(ValueError, match="k = 0"):
            build_mode_operator(u, 0, 0.1, 1.5, 8)
        with pytest.raises(ValueError, match="integer"):
            build_mode_operator(u, 1.5, 0.1, 1.5, 8)
        with pytest.raises(ValueError, match="nu"):
            build_mode_operator(u, 1, 0.0, 1.5, 8)
        with pytest.raises(ValueError, match="alpha"):
            build_mode_operator(u, 1, 0.1, 2.5, 8)
        with pytest.raises(ValueError, match="alpha"):
            build_mode_operator(u, 1, 0.1, 0.0, 8)
        with pytest.raises(ValueError, match="L"):
            build_mode_operator(u, 1, 0.1, 1.5, 3)


class TestPropagation:
    def test_semigroup_property(self):
        op = build_mode_operator(kolmogorov(64), k=1, nu=0.05, alpha=1.5,
                                 L=32)
        rng = np.random.default_rng(3)
        g = rng.normal(size=op.size) + 1j * rng.normal(size=op.size)
        one_step = propagate_mode(op, g, 1.1)
        two_step = propagate_mode(op, propagate_mode(op, g, 0.4), 0.7)
        assert np.linalg.norm(one_step - two_step) <= 1e-9 * np.linalg.norm(g)

    def test_validation(self):
        op = build_mode_operator(kolmogorov(32), k=1, nu=0.1, alpha=1.5, L=8)
        with pytest.raises(ValueError, match="nonnegative"):
            propagator(op, -0.1)
        with pytest.raises(ValueError, match="shape"):
            propagate_mode(op, np.ones(5), 1.0)

    def test_diagonal_norm_exact(self):
        # no shear: the norm is the slowest diagonal decay, at l = 0
        op = build_mode_operator(zero_profile(), k=2, nu=0.3, alpha=1.5, L=8)
        t = 1.7
        assert semigroup_norm(op, t) == pytest.approx(
            np.exp(-0.3 * 2.0 ** 1.5 * t), rel=1e-12)

    @pytest.mark.parametrize("profile", [kolmogorov(64), sin_cubed(64)])
    def test_contraction_at_twenty_times(self, profile):
        op = build_mode_operator(profile, k=1, nu=1e-2, alpha=1.5, L=32)
        for t in np.logspace(-2, 2, 20):
            assert semigroup_norm(op, t) <= 1.0 + 1e-12

    def test_truncation_stability(self):
        args = dict(k=1, nu=0.05, alpha=1.5)
        n32 = semigroup_norm(
            build_mode_operator(kolmogorov(64), L=32, **args), 1.0)
        n64 = semigroup_norm(
            build_mode_operator(kolmogorov(64), L=64, **args), 1.0)
        assert abs(n32 - n64) < 1e-8

    def test_dissipation_norm_diagonal(self):
        op = build_mode_operator(zero_profile(), k=1, nu=0.2, alpha=1.0, L=16)
        t = 0.5
        ls = np.arange(-16, 17)
        sym = (1.0 + ls * ls) ** 0.25
        expected = np.max(sym * np.exp(-0.2 * np.sqrt(1.0 + ls * ls) * t))
        assert dissipation_norm(op, t) == pytest.approx(expected, rel=1e-12)

    def test_nonzero_restriction_norm(self):
        u = kolmogorov(64)
        t, nu, alpha, L = 2.0, 1e-2, 1.5, 24
        by_hand = max(
            semigroup_norm(build_mode_operator(u, k, nu, alpha, L), t)
            for k in range(1, 5)
        )
        assert semigroup_norm_nonzero(u, nu, alpha, t, k_max=4, L=L) \
            == pytest.approx(by_hand, rel=1e-14)


class TestDecayFit:
    def test_exact_exponential(self):
        t = np.linspace(0.5, 9.5, 14)
        fit = fit_decay_rate(t, 0.3 * np.exp(-0.7 * t))
        assert fit.rate == pytest.approx(0.7, rel=1e-10)
        assert fit.prefactor == pytest.approx(0.3, rel=1e-10)
        assert fit.residual < 1e-12
        assert fit.window == (0.5, 9.5)

    def test_validation(self):
        t = np.linspace(0, 1, 7)
        with pytest.raises(ValueError, match="at least 8"):
            fit_decay_rate(t, np.exp(-t))
        t = np.linspace(0, 1, 9)
        with pytest.raises(ValueError, match="positive"):
            fit_decay_rate(t, np.exp(-t) - 0.8)
        with pytest.raises(ValueError, match="equal length"):
            fit_decay_rate(t, np.ones(8))

    def test_measured_rate_matches_diagonal(self):
        # u = 0, alpha = 2: the semigroup is exactly e^{-nu k^2 t}
        fit, ts, ns = measure_mode_decay(zero_profile(), k=1, nu=0.01,
                                         alpha=2.0, L=8)
        assert fit.rate == pytest.approx(0.01, rel=1e-8)
        assert fit.window[0] >= 1.0 / 0.01  # transient window skipped
        assert len(ts) == len(ns) >= 8

    def test_enhanced_rate_kolmogorov(self):
        # shear must beat bare diffusion nu|k|^alpha by a wide margin
        nu = 1e-4
        fit, _, _ = measure_mode_decay(kolmogorov(128), k=1, nu=nu,
                                       alpha=1.5, L=96)
        assert 2.0e-3 < fit.rate < 2.0e-2
        assert fit.rate > 10.0 * nu
        assert fit.residual < 0.05

    def test_integrated_dissipation_bound_shape(self):
        # nu * integral_s^T ||Lambda^{alpha/2} e^{-tau M}||^2 dtau is finite,
        # decreasing in s, and tracks e^{-2 lambda s} up to a bounded ratio
        u = kolmogorov(96)
        nu, alpha, L = 1e-3, 1.5, 48
        fit, ts, _ = measure_mode_decay(u, 1, nu, alpha, L)
        op = build_mode_operator(u, 1, nu, alpha, L)
        taus = np.linspace(ts[0], ts[-1], 80)
        vals = np.array([dissipation_norm(op, tau) ** 2 for tau in taus])
        tail = [
            nu * np.trapezoid(vals[i:], taus[i:])
            for i in range(0, 40, 8)
        ]
        assert all(np.isfinite(v) and v > 0 for v in tail)
        assert all(a > b for a, b in zip(tail, tail[1:]))
        ratios = [v / np.exp(-2 * fit.rate * taus[i])
                  for i, v in zip(range(0, 40, 8), tail)]
        assert max(ratios) / min(ratios) < 100.0


class TestFlatness:
    def test_kolmogorov_m2(self):
        u = kolmogorov(128)
        info = detect_flatness_order(u)
        assert info["m"] == 2
        assert_allclose(sorted(info["critical_points"]), [-np.pi, 0.0],
                        atol=1e-9)
        assert u.m == 2 and u.c1 > 0.1 and u.delta0 == pytest.approx(np.pi / 2)

    def test_cos_2y_m2(self):
        u = ShearProfile.from_callable(128, lambda y: np.cos(2 * y),
                                       name="cos-2y")
        info = detect_flatness_order(u)
        assert info["m"] == 2
        assert_allclose(sorted(info["critical_points"]),
                        [-np.pi, -np.pi / 2, 0.0, np.pi / 2], atol=1e-9)
        assert info["delta0"] == pytest.approx(np.pi / 4)

    def test_sin_cubed_m3(self):
        info = detect_flatness_order(sin_cubed(128))
        assert info["m"] == 3
        assert_allclose(sorted(info["critical_points"]),
                        [-np.pi, -np.pi / 2, 0.0, np.pi / 2], atol=1e-7)
        # the flat points are the zeros of u, the extrema stay quadratic
        assert sorted(info["orders"]) == [2, 2, 3, 3]

    def test_sin_fourth_m4(self):
        u = ShearProfile.from_callable(128, lambda y: np.sin(y) ** 4,
                                       name="sin4-y")
        assert detect_flatness_order(u)["m"] == 4

    def test_constant_rejected(self):
        with pytest.raises(ValueError, match="constant"):
            detect_flatness_order(
                ShearProfile.from_samples(np.full(32, 2.5), name="const"))
        with pytest.raises(ValueError, match="no critical structure"):
            detect_flatness_order(zero_profile())

    def test_flat_beyond_max_order(self):
        with pytest.raises(ValueError, match="flat beyond order 2"):
            detect_flatness_order(sin_cubed(128), max_order=2)


class TestCommutator:
    def test_single_mode_analytic(self):
        # f = e^{i(x+y)}, u = cos y:
        # R f = (i/2)[(2^{3/4} - 1) e^{i(x+2y)} - e^{ix}]
        grid = TorusGrid(32, 32)
        c = np.zeros((32, 32), dtype=np.complex128)
        c[1, 1] = 1.0
        f = SpectralField2D(grid, c)
        out = commutator_R(f, kolmogorov(32), alpha=1.5)
        expected = np.zeros_like(c)
        expected[1, 2] = 0.5j * (2.0 ** 0.75 - 1.0)
        expected[1, 0] = -0.5j
        assert_allclose(out.coeffs, expected, atol=1e-12)

    def test_matches_mode_matrix(self, grid64, rng):
        f = random_real_field(grid64, rng)
        # confine the band so that dealiased grid products are exact
        mask = (np.abs(grid64.kx[:, None]) <= 14) \
            & (np.abs(grid64.ky[None, :]) <= 14)
        f = SpectralField2D(grid64, np.where(mask, f.coeffs, 0.0))
        u = sin_cubed(64)
        alpha = 1.5
        out = commutator_R(f, u, alpha)
        L = 31
        R1 = commutator_matrix(u, 1, alpha, L)
        for k in (1, 2, 3):
            g_in = np.fft.fftshift(f.coeffs[k, :])[1:]
            got = np.fft.fftshift(out.coeffs[k, :])[1:]
            want = commutator_matrix(u, k, alpha, L) @ g_in
            assert np.linalg.norm(got - want) \
                <= 1e-10 * max(np.linalg.norm(want), 1e-30)
        assert R1.shape == (63, 63)

    def test_zero_cases(self, grid32):
        u = ShearProfile.from_samples(np.full(32, 0.7), name="const")
        c = np.zeros((32, 32), dtype=np.complex128)
        c[2, 1] = 0.3 + 0.1j
        c[-2, -1] = 0.3 - 0.1j
        f = SpectralField2D(grid32, c)
        out = commutator_R(f, u, alpha=1.2)
        assert norms(out)["L2"] <= 1e-13 * norms(f)["L2"]
        # x-independent field: dx kills both terms identically
        c0 = np.zeros((32, 32), dtype=np.complex128)
        c0[0, 3] = 1.0
        c0[0, -3] = 1.0
        out0 = commutator_R(SpectralField2D(grid32, c0), kolmogorov(32), 1.5)
        assert np.abs(out0.coeffs).max() == 0.0

    def test_validation(self, grid32):
        c = np.zeros((32, 32), dtype=np.complex128)
        c[1, 1] = 1.0
        f = SpectralField2D(grid32, c)
        with pytest.raises(ValueError, match="alpha"):
            commutator_R(f, kolmogorov(32), alpha=2.0)
        with pytest.raises(ValueError, match="grids differ"):
            commutator_R(f, kolmogorov(64), alpha=1.5)


class TestDuhamelIdentity:
    def test_zero_time(self):
        grid = TorusGrid(64, 64)
        res = duhamel_identity_check(bump_field(grid), kolmogorov(64),
                                     nu=0.05, alpha=1.5, t=0.0, q=8)
        assert res <= 1e-12

    def test_constant_shear(self):
        grid = TorusGrid(64, 64)
        u = ShearProfile.from_samples(np.full(64, 0.7), name="const")
        res = duhamel_identity_check(bump_field(grid), u,
                                     nu=0.05, alpha=1.5, t=0.5, q=16)
        assert res <= 1e-10

    def test_analytic_bump_superconvergence(self):
        # the identity is exact at matrix level (the integrand is a perfect
        # derivative), so for analytic data the Gauss-Legendre quadrature
        # already sits at round-off with very few nodes
        grid = TorusGrid(64, 64)
        f0 = bump_field(grid)
        u = kolmogorov(64)
        r8 = duhamel_identity_check(f0, u, nu=0.05, alpha=1.5, t=0.5, q=8)
        r16 = duhamel_identity_check(f0, u, nu=0.05, alpha=1.5, t=0.5, q=16)
        assert r8 <= 1e-12
        assert r16 <= 1e-12

    def test_validation(self):
        grid = TorusGrid(32, 32)
        f0 = bump_field(grid)
        u = kolmogorov(32)
        with pytest.raises(ValueError, match="at least 8"):
            duhamel_identity_check(f0, u, 0.05, 1.5, 0.5, q=4)
        with pytest.raises(ValueError, match="nonnegative"):
            duhamel_identity_check(f0, u, 0.05, 1.5, -1.0)
        with pytest.raises(ValueError, match="alpha"):
            duhamel_identity_check(f0, u, 0.05, 2.0, 0.5)
        bad = SpectralField2D(grid, f0.coeffs.copy())
        bad.coeffs[0, 0] = 1.0
        with pytest.raises(ValueError, match="k=0"):
            duhamel_identity_check(bad, u, 0.05, 1.5, 0.5)
        with pytest.raises(ValueError, match="drop resolved content"):
            duhamel_identity_check(f0, u, 0.05, 1.5, 0.5, q=8, L=2)
