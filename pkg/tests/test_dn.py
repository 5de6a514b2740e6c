"""Strip solver and Dirichlet-Neumann operator checks."""

import numpy as np
import pytest

from wwlab.core import l2_norm, make_grid, p_apply
from wwlab.dn import (
    PhysicalParams,
    SolverFailure,
    StripSolver,
    apply_dn,
    cc_weights,
    cheb_diff,
    cheb_nodes,
    dn_transverse,
    fit_decay_rate,
    flat_symbol,
    good_unknowns,
    harmonic_lift,
    shape_derivative,
)


def band_limited(grid, nmodes, scale, seed, decay=0.4):
    """Random real field from the lowest nmodes Fourier modes. Exactly
    periodic, which matters: spectral tests are ruined by even tiny
    periodization kinks."""
    r = np.random.default_rng(seed)
    c = np.zeros(grid.N // 2 + 1, dtype=complex)
    c[:nmodes] = (r.standard_normal(nmodes) + 1j * r.standard_normal(nmodes))
    c[:nmodes] *= np.exp(-decay * np.arange(nmodes))
    c[0] = c[0].real
    return np.fft.irfft(c, n=grid.N) * scale


class TestParams:
    def test_epsilon_roundtrip(self):
        p = PhysicalParams.from_epsilon(0.1, 0.4)
        assert abs(p.alpha - 1.01) < 1e-14
        assert abs(p.epsilon - 0.1) < 1e-14
        assert abs(p.beta - 0.4) < 1e-14
        assert abs(p.c - np.sqrt(1.0 / 1.01)) < 1e-14

    def test_speed_roundtrip(self):
        p = PhysicalParams.from_speed(0.95, 0.36)
        assert abs(p.c - 0.95) < 1e-15
        q = PhysicalParams.from_epsilon(p.epsilon, p.beta)
        assert abs(q.c - p.c) < 1e-14
        assert abs(q.b - p.b) < 1e-14

    def test_kappa_matches_definition(self):
        p = PhysicalParams.from_epsilon(0.1, 0.4)
        assert abs(p.kappa - 0.1 / (2 * np.sqrt(0.4 - 1 / 3))) < 1e-14

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            PhysicalParams(g=-1.0, b=0.4, H=1.0, c=0.9)
        with pytest.raises(ValueError):
            PhysicalParams.from_epsilon(-0.1, 0.4)
        p = PhysicalParams(g=1.0, b=0.4, H=1.0, c=1.5)  # supercritical
        with pytest.raises(ValueError):
            p.epsilon
        p = PhysicalParams.from_epsilon(0.1, 0.3)  # beta below 1/3
        with pytest.raises(ValueError):
            p.kappa


class TestChebyshev:
    def test_nodes(self):
        z = cheb_nodes(8)
        assert z[0] == 0.0
        assert z[-1] == -1.0
        assert np.all(np.diff(z) < 0)

    def test_diff_exact_on_cubic(self):
        z = cheb_nodes(12)
        D = cheb_diff(12)
        err = np.max(np.abs(D @ z**3 - 3 * z**2))
        assert err < 1e-12

    def test_weights_integrate_polynomials(self):
        w = cc_weights(10)
        z = cheb_nodes(10)
        assert abs(np.sum(w) - 1.0) < 1e-14  # integral of 1 over [-1, 0]
        assert abs(w @ z**2 - 1.0 / 3.0) < 1e-14
        assert abs(w @ z**9 - (-1.0 / 10.0)) < 1e-13


class TestFlatOperator:
    def test_lift_vertical_derivative(self):
        # cosh profile: d/dz of the xi=2 mode at the surface is
        # 2 tanh(2) cos(2x) for H = 1
        grid = make_grid(2 * np.pi, 64)
        psi = np.cos(2 * grid.x)
        field = harmonic_lift(grid, 1.0, psi, nz=24)
        dz = cheb_diff(24) @ field
        err = np.max(np.abs(dz[0] - 2 * np.tanh(2.0) * np.cos(2 * grid.x)))
        assert err < 1e-11

    def test_flat_symbol_band(self):
        grid = make_grid(2 * np.pi, 64)
        solver = StripSolver(grid, 1.0, nz=32)
        eta = np.zeros(grid.N)
        for m in range(1, 13):
            psi = np.cos(m * grid.x)
            flux = solver.solve(eta, psi, tol=1e-12).flux
            want = flat_symbol(float(m), 1.0) * psi
            rel = np.max(np.abs(flux - want)) / np.max(np.abs(want))
            assert rel < 1e-12, f"mode {m}: rel {rel:.2e}"

    def test_annihilates_constants(self):
        grid = make_grid(50.0, 128)
        eta = 0.1 * np.sin(2 * np.pi * grid.x / 50.0)
        flux = apply_dn(grid, 1.0, eta, np.full(grid.N, 3.7))
        assert np.max(np.abs(flux)) < 1e-12

    def test_transverse_reduces_to_plain(self):
        grid = make_grid(30.0, 128)
        eta = band_limited(grid, 6, 0.05, 21)
        psi = band_limited(grid, 10, 1.0, 22)
        a = apply_dn(grid, 1.0, eta, psi)
        b = dn_transverse(grid, 1.0, eta, psi, k=0.0)
        assert l2_norm(grid, a - b) < 1e-12 * max(1.0, l2_norm(grid, a))

    def test_transverse_large_k(self):
        # G_k approaches k * id as k grows; deviation at k=50 is below 2%
        grid = make_grid(30.0, 128)
        eta = band_limited(grid, 6, 0.05, 31)
        psi = band_limited(grid, 8, 1.0, 32)
        out = dn_transverse(grid, 1.0, eta, psi, k=50.0)
        assert l2_norm(grid, out - 50.0 * psi) < 0.02 * l2_norm(grid, 50.0 * psi)

    def test_transverse_flat_symbol(self):
        grid = make_grid(2 * np.pi, 64)
        psi = np.cos(3 * grid.x)
        out = dn_transverse(grid, 1.0, np.zeros(grid.N), psi, k=2.0)
        mu = np.sqrt(9.0 + 4.0)
        want = mu * np.tanh(mu) * psi
        assert np.max(np.abs(out - want)) < 1e-11


class TestWavySurface:
    def test_symmetry(self):
        # weak form makes G self-adjoint; normalized by smoothed-slope norms
        grid = make_grid(40.0, 256)
        eta = band_limited(grid, 8, 0.08, 100)
        solver = StripSolver(grid, 1.0)
        worst = 0.0
        for trial in range(20):
            u = band_limited(grid, 40, 1.0, 200 + trial)
            v = band_limited(grid, 40, 1.0, 300 + trial)
            gu = solver.solve(eta, u, tol=1e-12).flux
            gv = solver.solve(eta, v, tol=1e-12).flux
            lhs = grid.dx * np.sum(gu * v)
            rhs = grid.dx * np.sum(u * gv)
            scale = l2_norm(grid, p_apply(grid, u)) * l2_norm(
                grid, p_apply(grid, v)
            )
            worst = max(worst, abs(lhs - rhs) / scale)
        assert worst < 1e-9

    def test_matrix_matches_apply_and_is_symmetric(self):
        grid = make_grid(20.0, 64)
        eta = 0.06 * np.sin(2 * np.pi * grid.x / 20.0)
        solver = StripSolver(grid, 1.0, nz=16)
        M = solver.dn_matrix(eta)
        psi = band_limited(grid, 12, 1.0, 77)
        direct = solver.solve(eta, psi, tol=1e-12).flux
        assert l2_norm(grid, M @ psi - direct) < 1e-8
        assert np.max(np.abs(M - M.T)) < 1e-8

    def test_good_unknowns_flat(self):
        grid = make_grid(2 * np.pi, 64)
        eta = np.zeros(grid.N)
        psi = np.sin(3 * grid.x)
        flux = apply_dn(grid, 1.0, eta, psi)
        Z, v = good_unknowns(grid, eta, 3 * np.cos(3 * grid.x), flux)
        assert np.allclose(Z, flux)
        assert np.allclose(v, 3 * np.cos(3 * grid.x))


class TestShapeDerivative:
    def test_matches_finite_differences(self):
        grid = make_grid(40.0, 256)
        u = band_limited(grid, 30, 30.0, 11)
        zeta = band_limited(grid, 5, 5.0, 12)
        eta = 0.08 * np.sin(2 * np.pi * grid.x / 40.0) + 0.04 * np.cos(
            6 * np.pi * grid.x / 40.0
        )
        solver = StripSolver(grid, 1.0)
        base = shape_derivative(grid, 1.0, eta, u, zeta, tol=1e-12)
        errs = []
        for h in (8e-2, 4e-2, 2e-2):
            gp = solver.solve(eta + h * zeta, u, tol=1e-12).flux
            gm = solver.solve(eta - h * zeta, u, tol=1e-12).flux
            errs.append(l2_norm(grid, (gp - gm) / (2 * h) - base))
        orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert min(orders) > 1.9
        assert errs[-1] < 1e-7

    def test_flat_first_variation(self):
        # at eta = 0 the derivative is -G0(zeta G0 u) - d/dx(zeta u_x)
        grid = make_grid(2 * np.pi, 128)
        u = np.cos(2 * grid.x)
        zeta = np.sin(grid.x)
        got = shape_derivative(grid, 1.0, np.zeros(grid.N), u, zeta, tol=1e-12)
        g0u = apply_dn(grid, 1.0, np.zeros(grid.N), u)
        inner = apply_dn(grid, 1.0, np.zeros(grid.N), zeta * g0u)
        ux = -2 * np.sin(2 * grid.x)
        from wwlab.core import diff

        want = -inner - diff(grid, zeta * ux)
        assert l2_norm(grid, got - want) < 1e-9


class TestFailureModes:
    def test_depth_vanishing(self):
        grid = make_grid(20.0, 64)
        eta = -1.5 * np.ones(grid.N)  # deeper than H = 1
        with pytest.raises(ValueError, match="depth"):
            apply_dn(grid, 1.0, eta, np.ones(grid.N))

    def test_nonfinite_data(self):
        grid = make_grid(20.0, 64)
        psi = np.ones(grid.N)
        psi[3] = np.nan
        with pytest.raises(ValueError):
            apply_dn(grid, 1.0, np.zeros(grid.N), psi)

    def test_solver_failure_carries_state(self):
        grid = make_grid(20.0, 64)
        eta = 0.3 * np.sin(2 * np.pi * grid.x / 20.0)
        solver = StripSolver(grid, 1.0, nz=16)
        with pytest.raises(SolverFailure) as info:
            solver.solve(eta, np.sin(2 * np.pi * grid.x / 20.0), maxiter=1)
        assert info.value.iterations == 1
        assert info.value.residual > 0


class TestDecayFit:
    def test_recovers_synthetic_rate(self):
        grid = make_grid(100.0, 512)
        vals = 3.0 * np.exp(-0.35 * np.abs(grid.x))
        fit = fit_decay_rate(grid, vals)
        assert abs(fit.rate + 0.35) < 1e-3
        assert fit.r2 > 0.999999
        assert fit.npoints >= 8

    def test_floor_drops_points(self):
        grid = make_grid(100.0, 512)
        vals = 1e-20 * np.exp(-0.1 * np.abs(grid.x))  # all below floor
        with pytest.raises(ValueError, match="insufficient decay data"):
            fit_decay_rate(grid, vals)
