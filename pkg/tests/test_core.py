import os

import numpy as np
import pytest

from wwlab.core import (
    NormReport,
    RampCarrier,
    SurfaceState,
    apply_multiplier,
    diff,
    es_norm,
    h1_norm,
    l2_norm,
    load_checkpoint,
    load_csv,
    make_grid,
    norm_report,
    p_apply,
    reconstruct_phi,
    reconstruct_phi_x,
    save_checkpoint,
    save_csv,
    shift,
    x0_norm,
)


class TestGrid:
    def test_nodes_and_wavenumbers(self):
        g = make_grid(10.0, 20)
        assert g.dx == 0.5
        assert g.x[0] == -5.0
        assert np.allclose(np.diff(g.x), 0.5)
        assert g.x[-1] == pytest.approx(5.0 - 0.5)
        ref = 2 * np.pi * np.fft.rfftfreq(20, d=0.5)
        assert np.array_equal(g.xi, ref)

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            make_grid(10.0, 15)
        with pytest.raises(ValueError):
            make_grid(10.0, 8)
        with pytest.raises(ValueError):
            make_grid(-1.0, 32)


class TestCalculus:
    def test_diff_trig_exact(self):
        g = make_grid(2 * np.pi, 64)
        u = np.sin(3 * g.x)
        err = np.max(np.abs(diff(g, u) - 3 * np.cos(3 * g.x)))
        assert err < 1e-13, f"trig derivative error {err:.2e}"

    def test_diff_smooth_spectral(self):
        g = make_grid(2 * np.pi, 128)
        u = np.exp(np.sin(g.x))
        du = np.cos(g.x) * u
        err = np.max(np.abs(diff(g, u) - du))
        assert err < 1e-12, f"smooth derivative error {err:.2e}"

    def test_second_derivative(self):
        g = make_grid(2 * np.pi, 64)
        u = np.cos(2 * g.x)
        err = np.max(np.abs(diff(g, u, 2) + 4 * np.cos(2 * g.x)))
        assert err < 1e-12

    def test_shift_matches_roll_on_nodes(self):
        g = make_grid(7.0, 32)
        rng = np.random.default_rng(5)
        u = np.fft.irfft(
            np.exp(-np.arange(17)) * rng.standard_normal(17), n=32
        )
        out = shift(g, u, g.dx)
        assert np.allclose(out, np.roll(u, 1), atol=1e-13)

    def test_shift_trig(self):
        g = make_grid(2 * np.pi, 64)
        u = np.cos(2 * g.x)
        out = shift(g, u, 0.3)
        assert np.max(np.abs(out - np.cos(2 * (g.x - 0.3)))) < 1e-13

    def test_multiplier_rejects_nan(self):
        g = make_grid(2 * np.pi, 32)
        u = np.zeros(32)
        u[3] = np.nan
        with pytest.raises(ValueError):
            apply_multiplier(g, np.ones(17), u)
        with pytest.raises(ValueError):
            diff(g, u)

    def test_multiplier_shape_check(self):
        g = make_grid(2 * np.pi, 32)
        with pytest.raises(ValueError):
            apply_multiplier(g, np.ones(17), np.zeros(31))


class TestSmoothedDerivative:
    def test_cosine_oracle(self):
        # P cos(x) on L = 2 pi must be -2^(-1/4) sin(x).
        g = make_grid(2 * np.pi, 64)
        out = p_apply(g, np.cos(g.x))
        ref = -(2.0**-0.25) * np.sin(g.x)
        assert np.max(np.abs(out - ref)) < 1e-14

    def test_kills_constants(self):
        g = make_grid(5.0, 32)
        assert np.max(np.abs(p_apply(g, np.ones(32)))) == 0.0

    def test_commutator_bound(self):
        # |[P, f] g|_2 <= 5 |f'|_inf |g|_2 for smooth periodic f, g.
        for N in (128, 256, 512):
            g = make_grid(2 * np.pi, N)
            rng = np.random.default_rng(100 + N)
            for _ in range(5):
                fh = np.zeros(N // 2 + 1, dtype=complex)
                kf = np.arange(1, 9)
                fh[1:9] = (
                    rng.standard_normal(8) + 1j * rng.standard_normal(8)
                ) / (1 + kf**2)
                f = np.fft.irfft(fh, n=N) * N
                gh = np.zeros(N // 2 + 1, dtype=complex)
                kg = np.arange(1, N // 8)
                gh[1 : N // 8] = (
                    rng.standard_normal(N // 8 - 1)
                    + 1j * rng.standard_normal(N // 8 - 1)
                ) / (1 + kg**1.5)
                w = np.fft.irfft(gh, n=N) * N
                comm = p_apply(g, f * w) - f * p_apply(g, w)
                lhs = l2_norm(g, comm)
                rhs = 5.0 * np.max(np.abs(diff(g, f))) * l2_norm(g, w)
                assert lhs <= rhs, f"N={N}: {lhs:.3e} > {rhs:.3e}"


class TestNorms:
    def test_l2_sine(self):
        g = make_grid(2 * np.pi, 64)
        assert l2_norm(g, np.sin(g.x)) == pytest.approx(np.sqrt(np.pi))

    def test_x0_oracle(self):
        # (sin x, 0) on L = 2 pi: H1 part sqrt(pi + pi), P part zero.
        g = make_grid(2 * np.pi, 64)
        val = x0_norm(g, np.sin(g.x), np.zeros(g.N))
        assert val == pytest.approx(np.sqrt(2 * np.pi), rel=1e-12)

    def test_h1_dominates_l2(self):
        g = make_grid(9.0, 64)
        rng = np.random.default_rng(2)
        u = np.fft.irfft(
            rng.standard_normal(33) * np.exp(-np.arange(33.0)), n=64
        )
        assert h1_norm(g, u) >= l2_norm(g, u)

    def test_es_accumulates(self):
        g = make_grid(2 * np.pi, 64)
        u = np.sin(g.x)
        # sin has unit-norm derivatives of every order on 2 pi.
        assert es_norm(g, u, 2) == pytest.approx(3 * np.sqrt(np.pi), rel=1e-12)

    def test_norm_report(self):
        g = make_grid(2 * np.pi, 64)
        rep = norm_report(g, np.sin(g.x), np.zeros(g.N), s=1)
        assert isinstance(rep, NormReport)
        assert rep.l2_phi == 0.0
        assert rep.x0 == pytest.approx(np.sqrt(2 * np.pi), rel=1e-12)
        assert rep.es == pytest.approx(2 * np.sqrt(np.pi), rel=1e-12)
        assert norm_report(g, np.sin(g.x), np.zeros(g.N)).es is None


class TestRampCarrier:
    def test_shape(self):
        S = RampCarrier(L=100.0, w=4.0)
        x = np.linspace(-50, 50, 2001)
        v = S.sample(x)
        assert np.max(np.abs(v)) <= 1.0 + 1e-15
        assert S.sample(np.array([0.0]))[0] == 0.0
        # plateau
        xs = np.linspace(4.0, 40.0, 50)
        assert np.allclose(S.sample(xs), 1.0)
        assert np.allclose(S.sample(-xs), -1.0)
        # odd
        xr = np.linspace(-49, 49, 197)
        assert np.allclose(S.sample(xr) + S.sample(-xr), 0.0, atol=1e-15)
        # periodic join at the box edge
        assert abs(S.sample(np.array([50.0]))[0]) < 1e-15

    def test_deriv_matches_fd(self):
        S = RampCarrier(L=100.0, w=4.0)
        x = np.linspace(-49.5, 49.5, 397)
        h = 1e-5
        fd = (
            8 * (S.sample(x + h) - S.sample(x - h))
            - (S.sample(x + 2 * h) - S.sample(x - 2 * h))
        ) / (12 * h)
        err = np.max(np.abs(S.sample_deriv(x) - fd))
        assert err < 1e-9, f"carrier derivative mismatch {err:.2e}"

    def test_deriv_zero_on_plateau(self):
        S = RampCarrier(L=100.0, w=4.0)
        xs = np.linspace(4.5, 39.5, 40)
        assert np.max(np.abs(S.sample_deriv(xs))) == 0.0

    def test_width_limit(self):
        with pytest.raises(ValueError):
            RampCarrier(L=100.0, w=5.1)
        with pytest.raises(ValueError):
            RampCarrier(L=100.0, w=0.0)


class TestStateAndIO:
    def test_reconstruct(self):
        g = make_grid(100.0, 64)
        S = RampCarrier(L=100.0, w=4.0)
        state = SurfaceState(
            eta=np.zeros(g.N),
            phi_periodic=np.sin(2 * np.pi * g.x / g.L),
            phi_ramp_amp=0.25,
        )
        phi = reconstruct_phi(g, state, S, center=3.0)
        ref = state.phi_periodic + 0.25 * S.sample(g.x - 3.0)
        assert np.array_equal(phi, ref)
        phix = reconstruct_phi_x(g, state, S, center=3.0)
        ref_x = diff(g, state.phi_periodic) + 0.25 * S.sample_deriv(
            g.x - 3.0
        )
        assert np.allclose(phix, ref_x, atol=1e-14)

    def test_checkpoint_roundtrip(self, tmp_path):
        g = make_grid(40.0, 32)
        rng = np.random.default_rng(7)
        state = SurfaceState(
            eta=rng.standard_normal(32),
            phi_periodic=rng.standard_normal(32),
            phi_ramp_amp=0.125,
        )
        path = tmp_path / "chk.bin"
        save_checkpoint(path, g, state, t=2.5)
        g2, s2, t2 = load_checkpoint(path)
        assert (g2.L, g2.N, t2) == (40.0, 32, 2.5)
        assert np.array_equal(s2.eta, state.eta)
        assert np.array_equal(s2.phi_periodic, state.phi_periodic)
        assert s2.phi_ramp_amp == 0.125

    def test_checkpoint_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)

    def test_checkpoint_truncated(self, tmp_path):
        g = make_grid(40.0, 32)
        state = SurfaceState(np.zeros(32), np.zeros(32))
        path = tmp_path / "chk.bin"
        save_checkpoint(path, g, state)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(ValueError, match="truncated"):
            load_checkpoint(path)

    def test_csv_roundtrip_and_determinism(self, tmp_path):
        g = make_grid(3.0, 16)
        v = np.sin(g.x) * 1e-7 + 0.1
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        save_csv(p1, g.x, v)
        save_csv(p2, g.x, v)
        assert p1.read_bytes() == p2.read_bytes()
        x2, v2 = load_csv(p1)
        assert np.array_equal(x2, g.x)
        assert np.array_equal(v2, v)

    def test_csv_header_check(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            load_csv(p)
