"""Periodic spectral grid, Fourier calculus, norms, carrier ramps, and IO.

Everything downstream builds on this module: the grid convention (nodes on
[-L/2, L/2), wavenumbers from rfftfreq), the split of the velocity potential
into a periodic part plus a multiple of an analytic ramp, and the norms used
for residuals and growth measurements.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

CHECKPOINT_MAGIC = b"WWLAB1"


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid on [-L/2, L/2) with rfft wavenumbers."""

    L: float
    N: int
    dx: float
    x: np.ndarray
    xi: np.ndarray


def make_grid(L, N):
    """Build a Grid1D. N must be even and at least 16; L positive."""
    N = int(N)
    if N < 16 or N % 2 != 0:
        raise ValueError(f"grid size must be even and >= 16, got {N}")
    if not L > 0:
        raise ValueError(f"box length must be positive, got {L}")
    dx = L / N
    x = -L / 2 + dx * np.arange(N)
    xi = 2 * np.pi * np.fft.rfftfreq(N, d=dx)
    return Grid1D(L=float(L), N=N, dx=dx, x=x, xi=xi)


def apply_multiplier(grid, symbol, u):
    """Apply a Fourier multiplier to real samples.

    symbol is either a callable evaluated on grid.xi or an array of values on
    the rfft modes. Non-finite input is rejected rather than propagated.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.N,):
        raise ValueError(f"expected {grid.N} samples, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("non-finite values in multiplier input")
    m = symbol(grid.xi) if callable(symbol) else np.asarray(symbol)
    return np.fft.irfft(np.fft.rfft(u) * m, n=grid.N)


def diff(grid, u, order=1):
    """Spectral d^order/dx^order. Odd orders zero the Nyquist mode."""
    if order == 0:
        return np.asarray(u, dtype=float).copy()
    m = (1j * grid.xi) ** order
    if order % 2:
        m = m.copy()
        m[-1] = 0.0
    return apply_multiplier(grid, m, u)


def shift(grid, u, a):
    """Translate periodic samples: returns u(x - a) via a phase factor.

    Exact (to roundoff) when a is a multiple of dx. For fractional shifts
    the Nyquist mode cannot carry a complex phase in a real signal, so its
    content is projected; the error is bounded by twice that amplitude.
    """
    uh = np.fft.rfft(np.asarray(u, dtype=float))
    return np.fft.irfft(uh * np.exp(-1j * grid.xi * a), n=grid.N)


def p_multiplier(grid):
    """Symbol of (1 - d_xx)^(-1/4) d/dx on the rfft modes (Nyquist zeroed)."""
    m = 1j * grid.xi * (1.0 + grid.xi**2) ** -0.25
    m[-1] = 0.0
    return m


def p_apply(grid, u):
    """Apply the smoothed derivative (1 - d_xx)^(-1/4) d/dx."""
    return apply_multiplier(grid, p_multiplier(grid), u)


def l2_norm(grid, u):
    """Continuum L2 norm, dx-weighted."""
    u = np.asarray(u, dtype=float)
    return float(np.sqrt(grid.dx * np.dot(u, u)))


def h1_norm(grid, u):
    return float(np.hypot(l2_norm(grid, u), l2_norm(grid, diff(grid, u))))


def x0_norm(grid, u1, u2):
    """Energy-type norm of a pair: |u1|_H1 + |P u2|_L2."""
    return h1_norm(grid, u1) + l2_norm(grid, p_apply(grid, u2))


def es_norm(grid, u, s):
    """Sum of L2 norms of spatial derivatives of u up to order s."""
    total = l2_norm(grid, u)
    for k in range(1, s + 1):
        total += l2_norm(grid, diff(grid, u, k))
    return float(total)


def _smooth_rise(t):
    # C^inf transition 0 -> 1 on [0, 1]; every derivative vanishes at both
    # ends, so the odd periodic extension of the carrier stays C^inf at 0.
    # exp(-1/t) underflows to exactly 0 well before the 1e-9 clamp bites.
    t = np.clip(t, 1e-9, 1.0 - 1e-9)
    f = np.exp(-1.0 / t)
    g = np.exp(-1.0 / (1.0 - t))
    return f / (f + g)


def _smooth_rise_deriv(t):
    t = np.clip(t, 1e-9, 1.0 - 1e-9)
    f = np.exp(-1.0 / t)
    g = np.exp(-1.0 / (1.0 - t))
    fp = f / t**2
    gp = g / (1.0 - t) ** 2
    return (fp * g + f * gp) / (f + g) ** 2


def _quintic_fall(u):
    # C^2 descent 1 -> 0 on [0, 1]; first and second derivatives vanish at
    # both ends.
    u = np.clip(u, 0.0, 1.0)
    return 1.0 - u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


def _quintic_fall_deriv(u):
    u = np.clip(u, 0.0, 1.0)
    return -30.0 * u**2 * (1.0 - u) ** 2


@dataclass(frozen=True)
class RampCarrier:
    """Odd L-periodic ramp carrying the far-field part of the potential.

    S(0) = 0, S = 1 on [w, 0.4 L], and S descends back to 0 over
    [0.4 L, 0.5 L] through a C^2 quintic blend; the rise on [0, w] is
    C-infinity. |S| <= 1 everywhere and w may not exceed L/20.

    Always sample analytically (sample / sample_deriv). Spectral
    differentiation of the blend corners pollutes small-residual
    measurements.
    """

    L: float
    w: float

    def __post_init__(self):
        if not 0 < self.w <= self.L / 20:
            raise ValueError(
                f"ramp half-width must lie in (0, L/20], got {self.w}"
            )

    def _wrap(self, x):
        return x - self.L * np.round(np.asarray(x, dtype=float) / self.L)

    def sample(self, x):
        s = self._wrap(x)
        a = np.abs(s)
        L, w = self.L, self.w
        out = np.ones_like(a)
        rise = a <= w
        out[rise] = _smooth_rise(a[rise] / w)
        fall = a > 0.4 * L
        out[fall] = _quintic_fall((a[fall] - 0.4 * L) / (0.1 * L))
        return np.sign(s) * out

    def sample_deriv(self, x):
        s = self._wrap(x)
        a = np.abs(s)
        L, w = self.L, self.w
        out = np.zeros_like(a)
        rise = a <= w
        out[rise] = _smooth_rise_deriv(a[rise] / w) / w
        fall = a > 0.4 * L
        out[fall] = _quintic_fall_deriv((a[fall] - 0.4 * L) / (0.1 * L)) / (
            0.1 * L
        )
        return out


@dataclass
class SurfaceState:
    """Surface elevation plus the potential trace in split form.

    The full trace is phi_periodic + phi_ramp_amp * S(x - center) with S a
    RampCarrier; the carrier and its center are supplied by the caller, so
    the same state can be re-read against a translated carrier.
    """

    eta: np.ndarray
    phi_periodic: np.ndarray
    phi_ramp_amp: float = 0.0

    def copy(self):
        return SurfaceState(
            eta=self.eta.copy(),
            phi_periodic=self.phi_periodic.copy(),
            phi_ramp_amp=float(self.phi_ramp_amp),
        )


def reconstruct_phi(grid, state, carrier=None, center=0.0):
    """Potential trace at the nodes, ramp part included."""
    phi = state.phi_periodic.copy()
    if carrier is not None and state.phi_ramp_amp != 0.0:
        phi = phi + state.phi_ramp_amp * carrier.sample(grid.x - center)
    return phi


def reconstruct_phi_x(grid, state, carrier=None, center=0.0):
    """d/dx of the potential trace; the ramp part is differentiated
    analytically."""
    phix = diff(grid, state.phi_periodic)
    if carrier is not None and state.phi_ramp_amp != 0.0:
        phix = phix + state.phi_ramp_amp * carrier.sample_deriv(
            grid.x - center
        )
    return phix


@dataclass
class NormReport:
    """Norm summary of a state pair (eta, phi-like component)."""

    x0: float
    l2_eta: float
    l2_phi: float
    es: float | None = None


def norm_report(grid, u1, u2, s=None):
    es = None
    if s is not None:
        es = es_norm(grid, u1, s) + es_norm(grid, u2, s)
    return NormReport(
        x0=x0_norm(grid, u1, u2),
        l2_eta=l2_norm(grid, u1),
        l2_phi=l2_norm(grid, u2),
        es=es,
    )


def save_csv(path, x, value):
    """Two-column CSV (x, value) with deterministic 17-digit formatting."""
    x = np.asarray(x, dtype=float)
    value = np.asarray(value, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "value"])
        for xj, vj in zip(x, value):
            writer.writerow([f"{xj:.17g}", f"{vj:.17g}"])


def load_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["x", "value"]:
        raise ValueError(f"unexpected CSV header in {path}: {rows[:1]}")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return data[:, 0], data[:, 1]


def save_checkpoint(path, grid, state, t=0.0):
    """Binary checkpoint: magic, L, N, t, ramp amplitude, then eta and
    phi_periodic as raw little-endian float64."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<d", grid.L))
        fh.write(struct.pack("<q", grid.N))
        fh.write(struct.pack("<d", float(t)))
        fh.write(struct.pack("<d", float(state.phi_ramp_amp)))
        fh.write(np.asarray(state.eta, dtype="<f8").tobytes())
        fh.write(np.asarray(state.phi_periodic, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        L, = struct.unpack("<d", fh.read(8))
        N, = struct.unpack("<q", fh.read(8))
        t, = struct.unpack("<d", fh.read(8))
        amp, = struct.unpack("<d", fh.read(8))
        payload = np.frombuffer(fh.read(16 * N), dtype="<f8")
    if payload.size != 2 * N:
        raise ValueError(f"truncated checkpoint payload in {path}")
    grid = make_grid(L, N)
    state = SurfaceState(
        eta=payload[:N].copy(),
        phi_periodic=payload[N:].copy(),
        phi_ramp_amp=amp,
    )
    return grid, state, t
