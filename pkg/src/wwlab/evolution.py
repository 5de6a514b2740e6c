"""Time stepping for the free-surface system.

Classic RK4 on (eta, q) where the potential trace is q plus a pinned
carrier contribution amp * S(x - center). The carrier coefficient never
evolves; the split is a change of variables, so the flow conserves the
energy, mass, and impulse of the full system up to integrator error. The
optional spectral filter guards long rough runs against aliasing buildup;
it costs a dt-independent per-step attenuation, so conservation
measurements should run with it disabled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wwlab.core import (
    SurfaceState,
    diff,
    l2_norm,
    reconstruct_phi,
    reconstruct_phi_x,
)
from wwlab.dn import SolverFailure, StripSolver


class EvolutionFailure(RuntimeError):
    """Blow-up guard tripped; carries the last finite state and its time."""

    def __init__(self, message, state, t):
        super().__init__(message)
        self.state = state
        self.t = t


def omega(grid, params):
    """Linear dispersion frequencies on the rfft modes."""
    xi = np.abs(grid.xi)
    return np.sqrt((params.g + params.b * xi**2) * xi * np.tanh(params.H * xi))


def cfl_dt(grid, params, safety=0.35):
    """Step below the RK4 imaginary-axis limit for the fastest mode."""
    return safety * 2.8 / float(np.max(omega(grid, params)))


def filter_multiplier(grid, strength=36.0, order=8):
    xi = np.abs(grid.xi)
    ximax = float(xi.max())
    return np.exp(-strength * (xi / ximax) ** order)


@dataclass
class EvolutionRecord:
    times: np.ndarray
    energy: np.ndarray
    mass: np.ndarray
    momentum: np.ndarray
    steps: int


def conserved(grid, params, state, carrier=None, center=0.0, solver=None,
              flux=None):
    """Energy, mass, and impulse of a surface state."""
    if solver is None:
        solver = StripSolver(grid, params.H)
    eta = state.eta
    phi = reconstruct_phi(grid, state, carrier, center)
    phix = reconstruct_phi_x(grid, state, carrier, center)
    if flux is None:
        flux = solver.solve(eta, phi).flux
    etax = diff(grid, eta)
    dx = grid.dx
    energy = 0.5 * dx * np.sum(flux * phi) + 0.5 * params.g * dx * np.sum(
        eta**2
    ) + params.b * dx * np.sum(np.sqrt(1.0 + etax**2) - 1.0)
    mass = dx * np.sum(eta)
    momentum = dx * np.sum(eta * phix)
    return {"energy": float(energy), "mass": float(mass),
            "momentum": float(momentum)}


def rhs(grid, params, eta, q, carrier_slope, carrier_vals, solver, x0=None):
    """Time derivatives of (eta, q); returns the strip solution as well so
    callers can warm-start the next solve."""
    psi = q + carrier_vals
    sol = solver.solve(eta, psi, x0=x0)
    phix = diff(grid, q) + carrier_slope
    etax = diff(grid, eta)
    deta = sol.flux
    num = (sol.flux + phix * etax) ** 2
    dq = (
        -0.5 * phix**2
        + 0.5 * num / (1.0 + etax**2)
        - params.g * eta
        + params.b * diff(grid, etax / np.sqrt(1.0 + etax**2))
    )
    return deta, dq, sol


def evolve(
    grid,
    params,
    state,
    T,
    dt=None,
    carrier=None,
    center=0.0,
    filter_params=(36.0, 8),
    record_every=0,
    nz=32,
    solver=None,
    blowup_factor=1e6,
):
    """March the state to time T. Returns (final_state, EvolutionRecord).

    record_every > 0 samples the conserved quantities every that many steps
    (plus the first and last). A non-finite field or an l2 norm exceeding
    blowup_factor times the initial one aborts with EvolutionFailure
    carrying the last finite state.
    """
    if dt is None:
        dt = cfl_dt(grid, params)
    if solver is None:
        solver = StripSolver(grid, params.H, nz=nz)
    nsteps = max(1, int(round(T / dt)))
    dt = T / nsteps

    if carrier is not None and state.phi_ramp_amp != 0.0:
        cvals = state.phi_ramp_amp * carrier.sample(grid.x - center)
        cslope = state.phi_ramp_amp * carrier.sample_deriv(grid.x - center)
    else:
        cvals = np.zeros(grid.N)
        cslope = np.zeros(grid.N)

    filt = None
    if filter_params is not None:
        filt = filter_multiplier(grid, *filter_params)

    eta = state.eta.copy()
    q = state.phi_periodic.copy()
    amp = state.phi_ramp_amp
    scale0 = l2_norm(grid, eta) + l2_norm(grid, q)

    times, energies, masses, momenta = [], [], [], []

    def snapshot(t, flux=None):
        s = SurfaceState(eta.copy(), q.copy(), amp)
        c = conserved(grid, params, s, carrier, center, solver, flux=flux)
        times.append(t)
        energies.append(c["energy"])
        masses.append(c["mass"])
        momenta.append(c["momentum"])

    warm = [None]

    def f(e_, q_):
        de, dq, sol = rhs(grid, params, e_, q_, cslope, cvals, solver,
                          x0=warm[0])
        warm[0] = sol.field
        return de, dq, sol

    last_good = (eta.copy(), q.copy(), 0.0)
    if record_every:
        _, _, sol0 = f(eta, q)
        snapshot(0.0, flux=sol0.flux)

    for n in range(nsteps):
        try:
            k1e, k1q, _ = f(eta, q)
            k2e, k2q, _ = f(eta + 0.5 * dt * k1e, q + 0.5 * dt * k1q)
            k3e, k3q, _ = f(eta + 0.5 * dt * k2e, q + 0.5 * dt * k2q)
            k4e, k4q, _ = f(eta + dt * k3e, q + dt * k3q)
        except (SolverFailure, ValueError) as exc:
            # the fields were finite after the previous step, so a solver
            # refusal here means the dynamics left the model's range
            # (typically the surface approaching the bottom mid-blowup)
            st = SurfaceState(last_good[0], last_good[1], amp)
            raise EvolutionFailure(
                f"strip solve failed at step {n + 1}: {exc}; returning last "
                f"state from t = {last_good[2]:.6g}",
                st, last_good[2],
            ) from exc
        eta = eta + (dt / 6.0) * (k1e + 2 * k2e + 2 * k3e + k4e)
        q = q + (dt / 6.0) * (k1q + 2 * k2q + 2 * k3q + k4q)
        if filt is not None:
            eta = np.fft.irfft(np.fft.rfft(eta) * filt, n=grid.N)
            q = np.fft.irfft(np.fft.rfft(q) * filt, n=grid.N)
        t = (n + 1) * dt
        ok = np.all(np.isfinite(eta)) and np.all(np.isfinite(q))
        if ok:
            size = l2_norm(grid, eta) + l2_norm(grid, q)
            ok = size < blowup_factor * max(scale0, 1e-30)
        if not ok:
            st = SurfaceState(last_good[0], last_good[1], amp)
            raise EvolutionFailure(
                f"solution lost at t = {t:.6g} (step {n + 1}); returning "
                f"last finite state from t = {last_good[2]:.6g}",
                st, last_good[2],
            )
        last_good = (eta.copy(), q.copy(), t)
        if record_every and ((n + 1) % record_every == 0 or n + 1 == nsteps):
            snapshot(t)

    final = SurfaceState(eta, q, amp)
    rec = EvolutionRecord(
        times=np.asarray(times),
        energy=np.asarray(energies),
        mass=np.asarray(masses),
        momentum=np.asarray(momenta),
        steps=nsteps,
    )
    return final, rec


def trough_position(grid, eta, guess=None):
    """Location of the elevation minimum, parabolically refined.

    With a guess, the search is confined to within a quarter box of it so a
    deeper transient elsewhere cannot steal the trough.
    """
    if guess is None:
        j = int(np.argmin(eta))
    else:
        d = grid.x - guess
        d -= grid.L * np.round(d / grid.L)
        cand = np.where(np.abs(d) <= 0.25 * grid.L)[0]
        j = int(cand[np.argmin(eta[cand])])
    ym = eta[(j - 1) % grid.N]
    y0 = eta[j]
    yp = eta[(j + 1) % grid.N]
    denom = ym - 2 * y0 + yp
    delta = 0.0 if denom == 0 else 0.5 * (ym - yp) / denom
    return float(grid.x[j] + delta * grid.dx)


def fit_center(grid, eta, ref_eta, guess=None):
    """Locate the translation a maximizing sum eta(x) ref(x - a).

    Coarse argmax over the grid (or near guess), then Newton on the
    spectral derivative of the correlation; accurate to roundoff for
    smooth profiles.
    """
    fe = np.fft.rfft(eta)
    fr = np.fft.rfft(ref_eta)
    prod = fe * np.conj(fr)
    corr = np.fft.irfft(prod, n=grid.N)
    j = int(np.argmax(corr))
    a = j * grid.dx
    if guess is not None:
        # pick the periodic image nearest the guess
        a -= grid.L * np.round((a - guess) / grid.L)
    xi = grid.xi
    for _ in range(30):
        ph = np.exp(1j * xi * a)
        c1 = np.sum(np.real(prod * ph * (1j * xi)))
        c2 = np.sum(np.real(prod * ph * (1j * xi) ** 2))
        if c2 >= 0:
            break
        step = -c1 / c2
        a += step
        if abs(step) < 1e-13 * max(1.0, abs(a)):
            break
    return float(a)
