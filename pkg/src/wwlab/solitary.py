"""Solitary traveling waves of the gravity-capillary system on a box.

The velocity potential of a solitary wave tends to distinct constants at the
two infinities, which no periodic function can represent: the far-field part
rides on a RampCarrier, and the periodic remainder plus the elevation are
solved for. The traveling equations are enforced on the window |x| < 0.4 L
only, with the unknowns pinned to zero at the nodes the carrier blend
occupies; the blend's descent back to zero is not part of any traveling
wave, carries an O(amplitude) defect, and is reported separately
(box_defect) so it is never mistaken for solver error. Elevation is even
and the potential odd about the wave center, and the Newton system is
reduced to the symmetric subspace, which also removes the translation and
potential-shift degeneracies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wwlab.core import RampCarrier, SurfaceState, diff, make_grid, shift
from wwlab.dn import PhysicalParams, StripSolver


class NewtonFailure(RuntimeError):
    """Newton refinement diverged or ran out of iterations.

    Carries the last iterate (eta, q) and the residual-norm history so the
    caller can dump them for inspection.
    """

    def __init__(self, message, eta, q, history):
        super().__init__(message)
        self.eta = eta
        self.q = q
        self.history = history


@dataclass
class SolitaryWave:
    """A refined traveling wave together with its construction record."""

    params: PhysicalParams
    grid: object
    carrier: RampCarrier
    center: float
    eta: np.ndarray
    q: np.ndarray  # periodic part of the potential trace
    amp: float  # carrier multiple: phi = q + amp * S(x - center)
    residual_norm: float  # window norm of the traveling residual
    box_defect: float  # residual norm outside the window (blend region)
    window: float = 0.4

    def surface_state(self):
        return SurfaceState(
            eta=self.eta.copy(),
            phi_periodic=self.q.copy(),
            phi_ramp_amp=self.amp,
        )

    def phi_x(self):
        """d/dx of the full potential trace (periodic array)."""
        return diff(self.grid, self.q) + self.amp * self.carrier.sample_deriv(
            self.grid.x - self.center
        )

    def translated(self, a):
        """The same wave centered at center + a (spectral translation)."""
        return SolitaryWave(
            params=self.params,
            grid=self.grid,
            carrier=self.carrier,
            center=self.center + a,
            eta=shift(self.grid, self.eta, a),
            q=shift(self.grid, self.q, a),
            amp=self.amp,
            residual_norm=self.residual_norm,
            box_defect=self.box_defect,
            window=self.window,
        )


def seed_amplitude(params):
    """Far-field potential amplitude of the small-amplitude profile.

    Negative for a rightward depression wave: mass conservation ties the
    horizontal velocity under the trough to the elevation, phi_x ~ (c/H) eta
    with eta < 0, so the potential descends across the core.
    """
    return (
        -2.0
        * params.epsilon
        * np.sqrt(params.beta - 1.0 / 3.0)
        * params.c
        * params.H
    )


def asymptotic_profile(grid, params, carrier):
    """Small-amplitude seed centered at x = 0: even sech^2 elevation, odd
    tanh-like potential written as carrier plus windowed periodic part."""
    eps, H, kap = params.epsilon, params.H, params.kappa
    amp = seed_amplitude(params)
    xp = grid.x[grid.N // 2 :]  # x >= 0
    eta_pos = -(eps**2) * H / np.cosh(kap * xp) ** 2
    q_pos = amp * (np.tanh(kap * xp) - carrier.sample(xp))
    win = np.abs(grid.x) < 0.4 * grid.L
    eta = _embed_even(grid, eta_pos)
    q = _embed_odd(grid, q_pos)
    eta[~win] = 0.0
    q[~win] = 0.0
    return eta, q, amp


def _embed_even(grid, vals_pos):
    # vals_pos holds x = 0 .. L/2 - dx; even reflection fills x < 0
    N = grid.N
    out = np.empty(N)
    out[N // 2 :] = vals_pos
    out[1 : N // 2] = vals_pos[1:][::-1]
    out[0] = 0.0  # x = -L/2, outside any window; pinned later anyway
    return out


def _embed_odd(grid, vals_pos):
    N = grid.N
    out = np.empty(N)
    out[N // 2 :] = vals_pos
    out[1 : N // 2] = -vals_pos[1:][::-1]
    out[0] = 0.0
    return out


def traveling_residual(
    grid, params, carrier, eta, q, amp, center=0.0, solver=None, x0=None,
    tol=1e-11,
):
    """Residual of the steady equations in the frame moving at params.c.

    Returns (r1, r2, strip_solution): r1 is the kinematic residual
    G[eta] phi + c eta_x, r2 the Bernoulli residual including surface
    tension.
    """
    if solver is None:
        solver = StripSolver(grid, params.H)
    g, b, c = params.g, params.b, params.c
    psi = q + amp * carrier.sample(grid.x - center)
    phix = diff(grid, q) + amp * carrier.sample_deriv(grid.x - center)
    sol = solver.solve(eta, psi, tol=tol, x0=x0)
    etax = diff(grid, eta)
    r1 = sol.flux + c * etax
    xi_sq = (sol.flux + phix * etax) ** 2 / (1.0 + etax**2)
    curv = diff(grid, etax / np.sqrt(1.0 + etax**2))
    r2 = c * phix - 0.5 * phix**2 + 0.5 * xi_sq - g * eta + b * curv
    return r1, r2, sol


def split_norms(grid, r1, r2, window=0.4, center=0.0):
    """(window, complement) energy norms of a residual pair."""
    d = grid.x - center
    d -= grid.L * np.round(d / grid.L)
    win = np.abs(d) < window * grid.L
    dx = grid.dx

    def enorm(mask):
        a = float(np.sqrt(dx * np.sum(r1[mask] ** 2)))
        bquad = float(np.sqrt(dx * np.sum(r2[mask] ** 2)))
        return a + bquad

    return enorm(win), enorm(~win)


def refine_newton(
    grid,
    params,
    carrier,
    eta0,
    q0,
    amp,
    window=0.4,
    tol=1e-10,
    maxiter=8,
    fd_step=1e-7,
    dn_tol=1e-11,
    nz=32,
):
    """Refine a symmetric seed to a traveling wave by pinned-window Newton.

    Unknowns are the even elevation and odd periodic potential values on the
    window nodes; the Bernoulli residual is collocated at the even nodes and
    the kinematic residual at the odd ones, giving a square system. The
    Jacobian is one-sided finite differences with warm-started strip solves.
    """
    N = grid.N
    solver = StripSolver(grid, params.H, nz=nz)
    x = grid.x
    win = np.abs(x) < window * grid.L
    pos_even = np.where(win & (x >= 0))[0]  # includes x = 0
    pos_odd = np.where(win & (x > 0))[0]
    mirror = (-np.arange(N)) % N

    sym_err = max(
        np.max(np.abs(eta0 - eta0[mirror])), np.max(np.abs(q0 + q0[mirror]))
    )
    if sym_err > 1e-12 * max(1.0, np.max(np.abs(q0))):
        raise ValueError(f"seed breaks the assumed parity by {sym_err:.3e}")

    def unpack(u):
        eta = np.zeros(N)
        q = np.zeros(N)
        eta[pos_even] = u[: pos_even.size]
        eta[mirror[pos_even]] = u[: pos_even.size]
        q[pos_odd] = u[pos_even.size :]
        q[mirror[pos_odd]] = -u[pos_even.size :]
        return eta, q

    def collocate(r1, r2):
        return np.concatenate([r2[pos_even], r1[pos_odd]])

    u = np.concatenate([eta0[pos_even], q0[pos_odd]])
    eta, q = unpack(u)
    r1, r2, sol = traveling_residual(
        grid, params, carrier, eta, q, amp, solver=solver, tol=dn_tol
    )
    R = collocate(r1, r2)
    wnorm, _ = split_norms(grid, r1, r2, window=window)
    history = [wnorm]
    grown = 0
    ndof = u.size
    for _ in range(maxiter):
        if wnorm <= tol:
            break
        J = np.empty((ndof, ndof))
        h = fd_step * max(1.0, float(np.max(np.abs(u))))
        for col in range(ndof):
            up = u.copy()
            up[col] += h
            eta_p, q_p = unpack(up)
            r1p, r2p, _ = traveling_residual(
                grid,
                params,
                carrier,
                eta_p,
                q_p,
                amp,
                solver=solver,
                x0=sol.field,
                tol=dn_tol,
            )
            J[:, col] = (collocate(r1p, r2p) - R) / h
        u = u + np.linalg.solve(J, -R)
        eta, q = unpack(u)
        r1, r2, sol = traveling_residual(
            grid, params, carrier, eta, q, amp,
            solver=solver, x0=sol.field, tol=dn_tol,
        )
        R = collocate(r1, r2)
        wnorm, _ = split_norms(grid, r1, r2, window=window)
        grown = grown + 1 if wnorm > history[-1] else 0
        history.append(wnorm)
        if grown >= 3:
            raise NewtonFailure(
                f"no convergence: residual grew 3 times in a row, "
                f"history {[f'{v:.2e}' for v in history]}",
                eta, q, history,
            )
    else:
        if wnorm > tol:
            raise NewtonFailure(
                f"no convergence after {maxiter} iterations, residual "
                f"{wnorm:.3e} (target {tol:.1e})",
                eta, q, history,
            )
    wn, bd = split_norms(grid, r1, r2, window=window)
    return SolitaryWave(
        params=params,
        grid=grid,
        carrier=carrier,
        center=0.0,
        eta=eta,
        q=q,
        amp=amp,
        residual_norm=wn,
        box_defect=bd,
        window=window,
    )


def solve_wave(params, L, N, nz=32, window=0.4, tol=1e-10, maxiter=8):
    """Grid, carrier, seed, and Newton refinement in one call."""
    grid = make_grid(L, N)
    carrier = RampCarrier(L=float(L), w=float(L) / 20.0)
    eta0, q0, amp = asymptotic_profile(grid, params, carrier)
    return refine_newton(
        grid, params, carrier, eta0, q0, amp,
        window=window, tol=tol, maxiter=maxiter, nz=nz,
    )


@dataclass
class SpeedDerivative:
    """d/dc of the wave family at fixed (g, b, H); the potential part is
    q + amp * S, so amp rides along as a carrier coefficient."""

    eta: np.ndarray
    q: np.ndarray
    amp: float


def family_neighbor_params(params, deps):
    """Parameters of the family member at epsilon + deps, holding the
    physical constants (g, b, H) fixed so only the speed moves."""
    eps = params.epsilon + deps
    c = float(np.sqrt(params.g * params.H / (1.0 + eps**2)))
    return PhysicalParams.from_speed(c, params.b, g=params.g, H=params.H)


def speed_derivative(wave, deps=1e-3, tol=1e-10):
    """Centered difference of the wave family with respect to c."""
    pp = family_neighbor_params(wave.params, +deps)
    pm = family_neighbor_params(wave.params, -deps)
    wp = _resolve_neighbor(wave, pp, tol)
    wm = _resolve_neighbor(wave, pm, tol)
    dc = wp.params.c - wm.params.c
    return SpeedDerivative(
        eta=(wp.eta - wm.eta) / dc,
        q=(wp.q - wm.q) / dc,
        amp=(wp.amp - wm.amp) / dc,
    )


def _resolve_neighbor(wave, nparams, tol):
    carrier = wave.carrier
    grid = wave.grid
    eta0, q0, amp = asymptotic_profile(grid, nparams, carrier)
    # start from the refined wave, corrected by the drift of the seed family
    own0, ownq0, _ = asymptotic_profile(grid, wave.params, carrier)
    eta_seed = wave.eta + (eta0 - own0)
    q_seed = wave.q + (q0 - ownq0)
    return refine_newton(
        grid, nparams, carrier, eta_seed, q_seed, amp,
        window=wave.window, tol=tol,
    )


def momentum(wave):
    """Impulse integral of elevation against the full potential slope."""
    return float(wave.grid.dx * np.sum(wave.eta * wave.phi_x()))


def grillakis_sign(wave, deps=1e-3, tol=1e-10):
    """Centered d/dc of the impulse along the family; negative on the
    small-amplitude branch."""
    pp = family_neighbor_params(wave.params, +deps)
    pm = family_neighbor_params(wave.params, -deps)
    wp = _resolve_neighbor(wave, pp, tol)
    wm = _resolve_neighbor(wave, pm, tol)
    return (momentum(wp) - momentum(wm)) / (wp.params.c - wm.params.c)
