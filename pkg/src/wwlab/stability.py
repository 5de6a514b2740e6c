"""Linearization about a single traveling wave.

Dense assemblies of the second-variation operator in the physical
unknowns, its symmetric good-unknown form, and the transverse-wavenumber
family; spectra of the Hamiltonian products, the constrained coercivity
quotient, the neutral-mode decomposition, and direct linear evolution.

The operator coefficients are not taken verbatim from the solitary-wave
solve. The box construction pins the surface to zero under the carrier
blend and a Dirichlet-tail shadow of the blend defect rides on the
refined fields at grid scale; the capillary block amplifies that by
xi^3 and would bury the kernel identities. operator_fields() therefore
rebuilds the inputs in a steady-consistent way: the elevation is
low-passed and tapered (dropping only content far below the profile's
own spectral floor), the flux is set to its steady value -c eta_x
exactly, and the periodic potential slope is recovered by inverting the
dense surface operator. Everything downstream consumes that bundle.

Matrices act on stacked node vectors (elevation block first). Dense
assembly is deliberate: at these sizes a 2N x 2N eigensolve is cheap
and avoids iterative-eigensolver tuning around the discretized
essential spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from wwlab.core import (
    apply_multiplier,
    diff,
    l2_norm,
    p_apply,
    x0_norm,
)
from wwlab.dn import StripSolver, good_unknowns


def dispersion_symbol(params, xi):
    """Steady-frame dispersion quantity g + b xi^2 - c^2 xi / tanh(H xi).

    Positive for every xi exactly when the family is subcritical with
    strong enough surface tension (alpha > 1, beta > 1/3); that sign is
    what the coercivity argument leans on, so a non-positive value is
    rejected rather than returned.
    """
    if params.alpha <= 1.0:
        raise ValueError(
            f"alpha = {params.alpha:.6g} <= 1: supercritical speed"
        )
    if params.beta <= 1.0 / 3.0:
        raise ValueError(f"beta = {params.beta:.6g} <= 1/3")
    xi = np.asarray(xi, dtype=float)
    ax = np.abs(xi)
    ratio = np.where(
        ax > 1e-12, ax / np.tanh(params.H * np.maximum(ax, 1e-12)),
        1.0 / params.H,
    )
    m = params.g + params.b * xi**2 - params.c**2 * ratio
    if np.min(m) <= 0.0:
        j = int(np.argmin(m))
        raise ValueError(
            f"dispersion quantity dips to {m[j]:.3e} at xi = {xi[j]:.4g}"
        )
    return m


def diff_matrix(grid):
    """Spectral d/dx as a dense matrix, column-consistent with diff()."""
    eye = np.eye(grid.N)
    return np.column_stack([diff(grid, eye[:, j]) for j in range(grid.N)])


def smooth_window(grid, r0, r1, center=0.0):
    """C-infinity plateau: 1 on |x - center| < r0, 0 beyond r1."""
    from wwlab.core import _smooth_rise

    d = grid.x - center
    d -= grid.L * np.round(d / grid.L)
    t = np.clip((np.abs(d) - r0) / (r1 - r0), 0.0, 1.0)
    return 1.0 - _smooth_rise(t)


def lowpass(grid, u, cutoff_xi):
    uh = np.fft.rfft(u)
    uh[np.abs(grid.xi) > cutoff_xi] = 0.0
    return np.fft.irfft(uh, n=grid.N)


@dataclass
class OperatorInputs:
    """Steady-consistent coefficient fields plus the dense surface
    operator, shared by every assembly about the same wave."""

    grid: object
    params: object
    eta: np.ndarray
    etax: np.ndarray
    phi_x: np.ndarray
    flux: np.ndarray
    Z: np.ndarray
    v: np.ndarray
    G: np.ndarray
    Dx: np.ndarray
    nz: int = 32

    def translation_direction(self):
        """d/dx of the wave pair; discrete kernel of the second variation
        after the good-unknown change it becomes (slope, tangential
        velocity)."""
        w = np.concatenate([self.etax, self.v])
        jw = np.concatenate([self.v, -self.etax])
        return w, jw


def invert_dn(G, f, dx):
    """Solve G phi = f for the mean-zero periodic trace.

    The operator kills constants, so the one-dimensional null space is
    shifted away before factoring; f must be (numerically) mean-free.
    """
    N = G.shape[0]
    mean = abs(np.sum(f)) * dx
    scale = np.max(np.abs(f)) + 1e-300
    if mean > 1e-8 * scale:
        raise ValueError(f"flux data has mean {mean:.3e}; not invertible")
    shifted = G + np.ones((N, N)) / N
    phi = np.linalg.solve(shifted, f)
    return phi - phi.mean()


def operator_fields(wave, nz=32, cutoff_xi=6.0, taper=(0.30, 0.375),
                    dn_tol=1e-10, symmetrize_dn=True):
    """Build the coefficient bundle for the linearized operators.

    cutoff_xi and taper discard surface content that is pure box
    artifact (the true profile's spectrum is below machine precision
    there); the potential slope is reconstructed from the steady flux
    relation through the dense surface operator, so the bundle satisfies
    the traveling equations up to the wave's own approximation error and
    a dynamically irrelevant constant.
    """
    grid = wave.grid
    p = wave.params
    eta = lowpass(grid, wave.eta, cutoff_xi)
    if taper is not None:
        r0, r1 = taper
        eta = eta * smooth_window(grid, r0 * grid.L, r1 * grid.L,
                                  center=wave.center)
    solver = StripSolver(grid, p.H, nz=nz)
    G = solver.dn_matrix(eta, tol=dn_tol)
    if symmetrize_dn:
        G = 0.5 * (G + G.T)
    etax = diff(grid, eta)
    flux = -p.c * etax
    phi = invert_dn(G, flux, grid.dx)
    phi_x = diff(grid, phi)
    Z, v = good_unknowns(grid, eta, phi_x, flux)
    Dx = diff_matrix(grid)
    return OperatorInputs(grid, p, eta, etax, phi_x, flux, Z, v, G, Dx,
                          nz=nz)


@dataclass
class OperatorMatrix:
    """Dense 2N x 2N discretization with its provenance."""

    kind: str
    mat: np.ndarray
    grid: object
    params: object
    k: float | None = None

    def symmetry_defect(self):
        a = self.mat
        return float(np.max(np.abs(a - a.T)) / max(np.max(np.abs(a)), 1e-300))


def _assemble(inp, G, Z, v, speed, g, b, k=0.0, symmetrized=True):
    # shared block builder; symmetrized=True gives the good-unknown form,
    # False the physical-unknown one
    grid = inp.grid
    Dx = inp.Dx
    w3 = (1.0 + inp.etax**2) ** -1.5
    P = b * (Dx @ (w3[:, None] * Dx))
    if k:
        w1 = (1.0 + inp.etax**2) ** -0.5
        P -= b * k**2 * np.diag(w1)
    rel = v - speed
    N = grid.N
    A = np.zeros((2 * N, 2 * N))
    if symmetrized:
        A[:N, :N] = -P + g * np.eye(N) + np.diag(rel * diff(grid, Z))
        A[:N, N:] = rel[:, None] * Dx
        A[N:, :N] = -Dx * rel[None, :]
        A[N:, N:] = G
    else:
        A[:N, :N] = (-P + g * np.eye(N) + (Z[:, None] * G) * Z[None, :]
                     + np.diag(Z * diff(grid, v)))
        A[:N, N:] = rel[:, None] * Dx - Z[:, None] * G
        A[N:, :N] = -Dx * rel[None, :] - G * Z[None, :]
        A[N:, N:] = G
    return A


def hessian_matrix(inp):
    """Second variation of the constrained energy in the physical
    unknowns."""
    p = inp.params
    A = _assemble(inp, inp.G, inp.Z, inp.v, p.c, p.g, p.b,
                  symmetrized=False)
    return OperatorMatrix("hessian", A, inp.grid, p)


def good_unknown_matrix(inp, scaled=False):
    """Symmetric form of the linearization after the good-unknown change.

    scaled=True assembles in the dimensionless variables (unit depth and
    speed, coefficients alpha and beta); requires H = 1.
    """
    p = inp.params
    if scaled:
        if abs(p.H - 1.0) > 1e-14:
            raise ValueError("scaled assembly requires unit depth")
        A = _assemble(inp, inp.G, inp.Z / p.c, inp.v / p.c, 1.0,
                      p.alpha, p.beta, symmetrized=True)
        return OperatorMatrix("good-unknown-scaled", A, inp.grid, p)
    A = _assemble(inp, inp.G, inp.Z, inp.v, p.c, p.g, p.b,
                  symmetrized=True)
    return OperatorMatrix("good-unknown", A, inp.grid, p)


def transverse_matrix(inp, k, dn_tol=1e-10, symmetrize_dn=True):
    """Linearized operator at transverse wavenumber k, scaled variables.

    The surface-operator block comes from the transverse strip solver, a
    different code path from the longitudinal one, so the k = 0 agreement
    with good_unknown_matrix(scaled=True) is a genuine cross-check.
    """
    grid = inp.grid
    p = inp.params
    if abs(p.H - 1.0) > 1e-14:
        raise ValueError("transverse assembly requires unit depth")
    solver = StripSolver(grid, p.H, nz=inp.nz, k=float(k))
    Gk = solver.dn_matrix(inp.eta, tol=dn_tol)
    if symmetrize_dn:
        Gk = 0.5 * (Gk + Gk.T)
    A = _assemble(inp, Gk, inp.Z / p.c, inp.v / p.c, 1.0,
                  p.alpha, p.beta, k=float(k), symmetrized=True)
    return OperatorMatrix("transverse", A, inp.grid, p, k=float(k))


def hessian_apply(inp, u1, u2, solver=None, tol=1e-11):
    """Matrix-free action of the physical-unknown second variation.

    Surface-operator images come from fresh strip solves rather than the
    stored dense matrix, so agreement with hessian_matrix is a check of
    the column assembly, not a tautology.
    """
    grid = inp.grid
    p = inp.params
    if solver is None:
        solver = StripSolver(grid, p.H, nz=inp.nz)
    Z, v = inp.Z, inp.v
    w3 = (1.0 + inp.etax**2) ** -1.5
    g_u2 = solver.solve(inp.eta, u2, tol=tol).flux
    g_zu1 = solver.solve(inp.eta, Z * u1, tol=tol).flux
    rel = v - p.c
    w1 = (
        -p.b * diff(grid, w3 * diff(grid, u1))
        + p.g * u1
        + Z * g_zu1
        + Z * diff(grid, v) * u1
        + rel * diff(grid, u2)
        - Z * g_u2
    )
    w2 = -diff(grid, rel * u1) - g_zu1 + g_u2
    return w1, w2


def good_unknown_transform(inp):
    """The lower-triangular change of variables and its inverse."""
    N = inp.grid.N
    R = np.eye(2 * N)
    R[N:, :N] = -np.diag(inp.Z)
    Rinv = np.eye(2 * N)
    Rinv[N:, :N] = np.diag(inp.Z)
    return R, Rinv


def conjugation_defect(sym_op, hess_op, inp):
    """Relative mismatch between the direct symmetric assembly and the
    transform-conjugated second variation; an algebraic identity up to
    aliasing of the coefficient products."""
    _, Rinv = good_unknown_transform(inp)
    via = Rinv.T @ hess_op.mat @ Rinv
    scale = np.max(np.abs(sym_op.mat))
    return float(np.max(np.abs(sym_op.mat - via)) / scale)


def family_derivative_fields(wave, deps=1e-3, tol=1e-10, nz=32,
                             cutoff_xi=6.0, taper=(0.30, 0.375)):
    """Centered speed derivative of the steady-consistent pair.

    Re-solves the family neighbors, rebuilds each through the same
    cleaning pipeline, and differences (elevation, potential trace) in c.
    Both slots are periodic here: the potential comes from the surface
    operator's inverse, which carries no ramp.
    """
    from wwlab.solitary import _resolve_neighbor, family_neighbor_params

    rows = []
    for sgn in (+1, -1):
        p2 = family_neighbor_params(wave.params, sgn * deps)
        w2 = _resolve_neighbor(wave, p2, tol=tol)
        f2 = operator_fields(w2, nz=nz, cutoff_xi=cutoff_xi, taper=taper)
        phi2 = invert_dn(f2.G, f2.flux, f2.grid.dx)
        rows.append((f2.eta, phi2, p2.c))
    (ep, pp, cp), (em, pm, cm) = rows
    dc = cp - cm
    return (ep - em) / dc, (pp - pm) / dc


def energy_gram(grid):
    """Quadratic form of the linearized energy norm on stacked vectors.

    Block one is the H1 form. Block two applies the squared modulus of
    the smoothing-derivative symbol directly (rather than squaring the
    odd operator, whose discrete Nyquist entry is forced to zero and
    would fake a second null direction); its only null vector is the
    constant, and every eigensolve here quotients that direction first.
    """
    N = grid.N
    Dx = diff_matrix(grid)
    xi = grid.xi
    m2 = xi**2 / np.sqrt(1.0 + xi**2)
    eye = np.eye(N)
    M2 = np.column_stack(
        [apply_multiplier(grid, m2, eye[:, j]) for j in range(N)]
    )
    B = np.zeros((2 * N, 2 * N))
    B[:N, :N] = grid.dx * (eye + Dx.T @ Dx)
    B[N:, N:] = grid.dx * M2
    return 0.5 * (B + B.T)


def stacked_norm(grid, U):
    N = grid.N
    return x0_norm(grid, U[:N], U[N:])


def hamiltonian_matrix(op):
    """J times the assembled operator (the evolution generator)."""
    N = op.grid.N
    return np.vstack([op.mat[N:], -op.mat[:N]])


@dataclass
class SpectrumResult:
    values: np.ndarray
    k: float | None
    N: int
    vectors: np.ndarray | None = None

    def symmetry_defect(self):
        """Distance of the eigenvalue set from its own negation."""
        vals = self.values
        scale = max(np.max(np.abs(vals)), 1e-300)
        d = np.abs(vals[:, None] + vals[None, :]).min(axis=1)
        return float(np.max(d) / scale)

    def max_real(self):
        return float(np.max(self.values.real))


def hamiltonian_spectrum(op, vectors=False):
    JA = hamiltonian_matrix(op)
    if vectors:
        vals, vecs = scipy.linalg.eig(JA)
        return SpectrumResult(vals, op.k, op.grid.N, vecs)
    vals = scipy.linalg.eigvals(JA)
    return SpectrumResult(vals, op.k, op.grid.N)


def unstable_real_eigenvalue(values, real_tol=1e-6, floor=1e-8):
    """Largest real positive eigenvalue, or 0.0 when none stands out.

    Complex pairs off the axis are discretization artifacts here (the
    genuine unstable mode is real); they are excluded by the imaginary
    cut and left to the refinement filter.
    """
    scale = max(np.max(np.abs(values)), 1e-300)
    keep = (np.abs(values.imag) <= real_tol * scale) & (values.real > floor)
    if not np.any(keep):
        return 0.0
    return float(np.max(values.real[keep]))


@dataclass
class StableDecomposition:
    alpha: float
    beta: float
    v1: np.ndarray
    v2: np.ndarray
    u1: np.ndarray
    u2: np.ndarray


def stable_decomposition(u1, u2, inp):
    """Split a perturbation into the two neutral directions plus a rest
    term orthogonal to both constraint functionals."""
    grid = inp.grid
    dx = grid.dx
    w, jw = inp.translation_direction()
    etax = inp.etax
    n_eta = dx * np.dot(etax, etax)
    if n_eta < 1e-28:
        raise ValueError("degenerate wave: zero slope norm")
    U = np.concatenate([u1, u2])
    alpha = dx * np.dot(U, jw) / (dx * np.dot(jw, jw))
    # pairing the reconstruction against (slope, 0) isolates beta: the
    # J-rotated direction contributes through its first component only
    beta = (dx * np.dot(u1, etax) - alpha * dx * np.dot(jw[:grid.N], etax)) \
        / n_eta
    V = U - alpha * jw - beta * w
    return StableDecomposition(float(alpha), float(beta),
                               V[:grid.N], V[grid.N:], u1, u2)


def _quotient_basis(rows):
    return scipy.linalg.null_space(np.vstack(rows))


def coercivity_rayleigh(op, inp, gram=None):
    """Smallest value of the energy quotient on the constrained subspace.

    Constraints: orthogonality to the J-rotated translation direction, to
    the wave slope in the first component, and to the constant direction
    the energy form cannot see. Returns (value, minimizer).
    """
    grid = op.grid
    N = grid.N
    if gram is None:
        gram = energy_gram(grid)
    _, jw = inp.translation_direction()
    rows = [
        jw,
        np.concatenate([inp.etax, np.zeros(N)]),
        np.concatenate([np.zeros(N), np.ones(N)]),
    ]
    Q = _quotient_basis(rows)
    A = Q.T @ op.mat @ Q
    B = Q.T @ gram @ Q
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    bmin = float(np.min(scipy.linalg.eigvalsh(B)))
    if bmin <= 0.0:
        raise RuntimeError(
            f"energy metric lost definiteness on the constrained subspace "
            f"(min eigenvalue {bmin:.3e})"
        )
    vals, vecs = scipy.linalg.eigh(A, B)
    minimizer = Q @ vecs[:, 0]
    return float(vals[0]), minimizer


def nonpositive_count(op, gram=None, tol=0.0):
    """Number of nonpositive energy-metric eigenvalues after quotienting
    the constant direction; the wave should show at most two."""
    grid = op.grid
    N = grid.N
    if gram is None:
        gram = energy_gram(grid)
    rows = [np.concatenate([np.zeros(N), np.ones(N)])]
    Q = _quotient_basis(rows)
    A = Q.T @ op.mat @ Q
    B = Q.T @ gram @ Q
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    vals = scipy.linalg.eigh(A, B, eigvals_only=True)
    return int(np.sum(vals <= tol)), vals


@dataclass
class LinearTrajectory:
    times: np.ndarray
    norms: np.ndarray
    final: np.ndarray
    c_measured: float
    late_exponent: float


def evolve_linear(op, U0, T, dt=None, sample_every=1):
    """March dU/dt = J A U with RK4 and record the energy-norm history.

    c_measured is the largest ratio |U(t)| / ((1 + t) |U0|) along the
    trajectory; late_exponent the log-log slope of the norm over the
    second half of the samples.
    """
    grid = op.grid
    JA = hamiltonian_matrix(op)
    if dt is None:
        rho = float(np.max(np.abs(scipy.linalg.eigvals(JA))))
        dt = 2.5 / max(rho, 1e-12)
    nsteps = max(1, int(np.ceil(T / dt)))
    dt = T / nsteps
    U = np.asarray(U0, dtype=float).copy()
    n0 = stacked_norm(grid, U)
    if n0 <= 0:
        raise ValueError("zero initial data")
    times = [0.0]
    norms = [n0]
    for n in range(nsteps):
        k1 = JA @ U
        k2 = JA @ (U + 0.5 * dt * k1)
        k3 = JA @ (U + 0.5 * dt * k2)
        k4 = JA @ (U + dt * k3)
        U = U + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(U)):
            raise RuntimeError(
                f"linear evolution lost finiteness at step {n + 1}"
            )
        if (n + 1) % sample_every == 0 or n + 1 == nsteps:
            times.append((n + 1) * dt)
            norms.append(stacked_norm(grid, U))
    times = np.asarray(times)
    norms = np.asarray(norms)
    c_meas = float(np.max(norms / ((1.0 + times) * n0)))
    half = len(times) // 2
    tt, nn = times[half:], norms[half:]
    good = tt > 0
    slope = float(np.polyfit(np.log(tt[good]), np.log(nn[good]), 1)[0])
    return LinearTrajectory(times, norms, U, c_meas, slope)


@dataclass
class TransverseBranch:
    ks: np.ndarray
    sigma: np.ndarray
    sigma_refined: np.ndarray
    converged: np.ndarray
    spectra: list = field(default_factory=list)


def transverse_scan(inp, inp_fine, ks, move_tol=0.10,
                    real_tol=1e-6, floor=1e-8, keep_spectra=False):
    """Trace the real unstable eigenvalue across transverse wavenumbers.

    Each candidate is recomputed on the finer bundle (1.5x the nodes) and
    accepted only if it moves by less than move_tol; modes that fail are
    discretization artifacts of the essential spectrum's periodic
    surrogate. A branch value of zero means no admissible eigenvalue.
    """
    ks = np.asarray(ks, dtype=float)
    sig = np.zeros_like(ks)
    sig_f = np.zeros_like(ks)
    conv = np.zeros(ks.shape, dtype=bool)
    spectra = []
    for i, k in enumerate(ks):
        op = transverse_matrix(inp, k)
        sp = hamiltonian_spectrum(op)
        sig[i] = unstable_real_eigenvalue(sp.values, real_tol, floor)
        opf = transverse_matrix(inp_fine, k)
        spf = hamiltonian_spectrum(opf)
        sig_f[i] = unstable_real_eigenvalue(spf.values, real_tol, floor)
        if sig[i] <= floor and sig_f[i] <= floor:
            conv[i] = True
        else:
            conv[i] = abs(sig[i] - sig_f[i]) <= move_tol * max(sig[i], floor)
        if keep_spectra:
            spectra.append(sp)
    return TransverseBranch(ks, sig, sig_f, conv, spectra)
