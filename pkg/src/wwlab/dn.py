"""Dirichlet-Neumann map for the finite-depth fluid strip.

The harmonic problem under the wavy surface is flattened to the fixed strip
z in [-1, 0]; the variable-coefficient form div(P grad u) = 0 (with an
optional transverse wavenumber k entering as a mass term) is discretized by
Fourier collocation in x and Chebyshev-Gauss-Lobatto collocation in z, in
weak form so the discrete surface flux inherits the symmetry of the map.
The solver is preconditioned conjugate gradients with the exact flat-surface
operator factored per Fourier mode; surfaces of interest sit close to flat,
so iteration counts stay small.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wwlab.core import diff, l2_norm


@dataclass(frozen=True)
class PhysicalParams:
    """Gravity g, surface-tension coefficient b, depth H, frame speed c."""

    g: float
    b: float
    H: float
    c: float

    def __post_init__(self):
        if min(self.g, self.H, self.c) <= 0 or self.b < 0:
            raise ValueError(f"non-physical parameters: {self}")

    @classmethod
    def from_epsilon(cls, eps, beta, g=1.0, H=1.0):
        """Parametrize by the departure-from-critical eps and the Bond-type
        ratio beta; speed and tension follow."""
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        alpha = 1.0 + eps**2
        c = float(np.sqrt(g * H / alpha))
        return cls(g=float(g), b=float(beta * H * c**2), H=float(H), c=c)

    @classmethod
    def from_speed(cls, c, b, g=1.0, H=1.0):
        return cls(g=float(g), b=float(b), H=float(H), c=float(c))

    @property
    def alpha(self):
        return self.g * self.H / self.c**2

    @property
    def epsilon(self):
        a = self.alpha
        if a <= 1.0:
            raise ValueError(f"speed {self.c} is not subcritical")
        return float(np.sqrt(a - 1.0))

    @property
    def beta(self):
        return self.b / (self.H * self.c**2)

    @property
    def kappa(self):
        """Decay rate of the small-amplitude solitary profile."""
        if self.beta <= 1.0 / 3.0:
            raise ValueError(
                f"beta = {self.beta:.6g} <= 1/3: no monotone solitary seed"
            )
        return self.epsilon / (2.0 * self.H * np.sqrt(self.beta - 1.0 / 3.0))


def cheb_nodes(nz):
    """nz+1 Chebyshev-Gauss-Lobatto nodes on [-1, 0], surface (z=0) first."""
    if nz < 2:
        raise ValueError(f"need at least 2 intervals in z, got {nz}")
    s = np.cos(np.pi * np.arange(nz + 1) / nz)
    return (s - 1.0) / 2.0


def cheb_diff(nz):
    """Differentiation matrix on cheb_nodes(nz)."""
    n = nz + 1
    s = np.cos(np.pi * np.arange(n) / nz)
    c = np.ones(n)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n)
    delta = s[:, None] - s[None, :] + np.eye(n)
    D = (c[:, None] / c[None, :]) / delta
    D -= np.diag(D.sum(axis=1))
    return 2.0 * D  # d/dz on [-1, 0] is 2 d/ds on the reference interval


def cc_weights(nz):
    """Clenshaw-Curtis quadrature weights for cheb_nodes(nz) on [-1, 0]."""
    j = np.arange(nz + 1)
    V = np.cos(np.pi * np.outer(j, j) / nz)  # T_i at the nodes, exactly
    m = np.zeros(nz + 1)
    even = j[j % 2 == 0].astype(float)
    m[j % 2 == 0] = 2.0 / (1.0 - even**2)
    return np.linalg.solve(V, m) / 2.0


def flat_symbol(xi, H, k=0.0):
    """DN symbol of the flat surface: mu tanh(H mu), mu = sqrt(xi^2 + k^2)."""
    mu = np.sqrt(np.asarray(xi, dtype=float) ** 2 + k**2)
    return mu * np.tanh(H * mu)


def _lift_profile(z, mu):
    # cosh(mu (z+1))/cosh(mu) written overflow-safe; z <= 0 <= mu.
    Z = z[:, None]
    M = mu[None, :]
    return (
        np.exp(M * Z)
        * (1.0 + np.exp(-2.0 * M * (Z + 1.0)))
        / (1.0 + np.exp(-2.0 * M))
    )


def harmonic_lift(grid, H, psi, nz=32, k=0.0):
    """Flat-bottom harmonic extension of surface data psi into the strip.

    Exact (per Fourier mode) for a flat surface; used as the initial guess
    and Dirichlet lift for the wavy solve.
    """
    z = cheb_nodes(nz)
    mu = H * np.sqrt(grid.xi**2 + k**2)
    ph = np.fft.rfft(np.asarray(psi, dtype=float))
    return np.fft.irfft(_lift_profile(z, mu) * ph[None, :], n=grid.N, axis=1)


class SolverFailure(RuntimeError):
    """Iterative strip solve stalled before reaching tolerance."""

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass
class StripSolution:
    field: np.ndarray  # (nz+1, N) potential on the strip, surface row first
    flux: np.ndarray  # DN output at the surface nodes
    iterations: int
    residual: float  # relative CG residual at exit


class StripSolver:
    """Reusable elliptic solver for one grid, depth, and transverse mode.

    Construction factors the flat-surface operator once; solve() may then be
    called with any admissible surface. The surface flux is read off the top
    row of the weak operator applied to the solved field, which keeps the
    discrete DN map symmetric to solver tolerance and annihilates constants
    exactly.
    """

    def __init__(self, grid, H, nz=32, k=0.0):
        if H <= 0:
            raise ValueError(f"depth must be positive, got {H}")
        self.grid = grid
        self.H = float(H)
        self.nz = int(nz)
        self.k = float(k)
        self.z = cheb_nodes(nz)
        self.Dz = cheb_diff(nz)
        # Galerkin products in z have degree <= 2 nz, so quadrature on the
        # doubled Chebyshev grid makes the discrete form exact; the mapped
        # interpolation matrix E evaluates coarse polynomials there.
        zf = cheb_nodes(2 * nz)
        self.zf = zf
        self.wf = cc_weights(2 * nz)
        jc = np.arange(nz + 1)
        Tc = np.cos(np.pi * np.outer(jc, jc) / nz)
        Tf = np.cos(np.pi * np.outer(np.arange(2 * nz + 1), jc) / (2 * nz))
        self.E = np.linalg.solve(Tc.T, Tf.T).T
        self.Dzf = self.E @ self.Dz
        self._Mz = self.E.T @ (self.wf[:, None] * self.E)  # exact mass
        stiff = self.Dzf.T @ (self.wf[:, None] * self.Dzf) / self.H
        self._mdx = 1j * grid.xi
        self._mdx[-1] = 0.0
        mu2 = grid.xi**2 + k**2
        mu2[-1] = k**2  # the discrete d/dx kills the Nyquist mode
        nm = mu2.size
        inv = np.empty((nm, self.nz, self.nz))
        for m in range(nm):
            M = self.H * mu2[m] * self._Mz + stiff
            inv[m] = np.linalg.inv(M[1:, 1:])
        self._Minv = inv
        self._mu = H * np.sqrt(mu2)

    def _dx(self, u):
        return np.fft.irfft(
            np.fft.rfft(u, axis=1) * self._mdx[None, :], n=self.grid.N, axis=1
        )

    def _coeffs(self, eta):
        eta = np.asarray(eta, dtype=float)
        rho = self.H + eta
        if np.min(rho) <= 0:
            raise ValueError(
                f"total depth vanishes: min(H + eta) = {np.min(rho):.3e}"
            )
        etax = diff(self.grid, eta)
        sigf = (self.zf[:, None] + 1.0) * etax[None, :]
        wf = self.wf[:, None]
        wrho = wf * rho[None, :]
        wsig = wf * sigf
        wq = wf * (1.0 + sigf**2) / rho[None, :]
        return rho, wrho, wsig, wq

    def _apply(self, u, coeffs):
        rho, wrho, wsig, wq = coeffs
        uxf = self.E @ self._dx(u)
        uzf = self.Dzf @ u
        out = -self._dx(self.E.T @ (wrho * uxf - wsig * uzf))
        out += self.Dzf.T @ (-wsig * uxf + wq * uzf)
        if self.k != 0.0:
            out += self.k**2 * rho[None, :] * (self._Mz @ u)
        return out

    def _prec(self, r):
        rh = np.fft.rfft(r, axis=1)
        stacked = np.stack([rh.real.T, rh.imag.T], axis=-1)
        sol = self._Minv @ stacked
        zh = (sol[..., 0] + 1j * sol[..., 1]).T
        return np.fft.irfft(zh, n=self.grid.N, axis=1)

    def lift(self, psi):
        ph = np.fft.rfft(np.asarray(psi, dtype=float))
        return np.fft.irfft(
            _lift_profile(self.z, self._mu) * ph[None, :],
            n=self.grid.N,
            axis=1,
        )

    def solve(self, eta, psi, tol=1e-11, maxiter=400, x0=None):
        """Solve the strip problem for surface data psi over surface eta.

        x0 warm-starts the iteration with a previously solved field (its
        surface row is ignored). Raises SolverFailure if maxiter is hit.
        """
        psi = np.asarray(psi, dtype=float)
        if psi.shape != (self.grid.N,):
            raise ValueError(f"surface data has shape {psi.shape}")
        if not np.all(np.isfinite(psi)):
            raise ValueError("non-finite surface data")
        coeffs = self._coeffs(eta)
        lift = self.lift(psi)

        def embed(v):
            full = np.empty((self.nz + 1, self.grid.N))
            full[0] = 0.0
            full[1:] = v
            return full

        b = -self._apply(lift, coeffs)[1:]
        bnorm = np.sqrt(np.dot(b.ravel(), b.ravel()))
        v = np.zeros_like(b) if x0 is None else x0[1:] - lift[1:]
        iters = 0
        rel = 0.0
        if bnorm > 0:
            r = b - self._apply(embed(v), coeffs)[1:]
            zv = self._prec(r)
            p = zv.copy()
            rz = np.dot(r.ravel(), zv.ravel())
            rel = np.sqrt(np.dot(r.ravel(), r.ravel())) / bnorm
            while rel > tol:
                if iters >= maxiter:
                    raise SolverFailure(
                        f"strip solve stalled at relative residual "
                        f"{rel:.3e} after {iters} iterations",
                        residual=rel,
                        iterations=iters,
                    )
                Ap = self._apply(embed(p), coeffs)[1:]
                alpha = rz / np.dot(p.ravel(), Ap.ravel())
                v += alpha * p
                r -= alpha * Ap
                rel = np.sqrt(np.dot(r.ravel(), r.ravel())) / bnorm
                iters += 1
                if rel <= tol:
                    break
                zv = self._prec(r)
                rz_new = np.dot(r.ravel(), zv.ravel())
                p = zv + (rz_new / rz) * p
                rz = rz_new
        field = lift
        field[1:] += v
        flux = self._apply(field, coeffs)[0]
        return StripSolution(
            field=field, flux=flux, iterations=iters, residual=rel
        )

    def dn_matrix(self, eta, tol=1e-10):
        """Dense DN matrix by columns (delta data, shift-warm-started)."""
        N = self.grid.N
        out = np.empty((N, N))
        x0 = None
        for i in range(N):
            psi = np.zeros(N)
            psi[i] = 1.0
            sol = self.solve(eta, psi, tol=tol, x0=x0)
            out[:, i] = sol.flux
            x0 = np.roll(sol.field, 1, axis=1)
        return out


def apply_dn(grid, H, eta, psi, nz=32, k=0.0, tol=1e-11):
    """One-shot DN apply; hold a StripSolver for repeated use."""
    return StripSolver(grid, H, nz=nz, k=k).solve(eta, psi, tol=tol).flux


def dn_transverse(grid, H, eta, psi, k, nz=32, tol=1e-11):
    """DN map of the transverse-mode reduction at wavenumber k."""
    return StripSolver(grid, H, nz=nz, k=k).solve(eta, psi, tol=tol).flux


def good_unknowns(grid, eta, phi_x, g_phi):
    """Vertical and tangential velocity traces (Z, v) from surface data."""
    etax = diff(grid, eta)
    Z = (g_phi + etax * phi_x) / (1.0 + etax**2)
    return Z, phi_x - Z * etax


def shape_derivative(grid, H, eta, psi, zeta, nz=32, tol=1e-11):
    """Derivative of eta -> G[eta] psi in the direction zeta.

    Uses the trace identity: the derivative equals -G[eta](zeta Z) minus
    d/dx(v zeta) with (Z, v) the good unknowns of the base solve.
    """
    solver = StripSolver(grid, H, nz=nz)
    base = solver.solve(eta, psi, tol=tol)
    Z, v = good_unknowns(grid, eta, diff(grid, psi), base.flux)
    correction = solver.solve(eta, zeta * Z, tol=tol)
    return -correction.flux - diff(grid, v * zeta)


@dataclass
class DecayFit:
    """Log-linear fit of a tail: values ~ exp(intercept + rate * x)."""

    rate: float
    intercept: float
    npoints: int
    r2: float


def fit_decay_rate(
    grid, values, window=(0.05, 0.35), floor=1e-13, min_points=8
):
    """Fit the exponential decay rate of |values| over the window
    [window[0] L, window[1] L] on the positive side, skipping entries at or
    below the floor."""
    values = np.asarray(values, dtype=float)
    lo, hi = window[0] * grid.L, window[1] * grid.L
    mask = (grid.x >= lo) & (grid.x <= hi) & (np.abs(values) > floor)
    n = int(mask.sum())
    if n < min_points:
        raise ValueError(
            f"insufficient decay data: {n} usable points in "
            f"[{lo:.3g}, {hi:.3g}] above floor {floor:.1e}"
        )
    xw = grid.x[mask]
    yw = np.log(np.abs(values[mask]))
    rate, intercept = np.polyfit(xw, yw, 1)
    resid = yw - (rate * xw + intercept)
    ss_tot = np.sum((yw - yw.mean()) ** 2)
    r2 = 1.0 - float(np.sum(resid**2) / ss_tot) if ss_tot > 0 else 1.0
    return DecayFit(
        rate=float(rate), intercept=float(intercept), npoints=n, r2=r2
    )
