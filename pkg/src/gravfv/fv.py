"""Finite-volume driver: grids, boundaries, reconstruction, time stepping.

Interior cells carry cell averages W = (rho, q, E) on a uniform grid
with two ghost cells per side. The first-order scheme writes, per cell,
W^{n+1} = W - dt/dx (F_+ - F_-) + dt/2 (S_- + S_+), with interface
fluxes and source averages from the fan solver. Orders 2 and 3 blend
reconstructed traces toward the cell average through a steadiness
detector so the equilibrium-preservation property survives, and use
SSP Runge-Kutta in time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as _dcfield

import numpy as np

from . import ars as _ars
from . import eos as _eos
from . import state as _st
from . import steady as _steady

__all__ = [
    "Grid1D",
    "Field",
    "SchemeConfig",
    "RunStats",
    "Boundary",
    "ExactBoundary",
    "SteadyGhostBoundary",
    "NeumannBoundary",
    "PerturbedMomentumBoundary",
    "first_order_interfaces",
    "fan_flux",
    "run",
]

# 5-point Gauss-Legendre rule on [-1, 1]
_G5_X = np.array([
    -0.9061798459386640, -0.5384693101056831, 0.0,
    0.5384693101056831, 0.9061798459386640])
_G5_W = np.array([
    0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
    0.4786286704993665, 0.2369268850561891])
# 3-point rule for the source quadrature
_G3_X = np.array([-0.7745966692414834, 0.0, 0.7745966692414834])
_G3_W = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


@dataclass(frozen=True)
class Grid1D:
    """Uniform 1D grid on [x_lo, x_hi] with n cells."""

    x_lo: float
    x_hi: float
    n: int

    def __post_init__(self):
        assert self.n >= 3 and self.x_hi > self.x_lo

    @property
    def dx(self):
        return (self.x_hi - self.x_lo) / self.n

    def centers(self):
        return self.x_lo + (np.arange(self.n) + 0.5) * self.dx

    def ext_centers(self):
        """Centers including two ghost cells per side."""
        return self.x_lo + (np.arange(-2, self.n + 2) + 0.5) * self.dx

    def interfaces(self):
        return self.x_lo + np.arange(self.n + 1) * self.dx


@dataclass
class Field:
    """Cell-average data on a grid, with cell-center potential values."""

    grid: Grid1D
    W: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        assert self.W.shape == (self.grid.n, 3)
        assert self.phi.shape == (self.grid.n,)

    def copy(self):
        return Field(grid=self.grid, W=self.W.copy(), phi=self.phi.copy())


@dataclass(frozen=True)
class SchemeConfig:
    """order 1, 2 or 3; cfl relative to dx / max lam; lam_factor scales
    the fan speed; c_theta tunes the steadiness detector threshold;
    c_tvb the reconstruction hull tolerance; source_correction enables
    the third-order source quadrature fix (needs an analytic potential
    gradient)."""

    order: int = 1
    cfl: float = 0.5
    lam_factor: float = 1.0
    c_theta: float = 1.0
    c_tvb: float = 50.0
    source_correction: bool = True

    def __post_init__(self):
        assert self.order in (1, 2, 3)
        assert 0.0 < self.cfl <= 0.5


@dataclass
class RunStats:
    steps: int = 0
    t_end: float = 0.0
    wall_time: float = 0.0
    n_fallback: int = 0
    n_reverts: int = 0
    min_rho: float = np.inf
    min_p: float = np.inf
    wave_travel: float = 0.0
    min_rho_hist: list = _dcfield(default_factory=list)
    min_p_hist: list = _dcfield(default_factory=list)


class Boundary:
    """Fills the two ghost cells on each side of an extended array."""

    def fill(self, W_ext, t):
        raise NotImplementedError


class ExactBoundary(Boundary):
    """Ghost cells are cell averages of a prescribed solution W(x, t),
    computed with a 5-point Gauss rule, at the current stage time."""

    def __init__(self, exact_fn, grid):
        self.exact_fn = exact_fn
        ext = grid.ext_centers()
        ghosts = np.concatenate([ext[:2], ext[-2:]])
        # quadrature nodes per ghost cell: (4, 5)
        self._nodes = ghosts[:, None] + 0.5 * grid.dx * _G5_X[None, :]

    def fill(self, W_ext, t):
        vals = self.exact_fn(self._nodes.ravel(), t)
        vals = vals.reshape(4, _G5_X.size, 3)
        avg = np.einsum("gk,gkc->gc", np.broadcast_to(_G5_W, (4, 5)), vals) / 2.0
        W_ext[:2] = avg[:2]
        W_ext[-2:] = avg[2:]


class SteadyGhostBoundary(Boundary):
    """Frozen ghost states, typically an equilibrium profile evaluated
    at the ghost cell centers."""

    def __init__(self, W_left, W_right):
        self.W_left = np.array(W_left, dtype=float).reshape(2, 3)
        self.W_right = np.array(W_right, dtype=float).reshape(2, 3)

    def fill(self, W_ext, t):
        W_ext[:2] = self.W_left
        W_ext[-2:] = self.W_right


class NeumannBoundary(Boundary):
    """Ghost cells copy the nearest interior cell."""

    def fill(self, W_ext, t):
        W_ext[0] = W_ext[2]
        W_ext[1] = W_ext[2]
        W_ext[-1] = W_ext[-3]
        W_ext[-2] = W_ext[-3]


class PerturbedMomentumBoundary(Boundary):
    """Steady ghosts with the momentum scaled by 1 + nu sin(kappa pi t)
    on one side ("left" or "right")."""

    def __init__(self, W_left, W_right, nu, kappa, side="right"):
        assert side in ("left", "right")
        self.base = SteadyGhostBoundary(W_left, W_right)
        self.nu = float(nu)
        self.kappa = float(kappa)
        self.side = side

    def fill(self, W_ext, t):
        self.base.fill(W_ext, t)
        fac = 1.0 + self.nu * np.sin(self.kappa * np.pi * t)
        rows = slice(0, 2) if self.side == "left" else slice(-2, None)
        W_ext[rows, _st.MOM] *= fac


def fan_flux(eos, TL, TR, sol):
    """Numerical flux: HLL flux of the traces plus the fan deviation."""
    FL = _st.flux(eos, TL)
    FR = _st.flux(eos, TR)
    lam = sol.lam[..., None]
    return (0.5 * (FL + FR) - 0.5 * lam * (sol.WsL - TL)
            + 0.5 * lam * (sol.WsR - TR))


def first_order_interfaces(eos, W_ext, phi_ext, dx, lam_factor=1.0):
    """Fan solutions at the n+1 interfaces of an extended array."""
    WL = W_ext[1:-2]
    WR = W_ext[2:-1]
    return _ars.intermediate_states(eos, WL, WR, phi_ext[1:-2],
                                    phi_ext[2:-1], dx, lam_factor)


def _minmod(a, b):
    return 0.5 * (np.sign(a) + np.sign(b)) * np.minimum(np.abs(a), np.abs(b))


def _minmod3(a, b, c):
    """Generalized minmod: common sign of all three arguments, smallest
    magnitude, zero on any sign disagreement."""
    sa = np.sign(a)
    agree = (sa == np.sign(b)) & (sa == np.sign(c))
    mag = np.minimum(np.abs(a), np.minimum(np.abs(b), np.abs(c)))
    return np.where(agree, sa * mag, 0.0)


def _detector_theta(eos, W_ext, phi_ext, dx, c_theta, refs):
    """Steadiness indicator per extended cell 1..n+2.

    err is the largest scaled equilibrium residual over the cell's
    interfaces; theta = err / (err + c_theta dx^2) is ~0 on steady data
    and ~1 elsewhere.
    """
    dq, dH, ds = _steady.iss_error(eos, W_ext[1:-2], W_ext[2:-1],
                                   phi_ext[1:-2], phi_ext[2:-1])
    q_ref, H_ref, s_ref = refs
    err_if = np.abs(dq) / q_ref + np.abs(dH) / H_ref + np.abs(ds) / s_ref
    # cells 1..n+2; cell k sees interfaces k-1 and k (clamped at the ends)
    m = W_ext.shape[0] - 2
    err = np.empty(m)
    err[0] = err_if[0]
    err[-1] = err_if[-1]
    err[1:-1] = np.maximum(err_if[:-1], err_if[1:])
    return err / (err + c_theta * dx * dx)


def _reconstruct(eos, W_ext, phi_ext, dx, config, refs):
    """Traces (TL_cell, TR_cell) for extended cells 1..n+2, plus theta
    and the revert count. TL is the value at the cell's left edge."""
    W0 = W_ext[:-2]
    W1 = W_ext[1:-1]
    W2 = W_ext[2:]
    theta = _detector_theta(eos, W_ext, phi_ext, dx, config.c_theta, refs)

    if config.order == 2:
        # generalized minmod: central slope guarded by twice the one-sided
        # differences (TVD for the factor 2, sharper than plain minmod),
        # with the usual flat-region exemption so smooth extrema are not
        # clipped to first order
        central = 0.5 * (W2 - W0)
        slope = _minmod3(2.0 * (W1 - W0), central, 2.0 * (W2 - W1))
        tol = config.c_tvb * dx * dx * np.maximum(1.0, np.abs(W1))
        slope = np.where(np.abs(central) <= tol, central, slope)
        TL = W1 - 0.5 * slope
        TR = W1 + 0.5 * slope
    else:
        TL = (2.0 * W0 + 5.0 * W1 - W2) / 6.0
        TR = (-W0 + 5.0 * W1 + 2.0 * W2) / 6.0
        lo = np.minimum(np.minimum(W0, W1), W2)
        hi = np.maximum(np.maximum(W0, W1), W2)
        tol = config.c_tvb * dx * dx * np.maximum(1.0, np.abs(W1))
        clipped = ((TL < lo - tol) | (TL > hi + tol)
                   | (TR < lo - tol) | (TR > hi + tol))
        if clipped.any():
            slope = _minmod(W1 - W0, W2 - W1)
            TL = np.where(clipped, W1 - 0.5 * slope, TL)
            TR = np.where(clipped, W1 + 0.5 * slope, TR)

    th = theta[:, None]
    TL = th * TL + (1.0 - th) * W1
    TR = th * TR + (1.0 - th) * W1

    # revert cells whose traces left the admissible set
    ok = _st.admissible_mask(eos, TL) & _st.admissible_mask(eos, TR)
    n_revert = int((~ok).sum())
    if n_revert:
        TL = np.where(ok[:, None], TL, W1)
        TR = np.where(ok[:, None], TR, W1)
    return TL, TR, theta, n_revert


def _source_correction(W1, TL, TR, theta, phi_ext, centers, dx, potential):
    """Third-order fix of the trapezoidal source quadrature, per
    interior cell, on the momentum and energy components.

    The blended parabola w(xi) = w0 + w1 xi + w2 (xi^2 - 1/12) matches
    the final traces and the cell average. The correction replaces the
    two-point trapezoid built on cell-center potential jumps by a
    3-point Gauss quadrature of -w(xi) phi'(x), gated by theta so it
    vanishes on steady data.
    """
    # interior rows of the trace arrays (cells 2..n+1 ext = rows 1..-1)
    w0 = W1[1:-1]
    L = TL[1:-1]
    R = TR[1:-1]
    th = theta[1:-1]
    w1 = R - L
    w2 = 3.0 * (L + R - 2.0 * w0)

    xi = 0.5 * _G3_X
    grad = potential.grad(centers[:, None] + xi[None, :] * dx)
    corr = np.zeros((w0.shape[0], 2))
    for comp, row in ((_st.RHO, 0), (_st.MOM, 1)):
        a0 = w0[:, comp, None]
        a1 = w1[:, comp, None]
        a2 = w2[:, comp, None]
        wxi = a0 + a1 * xi[None, :] + a2 * (xi[None, :] ** 2 - 1.0 / 12.0)
        q_gauss = -0.5 * (wxi * grad * _G3_W[None, :]).sum(axis=1)
        wl = w0[:, comp] - 0.5 * w1[:, comp] + w2[:, comp] / 6.0
        wr = w0[:, comp] + 0.5 * w1[:, comp] + w2[:, comp] / 6.0
        dphi_l = phi_ext[2:-2] - phi_ext[1:-3]
        dphi_r = phi_ext[3:-1] - phi_ext[2:-2]
        q_trap = -(wl * dphi_l + wr * dphi_r) / (2.0 * dx)
        corr[:, row] = th * (q_gauss - q_trap)
    return corr


def _trace_ok(eos, T):
    """Cells whose trace supports a full EOS evaluation: a valid
    (rho, e) point with a positive squared sound speed."""
    rho = T[:, _st.RHO]
    e = _st.internal_energy(T)
    _, _, s, ok = _eos.lookup_re_masked(eos, rho, e)
    _, okc = _eos.sound_speed_masked(eos, np.where(ok, rho, 1.0),
                                     np.where(ok, s, 0.0))
    return ok & okc


def _stage(eos, W_int, phi_ext, boundary, grid, config, t, refs,
           potential, centers):
    """One spatial-operator evaluation: returns (dW/dt, max lam,
    fallback count, revert count)."""
    n = grid.n
    dx = grid.dx
    W_ext = np.empty((n + 4, 3))
    W_ext[2:-2] = W_int
    boundary.fill(W_ext, t)

    if config.order == 1:
        sol = first_order_interfaces(eos, W_ext, phi_ext, dx,
                                     config.lam_factor)
        TLc = TRc = None
        n_revert = 0
        Fnum = fan_flux(eos, W_ext[1:-2], W_ext[2:-1], sol)
    else:
        TLc, TRc, theta, n_revert = _reconstruct(eos, W_ext, phi_ext, dx,
                                                 config, refs)
        # interface j takes the right trace of its left cell and the
        # left trace of its right cell
        WL = TRc[:-1]
        WR = TLc[1:]
        try:
            sol = _ars.intermediate_states(eos, WL, WR, phi_ext[1:-2],
                                           phi_ext[2:-1], dx,
                                           config.lam_factor)
        except _eos.EosDomainError:
            # traces can leave the hyperbolic region (c^2 <= 0) in
            # strong expansions of the non-ideal EOS even when they
            # pass the admissibility revert; drop those cells to first
            # order and retry, re-raise if the averages themselves are
            # bad
            ok = _trace_ok(eos, TLc) & _trace_ok(eos, TRc)
            if ok.all():
                raise
            TLc = np.where(ok[:, None], TLc, W_ext[1:-1])
            TRc = np.where(ok[:, None], TRc, W_ext[1:-1])
            n_revert += int((~ok).sum())
            WL = TRc[:-1]
            WR = TLc[1:]
            sol = _ars.intermediate_states(eos, WL, WR, phi_ext[1:-2],
                                           phi_ext[2:-1], dx,
                                           config.lam_factor)
        Fnum = fan_flux(eos, WL, WR, sol)

    S = np.zeros((n + 1, 3))
    S[:, _st.MOM] = sol.Sq
    S[:, _st.ENE] = sol.SE
    dWdt = -(Fnum[1:] - Fnum[:-1]) / dx + 0.5 * (S[:-1] + S[1:])

    if (config.order == 3 and config.source_correction
            and potential.grad(np.zeros(1)) is not None):
        corr = _source_correction(W_ext[1:-1], TLc, TRc, theta, phi_ext,
                                  centers, dx, potential)
        dWdt[:, _st.MOM] += corr[:, 0]
        dWdt[:, _st.ENE] += corr[:, 1]

    return dWdt, sol, float(sol.lam.max()), int(sol.fallback.sum()), n_revert


def run(eos, field, potential, boundary, config, t_final, on_step=None):
    """Advance a Field to t_final. Returns (Field, RunStats).

    on_step, if given, is called after every accepted step as
    on_step(W_old, W_new, sol0, dt, t_new) with sol0 the stage-0
    interface solution; intended for entropy monitoring of first-order
    runs and for scheme cross-checks.
    """
    grid = field.grid
    n = grid.n
    dx = grid.dx
    centers = grid.centers()
    phi_ext = potential.at(grid.ext_centers())
    assert np.allclose(phi_ext[2:-2], field.phi, rtol=0, atol=1e-13)

    W = field.W.copy()
    # detector scales from the initial data, floored at 1
    q0 = np.abs(W[:, _st.MOM]).max()
    H0 = np.abs(_st.bernoulli(eos, W, field.phi)).max()
    s0 = np.abs(_st.entropy(eos, W)).max()
    refs = (max(1.0, q0), max(1.0, H0), max(1.0, s0))

    stats = RunStats()
    carry = np.zeros_like(W)
    t = 0.0
    t_start = time.perf_counter()
    while t < t_final - 1e-14 * max(1.0, t_final):
        dWdt0, sol0, lam_max, nfb, nrv = _stage(
            eos, W, phi_ext, boundary, grid, config, t, refs,
            potential, centers)
        stats.n_fallback += nfb
        stats.n_reverts += nrv
        dt = min(config.cfl * dx / lam_max, t_final - t)
        assert dt > 0.0 and np.isfinite(dt)
        stats.wave_travel += lam_max * dt

        # increment forms of the SSP combinations: the state enters the
        # rounding once per step and a compensation carry absorbs the
        # sub-ulp residue, so steady runs do not accumulate drift
        if config.order == 1:
            inc = dt * dWdt0
        elif config.order == 2:
            W1 = W + dt * dWdt0
            dWdt1, _, _, nfb, nrv = _stage(
                eos, W1, phi_ext, boundary, grid, config, t + dt, refs,
                potential, centers)
            stats.n_fallback += nfb
            stats.n_reverts += nrv
            inc = dt * (0.5 * dWdt0 + 0.5 * dWdt1)
        else:
            W1 = W + dt * dWdt0
            dWdt1, _, _, nfb1, nrv1 = _stage(
                eos, W1, phi_ext, boundary, grid, config, t + dt, refs,
                potential, centers)
            W2 = 0.75 * W + 0.25 * (W1 + dt * dWdt1)
            dWdt2, _, _, nfb2, nrv2 = _stage(
                eos, W2, phi_ext, boundary, grid, config, t + 0.5 * dt,
                refs, potential, centers)
            inc = dt * ((dWdt0 + dWdt1 + 4.0 * dWdt2) / 6.0)
            stats.n_fallback += nfb1 + nfb2
            stats.n_reverts += nrv1 + nrv2
        y = inc - carry
        W_new = W + y
        carry = (W_new - W) - y

        p, _, _, ok = _eos.lookup_re_masked(
            eos, W_new[:, _st.RHO], _st.internal_energy(W_new))
        min_rho = float(W_new[:, _st.RHO].min())
        min_p = float(p.min()) if ok.all() else -np.inf
        stats.min_rho_hist.append(min_rho)
        stats.min_p_hist.append(min_p)
        stats.min_rho = min(stats.min_rho, min_rho)
        stats.min_p = min(stats.min_p, min_p)
        if not ok.all() or min_rho <= 0.0 or min_p <= 0.0:
            bad = np.flatnonzero(~ok | (W_new[:, _st.RHO] <= 0.0))
            raise RuntimeError(
                f"inadmissible state after step {stats.steps} at "
                f"t={t + dt:.6g} (cells {bad[:5].tolist()})")

        t += dt
        stats.steps += 1
        if on_step is not None:
            on_step(W, W_new, sol0, dt, t)
        W = W_new
    stats.t_end = t
    stats.wall_time = time.perf_counter() - t_start
    return Field(grid=grid, W=W, phi=field.phi.copy()), stats
