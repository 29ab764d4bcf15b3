"""Reference solvers and run diagnostics.

An independent plain HLL scheme with centered gravity sources, a
discrete entropy-inequality monitor, an entropy convexity checker, and
error-norm / convergence-rate helpers. The HLL path here shares only
containers and thermodynamics with the main solver; its flux, sources
and update are written separately so the two can cross-check each other.
"""

import dataclasses

import numpy as np

from . import eos as _eos
from . import state as _st
from .fv import Field, RunStats


# -- plain HLL reference scheme ---------------------------------------------

def hll_interface_flux(eos, WL, WR, lam_factor=1.0):
    """Two-speed HLL flux through interfaces with states WL, WR.

    Returns (flux, lam) where lam is the single wave speed per interface.
    """
    uL = _st.velocity(WL)
    uR = _st.velocity(WR)
    cL = _st.sound(eos, WL)
    cR = _st.sound(eos, WR)
    lam = lam_factor * np.maximum(np.abs(uL) + cL, np.abs(uR) + cR)
    FL = _st.flux(eos, WL)
    FR = _st.flux(eos, WR)
    flux = 0.5 * (FL + FR) - 0.5 * lam[..., None] * (WR - WL)
    return flux, lam


def plain_hll_stage(eos, W_ext, phi_ext, dx, lam_factor=1.0):
    """Spatial operator of the plain HLL scheme on a ghost-padded state.

    Sources are the centered differences -rho_i (phi_{i+1}-phi_{i-1})/(2 dx)
    and -q_i (phi_{i+1}-phi_{i-1})/(2 dx). Returns (dWdt, lam_max) for the
    interior cells.
    """
    flux, lam = hll_interface_flux(eos, W_ext[1:-2], W_ext[2:-1], lam_factor)
    dphi = (phi_ext[3:-1] - phi_ext[1:-3]) / (2.0 * dx)
    dWdt = -(flux[1:] - flux[:-1]) / dx
    dWdt[:, _st.MOM] -= W_ext[2:-2, _st.RHO] * dphi
    dWdt[:, _st.ENE] -= W_ext[2:-2, _st.MOM] * dphi
    return dWdt, float(lam.max())


def plain_hll_step(eos, field, potential, boundary, dt, t=0.0,
                   lam_factor=1.0):
    """One forward-Euler step of the plain HLL scheme."""
    grid = field.grid
    W_ext = np.empty((grid.n + 4, 3))
    W_ext[2:-2] = field.W
    boundary.fill(W_ext, t)
    phi_ext = potential.at(grid.ext_centers())
    dWdt, _ = plain_hll_stage(eos, W_ext, phi_ext, grid.dx, lam_factor)
    return Field(grid=grid, W=field.W + dt * dWdt, phi=field.phi.copy())


def plain_hll_run(eos, field, potential, boundary, t_final, cfl=0.5,
                  lam_factor=1.0):
    """Advance with the plain HLL scheme to t_final (forward Euler)."""
    assert 0.0 < cfl <= 0.5
    grid = field.grid
    phi_ext = potential.at(grid.ext_centers())
    W = field.W.copy()
    stats = RunStats()
    t = 0.0
    while t < t_final - 1e-14 * max(1.0, t_final):
        W_ext = np.empty((grid.n + 4, 3))
        W_ext[2:-2] = W
        boundary.fill(W_ext, t)
        dWdt, lam_max = plain_hll_stage(eos, W_ext, phi_ext, grid.dx,
                                        lam_factor)
        dt = min(cfl * grid.dx / lam_max, t_final - t)
        assert dt > 0.0 and np.isfinite(dt)
        W = W + dt * dWdt
        t += dt
        stats.steps += 1
        stats.min_rho = min(stats.min_rho, float(W[:, _st.RHO].min()))
    stats.t_end = t
    return Field(grid=grid, W=W, phi=field.phi.copy()), stats


# -- discrete entropy inequality --------------------------------------------

@dataclasses.dataclass
class EntropyReport:
    """Per-cell residuals of the discrete entropy inequality for one step.

    violation[i] = (rho eta)_i^{n+1} - (rho eta)_i^n + nu (G_{i+1/2} -
    G_{i-1/2}), scaled; positive values mean the inequality is broken.
    """
    violations: np.ndarray
    worst: float
    worst_cell: int
    eta_name: str


def interface_entropy_flux(sol, eta):
    """Numerical entropy flux induced by the fan at each interface.

    Integrating rho eta over the half fans gives the two one-sided
    fluxes compatible with the per-cell inequality,

        G_L = q_L eta(s_L) - lam (rho*_L eta(s*) - rho_L eta(s_L)),
        G_R = q_R eta(s_R) + lam (rho*_R eta(s*) - rho_R eta(s_R)),

    and the integral entropy consistency of the fan is exactly G_R <=
    G_L, so any value between them certifies both neighbouring cells.
    The symmetric member (G_L + G_R) / 2 is returned; the interface
    value q* eta(s*) is NOT valid here, it can leave [G_R, G_L] at
    shocks and then reports spurious violations.
    """
    etaL = eta(sol.sL)
    etaR = eta(sol.sR)
    eta_star = eta(sol.s_star)
    GL = (sol.TL[..., _st.MOM] * etaL
          - sol.lam * (sol.WsL[..., _st.RHO] * eta_star
                       - sol.TL[..., _st.RHO] * etaL))
    GR = (sol.TR[..., _st.MOM] * etaR
          + sol.lam * (sol.WsR[..., _st.RHO] * eta_star
                       - sol.TR[..., _st.RHO] * etaR))
    return 0.5 * (GL + GR)


def entropy_monitor(eos, W_before, W_after, sol, dt, dx, eta,
                    eta_name="eta"):
    """Check the discrete per-cell entropy inequality across one step.

    sol holds the n+1 interface fan solutions used by the step. Residuals
    are scaled by max(1, |rho eta| before/after, nu |G| either side).
    """
    nu = dt / dx
    eta_b = W_before[:, _st.RHO] * eta(_st.entropy(eos, W_before))
    eta_a = W_after[:, _st.RHO] * eta(_st.entropy(eos, W_after))
    G = interface_entropy_flux(sol, eta)
    raw = eta_a - eta_b + nu * (G[1:] - G[:-1])
    scale = np.maximum.reduce([
        np.ones_like(raw), np.abs(eta_b), np.abs(eta_a),
        nu * np.abs(G[1:]), nu * np.abs(G[:-1])])
    violations = raw / scale
    worst_cell = int(np.argmax(violations))
    return EntropyReport(violations=violations,
                         worst=float(violations[worst_cell]),
                         worst_cell=worst_cell, eta_name=eta_name)


def compatibility_mask(eos, W_before, W_after, eta_p, eta_pp):
    """Cells whose update stencil is certified thermodynamically
    compatible: the sufficient convexity conditions hold at the cell
    and both neighbours before the step and at the cell after it.
    The inequality carries no guarantee outside this set."""
    okb = convexity_check(eos, W_before, eta_p, eta_pp, strict=False).holds
    oka = convexity_check(eos, W_after, eta_p, eta_pp, strict=False).holds
    m = okb & oka
    m[:-1] &= okb[1:]
    m[1:] &= okb[:-1]
    return m


class EntropyTracker:
    """run() callback accumulating the worst entropy violation.

    Attach to first-order runs: tracker = EntropyTracker(eos, dx, eta);
    fv.run(..., on_step=tracker). The fan solutions of the accepted
    stage-0 operator are exactly the interface states of the first-order
    update.

    When eta_p and eta_pp are given, worst is taken over the cells whose
    update stencil is certified thermodynamically compatible (the only
    cells the inequality covers); worst_any keeps the unrestricted
    maximum and n_masked counts the skipped cell-steps.
    """

    def __init__(self, eos, dx, eta, eta_name="eta", eta_p=None,
                 eta_pp=None):
        self.eos = eos
        self.dx = float(dx)
        self.eta = eta
        self.eta_name = eta_name
        self.eta_p = eta_p
        self.eta_pp = eta_pp
        self.worst = -np.inf
        self.worst_cell = -1
        self.worst_step = -1
        self.worst_any = -np.inf
        self.n_masked = 0
        self.steps = 0

    def __call__(self, W_before, W_after, sol, dt, t):
        rep = entropy_monitor(self.eos, W_before, W_after, sol, dt,
                              self.dx, self.eta, self.eta_name)
        if rep.worst > self.worst_any:
            self.worst_any = rep.worst
        if self.eta_p is None or self.eta_pp is None:
            mask = np.ones(len(rep.violations), dtype=bool)
        else:
            mask = compatibility_mask(self.eos, W_before, W_after,
                                      self.eta_p, self.eta_pp)
            self.n_masked += int((~mask).sum())
        if mask.any():
            i = int(np.argmax(np.where(mask, rep.violations, -np.inf)))
            if rep.violations[i] > self.worst:
                self.worst = float(rep.violations[i])
                self.worst_cell = i
                self.worst_step = self.steps
        self.steps += 1


# -- entropy convexity conditions -------------------------------------------

@dataclasses.dataclass
class ConvexityReport:
    """Sub-determinant convexity conditions of rho eta(s) per state.

    conditions holds the three left-hand sides (>= 0 required); holds is
    their conjunction; first_failing is the 1-based index of the first
    violated condition (0 when all hold). The conditions are sufficient
    only, so a failure reads "convexity not certified", never "non-convex".
    """
    conditions: np.ndarray
    holds: np.ndarray
    first_failing: np.ndarray


def convexity_check(eos, W, eta_p, eta_pp, strict=True):
    """Evaluate the three convexity conditions at conserved states W.

    eta_p and eta_pp are callables giving eta'(s) and eta''(s). The
    T-derivatives in (tau, e) variables come from centered finite
    differences with relative step 1e-6, matching the sound-speed probe.
    strict=False marks states whose probes leave the EOS domain as not
    certified (conditions nan) instead of raising.
    """
    W = np.asarray(W, dtype=float)
    rho = W[..., _st.RHO]
    u = _st.velocity(W)
    e = _st.internal_energy(W)
    E = W[..., _st.ENE]
    with np.errstate(all="ignore"):
        tau = 1.0 / rho

    bad = np.zeros(W.shape[:-1], dtype=bool)

    p, T, s, ok = _eos.lookup_re_masked(eos, rho, e)
    if not np.all(ok):
        if strict:
            raise _eos.EosDomainError("convexity probe outside the EOS "
                                      "domain")
        bad |= ~ok
        rho = np.where(ok, rho, 1.0)
        e = np.where(ok, e, 1.0)
        tau = np.where(ok, tau, 1.0)
        p, T, s, _ = _eos.lookup_re_masked(eos, rho, e)

    rel = 1e-6
    dtau = rel * tau
    de = rel * np.maximum(np.abs(e), 1e-8)

    def T_of(rho_v, e_v):
        nonlocal bad
        _, T_v, _, ok_v = _eos.lookup_re_masked(eos, rho_v, e_v)
        if not np.all(ok_v):
            if strict:
                raise _eos.EosDomainError(
                    "convexity derivative probe outside the EOS domain")
            bad |= ~ok_v
            T_v = np.where(ok_v, T_v, 1.0)
        return T_v

    def p_of(rho_v, e_v):
        nonlocal bad
        p_v, _, _, ok_v = _eos.lookup_re_masked(eos, rho_v, e_v)
        if not np.all(ok_v):
            if strict:
                raise _eos.EosDomainError(
                    "convexity derivative probe outside the EOS domain")
            bad |= ~ok_v
            p_v = np.where(ok_v, p_v, 1.0)
        return p_v

    dT_dtau = (T_of(1.0 / (tau + dtau), e) - T_of(1.0 / (tau - dtau), e)) \
        / (2.0 * dtau)
    dT_de = (T_of(rho, e + de) - T_of(rho, e - de)) / (2.0 * de)
    dp_dtau = (p_of(1.0 / (tau + dtau), e) - p_of(1.0 / (tau - dtau), e)) \
        / (2.0 * dtau)

    ep = eta_p(s)
    epp = eta_pp(s)

    c1 = ((-dT_dtau ** 2 + dT_de * (p * dT_dtau - T * dp_dtau)) * ep
          + (p ** 2 * dT_de - p * dT_dtau - T * dp_dtau) * epp)
    ke = 0.5 * rho * u ** 2
    c2 = ((dT_dtau * (2.0 * rho * e - rho * u ** 2)
           + dT_de * (rho * e - ke) ** 2
           + (p * dT_dtau - T * dp_dtau) + u ** 2 * rho ** 2 * T) * ep
          + (p - ke + rho * e) ** 2 * epp)
    c3 = ((u ** 2 * (-dT_dtau ** 2 + dT_de * (p * dT_dtau - T * dp_dtau))
           + T * (dT_dtau * (2.0 * E + p) + dT_de * E ** 2 - T * dp_dtau))
          * ep
          + (u ** 2 * (p ** 2 * dT_de - p * dT_dtau - T * dp_dtau)
             + T * (E + p) ** 2) * epp)

    conditions = np.stack([c1, c2, c3], axis=-1)
    if bad.any():
        conditions = np.where(bad[..., None], np.nan, conditions)
    ok3 = conditions >= 0.0
    holds = ok3.all(axis=-1)
    first = np.where(holds, 0, np.argmin(ok3, axis=-1) + 1)
    return ConvexityReport(conditions=conditions, holds=holds,
                           first_failing=first)


# -- norms and convergence rates --------------------------------------------

def error_norms(field, reference):
    """Discrete L2 norm per conserved component against a reference.

    reference is a Field on the same grid or a bare (n, 3) array.
    """
    ref = reference.W if isinstance(reference, Field) else np.asarray(
        reference, dtype=float)
    assert ref.shape == field.W.shape
    dx = field.grid.dx
    return np.sqrt((dx * (field.W - ref) ** 2).sum(axis=0))


def eoc(errors, n_cells):
    """Least-squares slope of log error against log dx."""
    errors = np.asarray(errors, dtype=float)
    n_cells = np.asarray(n_cells, dtype=float)
    assert errors.ndim == 1 and errors.shape == n_cells.shape
    assert errors.size >= 2
    assert (errors > 0.0).all() and (n_cells > 0).all()
    return float(np.polyfit(np.log(1.0 / n_cells), np.log(errors), 1)[0])
