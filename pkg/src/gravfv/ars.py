"""Approximate interface solver with gravity source terms.

A two-speed relaxation fan (speeds -lam, +lam) carries two intermediate
states. Discrete source averages Sq, SE enter the fan so that, when the
two cells sit on the same moving equilibrium (equal mass flux, entropy,
and total enthalpy H = h + phi), the fan returns the cell states
unchanged and the interface is exactly stationary. A smooth detector
psi built from the jumps [phi] and [h] switches the equilibrium
corrections off away from steady data (on any equilibrium [h] = -[phi],
which psi maps to 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import eos as _eos
from . import state as _st

__all__ = [
    "EPS0",
    "cutoff",
    "psi",
    "wave_speed",
    "hll_state",
    "hll_entropy_density",
    "InterfaceSolution",
    "intermediate_states",
]

EPS0 = 1e-12


def cutoff(eps, z):
    """C2 regularized max(eps, z): eps below eps/2, z above 3 eps/2,
    a quartic blend between."""
    z = np.asarray(z, dtype=float)
    P = (-z ** 4 / (2.0 * eps ** 3) + 2.0 * z ** 3 / eps ** 2
         - 9.0 * z ** 2 / (4.0 * eps) + z + 27.0 * eps / 32.0)
    return np.where(z < 0.5 * eps, eps, np.where(z > 1.5 * eps, z, P))


def _psi1(z):
    # sin form of cos(pi z / 2): exactly 0 at |z| = 1, exactly 1 at 0
    return np.sin(0.5 * np.pi * (1.0 - np.abs(z))) * np.exp(-2.0 * z ** 2)


def psi(x, y, alpha=1):
    """Steady-interface detector: 1 iff x = -y, 0 when one argument is
    zero and the other exceeds 3 eps0 / 2, C2 everywhere, |psi| <= 1."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z2 = (x + y) / cutoff(EPS0, np.hypot(x, y))
    return _psi1(z2) ** alpha


def wave_speed(eos, WL, WR, lam_factor=1.0):
    """lam = Lambda max(|uL| + cL, |uR| + cR) per interface."""
    uL = _st.velocity(WL)
    uR = _st.velocity(WR)
    cL = _st.sound(eos, WL)
    cR = _st.sound(eos, WR)
    return lam_factor * np.maximum(np.abs(uL) + cL, np.abs(uR) + cR)


def hll_state(WL, WR, FL, FR, lam):
    return 0.5 * (WL + WR) - (FR - FL) / (2.0 * lam[..., None])


def hll_entropy_density(eos, WL, WR, lam, eta):
    """HLL average of rho eta(s), with entropy flux q eta(s)."""
    sL = _st.entropy(eos, WL)
    sR = _st.entropy(eos, WR)
    rhoetaL = WL[..., _st.RHO] * eta(sL)
    rhoetaR = WR[..., _st.RHO] * eta(sR)
    fL = WL[..., _st.MOM] * eta(sL)
    fR = WR[..., _st.MOM] * eta(sR)
    return 0.5 * (rhoetaL + rhoetaR) - (fR - fL) / (2.0 * lam)


@dataclass
class InterfaceSolution:
    """Fan data at a batch of interfaces.

    WsL / WsR are the states adjacent to the left / right wave, Sq and
    SE the discrete momentum and energy source averages, s_star the fan
    entropy, fallback marks interfaces reduced to a plain HLL fan.
    TL / TR are the traced outer states the fan was solved from and
    sL / sR their entropies; entropy diagnostics need them.
    """

    lam: np.ndarray
    W_hll: np.ndarray
    WsL: np.ndarray
    WsR: np.ndarray
    Sq: np.ndarray
    SE: np.ndarray
    s_star: np.ndarray
    fallback: np.ndarray
    TL: np.ndarray
    TR: np.ndarray
    sL: np.ndarray
    sR: np.ndarray


def wb_source_epsilon(eos, WL, WR, s_bar=None, p_bar=None):
    """Second-order correction coefficient of the momentum source.

    eps = -alpha_rho (e(rho_R, s_bar) - e(rho_L, s_bar) + p_bar [tau])
    with s_bar the mean entropy; third order in the state jump on smooth
    data, zero where the entropy inversion fails. s_bar and p_bar may be
    passed in when the caller already has them.
    """
    WL = np.asarray(WL, dtype=float)
    WR = np.asarray(WR, dtype=float)
    rhoL = WL[..., _st.RHO]
    rhoR = WR[..., _st.RHO]
    with np.errstate(all="ignore"):
        if s_bar is None:
            s_bar = 0.5 * (_st.entropy(eos, WL) + _st.entropy(eos, WR))
        if p_bar is None:
            p_bar = 0.5 * (_st.pressure(eos, WL) + _st.pressure(eos, WR))
        alpha_rho = 2.0 * rhoL * rhoR / (rhoL + rhoR)
        ebarL, okL = _eos.energy_rs_masked(eos, rhoL, s_bar)
        ebarR, okR = _eos.energy_rs_masked(eos, rhoR, s_bar)
        eps = -alpha_rho * (ebarR - ebarL
                            + p_bar * (1.0 / rhoR - 1.0 / rhoL))
    return np.where(okL & okR, eps, 0.0)


def intermediate_states(eos, WL, WR, phiL, phiR, dx, lam_factor=1.0):
    """Solve the interface fans for arrays of left/right states.

    WL, WR: (m, 3). phiL, phiR: (m,) cell-center potential values.
    Inputs must be admissible states. Interfaces where the equilibrium
    reconstruction is not computable (nonpositive density, EOS domain
    or inversion failure) fall back to the plain HLL fan with zero
    sources; the fallback mask reports them.
    """
    WL = np.asarray(WL, dtype=float)
    WR = np.asarray(WR, dtype=float)
    phiL = np.asarray(phiL, dtype=float)
    phiR = np.asarray(phiR, dtype=float)
    assert WL.shape == WR.shape and WL.shape[-1] == 3

    rhoL = WL[..., _st.RHO]
    rhoR = WR[..., _st.RHO]
    qL = WL[..., _st.MOM]
    qR = WR[..., _st.MOM]
    FL = _st.flux(eos, WL)
    FR = _st.flux(eos, WR)

    lam = wave_speed(eos, WL, WR, lam_factor)
    assert (lam > 0).all()
    # enlarge lam (at most 3 doublings) if the HLL density is not positive
    for _ in range(3):
        bad = 0.5 * (rhoL + rhoR) - (qR - qL) / (2.0 * lam) <= 0.0
        if not bad.any():
            break
        lam = np.where(bad, 2.0 * lam, lam)
    rho_hll = 0.5 * (rhoL + rhoR) - (qR - qL) / (2.0 * lam)
    if not (rho_hll > 0.0).all():
        raise RuntimeError("HLL density still nonpositive after "
                           "enlarging the wave speed")
    W_hll = hll_state(WL, WR, FL, FR, lam)

    sL = _st.entropy(eos, WL)
    sR = _st.entropy(eos, WR)
    hL = _st.total_enthalpy(eos, WL)
    hR = _st.total_enthalpy(eos, WR)
    pL = _st.pressure(eos, WL)
    pR = _st.pressure(eos, WR)

    rhos_hll = 0.5 * (rhoL * sL + rhoR * sR) - (qR * sR - qL * sL) / (2.0 * lam)
    s_star = rhos_hll / rho_hll

    dphi = phiR - phiL
    dh = hR - hL
    psi1 = psi(dphi, dh, 1)
    psi3 = psi(dphi, dh, 3)

    with np.errstate(all="ignore"):
        alpha_rho = 2.0 * rhoL * rhoR / (rhoL + rhoR)
        eps_wb = wb_source_epsilon(eos, WL, WR, s_bar=0.5 * (sL + sR),
                                   p_bar=0.5 * (pL + pR))

        Sq = -alpha_rho * dphi / dx + (eps_wb / dx) * psi3
        SE = -0.5 * (qL + qR) * dphi / dx

        what = W_hll.copy()
        what[..., _st.MOM] += Sq * dx / (2.0 * lam)
        what[..., _st.ENE] += SE * dx / (2.0 * lam)

        drho = 0.5 * (rhoR - rhoL) * psi1
        rho_sL = what[..., _st.RHO] - drho
        rho_sR = what[..., _st.RHO] + drho

        esL, okL = _eos.energy_rs_masked(eos, np.abs(rho_sL) + 1e-300, s_star)
        esR, okR = _eos.energy_rs_masked(eos, np.abs(rho_sR) + 1e-300, s_star)
        # dE solves E*_{L,R} = rho* e* + qt2/(2 rho*) = Ehat -/+ dE with a
        # single kinetic parameter qt2 shared by both sides
        Ehat = what[..., _st.ENE]
        reL = rho_sL * esL
        reR = rho_sR * esR
        dE = (0.5 * (reR - reL)
              - drho * (2.0 * Ehat - reL - reR) / (rho_sL + rho_sR))

        dW = np.stack([drho, np.zeros_like(drho), dE], axis=-1)
        WsL = what - dW
        WsR = what + dW

    ok = (okL & okR & (rho_sL > 0.0) & (rho_sR > 0.0)
          & np.isfinite(WsL).all(axis=-1) & np.isfinite(WsR).all(axis=-1)
          & np.isfinite(Sq) & np.isfinite(SE))
    fb = ~ok
    if fb.any():
        WsL = np.where(fb[..., None], W_hll, WsL)
        WsR = np.where(fb[..., None], W_hll, WsR)
        Sq = np.where(fb, 0.0, Sq)
        SE = np.where(fb, 0.0, SE)
    return InterfaceSolution(lam=lam, W_hll=W_hll, WsL=WsL, WsR=WsR,
                             Sq=Sq, SE=SE, s_star=s_star, fallback=fb,
                             TL=WL, TR=WR, sL=sL, sR=sR)
