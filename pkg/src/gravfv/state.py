"""Conserved-state helpers shared by the solver layers.

A state vector W = (rho, q, E) lives on the last axis of an ndarray:
rho is density, q = rho*u momentum, E total energy per volume. The
specific total enthalpy h = (E + p)/rho includes the kinetic part, so
H = h + phi is the quantity that is constant across moving equilibria.
"""

from __future__ import annotations

import numpy as np

from . import eos as _eos

RHO, MOM, ENE = 0, 1, 2


def velocity(W):
    return W[..., MOM] / W[..., RHO]


def internal_energy(W):
    """Specific internal energy e = E/rho - u^2/2."""
    rho = W[..., RHO]
    return W[..., ENE] / rho - 0.5 * (W[..., MOM] / rho) ** 2


def pressure(eos, W):
    return _eos.pressure_re(eos, W[..., RHO], internal_energy(W))


def entropy(eos, W):
    return _eos.entropy_re(eos, W[..., RHO], internal_energy(W))


def temperature(eos, W):
    return _eos.temperature_re(eos, W[..., RHO], internal_energy(W))


def primitive(eos, W):
    """Return (rho, u, p)."""
    return W[..., RHO], velocity(W), pressure(eos, W)


def conserved(eos, rho, u, p):
    """Build W from (rho, u, p); the EOS supplies e(rho, p)."""
    rho, u, p = np.broadcast_arrays(*np.atleast_1d(rho, u, p))
    e = _eos.energy_rp(eos, rho, p)
    W = np.stack([rho, rho * u, rho * e + 0.5 * rho * u * u], axis=-1)
    return W


def conserved_from_rho_u_e(rho, u, e):
    rho, u, e = np.broadcast_arrays(*np.atleast_1d(rho, u, e))
    return np.stack([rho, rho * u, rho * e + 0.5 * rho * u * u], axis=-1)


def total_enthalpy(eos, W):
    """h = (E + p)/rho, kinetic part included."""
    return (W[..., ENE] + pressure(eos, W)) / W[..., RHO]


def bernoulli(eos, W, phi):
    """H = (E + p)/rho + phi."""
    return total_enthalpy(eos, W) + phi


def sound(eos, W):
    return _eos.sound_speed(eos, W[..., RHO], entropy(eos, W))


def flux(eos, W):
    """Physical flux F(W) = (q, q u + p, u (E + p))."""
    rho, u, p = primitive(eos, W)
    q = W[..., MOM]
    return np.stack([q, q * u + p, u * (W[..., ENE] + p)], axis=-1)


def admissible_mask(eos, W):
    """Elementwise check of rho > 0, a defined temperature, and p > 0."""
    W = np.asarray(W, dtype=float)
    rho = W[..., RHO]
    ok = np.isfinite(W).all(axis=-1) & (rho > 0.0)
    rho_safe = np.where(ok, rho, 1.0)
    e = W[..., ENE] / rho_safe - 0.5 * (W[..., MOM] / rho_safe) ** 2
    p, _, _, ok_th = _eos.lookup_re_masked(eos, rho_safe, np.where(ok, e, 1.0))
    p = np.where(ok & ok_th, p, -1.0)
    return ok & ok_th & (p > 0.0)


def is_admissible(eos, W):
    return bool(np.all(admissible_mask(eos, W)))
