"""Moving and hydrostatic equilibria of Euler with gravity.

An equilibrium is characterized by three constants along x:
q0 = rho u, s(rho, e) = s0, and H = (E + p)/rho + phi = H0. Given a
potential value phi, the pointwise state (rho, e) solves the 2x2
system H(rho, e) = H0, s(rho, e) = s0; q0 enters H through the kinetic
term. The hydrostatic case is just q0 = 0 on the same code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import eos as _eos
from . import state as _st

__all__ = [
    "SteadyTriplet",
    "Potential",
    "quadratic_potential",
    "linear_potential",
    "zero_potential",
    "sampled_potential",
    "SteadySolveError",
    "solve_steady_state",
    "steady_states_at",
    "steady_profile",
    "iss_error",
]

_TOL = 1e-12
_MAX_ITER = 100


class SteadySolveError(RuntimeError):
    """The pointwise equilibrium solve failed to converge."""


@dataclass(frozen=True)
class SteadyTriplet:
    """Constants of a moving equilibrium: mass flux, entropy, enthalpy."""

    q0: float
    s0: float
    H0: float


@dataclass(frozen=True)
class Potential:
    """Gravitational potential phi(x).

    kind is one of "quadratic" (phi0/2 (x-x0)^2), "linear" (x),
    "zero", or "sampled" (piecewise-linear through (x, values), with
    linear extrapolation outside; grad is unavailable there).
    """

    kind: str
    phi0: float = 1.0
    x0: float = 0.5
    x: np.ndarray | None = None
    values: np.ndarray | None = None

    def at(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "quadratic":
            return 0.5 * self.phi0 * (x - self.x0) ** 2
        if self.kind == "linear":
            return x.copy()
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "sampled":
            xs, vs = self.x, self.values
            out = np.interp(x, xs, vs)
            sl0 = (vs[1] - vs[0]) / (xs[1] - xs[0])
            sl1 = (vs[-1] - vs[-2]) / (xs[-1] - xs[-2])
            out = np.where(x < xs[0], vs[0] + sl0 * (x - xs[0]), out)
            out = np.where(x > xs[-1], vs[-1] + sl1 * (x - xs[-1]), out)
            return out
        raise ValueError(f"unknown potential kind {self.kind!r}")

    def grad(self, x):
        """d(phi)/dx, or None if the potential has no analytic gradient."""
        x = np.asarray(x, dtype=float)
        if self.kind == "quadratic":
            return self.phi0 * (x - self.x0)
        if self.kind == "linear":
            return np.ones_like(x)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "sampled":
            return None
        raise ValueError(f"unknown potential kind {self.kind!r}")


def quadratic_potential(phi0=1.0, x0=0.5):
    return Potential(kind="quadratic", phi0=phi0, x0=x0)


def linear_potential():
    return Potential(kind="linear")


def zero_potential():
    return Potential(kind="zero")


def sampled_potential(x, values):
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    assert x.ndim == 1 and x.shape == values.shape and x.size >= 2
    assert (np.diff(x) > 0).all()
    return Potential(kind="sampled", x=x, values=values)


def _residual(eos, trip, phi_x, rho, e):
    """(H - H0 scaled, s - s0 scaled) or None if the state is invalid."""
    p, _, s, ok = _eos.lookup_re_masked(eos, rho, e)
    if not bool(np.all(ok)) or not p > 0.0:
        return None
    H = e + p / rho + 0.5 * (trip.q0 / rho) ** 2 + phi_x
    f1 = (H - trip.H0) / max(1.0, abs(trip.H0))
    f2 = (float(s) - trip.s0) / max(1.0, abs(trip.s0))
    return np.array([f1, f2])


def solve_steady_state(eos, triplet, phi_x, guess):
    """Solve the pointwise equilibrium at potential value phi_x.

    guess is (rho, e). Newton with a finite-difference Jacobian and
    step halving on inadmissible iterates; the scaled residual
    |H-H0|/max(1,|H0|) + |s-s0|/max(1,|s0|) must drop below 1e-12.
    Returns W = (rho, q0, rho e + q0^2/(2 rho)).
    """
    rho, e = float(guess[0]), float(guess[1])
    f = _residual(eos, triplet, phi_x, rho, e)
    if f is None:
        raise SteadySolveError(
            f"initial guess rho={rho:.6g}, e={e:.6g} is not an admissible "
            f"state for this EOS")
    for _ in range(_MAX_ITER):
        if np.abs(f).sum() <= _TOL:
            break
        # finite-difference Jacobian
        hr = 1e-7 * max(abs(rho), 1e-8)
        he = 1e-7 * max(abs(e), 1e-8)
        fr = _residual(eos, triplet, phi_x, rho + hr, e)
        fe = _residual(eos, triplet, phi_x, rho, e + he)
        if fr is None or fe is None:
            hr, he = -hr, -he
            fr = _residual(eos, triplet, phi_x, rho + hr, e)
            fe = _residual(eos, triplet, phi_x, rho, e + he)
            if fr is None or fe is None:
                raise SteadySolveError(
                    f"cannot difference the residual at rho={rho:.6g}, "
                    f"e={e:.6g}")
        J = np.column_stack([(fr - f) / hr, (fe - f) / he])
        try:
            step = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            raise SteadySolveError(
                f"singular Jacobian at rho={rho:.6g}, e={e:.6g}") from None
        lam = 1.0
        for _ in range(60):
            f_new = _residual(eos, triplet, phi_x,
                              rho + lam * step[0], e + lam * step[1])
            if f_new is not None:
                break
            lam *= 0.5
        else:
            raise SteadySolveError(
                f"damping failed at rho={rho:.6g}, e={e:.6g}")
        rho += lam * step[0]
        e += lam * step[1]
        f = f_new
    if np.abs(f).sum() > _TOL:
        raise SteadySolveError(
            f"no convergence at phi={phi_x:.6g}: residual "
            f"{np.abs(f).sum():.3e}, rho={rho:.6g}, e={e:.6g}")
    # polish: extra Newton steps while they strictly improve, so the
    # profile sits at the floating-point floor rather than at 1e-12
    for _ in range(3):
        hr = 1e-7 * max(abs(rho), 1e-8)
        he = 1e-7 * max(abs(e), 1e-8)
        fr = _residual(eos, triplet, phi_x, rho + hr, e)
        fe = _residual(eos, triplet, phi_x, rho, e + he)
        if fr is None or fe is None:
            break
        J = np.column_stack([(fr - f) / hr, (fe - f) / he])
        try:
            step = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            break
        f_new = _residual(eos, triplet, phi_x, rho + step[0], e + step[1])
        if f_new is None or np.abs(f_new).sum() >= np.abs(f).sum():
            break
        rho += step[0]
        e += step[1]
        f = f_new
    return np.array([rho, triplet.q0,
                     rho * e + 0.5 * triplet.q0 ** 2 / rho])


def steady_states_at(eos, triplet, potential, xs, guess):
    """Equilibrium states at positions xs, sweeping with continuation."""
    xs = np.asarray(xs, dtype=float)
    W = np.empty((xs.size, 3))
    g = (float(guess[0]), float(guess[1]))
    for k, x in enumerate(xs):
        Wk = solve_steady_state(eos, triplet, float(potential.at(x)), g)
        W[k] = Wk
        g = (Wk[0], _st.internal_energy(Wk))
    return W


def steady_profile(eos, triplet, potential, grid, guess):
    """Equilibrium Field from cell-center point values."""
    from .fv import Field
    xs = grid.centers()
    W = steady_states_at(eos, triplet, potential, xs, guess)
    return Field(grid=grid, W=W, phi=potential.at(xs))


def iss_error(eos, WL, WR, phiL, phiR):
    """Interface deviation (dq, dH, ds) from a moving equilibrium."""
    WL = np.asarray(WL, dtype=float)
    WR = np.asarray(WR, dtype=float)
    dq = WR[..., _st.MOM] - WL[..., _st.MOM]
    dH = _st.bernoulli(eos, WR, phiR) - _st.bernoulli(eos, WL, phiL)
    ds = _st.entropy(eos, WR) - _st.entropy(eos, WL)
    return dq, dH, ds
