"""Thermodynamic closures: a cubic EOS family and bilinear tables.

Everything works in specific volume tau = 1/rho. The cubic family is

    p(tau, T) = R T / (tau - b) - a(T) / ((tau - b r1)(tau - b r2))

with the attraction law a(T) picked by ``variant``:
ideal gas a = 0, van der Waals a = a0, Redlich-Kwong a = a0/sqrt(T),
Peng-Robinson a = a0 (1 + kappa (1 - sqrt(T/T0)))^2.

Internal energy and entropy are the Gibbs-consistent companions

    e(tau, T) = cv0 T + (a(T) - T a'(T)) U(tau)
    s(tau, T) = -(s0_ref - a'(T) U(tau) + R log(tau - b) + cv0 log T)

where U(tau) is the attraction volume integral per covolume,
U'(tau) = 1/((tau - b r1)(tau - b r2)).  The entropy sign convention is
the mathematical one: ds/de = -1/T < 0 and ds/dtau = -p/T < 0, so s is
convex and decreases along both axes.

All functions broadcast numpy arrays and return Python floats for
scalar input.  States outside the domain raise EosDomainError instead
of returning NaN; ``*_masked`` variants return an ok-mask instead so
callers can fall back per element.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EosDomainError",
    "EosConvergenceError",
    "CubicEosParams",
    "make_cubic_eos",
    "CUBIC_VARIANTS",
    "validity_box",
    "pressure",
    "internal_energy_from_T",
    "entropy_from_T",
    "heat_capacity",
    "temperature",
    "entropy",
    "energy_from_entropy",
    "sound_speed",
    "TabulatedEos",
    "tabulated_lookup",
    "table_from_cubic",
    "save_eos_table",
    "load_eos_table",
    "pressure_re",
    "temperature_re",
    "entropy_re",
    "energy_rs",
    "energy_rp",
]

_FD_REL = 1e-6        # relative step for sound-speed finite differences
_NEWTON_TOL = 1e-12   # scaled tolerance for scalar inversions
_NEWTON_MAX = 100
# log T search window for entropy inversion; the floor keeps T**-2.5
# (and every other closure term) finite in doubles
_LT_MIN, _LT_MAX = -280.0, 690.0

_SQRT2 = float(np.sqrt(2.0))


class EosDomainError(ValueError):
    """State outside the EOS validity domain."""


class EosConvergenceError(RuntimeError):
    """An EOS inversion failed to converge."""


@dataclass(frozen=True)
class CubicEosParams:
    """Coefficients of one member of the cubic EOS family."""

    variant: str
    R: float
    cv0: float
    b: float
    r1: float
    r2: float
    s0_ref: float
    a0: float = 0.0
    kappa: float = 0.0
    T0: float = 1.0


CUBIC_VARIANTS = ("ideal", "vdw", "rk", "pr")

_DEFAULTS = {
    "ideal": dict(R=0.4, cv0=1.0, b=0.0, r1=0.0, r2=0.0, a0=0.0,
                  s0_ref=float(np.log(0.4))),
    "vdw": dict(R=0.4, cv0=1.0, b=0.1273, r1=0.0, r2=0.0, a0=15.67,
                s0_ref=float(np.log(0.4))),
    "rk": dict(R=0.4, cv0=1.0, b=0.05, r1=0.0, r2=-1.0, a0=15.0,
               s0_ref=0.0),
    "pr": dict(R=0.4, cv0=1.0, b=0.05, r1=-1.0 - _SQRT2, r2=-1.0 + _SQRT2,
               a0=15.0, kappa=0.5, T0=0.3, s0_ref=0.0),
}


def make_cubic_eos(variant, **overrides):
    """Build CubicEosParams for a named variant, with field overrides."""
    if variant not in _DEFAULTS:
        raise ValueError(f"unknown EOS variant {variant!r}, "
                         f"expected one of {CUBIC_VARIANTS}")
    kw = dict(_DEFAULTS[variant])
    kw.update(overrides)
    params = CubicEosParams(variant=variant, **kw)
    assert params.R > 0 and params.cv0 > 0 and params.b >= 0
    return params


def validity_box(params):
    """((tau_lo, tau_hi), (T_lo, T_hi)) where the closures are trusted."""
    tau_lo = 1.1 * params.b if params.b > 0 else 1e-6
    return (tau_lo, 1e3), (1e-3, 1e4)


def _asf(*xs):
    arrs = [np.asarray(x, dtype=float) for x in xs]
    scalar = all(a.ndim == 0 for a in arrs)
    return arrs, scalar


def _ret(x, scalar):
    return float(x) if scalar else x


def _first_bad(mask, *arrs):
    idx = np.unravel_index(int(np.argmax(~np.asarray(mask))), np.shape(mask))
    return ", ".join(f"{float(np.broadcast_arrays(*arrs, mask)[k][idx]):.6g}"
                     for k in range(len(arrs)))


# -- attraction law ---------------------------------------------------------

def _a_of_T(params, T):
    v = params.variant
    if v == "ideal":
        return np.zeros_like(T)
    if v == "vdw":
        return np.full_like(T, params.a0)
    if v == "rk":
        return params.a0 / np.sqrt(T)
    if v == "pr":
        g = 1.0 + params.kappa * (1.0 - np.sqrt(T / params.T0))
        return params.a0 * g * g
    raise ValueError(f"unknown variant {v!r}")


def _da_dT(params, T):
    v = params.variant
    if v in ("ideal", "vdw"):
        return np.zeros_like(T)
    if v == "rk":
        return -0.5 * params.a0 * T ** -1.5
    if v == "pr":
        g = 1.0 + params.kappa * (1.0 - np.sqrt(T / params.T0))
        return -params.a0 * params.kappa * g / np.sqrt(T * params.T0)
    raise ValueError(f"unknown variant {v!r}")


def _d2a_dT2(params, T):
    v = params.variant
    if v in ("ideal", "vdw"):
        return np.zeros_like(T)
    if v == "rk":
        return 0.75 * params.a0 * T ** -2.5
    if v == "pr":
        k = params.kappa
        g = 1.0 + k * (1.0 - np.sqrt(T / params.T0))
        return params.a0 * k * (k / (2.0 * T * params.T0)
                                + g / (2.0 * T * np.sqrt(T * params.T0)))
    raise ValueError(f"unknown variant {v!r}")


def _U(params, tau):
    """Attraction volume integral per covolume, U' = 1/((tau-b r1)(tau-b r2))."""
    b, r1, r2 = params.b, params.r1, params.r2
    if b == 0.0:
        return -1.0 / tau
    if r1 == r2:
        return -1.0 / (tau - b * r1)
    return np.log((tau - b * r1) / (tau - b * r2)) / (b * (r1 - r2))


def _denom(params, tau):
    return (tau - params.b * params.r1) * (tau - params.b * params.r2)


# -- closures in (tau, T) ---------------------------------------------------

def pressure(params, tau, T):
    """p(tau, T) of the cubic family."""
    (tau, T), scalar = _asf(tau, T)
    ok = (tau > params.b) & (T > 0.0)
    if not ok.all():
        raise EosDomainError(
            f"pressure needs tau > b and T > 0, got tau, T = "
            f"{_first_bad(ok, tau, T)} ({params.variant})")
    p = params.R * T / (tau - params.b) - _a_of_T(params, T) / _denom(params, tau)
    return _ret(p, scalar)


def _dp_dT(params, tau, T):
    return params.R / (tau - params.b) - _da_dT(params, T) / _denom(params, tau)


def internal_energy_from_T(params, tau, T):
    """e(tau, T) = cv0 T + (a - T a') U(tau)."""
    (tau, T), scalar = _asf(tau, T)
    ok = (tau > params.b) & (T > 0.0)
    if not ok.all():
        raise EosDomainError(
            f"internal energy needs tau > b and T > 0, got tau, T = "
            f"{_first_bad(ok, tau, T)} ({params.variant})")
    e = params.cv0 * T + (_a_of_T(params, T) - T * _da_dT(params, T)) * _U(params, tau)
    return _ret(e, scalar)


def heat_capacity(params, tau, T):
    """c_v(tau, T) = cv0 - T a''(T) U(tau); positive on the validity box."""
    (tau, T), scalar = _asf(tau, T)
    cv = params.cv0 - T * _d2a_dT2(params, T) * _U(params, tau)
    return _ret(cv, scalar)


def entropy_from_T(params, tau, T):
    """s(tau, T) = -(s0_ref - a'(T) U(tau) + R log(tau-b) + cv0 log T)."""
    (tau, T), scalar = _asf(tau, T)
    ok = (tau > params.b) & (T > 0.0)
    if not ok.all():
        raise EosDomainError(
            f"entropy needs tau > b and T > 0, got tau, T = "
            f"{_first_bad(ok, tau, T)} ({params.variant})")
    s = -(params.s0_ref - _da_dT(params, T) * _U(params, tau)
          + params.R * np.log(tau - params.b) + params.cv0 * np.log(T))
    return _ret(s, scalar)


# -- temperature from (tau, e) ----------------------------------------------

def _energy_floor(params, tau):
    """Infimum of e(tau, .); temperature is defined only above it."""
    v = params.variant
    if v == "ideal":
        return np.zeros_like(tau)
    if v == "vdw":
        return params.a0 * _U(params, tau)
    if v == "rk":
        return np.full_like(tau, -np.inf)
    if v == "pr":
        beta = 1.0 + params.kappa
        xi = params.a0 * beta * (-_U(params, tau))
        return -beta * xi
    raise ValueError(f"unknown variant {v!r}")


def _temperature_masked(params, tau, e):
    """(T, ok): closed-form T(tau, e); ok is False where undefined."""
    tau = np.asarray(tau, dtype=float)
    e = np.asarray(e, dtype=float)
    tau, e = np.broadcast_arrays(tau, e)
    ok = tau > params.b
    v = params.variant
    with np.errstate(all="ignore"):
        if v == "ideal":
            T = e / params.cv0
            ok = ok & (T > 0.0)
        elif v == "vdw":
            T = (e - params.a0 * _U(params, tau)) / params.cv0
            ok = ok & (T > 0.0)
        elif v == "rk":
            # largest real root of cv0 z^3 - e z + xi = 0, z = sqrt(T);
            # xi < 0 for tau > b, so exactly one positive root exists.
            # Two Newton steps polish the Cardano cancellation noise.
            xi = 1.5 * params.a0 * _U(params, tau)
            pc = -e / params.cv0
            qc = xi / params.cv0
            disc = 0.25 * qc * qc + (pc / 3.0) ** 3
            sd = np.sqrt(np.maximum(disc, 0.0))
            z_one = np.cbrt(-0.5 * qc + sd) + np.cbrt(-0.5 * qc - sd)
            m = np.sqrt(np.maximum(-pc / 3.0, 1e-300))
            arg = np.clip(-0.5 * qc / m ** 3, -1.0, 1.0)
            z_tri = 2.0 * m * np.cos(np.arccos(arg) / 3.0)
            z = np.where(disc >= 0.0, z_one, z_tri)
            for _ in range(2):
                fp = 3.0 * params.cv0 * z * z - e
                pol = (z > 0.0) & (fp > 0.0)
                f = (params.cv0 * z * z - e) * z + xi
                z = np.where(pol, z - f / np.where(pol, fp, 1.0), z)
            T = z * z
            ok = ok & (z > 0.0) & np.isfinite(z)
        elif v == "pr":
            beta = 1.0 + params.kappa
            xi = params.a0 * beta * (-_U(params, tau))
            rad = (xi * params.kappa) ** 2 \
                + 4.0 * params.cv0 * params.T0 * (e + beta * xi)
            ok = ok & (e + beta * xi > 0.0)
            w = (np.sqrt(np.maximum(rad, 0.0)) - xi * params.kappa) \
                / (2.0 * params.cv0 * params.T0)
            for _ in range(2):
                fp = 2.0 * params.cv0 * params.T0 * w + xi * params.kappa
                pol = (w > 0.0) & (fp > 0.0)
                f = params.cv0 * params.T0 * w * w + xi * params.kappa * w \
                    - (e + beta * xi)
                w = np.where(pol, w - f / np.where(pol, fp, 1.0), w)
            T = params.T0 * w * w
            ok = ok & (w > 0.0)
        else:
            raise ValueError(f"unknown variant {v!r}")
        T = np.where(ok, T, np.nan)
    return T, ok


def temperature(params, tau, e):
    """T(tau, e); raises EosDomainError where e is below the floor."""
    (tau, e), scalar = _asf(tau, e)
    T, ok = _temperature_masked(params, tau, e)
    if not ok.all():
        raise EosDomainError(
            f"temperature undefined at tau, e = "
            f"{_first_bad(ok, tau, e)} ({params.variant})")
    return _ret(T, scalar)


def entropy(params, tau, e):
    """s(tau, e) via the closed-form temperature."""
    (tau, e), scalar = _asf(tau, e)
    T, ok = _temperature_masked(params, tau, e)
    if not ok.all():
        raise EosDomainError(
            f"entropy undefined at tau, e = "
            f"{_first_bad(ok, tau, e)} ({params.variant})")
    return _ret(entropy_from_T(params, tau, T), scalar)


# -- energy from (tau, s) ---------------------------------------------------

def _entropy_residual(params, tau, lt, s):
    return entropy_from_T(params, tau, np.exp(lt)) - s


def _bisect_log_T(params, tau, s, lt0, mask, tol):
    """Bisection in log T for the elements of mask; residual decreases in T."""
    lo = np.where(mask, lt0, 0.0)
    hi = lo.copy()
    for _ in range(500):
        grow = mask & (_entropy_residual(params, tau, lo, s) < 0.0) & (lo > _LT_MIN)
        if not grow.any():
            break
        lo = np.maximum(np.where(grow, lo - 2.0, lo), _LT_MIN)
    for _ in range(500):
        grow = mask & (_entropy_residual(params, tau, hi, s) > 0.0) & (hi < _LT_MAX)
        if not grow.any():
            break
        hi = np.minimum(np.where(grow, hi + 2.0, hi), _LT_MAX)
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = _entropy_residual(params, tau, mid, s)
        if (~mask | (np.abs(r) <= tol)).all():
            break
        lo = np.where(r > 0.0, mid, lo)
        hi = np.where(r > 0.0, hi, mid)
    return mid


def _energy_from_entropy_masked(params, tau, s):
    """(e, ok): invert s(tau, .) = s elementwise."""
    tau = np.asarray(tau, dtype=float)
    s = np.asarray(s, dtype=float)
    tau, s = np.broadcast_arrays(tau, s)
    ok = tau > params.b
    tau_safe = np.where(ok, tau, params.b + 1.0)
    with np.errstate(all="ignore"):
        logfac = -(s + params.s0_ref
                   + params.R * np.log(tau_safe - params.b)) / params.cv0
        if params.variant in ("ideal", "vdw"):
            T = np.maximum(np.exp(logfac), 1e-300)
            e = internal_energy_from_T(params, tau_safe, T)
            ok = ok & np.isfinite(e)
            return np.where(ok, e, np.nan), ok
        # rk/pr: damped Newton in log T on r(T) = s(tau, T) - s. The
        # residual is strictly decreasing with slope -c_v < 0 in log T
        # and c_v blows up where the attraction stiffens, so the clipped
        # iteration is globally convergent; stragglers (if any) finish
        # with bisection on a geometrically grown bracket.
        tol = _NEWTON_TOL * np.maximum(1.0, np.abs(s))
        lt = np.clip(logfac, _LT_MIN, _LT_MAX)
        r = np.full_like(lt, np.inf)
        for _ in range(_NEWTON_MAX):
            r = np.where(ok, _entropy_residual(params, tau_safe, lt, s), 0.0)
            active = ok & (np.abs(r) > tol)
            if not active.any():
                break
            cv = np.maximum(heat_capacity(params, tau_safe, np.exp(lt)), 1e-30)
            lt = np.where(active,
                          np.clip(lt + np.clip(r / cv, -5.0, 5.0),
                                  _LT_MIN, _LT_MAX), lt)
        bad = ok & (np.abs(r) > tol)
        if bad.any():
            lt = np.where(bad, _bisect_log_T(params, tau_safe, s, lt, bad, tol),
                          lt)
            r = np.where(ok, _entropy_residual(params, tau_safe, lt, s), 0.0)
        ok = ok & (np.abs(r) <= tol)
        # polish to the floating-point floor: repeated fan evaluations on
        # steady data must not accumulate the contract slack
        for _ in range(2):
            cv = np.maximum(heat_capacity(params, tau_safe, np.exp(lt)), 1e-30)
            lt_new = np.clip(lt + np.clip(r / cv, -5.0, 5.0), _LT_MIN, _LT_MAX)
            r_new = np.where(ok, _entropy_residual(params, tau_safe, lt_new, s),
                             0.0)
            better = ok & (np.abs(r_new) < np.abs(r))
            if not better.any():
                break
            lt = np.where(better, lt_new, lt)
            r = np.where(better, r_new, r)
        e = internal_energy_from_T(params, tau_safe, np.exp(lt))
        ok = ok & np.isfinite(e)
    return np.where(ok, e, np.nan), ok


def energy_from_entropy(params, tau, s):
    """e(tau, s); exact for ideal/vdw, guarded Newton for rk/pr."""
    (tau, s), scalar = _asf(tau, s)
    e, ok = _energy_from_entropy_masked(params, tau, s)
    if not ok.all():
        raise EosConvergenceError(
            f"entropy inversion failed at tau, s = "
            f"{_first_bad(ok, tau, s)} ({params.variant})")
    return _ret(e, scalar)


# -- tabulated EOS ----------------------------------------------------------

@dataclass(frozen=True)
class TabulatedEos:
    """Bilinear (rho, e) table of p, T, s on rectangular grids.

    s must be strictly decreasing in e along every rho row (the
    mathematical entropy convention), which makes the entropy
    inversion a piecewise-linear solve with a unique root.
    """

    rho: np.ndarray
    e: np.ndarray
    p: np.ndarray
    T: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        rho, e = np.asarray(self.rho), np.asarray(self.e)
        if rho.ndim != 1 or e.ndim != 1 or rho.size < 2 or e.size < 2:
            raise ValueError("table grids must be 1D with at least 2 points")
        shape = (rho.size, e.size)
        for name in ("p", "T", "s"):
            block = np.asarray(getattr(self, name))
            if block.shape != shape:
                raise ValueError(f"table block {name} has shape {block.shape}, "
                                 f"expected {shape}")
            if not np.isfinite(block).all():
                raise ValueError(f"table block {name} has non-finite entries")
        if not (np.diff(rho) > 0).all() or not (np.diff(e) > 0).all():
            raise ValueError("table grids must be strictly increasing")
        if not (self.p > 0).all() or not (self.T > 0).all():
            raise ValueError("table p and T must be positive")
        if not (np.diff(self.s, axis=1) < 0).all():
            raise ValueError("table s must be strictly decreasing in e "
                             "along every rho row")

    @property
    def hull(self):
        return ((float(self.rho[0]), float(self.rho[-1])),
                (float(self.e[0]), float(self.e[-1])))


def _locate_masked(grid, x):
    idx = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, grid.size - 2)
    w = (x - grid[idx]) / (grid[idx + 1] - grid[idx])
    ok = (x >= grid[0]) & (x <= grid[-1])
    return idx, w, ok


def _tabulated_lookup_masked(table, rho, e):
    rho = np.asarray(rho, dtype=float)
    e = np.asarray(e, dtype=float)
    rho, e = np.broadcast_arrays(rho, e)
    i, wi, ok_r = _locate_masked(table.rho, rho)
    j, wj, ok_e = _locate_masked(table.e, e)
    ok = ok_r & ok_e
    out = []
    for block in (table.p, table.T, table.s):
        v = ((1 - wi) * (1 - wj) * block[i, j]
             + wi * (1 - wj) * block[i + 1, j]
             + (1 - wi) * wj * block[i, j + 1]
             + wi * wj * block[i + 1, j + 1])
        out.append(np.where(ok, v, np.nan))
    return out[0], out[1], out[2], ok


def tabulated_lookup(table, rho, e):
    """Bilinear (p, T, s) at (rho, e); raises outside the hull."""
    (rho, e), scalar = _asf(rho, e)
    p, T, s, ok = _tabulated_lookup_masked(table, rho, e)
    if not np.all(ok):
        (rlo, rhi), (elo, ehi) = table.hull
        raise EosDomainError(
            f"point rho, e = {_first_bad(ok, rho, e)} outside table hull "
            f"rho in [{rlo:.6g}, {rhi:.6g}], e in [{elo:.6g}, {ehi:.6g}]")
    return _ret(p, scalar), _ret(T, scalar), _ret(s, scalar)


def _table_fiber(table, block, rho):
    """Values of a block interpolated to given rho, all e nodes: (Q, ne)."""
    i, wi, ok = _locate_masked(table.rho, rho)
    fib = (1 - wi)[..., None] * block[i, :] + wi[..., None] * block[i + 1, :]
    return fib, ok


def _table_invert_masked(table, block, rho, target, increasing):
    """Solve interp(block)(rho, e) = target for e per element."""
    rho = np.asarray(rho, dtype=float)
    target = np.asarray(target, dtype=float)
    rho, target = np.broadcast_arrays(rho, target)
    shape = rho.shape
    rho_f = rho.ravel()
    t_f = target.ravel()
    fib, ok = _table_fiber(table, block, rho_f)
    vals = fib if increasing else -fib
    tt = t_f if increasing else -t_f
    ok = ok & (np.diff(vals, axis=1) > 0).all(axis=1)
    ok = ok & (tt >= vals[:, 0]) & (tt <= vals[:, -1])
    j = np.clip(np.sum(vals <= tt[:, None], axis=1) - 1, 0, table.e.size - 2)
    v0 = np.take_along_axis(vals, j[:, None], axis=1)[:, 0]
    v1 = np.take_along_axis(vals, (j + 1)[:, None], axis=1)[:, 0]
    with np.errstate(all="ignore"):
        frac = np.where(ok, (tt - v0) / (v1 - v0), 0.0)
    e = table.e[j] + frac * (table.e[j + 1] - table.e[j])
    e = np.where(ok, e, np.nan)
    return e.reshape(shape), ok.reshape(shape)


def table_from_cubic(params, rho_lo, rho_hi, e_lo, e_hi, n_rho, n_e):
    """Sample a cubic EOS onto a uniform (rho, e) grid."""
    assert 0 < rho_lo < rho_hi and e_lo < e_hi and n_rho >= 2 and n_e >= 2
    rho = np.linspace(rho_lo, rho_hi, n_rho)
    e = np.linspace(e_lo, e_hi, n_e)
    tau = 1.0 / rho[:, None]
    ee = np.broadcast_to(e[None, :], (n_rho, n_e))
    T = temperature(params, tau, ee)
    p = pressure(params, tau, T)
    s = entropy_from_T(params, tau, T)
    return TabulatedEos(rho=rho, e=e, p=p, T=T, s=s)


def save_eos_table(table, path):
    """Write the eostab v1 text format."""
    def fmt(vals):
        return " ".join(f"{float(v):.17g}" for v in vals)

    lines = [f"eostab v1 {table.rho.size} {table.e.size}",
             "rho: " + fmt(table.rho),
             "e: " + fmt(table.e)]
    for name, block in (("p", table.p), ("T", table.T), ("s", table.s)):
        lines.append(f"{name}:")
        lines.extend(fmt(row) for row in block)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_eos_table(path):
    """Read the eostab v1 text format; malformed input raises ValueError."""
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    if not raw or not raw[0].startswith("eostab v1"):
        raise ValueError(f"{path}: not an eostab v1 file")
    head = raw[0].split()
    if len(head) != 4:
        raise ValueError(f"{path}: malformed header {raw[0]!r}")
    try:
        n_rho, n_e = int(head[2]), int(head[3])
    except ValueError:
        raise ValueError(f"{path}: malformed header {raw[0]!r}") from None

    def floats(text, n, what):
        parts = text.split()
        if len(parts) != n:
            raise ValueError(f"{path}: {what} expects {n} values, "
                             f"got {len(parts)}")
        return np.array([float(v) for v in parts])

    if len(raw) != 3 + 3 * (n_rho + 1):
        raise ValueError(f"{path}: expected {3 + 3 * (n_rho + 1)} "
                         f"non-blank lines, got {len(raw)}")
    if not raw[1].startswith("rho:") or not raw[2].startswith("e:"):
        raise ValueError(f"{path}: missing rho:/e: grid lines")
    rho = floats(raw[1][4:], n_rho, "rho grid")
    e = floats(raw[2][2:], n_e, "e grid")
    blocks = {}
    pos = 3
    for name in ("p", "T", "s"):
        if raw[pos] != f"{name}:":
            raise ValueError(f"{path}: expected block marker {name!r} "
                             f"at line {pos + 1}")
        pos += 1
        rows = [floats(raw[pos + k], n_e, f"{name} row {k}")
                for k in range(n_rho)]
        pos += n_rho
        blocks[name] = np.array(rows)
    try:
        return TabulatedEos(rho=rho, e=e, p=blocks["p"], T=blocks["T"],
                            s=blocks["s"])
    except ValueError as err:
        raise ValueError(f"{path}: {err}") from None


# -- generic (rho, e) facade used by the solver -----------------------------

def lookup_re_masked(eos, rho, e):
    """(p, T, s, ok) at (rho, e) for either EOS kind, mask instead of raise."""
    rho = np.asarray(rho, dtype=float)
    e = np.asarray(e, dtype=float)
    rho, e = np.broadcast_arrays(rho, e)
    if isinstance(eos, TabulatedEos):
        return _tabulated_lookup_masked(eos, rho, e)
    ok = rho > 0.0
    tau = np.where(ok, 1.0 / np.where(ok, rho, 1.0), 2.0 * eos.b + 1.0)
    T, okT = _temperature_masked(eos, tau, e)
    ok = ok & okT
    T_safe = np.where(ok, T, 1.0)
    tau_safe = np.where(ok, tau, eos.b + 1.0)
    with np.errstate(all="ignore"):
        p = pressure(eos, tau_safe, T_safe)
        s = entropy_from_T(eos, tau_safe, T_safe)
    return (np.where(ok, p, np.nan), np.where(ok, T, np.nan),
            np.where(ok, s, np.nan), ok)


def pressure_re(eos, rho, e):
    if isinstance(eos, TabulatedEos):
        return tabulated_lookup(eos, rho, e)[0]
    (rho, e), scalar = _asf(rho, e)
    tau = 1.0 / rho
    return _ret(pressure(eos, tau, temperature(eos, tau, e)), scalar)


def temperature_re(eos, rho, e):
    if isinstance(eos, TabulatedEos):
        return tabulated_lookup(eos, rho, e)[1]
    (rho, e), scalar = _asf(rho, e)
    return _ret(temperature(eos, 1.0 / rho, e), scalar)


def entropy_re(eos, rho, e):
    if isinstance(eos, TabulatedEos):
        return tabulated_lookup(eos, rho, e)[2]
    (rho, e), scalar = _asf(rho, e)
    return _ret(entropy(eos, 1.0 / rho, e), scalar)


def energy_rs_masked(eos, rho, s):
    """(e, ok) solving s(rho, e) = s; mask instead of raise."""
    rho = np.asarray(rho, dtype=float)
    s = np.asarray(s, dtype=float)
    rho, s = np.broadcast_arrays(rho, s)
    if isinstance(eos, TabulatedEos):
        return _table_invert_masked(eos, eos.s, rho, s, increasing=False)
    ok = rho > 0.0
    tau = np.where(ok, 1.0 / np.where(ok, rho, 1.0), 2.0 * eos.b + 1.0)
    e, okE = _energy_from_entropy_masked(eos, tau, s)
    return e, ok & okE


def energy_rs(eos, rho, s):
    """e(rho, s) for either EOS kind."""
    (rho, s), scalar = _asf(rho, s)
    e, ok = energy_rs_masked(eos, rho, s)
    if not np.all(ok):
        raise EosDomainError(
            f"entropy inversion failed at rho, s = {_first_bad(ok, rho, s)}")
    return _ret(e, scalar)


def energy_rp(eos, rho, p, T_guess=None):
    """e(rho, p): invert the pressure along the e axis.

    With no seed the cold root is returned by convention. A T_guess
    selects the root nearest the seed instead (step-capped Newton),
    which disambiguates non-monotone fibers (pr at high T) when a
    nearby state is known.
    """
    (rho, p), scalar = _asf(rho, p)
    rho_b, p_b = np.broadcast_arrays(rho, p)
    if isinstance(eos, TabulatedEos):
        e, ok = _table_invert_masked(eos, eos.p, rho_b, p_b, increasing=True)
        if not np.all(ok):
            raise EosDomainError(
                f"pressure inversion failed at rho, p = "
                f"{_first_bad(ok, rho_b, p_b)} (needs an increasing "
                f"p fiber holding the target)")
        return _ret(e, scalar)
    tau = 1.0 / rho_b
    ok = tau > eos.b
    if not ok.all():
        raise EosDomainError(
            f"pressure inversion needs tau > b, got rho, p = "
            f"{_first_bad(ok, rho_b, p_b)} ({eos.variant})")
    tol = _NEWTON_TOL * np.maximum(1.0, np.abs(p_b))
    with np.errstate(all="ignore"):
        if T_guess is not None:
            # local root: plain Newton from the seed, steps capped at
            # 20 percent so the iteration stays in the seed's basin
            T = np.broadcast_to(np.asarray(T_guess, dtype=float),
                                rho_b.shape).astype(float).copy()
            assert (T > 0.0).all()
            for _ in range(2 * _NEWTON_MAX):
                r = pressure(eos, tau, T) - p_b
                if (np.abs(r) <= tol).all():
                    break
                fp = _dp_dT(eos, tau, T)
                step = -r / np.where(np.abs(fp) > 1e-300, fp, np.inf)
                T = T + np.clip(step, -0.2 * T, 0.2 * T)
        else:
            # Newton in T on the cold branch. dp/dT > 0 there for every
            # shipped attraction law; pr turns non-monotone at high T (a
            # regrows past its minimum), so steps that see dp/dT <= 0
            # halve T back toward the increasing branch and the cold
            # root is returned by convention.
            T = np.maximum(p_b * (tau - eos.b) / eos.R, 1e-12)
            for _ in range(2 * _NEWTON_MAX):
                r = pressure(eos, tau, T) - p_b
                if (np.abs(r) <= tol).all():
                    break
                fp = _dp_dT(eos, tau, T)
                T_new = np.where(fp > 1e-300,
                                 T - r / np.where(fp > 1e-300, fp, 1.0),
                                 0.5 * T)
                T = np.where(T_new > 0.0, T_new, 0.5 * T)
        r = pressure(eos, tau, T) - p_b
    if not (np.abs(r) <= tol).all():
        raise EosConvergenceError(
            f"pressure inversion stalled at rho, p = "
            f"{_first_bad(np.abs(r) <= tol, rho_b, p_b)} ({eos.variant})")
    return _ret(internal_energy_from_T(eos, tau, T), scalar)


def sound_speed_masked(eos, rho, s):
    """(c, ok) with c from a centered difference of p(rho, s) at fixed s.

    ok is False where the difference stencil leaves the EOS domain or
    the squared speed is nonpositive (hyperbolicity lost there).
    """
    rho = np.asarray(rho, dtype=float)
    s = np.asarray(s, dtype=float)
    rho_b, s_b = np.broadcast_arrays(rho, s)
    ok = (rho_b > 0.0) & np.isfinite(rho_b) & np.isfinite(s_b)
    rho_safe = np.where(ok, rho_b, 1.0)
    s_safe = np.where(ok, s_b, 0.0)
    dr = _FD_REL * rho_safe
    e_p, ok_p = energy_rs_masked(eos, rho_safe + dr, s_safe)
    e_m, ok_m = energy_rs_masked(eos, rho_safe - dr, s_safe)
    ok = ok & ok_p & ok_m
    e_p = np.where(ok, e_p, 1.0)
    e_m = np.where(ok, e_m, 1.0)
    p_p, _, _, okp = lookup_re_masked(eos, rho_safe + dr, e_p)
    p_m, _, _, okm = lookup_re_masked(eos, rho_safe - dr, e_m)
    ok = ok & okp & okm
    with np.errstate(all="ignore"):
        c2 = (p_p - p_m) / (2.0 * dr)
    ok = ok & (c2 > 0.0)
    c = np.sqrt(np.where(ok, c2, np.nan))
    return c, ok


def sound_speed(eos, rho, s):
    """c(rho, s) by a centered difference of p(rho, s) at fixed s."""
    (rho, s), scalar = _asf(rho, s)
    c, ok = sound_speed_masked(eos, rho, s)
    if not np.all(ok):
        rho_b, s_b = np.broadcast_arrays(np.asarray(rho, dtype=float),
                                         np.asarray(s, dtype=float))
        raise EosDomainError(
            f"nonpositive squared sound speed at rho, s = "
            f"{_first_bad(ok, rho_b, s_b)}")
    return _ret(c, scalar)
