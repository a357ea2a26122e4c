"""Spherical functions phi_lambda(s).

Three evaluators plus a dispatcher:

* an ODE oracle for the radial eigen-equation u'' + (A'/A) u' + (lambda^2 + rho^2) u = 0,
* the leading Bessel-kernel term near the identity (series truncated at M = 0),
* the leading Harish-Chandra-type term far from the identity.

The error constants of the two series evaluators are fitted against the ODE
oracle once per space and frozen into a :class:`Calibration` record.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import asdict, dataclass, replace
from enum import Enum

import numpy as np
from scipy.integrate import solve_ivp

from . import space as sp
from .specfun import bessel_kernel, c_function, kernel_at_zero

S0 = 1e-4
DEFAULT_R_SWITCH = 2.0
DEFAULT_CEILING = 300.0
DEFAULT_LAMBDA_MIN = 0.5
DEFAULT_RTOL = 1e-10


class Method(str, Enum):
    ODE = "ODE"
    BESSEL_M0 = "BesselM0"
    HC_LEADING = "HCLeading"
    CLOSED_FORM = "ClosedForm"


METHOD_CODES = [Method.ODE, Method.BESSEL_M0, Method.HC_LEADING, Method.CLOSED_FORM]


@dataclass(frozen=True)
class PhiValue:
    value: float
    error_bound: float
    method: Method


class CapabilityError(ValueError):
    """Requested lambda is above the ODE oracle ceiling."""


class NumericalFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class Calibration:
    space: str
    kappa: float
    C_E: float
    C_E_prime: float
    r_switch: float = DEFAULT_R_SWITCH
    oracle_ceiling: float = DEFAULT_CEILING
    lambda_min: float = DEFAULT_LAMBDA_MIN
    C_cal: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Calibration":
        return cls(**json.loads(text))


def bessel_order(params: sp.SpaceParams) -> float:
    return (params.n - 2) / 2


def kappa(params: sp.SpaceParams) -> float:
    """Prefactor making the Bessel leading term equal 1 at the identity."""
    return 1.0 / kernel_at_zero(bessel_order(params))


def hc_prefactor(params: sp.SpaceParams) -> float:
    """Constant p with phi ~ p A^(-1/2) 2 Re(c e^{i lambda s}) at infinity."""
    return math.sqrt(sp.far_field_constant(params))


# ------------------------------------------------------------------ ODE oracle


def _taylor(params, K, s):
    """Power series of phi about s = 0 (value and derivative), shape (len(K), len(s))."""
    d = sp.log_derivative_series(params)
    n = params.n
    K = np.asarray(K, dtype=float)[:, None]
    s = np.asarray(s, dtype=float)[None, :]
    b = [np.ones_like(K)]
    u = np.ones((K.shape[0], s.shape[1]))
    du = np.zeros_like(u)
    for k in range(1, 400):
        acc = K * b[k - 1]
        for m in range(max(1, k - len(d)), k):
            acc = acc + 2 * m * d[k - m - 1] * b[m]
        bk = -acc / (2 * k * (2 * k + n - 2))
        b.append(bk)
        term = bk * s ** (2 * k)
        u = u + term
        du = du + 2 * k * bk * s ** (2 * k - 1)
        if np.all(np.abs(term) < 1e-18 * np.maximum(np.abs(u), 1e-300)):
            break
    return u, du


def _scalar_log_derivative(params):
    """A'/A as a plain-float closure (the integrator calls it once per stage)."""
    if params.variant == sp.DAMEK_RICCI:
        a = 0.5 * (params.m_v + params.m_z)
        b = 0.5 * params.m_z
        return lambda x: a / math.tanh(0.5 * x) + b * math.tanh(0.5 * x)
    c = params.dim - 1
    return lambda x: c / math.tanh(x)


def _solve_band(params, lam, s_eval, rtol):
    K = lam ** 2 + params.rho ** 2
    ld = _scalar_log_derivative(params)
    m = lam.size
    u0, v0 = _taylor(params, K, np.array([S0]))
    y0 = np.concatenate([u0[:, 0], v0[:, 0]])

    def rhs(x, y):
        u = y[:m]
        v = y[m:]
        return np.concatenate([v, -ld(x) * v - K * u])

    tiny = 1e-14 * rtol
    atol = np.concatenate([np.full(m, tiny), tiny * (1 + lam)])
    sol = solve_ivp(rhs, (S0, float(s_eval[-1])), y0, method="DOP853", t_eval=s_eval,
                    rtol=rtol, atol=atol, max_step=0.1 / (1 + float(lam.max())))
    if sol.status != 0:
        raise NumericalFailure(f"ODE integration failed: {sol.message}")
    return sol.y[:m], sol.y[m:]


def _bands(lam):
    """Group sorted lambda values so each band's step bound fits all members."""
    order = np.argsort(lam, kind="stable")
    edges = [0.0]
    e = 3.0
    top = float(lam.max()) if lam.size else 0.0
    while e < top:
        edges.append(e)
        e *= 3.0
    edges.append(np.inf)
    out = []
    ls = lam[order]
    for lo, hi in zip(edges[:-1], edges[1:]):
        idx = order[(ls >= lo) & (ls < hi)] if lo > 0 else order[ls < hi]
        if idx.size:
            out.append(idx)
    return out


def ode_matrix(params, lam, s, *, rtol=DEFAULT_RTOL, ceiling=DEFAULT_CEILING, with_error=False):
    """ODE oracle on a tensor grid: returns phi[i, j] = phi_{lam_i}(s_j).

    With ``with_error`` a second solve at rtol/100 supplies an a-posteriori
    error estimate (second return value); otherwise that value is None.
    """
    lam = np.abs(np.atleast_1d(np.asarray(lam, dtype=float)))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(lam > ceiling):
        raise CapabilityError(f"lambda {lam.max():g} above oracle ceiling {ceiling:g}")
    if np.any(s <= 0) or np.any(np.diff(s) <= 0):
        raise ValueError("s grid must be positive and strictly increasing")
    out = np.empty((lam.size, s.size))
    err = np.zeros_like(out) if with_error else None
    near = s <= S0
    far = ~near
    if np.any(near):
        K = lam ** 2 + params.rho ** 2
        u, _ = _taylor(params, K, s[near])
        out[:, near] = u
    if np.any(far):
        s_far = s[far]
        for idx in _bands(lam):
            u, v = _solve_band(params, lam[idx], s_far, rtol)
            out[np.ix_(idx, np.flatnonzero(far))] = u
            if with_error:
                u2, _ = _solve_band(params, lam[idx], s_far, rtol / 100)
                K = (lam[idx] ** 2 + params.rho ** 2)[:, None]
                envelope = np.sqrt(u2 ** 2 + v ** 2 / K)
                err[np.ix_(idx, np.flatnonzero(far))] = 10 * np.abs(u - u2) + 1e-13 * envelope
    return out, err


def phi_ode(params, lam, s_grid, *, ceiling=DEFAULT_CEILING, rtol=DEFAULT_RTOL):
    """ODE oracle for one lambda over an increasing grid; list of PhiValue."""
    u, e = ode_matrix(params, [lam], s_grid, rtol=rtol, ceiling=ceiling, with_error=True)
    return [PhiValue(float(v), float(b), Method.ODE) for v, b in zip(u[0], e[0])]


# ------------------------------------------------------------ series methods


def closed_form_h3(lam, s):
    lam = np.asarray(lam, dtype=float)
    s = np.asarray(s, dtype=float)
    return np.sinc(lam * s / np.pi) * s / np.sinh(s)


def m0_terms(params, lam, s):
    """Leading Bessel term and its error shape, broadcast over lam and s."""
    lam = np.abs(np.asarray(lam, dtype=float))
    s = np.asarray(s, dtype=float)
    n = params.n
    z = lam * s
    amp = np.exp(0.5 * ((n - 1) * np.log(s) - sp.log_density(params, s)))
    shape_z = np.broadcast_shapes(np.shape(lam), np.shape(s))
    zz = np.broadcast_to(z, shape_z)
    value = kappa(params) * amp * bessel_kernel(bessel_order(params), zz.ravel()).reshape(shape_z)
    s2 = np.broadcast_to(s ** 2, shape_z)
    shape = np.where(zz <= 1, s2, s2 * np.maximum(zz, 1.0) ** (-(n + 1) / 2))
    return value, shape


def hc_terms(params, lam, s, r_switch=DEFAULT_R_SWITCH):
    """Leading far-field term and its error shape, broadcast over lam and s.

    The shape carries exp(-(s - r_switch)): the omitted terms of the far-field
    series are all damped by at least exp(-s) relative to the leading one.
    """
    lam = np.abs(np.asarray(lam, dtype=float))
    s = np.asarray(s, dtype=float)
    c = c_function(params, lam)
    inv_sqrt_a = np.exp(-0.5 * sp.log_density(params, s))
    value = hc_prefactor(params) * inv_sqrt_a * 2 * np.real(c * np.exp(1j * lam * s))
    shape = inv_sqrt_a * np.abs(c) / (1 + lam) * np.exp(-(s - r_switch))
    return value, shape


def phi_bessel_m0(params, lam, s, calibration: Calibration | None = None) -> PhiValue:
    cal = calibration or get_calibration(params)
    if not (0 < s <= cal.r_switch):
        raise ValueError(f"s={s} outside (0, r_switch={cal.r_switch}]")
    v, shape = m0_terms(params, lam, s)
    return PhiValue(float(v), float(cal.C_E * shape), Method.BESSEL_M0)


def phi_hc_leading(params, lam, s, calibration: Calibration | None = None) -> PhiValue:
    cal = calibration or get_calibration(params)
    if s < cal.r_switch:
        raise ValueError(f"s={s} below r_switch={cal.r_switch}")
    if abs(lam) < cal.lambda_min:
        raise ValueError(f"lambda={lam} below lambda_min={cal.lambda_min}")
    v, shape = hc_terms(params, lam, s, cal.r_switch)
    return PhiValue(float(v), float(cal.C_E_prime * shape), Method.HC_LEADING)


# ------------------------------------------------------------------ dispatcher

_EPS = np.finfo(float).eps


def phi_matrix(params, lam, s, *, accurate=False, calibration: Calibration | None = None):
    """Dispatcher on a tensor grid.

    Returns (values, error_bounds, method_codes), each of shape (len(lam), len(s));
    method codes index :data:`METHOD_CODES`.
    """
    lam = np.abs(np.atleast_1d(np.asarray(lam, dtype=float)))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s <= 0):
        raise ValueError("radius must be positive")
    shape = (lam.size, s.size)
    if params.is_h3:
        v = closed_form_h3(lam[:, None], s[None, :])
        e = 8 * _EPS * (1 + np.abs(lam[:, None] * s[None, :])) * np.abs(s / np.sinh(s))[None, :]
        return v, e, np.full(shape, 3)
    cal = calibration or get_calibration(params)
    if accurate and lam.size and lam.max() <= cal.oracle_ceiling:
        order = np.argsort(s)
        u, e = ode_matrix(params, lam, s[order], ceiling=cal.oracle_ceiling, with_error=True)
        inv = np.empty_like(order)
        inv[order] = np.arange(order.size)
        return u[:, inv], e[:, inv], np.zeros(shape, dtype=int)
    values = np.empty(shape)
    errors = np.empty(shape)
    codes = np.empty(shape, dtype=int)
    inner = s < cal.r_switch
    if np.any(inner):
        v, sh = m0_terms(params, lam[:, None], s[inner][None, :])
        values[:, inner] = v
        errors[:, inner] = cal.C_E * sh
        codes[:, inner] = 1
    if np.any(~inner):
        big = lam >= cal.lambda_min
        cols = np.flatnonzero(~inner)
        if np.any(big):
            v, sh = hc_terms(params, lam[big][:, None], s[cols][None, :], cal.r_switch)
            values[np.ix_(np.flatnonzero(big), cols)] = v
            errors[np.ix_(np.flatnonzero(big), cols)] = cal.C_E_prime * sh
            codes[np.ix_(np.flatnonzero(big), cols)] = 2
        if np.any(~big):
            # below lambda_min neither series applies far out; the ODE is cheap there
            s_far = s[cols]
            order = np.argsort(s_far)
            u, e = ode_matrix(params, lam[~big], s_far[order], ceiling=cal.oracle_ceiling,
                              with_error=True)
            inv = np.empty_like(order)
            inv[order] = np.arange(order.size)
            rows = np.flatnonzero(~big)
            values[np.ix_(rows, cols)] = u[:, inv]
            errors[np.ix_(rows, cols)] = e[:, inv]
            codes[np.ix_(rows, cols)] = 0
    return values, errors, codes


def phi(params, lam, s, *, accurate=False, calibration: Calibration | None = None) -> PhiValue:
    """phi_lambda(s) via the regime dispatcher."""
    v, e, c = phi_matrix(params, [lam], [s], accurate=accurate, calibration=calibration)
    return PhiValue(float(v[0, 0]), float(e[0, 0]), METHOD_CODES[int(c[0, 0])])


# ------------------------------------------------------------------ calibration

_CAL_LOCK = threading.Lock()
_CAL_CACHE: dict[sp.SpaceParams, Calibration] = {}


def fit_error_constants(params, *, r_switch=DEFAULT_R_SWITCH, ceiling=DEFAULT_CEILING,
                        lambda_min=DEFAULT_LAMBDA_MIN, lambda_max=100.0, s_max=8.0,
                        quantile=99.0, n_lambda=200, n_s_inner=120, n_s_outer=180):
    """Fit C_E and C_E' against the ODE oracle.

    One observation per ODE trajectory (fixed lambda): the largest ratio
    |series - ODE| / error shape along the s grid of that method's regime.
    The constant is the given percentile of those observations.
    Returns (C_E, C_E', per-trajectory ratios inner, outer).
    """
    lam = np.linspace(0.0, min(lambda_max, ceiling), n_lambda + 1)[1:]
    s_in = np.linspace(0.0, r_switch, n_s_inner + 1)[1:]
    s_out = np.linspace(r_switch, s_max, n_s_outer + 1)[1:]
    u, _ = ode_matrix(params, lam, np.concatenate([s_in, s_out]), ceiling=ceiling)
    v, shape = m0_terms(params, lam[:, None], s_in[None, :])
    ratio_in = (np.abs(v - u[:, : s_in.size]) / shape).max(axis=1)
    big = lam >= lambda_min
    v2, shape2 = hc_terms(params, lam[big][:, None], s_out[None, :], r_switch)
    ratio_out = (np.abs(v2 - u[big][:, s_in.size:]) / shape2).max(axis=1)
    return (float(np.percentile(ratio_in, quantile)), float(np.percentile(ratio_out, quantile)),
            ratio_in, ratio_out)


def calibrate(params, **kw) -> Calibration:
    r_switch = kw.get("r_switch", DEFAULT_R_SWITCH)
    ceiling = kw.get("ceiling", DEFAULT_CEILING)
    lambda_min = kw.get("lambda_min", DEFAULT_LAMBDA_MIN)
    if params.is_h3:
        # both series terms are exact on this space
        ce, cep = 0.0, 0.0
    else:
        ce, cep, _, _ = fit_error_constants(params, **kw)
    return Calibration(space=params.label, kappa=kappa(params), C_E=ce, C_E_prime=cep,
                       r_switch=r_switch, oracle_ceiling=ceiling, lambda_min=lambda_min)


def get_calibration(params) -> Calibration:
    """Calibration record for a space, fitted on first use and cached."""
    with _CAL_LOCK:
        cal = _CAL_CACHE.get(params)
        if cal is None:
            cal = calibrate(params)
            _CAL_CACHE[params] = cal
        return cal


def set_calibration(params, cal: Calibration) -> None:
    with _CAL_LOCK:
        _CAL_CACHE[params] = cal


def with_inversion_constant(params, c_cal: float) -> Calibration:
    cal = replace(get_calibration(params), C_cal=c_cal)
    set_calibration(params, cal)
    return cal
