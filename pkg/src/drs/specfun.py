"""Special functions: complex log-Gamma, Bessel J of real order, the normalized
Bessel kernel, the Harish-Chandra c-function and the Plancherel density.

All functions accept numpy arrays and work in double precision.
"""

from __future__ import annotations

import math

import numpy as np

from .space import DAMEK_RICCI, SpaceParams

# Lanczos approximation, g = 7, nine coefficients.
_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def _lanczos_right(z):
    """log Gamma(z) for Re z >= 0.5."""
    z = z - 1.0
    x = np.full(z.shape, _LANCZOS[0], dtype=complex)
    for i in range(1, len(_LANCZOS)):
        x = x + _LANCZOS[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(x)


def _log_sin_pi(z):
    """log sin(pi z), stable for large |Im z| (branch is irrelevant after exp)."""
    flip = z.imag < 0
    w = np.where(flip, np.conj(z), z)
    out = -1j * np.pi * w + np.log(0.5j) + np.log1p(-np.exp(2j * np.pi * w))
    return np.where(flip, np.conj(out), out)


def log_gamma(z):
    """log Gamma(z) for complex z away from the poles 0, -1, -2, ...

    Uses the Lanczos approximation on Re z >= 0.5, the recurrence
    Gamma(z) = Gamma(z + k)/(z (z+1) ... (z+k-1)) for moderately negative
    real parts, and the reflection formula further left.
    """
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    pole = (z.imag == 0) & (z.real <= 0) & (z.real == np.round(z.real))
    if np.any(pole):
        raise ValueError("log_gamma: argument is a pole of Gamma")
    out = np.empty(z.shape, dtype=complex)
    right = z.real >= 0.5
    if np.any(right):
        out[right] = _lanczos_right(z[right])
    mid = (~right) & (z.real > -20)
    if np.any(mid):
        zm = z[mid]
        k = np.ceil(0.5 - zm.real).astype(int)
        acc = np.zeros(zm.shape, dtype=complex)
        shifted = zm.copy()
        for j in range(int(k.max())):
            use = j < k
            acc = acc + np.where(use, np.log(np.where(use, shifted, 1.0)), 0.0)
            shifted = np.where(use, shifted + 1.0, shifted)
        out[mid] = _lanczos_right(shifted) - acc
    left = ~(right | mid)
    if np.any(left):
        zl = z[left]
        out[left] = math.log(math.pi) - _log_sin_pi(zl) - _lanczos_right(1.0 - zl)
    return out[0] if scalar else out


def gamma(z):
    return np.exp(log_gamma(z))


# ---------------------------------------------------------------- Bessel


def _switch_point(mu):
    return max(12.0, 2.0 * mu)


def _series_reduced(mu, z):
    """sum_k (-1)^k (z/2)^(2k) / (k! Gamma(k+mu+1)), i.e. J_mu(z) / (z/2)^mu."""
    q = -(z / 2) ** 2
    term = np.full(z.shape, 1.0 / math.gamma(mu + 1.0))
    total = term.copy()
    for k in range(1, 400):
        term = term * q / (k * (k + mu))
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _asymptotic(mu, z):
    """Hankel large-argument expansion, summed to the smallest term."""
    four_mu2 = 4.0 * mu * mu
    p = np.ones(z.shape)
    qq = np.zeros(z.shape)
    term = np.ones(z.shape)
    prev = np.full(z.shape, np.inf)
    active = np.ones(z.shape, dtype=bool)
    inv8z = 1.0 / (8.0 * z)
    for k in range(1, 120):
        term = term * (four_mu2 - (2 * k - 1) ** 2) * inv8z / k
        mag = np.abs(term)
        active &= mag < prev
        if not np.any(active):
            break
        contrib = np.where(active, term, 0.0)
        # P collects even k with alternating sign, Q the odd k.
        if k % 2 == 0:
            p = p + (-1) ** (k // 2) * contrib
        else:
            qq = qq + (-1) ** ((k - 1) // 2) * contrib
        prev = np.where(active, mag, prev)
        if not np.any(active & (mag > 1e-17)):
            break
    chi = z - (0.5 * mu + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * z)) * (p * np.cos(chi) - qq * np.sin(chi))


def _large_argument(mu, z):
    """J_mu(z) for z >= max(12, 2 mu): Hankel expansion at low order, then
    forward recurrence in the order (stable while the order stays below z)."""
    if mu < 2:
        return _asymptotic(mu, z)
    nu0 = mu - math.floor(mu)
    j_prev = _asymptotic(nu0, z)
    j_cur = _asymptotic(nu0 + 1, z)
    nu = nu0 + 1
    while nu < mu - 0.5:
        j_prev, j_cur = j_cur, (2 * nu / z) * j_cur - j_prev
        nu += 1
    return j_cur


def bessel_j(mu, z):
    """J_mu(z) for real order mu >= 0 and z >= 0."""
    if mu < 0:
        raise ValueError("bessel_j: order must be nonnegative")
    z = np.asarray(z, dtype=float)
    if np.any(z < 0) or np.any(np.isnan(z)):
        raise ValueError("bessel_j: argument must be nonnegative")
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty(z.shape)
    zs = _switch_point(mu)
    lo = z < zs
    if np.any(lo):
        zl = z[lo]
        out[lo] = (zl / 2) ** mu * _series_reduced(mu, zl)
    if np.any(~lo):
        out[~lo] = _large_argument(mu, z[~lo])
    return out[0] if scalar else out


def kernel_at_zero(mu) -> float:
    """Value of the normalized kernel at the origin: sqrt(pi) Gamma(mu+1/2)/Gamma(mu+1)."""
    return math.sqrt(math.pi) * math.exp(math.lgamma(mu + 0.5) - math.lgamma(mu + 1.0))


def bessel_kernel(mu, z):
    """2^mu sqrt(pi) Gamma(mu+1/2) J_mu(z) / z^mu, extended evenly and continuously to z = 0."""
    if mu < 0:
        raise ValueError("bessel_kernel: order must be nonnegative")
    z = np.abs(np.asarray(z, dtype=float))
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty(z.shape)
    pref = math.sqrt(math.pi) * math.gamma(mu + 0.5)
    zs = _switch_point(mu)
    lo = z < zs
    if np.any(lo):
        out[lo] = pref * _series_reduced(mu, z[lo])
    if np.any(~lo):
        zh = z[~lo]
        out[~lo] = pref * 2.0 ** mu * _large_argument(mu, zh) / zh ** mu
    return out[0] if scalar else out


# ---------------------------------------------------------------- c-function


def log_c_function(params: SpaceParams, lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam == 0):
        raise ValueError("c_function: lambda = 0 is a pole of Gamma(2 i lambda)")
    rho = params.rho
    n = params.n
    il = 1j * lam
    if params.variant == DAMEK_RICCI:
        return ((2 * rho - 2 * il) * math.log(2) + log_gamma(2 * il) - log_gamma(rho + il)
                + math.lgamma(n / 2) - log_gamma(params.m_v / 4 + 0.5 + il))
    # rank-one real hyperbolic c-function, normalized so that c(-i rho) = 1
    return (math.lgamma(2 * rho) - math.lgamma(rho) + log_gamma(il) - log_gamma(rho + il))


def c_function(params: SpaceParams, lam):
    """Harish-Chandra c-function c(lambda), lambda real and nonzero."""
    lam = np.asarray(lam, dtype=float)
    if params.is_h3:
        if np.any(lam == 0):
            raise ValueError("c_function: lambda = 0 is a pole")
        return -1j / lam
    return np.exp(log_c_function(params, lam))


def plancherel_density(params: SpaceParams, lam):
    """|c(lambda)|^(-2) for lambda >= 0, extended by 0 at lambda = 0."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("plancherel_density: lambda must be nonnegative")
    if params.is_h3:
        return lam ** 2
    scalar = lam.ndim == 0
    lam = np.atleast_1d(lam)
    out = np.zeros(lam.shape)
    pos = lam > 0
    if np.any(pos):
        out[pos] = np.exp(-2.0 * log_c_function(params, lam[pos]).real)
    return out[0] if scalar else out
