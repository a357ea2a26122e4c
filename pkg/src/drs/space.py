"""Geometry of Damek-Ricci and real hyperbolic spaces.

Only the radial structure matters downstream: the volume density A(s) of
geodesic spheres and its logarithmic derivative.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import bernoulli

DAMEK_RICCI = "DamekRicci"
REAL_HYPERBOLIC = "RealHyperbolic"


@dataclass(frozen=True)
class SpaceParams:
    """Damek-Ricci space DR(m_v, m_z) or real hyperbolic space RH(n)."""

    variant: str
    m_v: int = 0
    m_z: int = 0
    dim: int = 0

    def __post_init__(self):
        if self.variant == DAMEK_RICCI:
            if int(self.m_v) != self.m_v or int(self.m_z) != self.m_z:
                raise ValueError("m_v and m_z must be integers")
            if self.m_v < 2 or self.m_v % 2:
                raise ValueError(f"m_v must be even and >= 2, got {self.m_v}")
            if self.m_z < 1:
                raise ValueError(f"m_z must be >= 1, got {self.m_z}")
            object.__setattr__(self, "dim", self.m_v + self.m_z + 1)
        elif self.variant == REAL_HYPERBOLIC:
            if int(self.dim) != self.dim or self.dim < 2:
                raise ValueError(f"dimension must be an integer >= 2, got {self.dim}")
        else:
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def n(self) -> int:
        return self.dim

    @property
    def Q(self) -> float:
        if self.variant == DAMEK_RICCI:
            return self.m_v / 2 + self.m_z
        return float(self.dim - 1)

    @property
    def rho(self) -> float:
        return self.Q / 2

    @property
    def is_h3(self) -> bool:
        return self.variant == REAL_HYPERBOLIC and self.dim == 3

    @property
    def label(self) -> str:
        if self.variant == DAMEK_RICCI:
            return f"dr:{self.m_v},{self.m_z}"
        if self.dim == 3:
            return "h3"
        return f"rh:{self.dim}"

    def __str__(self):
        return self.label


def damek_ricci(m_v: int, m_z: int) -> SpaceParams:
    return SpaceParams(DAMEK_RICCI, m_v=m_v, m_z=m_z)


def real_hyperbolic(n: int) -> SpaceParams:
    return SpaceParams(REAL_HYPERBOLIC, dim=n)


def parse_space(text: str) -> SpaceParams:
    """Parse 'h3', 'rh:4' or 'dr:2,1'."""
    t = text.strip().lower().replace(" ", "")
    if t == "h3":
        return real_hyperbolic(3)
    m = re.fullmatch(r"(?:rh|h)[:]?(\d+)", t)
    if m:
        return real_hyperbolic(int(m.group(1)))
    m = re.fullmatch(r"dr[:(]?(\d+),(\d+)\)?", t)
    if m:
        return damek_ricci(int(m.group(1)), int(m.group(2)))
    raise ValueError(f"cannot parse space {text!r}; expected h3, rh:<n> or dr:<m_v>,<m_z>")


def _check_radius(s):
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise ValueError("radius must be positive")
    return s


def log_density(params: SpaceParams, s):
    """log A(s), computed without overflow for large s."""
    s = _check_radius(s)
    big = np.maximum(s, 1.0)
    if params.variant == DAMEK_RICCI:
        a = params.m_v + params.m_z
        h = big / 2
        far = (params.Q * big - params.m_z * math.log(2)
               + a * np.log1p(-np.exp(-2 * h)) + params.m_z * np.log1p(np.exp(-2 * h)))
    else:
        far = (params.dim - 1) * (big - math.log(2) + np.log1p(-np.exp(-2 * big)))
    near = np.log(density(params, np.minimum(s, 1.0)))
    return np.where(s < 1.0, near, far)


def density(params: SpaceParams, s):
    """Volume density A(s); A(s)/s^(n-1) -> 1 as s -> 0."""
    s = _check_radius(s)
    if params.variant == DAMEK_RICCI:
        a = params.m_v + params.m_z
        return (2 * np.sinh(s / 2)) ** a * np.cosh(s / 2) ** params.m_z
    return np.sinh(s) ** (params.dim - 1)


def log_derivative(params: SpaceParams, s):
    """A'(s)/A(s)."""
    s = _check_radius(s)
    if params.variant == DAMEK_RICCI:
        a = params.m_v + params.m_z
        return 0.5 * a / np.tanh(s / 2) + 0.5 * params.m_z * np.tanh(s / 2)
    return (params.dim - 1) / np.tanh(s)


def far_field_constant(params: SpaceParams) -> float:
    """lim A(s) exp(-2 rho s) as s -> infinity."""
    if params.variant == DAMEK_RICCI:
        return 2.0 ** (-params.m_z)
    return 2.0 ** (-(params.dim - 1))


@lru_cache(maxsize=None)
def log_derivative_series(params: SpaceParams, terms: int = 24) -> np.ndarray:
    """Coefficients d_1, d_3, ... with A'/A = (n-1)/s + sum_k d_(2k-1) s^(2k-1).

    Radius of convergence is 2*pi for Damek-Ricci and pi for real hyperbolic.
    """
    B = bernoulli(2 * terms)
    out = np.empty(terms)
    for k in range(1, terms + 1):
        b2k = B[2 * k] / math.factorial(2 * k)
        if params.variant == DAMEK_RICCI:
            a = params.m_v + params.m_z
            out[k - 1] = (a + params.m_z * (4.0 ** k - 1)) * b2k
        else:
            out[k - 1] = (params.dim - 1) * 4.0 ** k * b2k
    return out
