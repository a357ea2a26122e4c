"""Spherical Fourier transform, norms, the Euclidean correspondence and the
Euclidean radial propagator.

Spectral integrals are computed by panel Gauss-Legendre quadrature in lambda.
Panels are never wider than pi/(2 Omega), Omega being the worst-case phase
derivative |s + 2 t lambda| over the panel, and are further capped by the
profile's own feature scale.
"""

from __future__ import annotations

import csv
import io
import math
import os
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import space as sp
from .specfun import bessel_kernel, kernel_at_zero, plancherel_density
from .spherical import (NumericalFailure, get_calibration, hc_prefactor, phi_matrix,
                        set_calibration)

DEFAULT_ORDER = 6
DEFAULT_S_MAX = 8.0
DEFAULT_RADIAL_NODES = 2048
DEFAULT_CHUNK = 4096


class Smoothness(str, Enum):
    COMPACT_BUMP = "CompactBump"
    SCHWARTZ = "SchwartzDecay"


class TailDominanceError(ValueError):
    """The truncated part of an integral exceeds the requested tolerance."""


def default_workers() -> int:
    """DRS_WORKERS if set, else the CPU count."""
    env = os.environ.get("DRS_WORKERS")
    if env:
        try:
            w = int(env)
        except ValueError:
            raise ValueError(f"DRS_WORKERS must be a positive integer, got {env!r}") from None
        if w < 1:
            raise ValueError("DRS_WORKERS must be >= 1")
        return w
    return os.cpu_count() or 1


# ------------------------------------------------------------------ profiles


def smooth_bump(x):
    """exp(-1/(1-x^2)) on (-1, 1), zero elsewhere."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1
    out = np.zeros(x.shape)
    xi = x[inside]
    out[inside] = np.exp(-1.0 / (1.0 - xi * xi))
    return out


@dataclass(frozen=True)
class SpectralProfile:
    """A function lambda -> f^(lambda) on [0, inf).

    ``scale`` is the length over which the profile varies appreciably and
    caps the quadrature panel width.  Schwartz profiles are truncated to
    their ``support`` interval, which should be chosen where they are
    negligible.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float]
    smoothness: Smoothness = Smoothness.COMPACT_BUMP
    scale: float | None = None
    label: str = ""

    def __post_init__(self):
        lo, hi = self.support
        if not (0 <= lo < hi < np.inf):
            raise ValueError(f"invalid support {self.support}")

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        lo, hi = self.support
        inside = (lam >= lo) & (lam <= hi)
        vals = np.asarray(self.evaluator(lam[inside]))
        out = np.zeros(lam.shape, dtype=complex if np.iscomplexobj(vals) else float)
        out[inside] = vals
        return out

    @property
    def feature_scale(self) -> float:
        lo, hi = self.support
        return self.scale if self.scale is not None else (hi - lo) / 8

    def times(self, fn: Callable[[np.ndarray], np.ndarray], label: str = "") -> "SpectralProfile":
        """Pointwise product with a multiplier fn(lambda)."""
        ev = self.evaluator
        return SpectralProfile(lambda lam: ev(lam) * fn(lam), self.support, self.smoothness,
                               self.scale, label or self.label)

    def scaled(self, c: complex) -> "SpectralProfile":
        return self.times(lambda lam: c, self.label)

    def check_decay(self, samples: int = 64, power: float = 20.0) -> bool:
        """For Schwartz profiles: |f^(lambda)| (1+lambda)^power is small at the truncation point."""
        if self.smoothness is Smoothness.COMPACT_BUMP:
            return True
        lo, hi = self.support
        lam = np.linspace(lo, hi, samples)
        vals = np.abs(self(lam))
        peak = vals.max()
        return bool(vals[-1] * (1 + hi) ** power <= 1e-6 * max(peak, 1e-300) * (1 + hi) ** power
                    or vals[-1] <= 1e-14 * peak)


def gaussian_profile(center: float, width: float, amplitude: float = 1.0, *, mirror=True,
                     cutoff: float = 9.0, label: str = "") -> SpectralProfile:
    """amplitude * [exp(-(l-c)^2/(2w^2)) + exp(-(l+c)^2/(2w^2))]; the mirror term makes it even."""
    def ev(lam):
        g = np.exp(-0.5 * ((lam - center) / width) ** 2)
        if mirror:
            g = g + np.exp(-0.5 * ((lam + center) / width) ** 2)
        return amplitude * g

    lo = max(0.0, center - cutoff * width)
    return SpectralProfile(ev, (lo, center + cutoff * width), Smoothness.SCHWARTZ, width / 2,
                           label or f"gauss({center:g},{width:g})")


def bump_profile(a: float, b: float, amplitude: float = 1.0, label: str = "") -> SpectralProfile:
    """Smooth bump supported on [a, b]."""
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return SpectralProfile(lambda lam: amplitude * smooth_bump((lam - mid) / half), (a, b),
                           Smoothness.COMPACT_BUMP, half / 32, label or f"bump({a:g},{b:g})")


# ------------------------------------------------------------------ radial side


@dataclass(frozen=True)
class RadialGrid:
    """Radii with plain quadrature weights and measure weights A(s) * quad weight."""

    nodes: np.ndarray
    quad_weights: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.nodes) <= 0) or np.any(self.nodes <= 0):
            raise ValueError("radial grid must be positive and strictly increasing")
        if np.any(self.quad_weights <= 0):
            raise ValueError("quadrature weights must be positive")

    def __len__(self):
        return self.nodes.size

    def euclidean_weights(self, n: int) -> np.ndarray:
        return self.quad_weights * self.nodes ** (n - 1)


def _gl_panels(edges, order):
    x, w = np.polynomial.legendre.leggauss(order)
    a = edges[:-1, None]
    h = np.diff(edges)[:, None]
    return (a + 0.5 * h * (x + 1)).ravel(), (0.5 * h * w).ravel()


def radial_grid(params: sp.SpaceParams, s_max: float = DEFAULT_S_MAX,
                nodes: int = DEFAULT_RADIAL_NODES, *, order: int = 16, s_geom: float = 1.0,
                s_min: float = 1e-3) -> RadialGrid:
    """Composite Gauss-Legendre grid: geometric panels on (0, s_geom], uniform beyond."""
    panels = max(2, nodes // order)
    if s_max <= s_geom:
        s_geom = s_max / 2
    n_geom = max(2, min(panels // 6, panels - 1))
    n_uni = panels - n_geom
    geo = np.geomspace(s_min, s_geom, n_geom)
    edges = np.concatenate([[0.0], geo, np.linspace(s_geom, s_max, n_uni + 1)[1:]])
    s, w = _gl_panels(edges, order)
    return RadialGrid(s, w, w * sp.density(params, s))


def uniform_grid(params: sp.SpaceParams, s: Sequence[float]) -> RadialGrid:
    """Grid on given radii with trapezoid weights (no panel structure)."""
    s = np.asarray(s, dtype=float)
    if s.size == 1:
        w = np.ones(1)
    else:
        d = np.diff(s)
        w = np.concatenate([[d[0]], d[:-1] + d[1:], [d[-1]]]) / 2
    return RadialGrid(s, w, w * sp.density(params, s))


def ball_grid(params: sp.SpaceParams, radius: float, nodes: int = 64, order: int = 8) -> RadialGrid:
    """Gauss-Legendre grid on (0, radius] with uniform panels."""
    panels = max(1, nodes // order)
    s, w = _gl_panels(np.linspace(0.0, radius, panels + 1), order)
    return RadialGrid(s, w, w * sp.density(params, s))


def interval_grid(params: sp.SpaceParams, a: float, b: float, nodes: int = 32,
                  order: int = 8) -> RadialGrid:
    """Gauss-Legendre grid on [a, b] (a >= 0) with uniform panels."""
    panels = max(1, nodes // order)
    s, w = _gl_panels(np.linspace(a, b, panels + 1), order)
    return RadialGrid(s, w, w * sp.density(params, s))


def as_grid(params, s_grid) -> RadialGrid:
    if isinstance(s_grid, RadialGrid):
        return s_grid
    return uniform_grid(params, np.atleast_1d(np.asarray(s_grid, dtype=float)))


@dataclass(frozen=True)
class RadialFunction:
    grid: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    error: np.ndarray | None = None

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 1 or np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(np.asarray(self.weights) <= 0):
            raise ValueError("weights must be positive")
        if np.shape(self.values) != g.shape or np.shape(self.weights) != g.shape:
            raise ValueError("grid, values and weights must have equal length")

    @classmethod
    def on(cls, grid: RadialGrid, values, error=None) -> "RadialFunction":
        return cls(grid.nodes, np.asarray(values), grid.weights, error)

    def abs(self) -> "RadialFunction":
        return RadialFunction(self.grid, np.abs(self.values), self.weights, self.error)

    def to_csv(self, header: Sequence[str] = ()) -> str:
        return write_csv(self.grid, self.values, self.weights, header)

    @classmethod
    def from_csv(cls, text: str) -> "RadialFunction":
        x, v, w = read_csv(text)
        return cls(x, v, w)


@dataclass(frozen=True)
class SpectralSamples:
    """Sampled spectral profile returned by the forward transform."""

    lam: np.ndarray
    values: np.ndarray
    weights: np.ndarray | None = None
    tail_bound: float = 0.0

    def to_csv(self, header: Sequence[str] = ()) -> str:
        w = self.weights if self.weights is not None else np.zeros_like(self.lam)
        return write_csv(self.lam, self.values, w, header)


def write_csv(x, values, weights, header: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s_or_lambda", "re", "im", "weight"])
    values = np.asarray(values)
    for xi, vi, wi in zip(x, values, weights):
        vi = complex(vi)
        w.writerow([repr(float(xi)), repr(vi.real), repr(vi.imag), repr(float(wi))])
    return buf.getvalue()


def read_csv(text: str):
    rows = [r for r in csv.reader(line for line in io.StringIO(text) if not line.startswith("#"))]
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    return body[:, 0], body[:, 1] + 1j * body[:, 2], body[:, 3]


# ------------------------------------------------------------------ lambda quadrature


@dataclass(frozen=True)
class QuadratureGrid:
    """Panel Gauss-Legendre rule on [edges[0], edges[-1]]."""

    edges: np.ndarray
    order: int = DEFAULT_ORDER
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
            raise ValueError("panel edges must be strictly increasing")
        x, w = _gl_panels(e, self.order)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "weights", w)

    @property
    def panels(self) -> int:
        return self.edges.size - 1

    @property
    def max_width(self) -> float:
        return float(np.diff(self.edges).max())

    def refined(self) -> "QuadratureGrid":
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        e = np.empty(2 * self.edges.size - 1)
        e[0::2] = self.edges
        e[1::2] = mid
        return QuadratureGrid(e, self.order)

    def integrate(self, values) -> complex:
        return np.sum(self.weights * values)


def lambda_quadrature(lo: float, hi: float, *, s_max: float = 0.0, t_max: float = 0.0,
                      max_width: float = np.inf, order: int = DEFAULT_ORDER,
                      growth: float = 1.25) -> QuadratureGrid:
    """Panels on [lo, hi] with width <= pi / (2 (s_max + 2 t_max lambda_right)).

    The interval is cut into blocks over which the phase-derivative bound
    grows by at most ``growth``; panels are uniform within a block.
    """
    if not hi > lo:
        raise ValueError("empty lambda interval")
    edges = [lo]
    a = lo
    while a < hi:
        om_a = s_max + 2 * t_max * a
        if t_max > 0 and om_a > 0:
            b = min(hi, max(a + 1e-12, (growth * om_a - s_max) / (2 * t_max)))
        else:
            b = hi
        om_b = s_max + 2 * t_max * b
        w = min(max_width, math.pi / (2 * om_b) if om_b > 0 else np.inf, b - a)
        k = max(1, int(math.ceil((b - a) / w - 1e-9)))
        edges.extend(np.linspace(a, b, k + 1)[1:])
        a = b
    return QuadratureGrid(np.array(edges), order)


def profile_quadrature(profile: SpectralProfile, *, s_max: float = 0.0, t_max: float = 0.0,
                       order: int = DEFAULT_ORDER) -> QuadratureGrid:
    lo, hi = profile.support
    return lambda_quadrature(lo, hi, s_max=s_max, t_max=t_max,
                             max_width=profile.feature_scale, order=order)


# ------------------------------------------------------------------ phi tables

_TABLE_LOCK = threading.Lock()
_TABLES: "OrderedDict[tuple, tuple]" = OrderedDict()
_TABLE_CAP = 6


def phi_table(params: sp.SpaceParams, lam, s, *, accurate: bool = True):
    """(phi, error bound) on the tensor grid lam x s, memoized for reuse across profiles."""
    lam = np.ascontiguousarray(lam, dtype=float)
    s = np.ascontiguousarray(s, dtype=float)
    key = (params, accurate, lam.tobytes(), s.tobytes())
    with _TABLE_LOCK:
        hit = _TABLES.get(key)
        if hit is not None:
            _TABLES.move_to_end(key)
            return hit
    v, e, _ = phi_matrix(params, lam, s, accurate=accurate)
    with _TABLE_LOCK:
        _TABLES[key] = (v, e)
        while len(_TABLES) > _TABLE_CAP:
            _TABLES.popitem(last=False)
    return v, e


def clear_tables():
    with _TABLE_LOCK:
        _TABLES.clear()


# ------------------------------------------------------------------ inversion constant


def analytic_inversion_constant(params: sp.SpaceParams) -> float:
    """1 / (2 pi p^2), p^2 = lim A(s) e^(-2 rho s); the value the round trip should reproduce."""
    return 1.0 / (2 * math.pi * hc_prefactor(params) ** 2)


REFERENCE_PROFILE = (1.5, 1.0)
STANDARD_LAMBDA_MAX = 20.0


def standard_quadrature(s_max: float = DEFAULT_S_MAX) -> QuadratureGrid:
    """Shared rule on [0, 20] for low-frequency profile families (tables get reused)."""
    return lambda_quadrature(0.0, STANDARD_LAMBDA_MAX, s_max=s_max, max_width=0.2)


def calibrate_inversion_constant(params: sp.SpaceParams, *, grid: RadialGrid | None = None,
                                 accurate: bool = True) -> float:
    """Fit C_cal so that forward(inverse(g)) = g for a reference Gaussian profile."""
    g = gaussian_profile(*REFERENCE_PROFILE)
    grid = grid or radial_grid(params)
    quad = standard_quadrature(float(grid.nodes[-1]))
    f = inverse_sft(params, g, grid, constant=1.0, quad=quad, accurate=accurate, check=False)
    back = forward_sft(params, f, quad.nodes, accurate=accurate).values
    target = g(quad.nodes)
    mu = quad.weights * plancherel_density(params, quad.nodes)
    return float(np.sum(mu * target * back.real) / np.sum(mu * back.real ** 2))


def inversion_constant(params: sp.SpaceParams) -> float:
    """The space's calibrated inversion constant, computed once and stored in its calibration record."""
    cal = get_calibration(params)
    if cal.C_cal is None:
        c = calibrate_inversion_constant(params)
        from dataclasses import replace
        cal = replace(get_calibration(params), C_cal=c)
        set_calibration(params, cal)
    return cal.C_cal


# ------------------------------------------------------------------ spectral sums


def _phase_rows(times, lam2, anchor_every=16):
    """exp(i t_k lam^2) for all k; uniform runs are filled by multiplication."""
    out = np.empty((len(times), lam2.size), dtype=complex)
    k = 0
    nt = len(times)
    while k < nt:
        out[k] = np.exp(1j * times[k] * lam2)
        j = k + 1
        if j < nt:
            dt = times[j] - times[k]
            step = np.exp(1j * dt * lam2)
            while j < nt and j - k < anchor_every and abs((times[j] - times[j - 1]) - dt) <= 1e-12 * abs(dt):
                out[j] = out[j - 1] * step
                j += 1
        k = j
    return out


def _chunks(n, size):
    return [(a, min(n, a + size)) for a in range(0, n, size)]


def spectral_sum(params: sp.SpaceParams, profile: SpectralProfile, grid: RadialGrid, times,
                 quad: QuadratureGrid, *, constant: float, accurate: bool = False,
                 per_node: bool = False, workers: int | None = None, chunk: int = DEFAULT_CHUNK):
    """C * sum_j w_j f^(l_j) |c(l_j)|^-2 e^{i t (l_j^2 + rho^2)} phi_{l_j}(s).

    ``times`` is a vector of times (result shape (len(times), len(s))) or,
    with ``per_node``, one time per radius (result shape (len(s),)).
    Returns (values, phi-error contribution); the latter bounds the effect of
    the spherical-function error bounds on the sum.  The lambda axis is split
    into fixed chunks reduced in order, so the result does not depend on the
    worker count.
    """
    s = grid.nodes
    times = np.atleast_1d(np.asarray(times, dtype=float))
    amp_all = quad.weights * profile(quad.nodes) * plancherel_density(params, quad.nodes)
    spans = _chunks(quad.nodes.size, chunk)
    rho2 = params.rho ** 2

    def work(span):
        a, b = span
        lam = quad.nodes[a:b]
        amp = amp_all[a:b]
        if accurate:
            phi, err = phi_table(params, lam, s, accurate=True)
        else:
            phi, err, _ = phi_matrix(params, lam, s)
        e_abs = np.abs(amp) @ err
        if per_node:
            ph = np.exp(1j * np.outer(lam * lam, times))
            val = np.einsum("j,ji,ji->i", amp, ph, phi)
        else:
            rows = _phase_rows(times, lam * lam) * amp[None, :]
            val = rows.real @ phi + 1j * (rows.imag @ phi)
        return val, e_abs

    workers = default_workers() if workers is None else workers
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(work, spans))
    else:
        parts = [work(sp_) for sp_ in spans]
    total = np.zeros(s.size if per_node else (times.size, s.size), dtype=complex)
    err = np.zeros(s.size)
    for v, e in parts:
        total = total + v
        err = err + e
    total = total * np.exp(1j * times * rho2)[:, None] if not per_node else total * np.exp(1j * times * rho2)
    return constant * total, constant * err


# ------------------------------------------------------------------ transforms


def inverse_sft(params: sp.SpaceParams, profile: SpectralProfile, s_grid, *,
                constant: float | None = None, quad: QuadratureGrid | None = None,
                accurate: bool = True, tol: float = 1e-8, max_refine: int = 6,
                check: bool = True, workers: int | None = None) -> RadialFunction:
    """f(s) = C_cal * int f^(l) phi_l(s) |c(l)|^-2 dl.

    Converged when halving every panel changes the values by less than
    ``tol`` relative to max |f|.
    """
    grid = as_grid(params, s_grid)
    C = inversion_constant(params) if constant is None else constant
    q = quad or profile_quadrature(profile, s_max=float(grid.nodes[-1]))
    vals, err = spectral_sum(params, profile, grid, [0.0], q, constant=C, accurate=accurate,
                             workers=workers)
    vals = vals[0]
    if check:
        for _ in range(max_refine):
            q2 = q.refined()
            v2, err = spectral_sum(params, profile, grid, [0.0], q2, constant=C,
                                   accurate=accurate, workers=workers)
            v2 = v2[0]
            change = np.max(np.abs(v2 - vals)) / max(np.max(np.abs(v2)), 1e-300)
            vals, q = v2, q2
            if change < tol:
                break
        else:
            raise NumericalFailure(f"inverse_sft: quadrature not converged after {max_refine} "
                                   f"refinements (relative change {change:.3g}, "
                                   f"{q.panels} panels)")
    if not np.iscomplexobj(profile(np.array(profile.support))):
        vals = vals.real
    return RadialFunction.on(grid, vals, err)


def _tail_estimate(params, f: RadialFunction) -> float:
    """Rough bound for int_{s_max}^inf |f| A |phi| ds from the integrand envelope near the end."""
    s = f.grid
    m = max(4, s.size // 20)
    ss = s[-m:]
    env = np.abs(f.values[-m:]) * np.exp(sp.log_density(params, ss) - params.rho * ss) * (1 + ss)
    if np.all(env == 0):
        return 0.0
    logs = np.log(np.maximum(env, 1e-300))
    # upper hull of the envelope: slope between the maxima of the two halves
    h = m // 2
    i1 = int(np.argmax(logs[:h]))
    i2 = h + int(np.argmax(logs[h:]))
    rate = (logs[i2] - logs[i1]) / (ss[i2] - ss[i1]) if ss[i2] > ss[i1] else 0.0
    if rate >= -1e-3:
        return np.inf
    return float(np.exp(logs[i2]) / (-rate))


def forward_sft(params: sp.SpaceParams, f: RadialFunction, lam, *, accurate: bool = True,
                tol: float | None = None) -> SpectralSamples:
    """f^(l) = int f(s) phi_l(s) A(s) ds by the grid's measure weights."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if accurate:
        phi, _ = phi_table(params, lam, f.grid, accurate=True)
    else:
        phi, _, _ = phi_matrix(params, lam, f.grid)
    fw = f.values * f.weights
    vals = phi @ fw.real + 1j * (phi @ fw.imag) if np.iscomplexobj(fw) else phi @ fw
    tail = _tail_estimate(params, f)
    if tol is not None and tail > tol * max(np.max(np.abs(vals)), 1e-300):
        raise TailDominanceError(f"forward_sft: truncation tail {tail:.3g} exceeds tolerance; "
                                 f"extend the radial grid beyond s={f.grid[-1]:g}")
    return SpectralSamples(lam, vals, None, tail)


# ------------------------------------------------------------------ norms


def _profile_integral(profile, integrand, rtol=1e-11, max_refine=12):
    lo, hi = profile.support
    q = lambda_quadrature(lo, hi, max_width=profile.feature_scale)
    val = q.integrate(integrand(q.nodes))
    for _ in range(max_refine):
        q = q.refined()
        v2 = q.integrate(integrand(q.nodes))
        if abs(v2 - val) <= rtol * abs(v2):
            return v2
        val = v2
    raise NumericalFailure("profile integral did not converge")


def sobolev_norm(params: sp.SpaceParams, profile: SpectralProfile, alpha: float, *,
                 constant: float | None = None) -> float:
    """(C_cal int (l^2+rho^2)^alpha |f^|^2 |c|^-2 dl)^(1/2)."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    C = inversion_constant(params) if constant is None else constant
    rho2 = params.rho ** 2

    def integrand(lam):
        return (lam * lam + rho2) ** alpha * np.abs(profile(lam)) ** 2 * plancherel_density(params, lam)

    if profile.smoothness is Smoothness.SCHWARTZ:
        lo, hi = profile.support
        probe = np.linspace(lo, hi, 257)
        vals = integrand(probe)
        if vals[-1] > 1e-10 * vals.max():
            raise ValueError("sobolev_norm: integrand not negligible at the support edge "
                             "(divergent or truncated tail)")
    return math.sqrt(C * _profile_integral(profile, integrand).real)


def _region_mask(f: RadialFunction, region):
    lo, hi = region if region is not None else (0.0, np.inf)
    mask = (f.grid >= lo) & (f.grid <= hi)
    if not np.any(mask):
        raise ValueError(f"region {region} contains no grid nodes")
    return mask


def lq_norm(params: sp.SpaceParams, f: RadialFunction, q: float, region=None) -> float:
    """(int_region |f|^q A ds)^(1/q) on the grid's measure weights; q = inf gives the max."""
    if q < 1:
        raise ValueError("q must be >= 1")
    m = _region_mask(f, region)
    a = np.abs(f.values[m])
    if np.isinf(q):
        return float(a.max())
    return float(np.sum(f.weights[m] * a ** q) ** (1.0 / q))


def weak_l2_quasinorm(params: sp.SpaceParams, f: RadialFunction, *, tail_fraction: float = 0.02,
                      tail_levels: float = 4.0, slack: float = 0.05) -> float:
    """sup_t t d_f(t)^(1/2), d_f(t) = sum of measure weights where |f| > t.

    The supremum is taken exactly over the step distribution function of the
    samples: for levels just below each sampled |f| value.  If the sup is only
    reached at levels comparable to |f| near the end of the grid, the grid is
    too short and an error names the level.
    """
    a = np.abs(f.values)
    order = np.argsort(-a, kind="stable")
    lev = a[order]
    d = np.cumsum(f.weights[order])
    h = lev * np.sqrt(d)
    best = float(h.max()) if h.size else 0.0
    if best == 0.0:
        return 0.0
    m = max(1, int(tail_fraction * a.size))
    t_tail = float(a[-m:].max())
    near = lev <= tail_levels * t_tail
    far = ~near
    if np.any(near) and t_tail > 0:
        if not np.any(far) or h[near].max() > (1 + slack) * h[far].max():
            t_bad = float(lev[near][np.argmax(h[near])])
            raise TailDominanceError(f"weak_l2_quasinorm: supremum reached at level t={t_bad:.3g}, "
                                     f"within the grid-truncation zone (tail level {t_tail:.3g})")
    return best


# ------------------------------------------------------------------ Euclidean side


def euclidean_constant(n: int) -> float:
    """Inversion constant for the radial transform with kernel bessel_kernel((n-2)/2, .)."""
    mu = (n - 2) / 2
    a = 2 ** mu * math.sqrt(math.pi) * math.gamma(mu + 0.5)
    return 1.0 / a ** 2


def correspondence_to_euclidean(params: sp.SpaceParams, profile: SpectralProfile) -> SpectralProfile:
    """Fg(l) = |c(l)|^-2 f^(l) / l^(n-1) on the support."""
    lo, hi = profile.support
    if lo <= 0:
        raise ValueError("correspondence requires support bounded away from 0")
    n = params.n
    ev = profile.evaluator
    return SpectralProfile(lambda lam: plancherel_density(params, lam) * ev(lam) / lam ** (n - 1),
                           profile.support, profile.smoothness, profile.scale,
                           f"euclid[{profile.label}]")


def correspondence_from_euclidean(params: sp.SpaceParams, e_profile: SpectralProfile) -> SpectralProfile:
    """Inverse map f^(l) = l^(n-1) Fg(l) / |c(l)|^-2."""
    lo, hi = e_profile.support
    if lo <= 0:
        raise ValueError("correspondence requires support bounded away from 0")
    n = params.n
    ev = e_profile.evaluator
    return SpectralProfile(lambda lam: lam ** (n - 1) * ev(lam) / plancherel_density(params, lam),
                           e_profile.support, e_profile.smoothness, e_profile.scale,
                           f"sft[{e_profile.label}]")


def euclidean_sobolev_norm(n: int, e_profile: SpectralProfile, alpha: float) -> float:
    """(C_e int (1+l^2)^alpha |Fg|^2 l^(n-1) dl)^(1/2)."""
    def integrand(lam):
        return (1 + lam * lam) ** alpha * np.abs(e_profile(lam)) ** 2 * lam ** (n - 1)

    return math.sqrt(euclidean_constant(n) * _profile_integral(e_profile, integrand).real)


def euclidean_propagate(n: int, e_profile: SpectralProfile, t, s_grid, *, tol: float = 1e-9,
                        max_refine: int = 8, order: int = DEFAULT_ORDER) -> RadialFunction:
    """T0 psi(s) = C_e int Fpsi(l) e^{i t l^2} J(l s) l^(n-1) dl, J = bessel_kernel((n-2)/2, .).

    ``t`` is a constant or one time per radius.  Measure weights of the
    result are Euclidean, s^(n-1) ds.
    """
    mu = (n - 2) / 2
    if isinstance(s_grid, RadialGrid):
        s, w = s_grid.nodes, s_grid.euclidean_weights(n)
    else:
        s = np.atleast_1d(np.asarray(s_grid, dtype=float))
        w = uniform_grid(sp.real_hyperbolic(max(n, 2)), s).quad_weights * s ** (n - 1)
    tt = np.broadcast_to(np.asarray(t, dtype=float), s.shape)
    lo, hi = e_profile.support
    q = lambda_quadrature(lo, hi, s_max=float(s.max()), t_max=float(np.max(np.abs(tt))),
                          max_width=e_profile.feature_scale, order=order)

    def evaluate(qg):
        lam = qg.nodes
        amp = qg.weights * e_profile(lam) * lam ** (n - 1)
        out = np.empty(s.size, dtype=complex)
        for i in range(s.size):
            ker = bessel_kernel(mu, lam * s[i])
            out[i] = np.sum(amp * np.exp(1j * tt[i] * lam * lam) * ker)
        return euclidean_constant(n) * out

    vals = evaluate(q)
    for _ in range(max_refine):
        q = q.refined()
        v2 = evaluate(q)
        change = np.max(np.abs(v2 - vals)) / max(np.max(np.abs(v2)), 1e-300)
        vals = v2
        if change < tol:
            break
    else:
        raise NumericalFailure(f"euclidean_propagate: not converged (relative change {change:.3g})")
    return RadialFunction(s, vals, w)


def euclidean_kernel_at_zero(n: int) -> float:
    return kernel_at_zero((n - 2) / 2)
