"""Schrodinger propagator S_t, maximal function S* and the linearized operator T."""

from __future__ import annotations

import io
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import space as sp
from .spherical import NumericalFailure
from .transforms import (DEFAULT_ORDER, default_workers, QuadratureGrid, RadialFunction, RadialGrid,
                         SpectralProfile, as_grid, inversion_constant, lambda_quadrature,
                         spectral_sum)


class Spacing(str, Enum):
    UNIFORM = "Uniform"
    LOG_LOW_UNIFORM = "LogLow+Uniform"


@dataclass(frozen=True)
class TimeGrid:
    points: np.ndarray
    spacing: Spacing
    t_max: float

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(np.diff(p) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if p[0] <= 0 or p[-1] >= self.t_max:
            raise ValueError(f"time grid must lie inside (0, {self.t_max:g})")
        object.__setattr__(self, "points", p)

    def __len__(self):
        return self.points.size

    def refined(self) -> "TimeGrid":
        """Twice the density: geometric midpoints on the log part, arithmetic elsewhere."""
        p = self.points
        mid = np.where(p[1:] / p[:-1] > 1.0 + 1e-9, np.sqrt(p[1:] * p[:-1]), 0.5 * (p[1:] + p[:-1]))
        if self.spacing is Spacing.UNIFORM:
            mid = 0.5 * (p[1:] + p[:-1])
        out = np.empty(2 * p.size - 1)
        out[0::2] = p
        out[1::2] = mid
        return TimeGrid(out, self.spacing, self.t_max)


def horizon(params: sp.SpaceParams, c: float = 1.0) -> float:
    """Upper end c / rho^2 of the time interval."""
    return c / params.rho ** 2


def default_time_grid(params: sp.SpaceParams, *, n_log: int = 64, n_uniform: int = 193,
                      c: float = 1.0, lam_hi: float | None = None) -> TimeGrid:
    """n_log log-spaced points in [1e-6, 0.1] and n_uniform uniform points up to (1 - 1e-6), all times c / rho^2.

    With ``lam_hi`` the log part starts low enough that the phase
    t (lam_hi^2 + rho^2) at the first point is at most 1e-4, so the
    t -> 0+ limit is sampled even for profiles at very high frequency.
    """
    T = horizon(params, c)
    lo = 1e-6 * T
    if lam_hi is not None:
        lo = min(lo, 1e-4 / (lam_hi ** 2 + params.rho ** 2))
    log = np.geomspace(lo, 0.1 * T, n_log)
    uni = np.linspace(0.1 * T, (1 - 1e-6) * T, n_uniform + 1)[1:]
    return TimeGrid(np.concatenate([log, uni]), Spacing.LOG_LOW_UNIFORM, T)


def uniform_time_grid(params: sp.SpaceParams, count: int, *, c: float = 1.0) -> TimeGrid:
    T = horizon(params, c)
    return TimeGrid(np.linspace(0, T, count + 2)[1:-1], Spacing.UNIFORM, T)


def time_groups(times, s_max: float, lam_hi: float, ratio: float = 2.0):
    """Split sorted times into runs whose phase-derivative bounds differ by at most ``ratio``."""
    om = s_max + 2 * np.asarray(times, dtype=float) * lam_hi
    groups = []
    start = 0
    for k in range(1, om.size + 1):
        if k == om.size or om[k] > ratio * om[start]:
            groups.append(np.arange(start, k))
            start = k
    return groups


def _quad_for(profile: SpectralProfile, s_max: float, t_max: float, order: int) -> QuadratureGrid:
    lo, hi = profile.support
    return lambda_quadrature(lo, hi, s_max=s_max, t_max=t_max, max_width=profile.feature_scale,
                             order=order)


@dataclass
class Engine:
    """Evaluation options shared by the propagator entry points."""

    accurate: bool = True
    order: int = DEFAULT_ORDER
    workers: int | None = None
    chunk: int = 4096
    constant: float | None = None

    def C(self, params):
        return inversion_constant(params) if self.constant is None else self.constant

    @property
    def n_workers(self):
        return self.workers if self.workers is not None else default_workers()


def _check_times(params, times, t_max):
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times >= t_max):
        raise ValueError(f"times must lie in [0, {t_max:g})")
    return times


def _field(params, profile, grid: RadialGrid, times, eng: Engine, refine_quad: int = 0):
    """Values S_t f(s) for sorted times, shape (len(times), len(s)), plus phi-error bounds."""
    s_max = float(grid.nodes[-1])
    out = np.empty((len(times), grid.nodes.size), dtype=complex)
    err = np.zeros((len(times), grid.nodes.size))
    for g in time_groups(times, s_max, profile.support[1]):
        q = _quad_for(profile, s_max, float(times[g[-1]]), eng.order)
        for _ in range(refine_quad):
            q = q.refined()
        v, e = spectral_sum(params, profile, grid, times[g], q, constant=eng.C(params),
                            accurate=eng.accurate, workers=eng.n_workers, chunk=eng.chunk)
        out[g] = v
        err[g] = e[None, :]
    return out, err


def _per_node(params, profile, grid: RadialGrid, t_of_s, eng: Engine, refine_quad: int = 0):
    """S_{t(s)} f(s) with one time per node."""
    s_max = float(grid.nodes[-1])
    order = np.argsort(t_of_s, kind="stable")
    out = np.empty(grid.nodes.size, dtype=complex)
    err = np.zeros(grid.nodes.size)
    ts = t_of_s[order]
    for g in time_groups(ts, s_max, profile.support[1]):
        idx = np.sort(order[g])
        sub = RadialGrid(grid.nodes[idx], grid.quad_weights[idx], grid.weights[idx])
        q = _quad_for(profile, s_max, float(ts[g[-1]]), eng.order)
        for _ in range(refine_quad):
            q = q.refined()
        v, e = spectral_sum(params, profile, sub, t_of_s[idx], q, constant=eng.C(params),
                            accurate=eng.accurate, per_node=True, workers=eng.n_workers,
                            chunk=eng.chunk)
        out[idx] = v
        err[idx] = e
    return out, err


def propagate(params: sp.SpaceParams, profile: SpectralProfile, t: float, s_grid, *,
              engine: Engine | None = None, check: bool = False, tol: float = 1e-8,
              max_refine: int = 6, c: float = 1.0) -> RadialFunction:
    """S_t f(s) = C_cal int f^ e^{i t (l^2+rho^2)} phi_l(s) |c|^-2 dl.

    With ``check`` the panels are halved until the values move by less than
    ``tol`` relative to their maximum; NumericalFailure after ``max_refine``
    halvings.
    """
    eng = engine or Engine()
    grid = as_grid(params, s_grid)
    _check_times(params, [t], horizon(params, c))
    times = np.array([float(t)])
    v, e = _field(params, profile, grid, times, eng)
    if check:
        for r in range(1, max_refine + 1):
            v2, e = _field(params, profile, grid, times, eng, refine_quad=r)
            change = np.max(np.abs(v2 - v)) / max(np.max(np.abs(v2)), 1e-300)
            v = v2
            if change < tol:
                break
        else:
            raise NumericalFailure(f"propagate: quadrature not converged after {max_refine} "
                                   f"halvings (relative change {change:.3g})")
    return RadialFunction.on(grid, v[0], e[0])


def linearized(params: sp.SpaceParams, profile: SpectralProfile, t_of_s, s_grid, *,
               engine: Engine | None = None, c: float = 1.0) -> RadialFunction:
    """Tf(s) = S_{t(s)} f(s)."""
    eng = engine or Engine()
    grid = as_grid(params, s_grid)
    t_of_s = np.broadcast_to(np.asarray(t_of_s, dtype=float), grid.nodes.shape).copy()
    if np.any(t_of_s <= 0) or np.any(t_of_s >= horizon(params, c)):
        raise ValueError(f"time assignment must lie in (0, {horizon(params, c):g})")
    v, e = _per_node(params, profile, grid, t_of_s, eng)
    return RadialFunction.on(grid, v, e)


@dataclass(frozen=True)
class MaximalField:
    grid: np.ndarray
    weights: np.ndarray
    sup_values: np.ndarray
    argmax_times: np.ndarray
    error_estimate: np.ndarray
    grid_sup: np.ndarray
    time_grid: TimeGrid

    def as_radial(self) -> RadialFunction:
        return RadialFunction(self.grid, self.sup_values, self.weights, self.error_estimate)

    def to_csv(self, header: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        buf.write("s,sup_value,argmax_t,error_estimate\n")
        for row in zip(self.grid, self.sup_values, self.argmax_times, self.error_estimate):
            buf.write(",".join(repr(float(x)) for x in row) + "\n")
        return buf.getvalue()


def _parabola_vertex(a, b, c, fa, fb, fc):
    num = (b - a) ** 2 * (fb - fc) - (b - c) ** 2 * (fb - fa)
    den = (b - a) * (fb - fc) - (b - c) * (fb - fa)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = b - 0.5 * num / den
    bad = ~np.isfinite(v) | (v <= a) | (v >= c)
    return np.where(bad, b, v), bad


def maximal(params: sp.SpaceParams, profile: SpectralProfile, s_grid, time_grid: TimeGrid, *,
            engine: Engine | None = None, refine_steps: int = 3,
            check: bool = False) -> MaximalField:
    """S*f(s) = sup over the time grid of |S_t f(s)|, then parabolic refinement.

    Refinement runs ``refine_steps`` rounds of successive parabolic
    interpolation inside the bracket around each node's discrete argmax and
    keeps a new time only if it increases |S_t f|.  When the argmax is the
    first grid time the bracket is (0, t_2), anchored at the t -> 0+ limit.  The reported sup is the
    value of the linearized operator at the reported argmax time.
    """
    eng = engine or Engine()
    grid = as_grid(params, s_grid)
    times = time_grid.points
    vals, err = _field(params, profile, grid, times, eng)
    mag = np.abs(vals)
    k = np.argmax(mag, axis=0)
    cols = np.arange(grid.nodes.size)
    grid_sup = mag[k, cols]
    best_t = times[k].copy()
    best_v = grid_sup.copy()
    quad_err = np.zeros(grid.nodes.size)
    if check:
        v2, _ = _field(params, profile, grid, times, eng, refine_quad=1)
        quad_err = np.max(np.abs(np.abs(v2) - mag), axis=0)
    inner = k < times.size - 1
    if refine_steps > 0 and np.any(inner):
        a = np.where(k > 0, times[np.maximum(k - 1, 0)], 0.0)
        c = np.where(inner, times[np.minimum(k + 1, times.size - 1)], 0.0)
        fa = np.where(k > 0, mag[np.maximum(k - 1, 0), cols], 0.0)
        if np.any(k == 0):
            # left end of the first bracket is the t -> 0+ limit
            v0, _ = _field(params, profile, grid, np.zeros(1), eng)
            fa = np.where(k == 0, np.abs(v0[0]), fa)
        fc = np.where(inner, mag[np.minimum(k + 1, times.size - 1), cols], 0.0)
        b, fb = best_t.copy(), best_v.copy()
        idx = np.flatnonzero(inner)
        for _ in range(refine_steps):
            v, bad = _parabola_vertex(a[idx], b[idx], c[idx], fa[idx], fb[idx], fc[idx])
            ok = ~bad & (np.abs(v - b[idx]) > 1e-14 * b[idx])
            if not np.any(ok):
                break
            j = idx[ok]
            sub = RadialGrid(grid.nodes[j], grid.quad_weights[j], grid.weights[j])
            fv, _ = _per_node(params, profile, sub, v[ok], eng)
            fv = np.abs(fv)
            vv = v[ok]
            up = fv > fb[j]
            left = vv < b[j]
            # new bracket around the better of (b, v)
            na = np.where(up, np.where(left, a[j], b[j]), np.where(left, vv, a[j]))
            nc = np.where(up, np.where(left, b[j], c[j]), np.where(left, c[j], vv))
            nfa = np.where(up, np.where(left, fa[j], fb[j]), np.where(left, fv, fa[j]))
            nfc = np.where(up, np.where(left, fb[j], fc[j]), np.where(left, fc[j], fv))
            b[j] = np.where(up, vv, b[j])
            fb[j] = np.where(up, fv, fb[j])
            a[j], c[j], fa[j], fc[j] = na, nc, nfa, nfc
        improved = fb > best_v
        best_t = np.where(improved, b, best_t)
    final, ferr = _per_node(params, profile, grid, best_t, eng)
    sup = np.abs(final)
    return MaximalField(grid.nodes, grid.weights, sup, best_t,
                        np.maximum(err.max(axis=0), ferr) + quad_err, grid_sup, time_grid)
