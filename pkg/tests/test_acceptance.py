"""Acceptance gate: one PASS/FAIL line per criterion, printed after the run."""

import io
import math
import time

import numpy as np
import pytest

from drs import cli
from drs.experiments import (Family, case1_check, critical_q, dilation_family,
                             global_decay_check, h3_global_check, oscillatory_check,
                             sobolev_slope, sweep, transference_gamma, weak_l2_check)
from drs.schrodinger import propagate
from drs.space import damek_ricci, real_hyperbolic
from drs.spherical import ode_matrix, phi_matrix
from drs.transforms import (euclidean_propagate, forward_sft, gaussian_profile, inverse_sft,
                            lq_norm, radial_grid, sobolev_norm, standard_quadrature)

pytestmark = pytest.mark.acceptance

H3 = real_hyperbolic(3)
DR21 = damek_ricci(2, 1)
FIVE = [DR21, damek_ricci(4, 3), damek_ricci(6, 1), H3, real_hyperbolic(4)]


def test_criterion_01_h3_closed_form(verdict):
    t0 = time.perf_counter()
    lam = np.array([0.1, 0.5, 1, 2, 5, 10, 50])
    s = np.linspace(5 / 64, 5, 64)
    u, _ = ode_matrix(H3, lam, s)
    err = float(np.max(np.abs(u - np.sin(lam[:, None] * s) / (lam[:, None] * np.sinh(s)))))
    dt = time.perf_counter() - t0
    assert verdict(1, err < 1e-8 and dt < 10, f"max |ode - closed form| = {err:.2e}, {dt:.1f}s")


def test_criterion_02_containment(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    fractions = {}
    for p in FIVE:
        lam = rng.uniform(0, 100, 200)
        s = rng.uniform(1e-3, 6, 200)
        order = np.argsort(s)
        inv = np.empty_like(order)
        inv[order] = np.arange(s.size)
        i = np.arange(s.size)
        v, e, _ = phi_matrix(p, lam, s)
        u, _ = ode_matrix(p, lam, s[order])
        u = u[:, inv]
        fractions[p.label] = float(np.mean(np.abs(v - u)[i, i] <= e[i, i]))
    dt = time.perf_counter() - t0
    ok = min(fractions.values()) >= 0.99 and dt < 120
    detail = ", ".join(f"{k} {v:.3f}" for k, v in fractions.items())
    assert verdict(2, ok, f"contained: {detail}; {dt:.0f}s")


def test_criterion_03_round_trip(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst_rt = worst_iso = 0.0
    for p in [H3, DR21, damek_ricci(6, 1)]:
        grid = radial_grid(p, 20.0, 1024)
        quad = standard_quadrature(20.0)
        lam = np.linspace(0.05, 8, 64)
        for _ in range(20):
            prof = gaussian_profile(rng.uniform(0.5, 5), rng.uniform(0.5, 1.0),
                                    rng.uniform(0.5, 2))
            f = inverse_sft(p, prof, grid, quad=quad)
            back = forward_sft(p, f, lam).values
            ref = prof(lam)
            worst_rt = max(worst_rt, np.linalg.norm(back - ref) / np.linalg.norm(ref))
            worst_iso = max(worst_iso, abs(lq_norm(p, f, 2) / sobolev_norm(p, prof, 0) - 1))
    dt = time.perf_counter() - t0
    ok = worst_rt < 1e-6 and worst_iso < 1e-6 and dt < 60
    assert verdict(3, ok, f"round trip {worst_rt:.2e}, isometry {worst_iso:.2e}, {dt:.0f}s")


def test_criterion_04_transference(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    gamma = transference_gamma(H3)
    grid = radial_grid(H3, 6.0, 128)
    s = grid.nodes
    worst = 0.0
    for _ in range(10):
        prof = gaussian_profile(rng.uniform(0.5, 6), rng.uniform(0.3, 1.0))
        for t in rng.uniform(0, 0.99, 5):
            a = propagate(H3, prof, t, grid).values
            b = gamma * np.exp(1j * t) * s / np.sinh(s) * euclidean_propagate(3, prof, t, grid).values
            worst = max(worst, float(np.max(np.abs(a - b))))
    dt = time.perf_counter() - t0
    ok = worst < 1e-6 and dt < 60
    assert verdict(4, ok, f"max pointwise gap {worst:.2e} (gamma = {gamma:.6g}), {dt:.0f}s")


def test_criterion_05_case1_sobolev_slope(verdict):
    t0 = time.perf_counter()
    Ns = [256, 512, 1024, 2048, 4096]
    gaps = []
    parts = []
    for p in [H3, DR21]:
        for alpha in (0.0, 0.15, 0.25, 0.5):
            slope, _ = sobolev_slope(p, Family.CASE1, alpha, Ns)
            gaps.append(abs(slope - (alpha - 0.25)))
            parts.append(f"{p.label} a={alpha:g}: {slope:+.4f}")
    dt = time.perf_counter() - t0
    ok = max(gaps) <= 0.05 and dt < 120
    assert verdict(5, ok, f"{'; '.join(parts)}; {dt:.0f}s")


def test_criterion_06_case1_lower_bound(verdict):
    t0 = time.perf_counter()
    rep = case1_check(DR21)
    dt = time.perf_counter() - t0
    ok = rep.holds and rep.spread < 0.25 and -1.2 <= rep.t2_slope <= -0.8 and dt < 600
    detail = (f"min S* spread {rep.spread:.3f} (minima {min(rep.min_sup):.4f}..{max(rep.min_sup):.4f}), "
              f"T2 |channel| slope {rep.t2_slope:.3f}+-{rep.t2_stderr:.3f}, "
              f"signed T2 slope {rep.t2_signed_slope:.3f}, {dt:.0f}s")
    assert verdict(6, ok, detail)


def test_criterion_07_case2_exponents(verdict):
    t0 = time.perf_counter()
    Ns = [8, 16, 32, 64, 128, 256, 512, 1024]
    alpha = 0.5
    ok = True
    parts = []
    for p in [H3, DR21]:
        n = p.n
        qs = [1.5, 2.0, critical_q(n, alpha), 8.0]
        reports = sweep(p, Family.CASE2, qs, alpha, Ns)
        sob = reports[0].sobolev_slope
        ok &= abs(sob - (alpha + n / 2)) <= 0.05
        parts.append(f"{p.label} H^a slope {sob:.4f}")
        for r in reports:
            ok &= abs(r.lq_slope - n * (1 - 1 / r.q)) <= 0.1
            ok &= r.verdict == "pass"
            parts.append(f"q={r.q:.4g} Lq {r.lq_slope:.4f} ratio {r.fitted_slope:+.4f} {r.verdict}")
    dt = time.perf_counter() - t0
    ok &= dt < 900
    assert verdict(7, ok, f"{'; '.join(parts)}; {dt:.0f}s")


def test_criterion_08_oscillatory(verdict):
    t0 = time.perf_counter()
    chk = oscillatory_check(DR21, 2.1, 5.0, 500)
    dt = time.perf_counter() - t0
    ok = chk.stable and dt < 300
    detail = (f"max normalized {chk.base.max_normalized:.6f} -> {chk.refined.max_normalized:.6f} "
              f"(change {chk.relative_change:.1e}), inconclusive trials "
              f"{chk.base.inconclusive + chk.refined.inconclusive}, {dt:.0f}s")
    assert verdict(8, ok, detail)


def test_criterion_09_decay_and_weak_l2(verdict):
    t0 = time.perf_counter()
    ok = True
    parts = []
    fam = dilation_family()
    for p in [H3, DR21]:
        dec = global_decay_check(p)
        weak = weak_l2_check(p, fam)
        ok &= dec.holds and weak.bounded
        parts.append(f"{p.label} decay max {dec.max_ratio:.3f} <= {dec.bound:.3f}, "
                     f"weak-L2 spread {weak.spread:.3f}")
    dt = time.perf_counter() - t0
    ok &= dt < 300
    assert verdict(9, ok, f"{'; '.join(parts)}; {dt:.0f}s")


def test_criterion_10_h3_global(verdict):
    t0 = time.perf_counter()
    rep = h3_global_check()
    dt = time.perf_counter() - t0
    ok = rep.l2_spread < 2 and rep.contrast_monotone and rep.contrast_growth > 4 and dt < 300
    detail = (f"L2 spread {rep.l2_spread:.3f}, q=1.5 growth {rep.contrast_growth:.2f} "
              f"(monotone {rep.contrast_monotone}), identity error {rep.identity_error:.1e}, {dt:.0f}s")
    assert verdict(10, ok, detail)


def test_criterion_11_determinism(verdict, tmp_path, monkeypatch):
    bodies = {}
    for w in (1, 4, 8):
        monkeypatch.setenv("DRS_WORKERS", str(w))
        out = tmp_path / f"w{w}"
        code = cli.main(["maximal", "--space", "dr:2,1", "--profile", "case2:64", "--s-max", "0.5",
                         "--radial-nodes", "256", "--seed", "5", "--out", str(out)],
                        stream=io.StringIO())
        assert code == 0
        text = (out / "maximal.csv").read_text()
        bodies[w] = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
    same = bodies[1] == bodies[4] == bodies[8]
    rows = bodies[1].count("\n")
    assert verdict(11, same, f"maximal.csv bodies identical across workers 1/4/8 ({rows} rows)")
