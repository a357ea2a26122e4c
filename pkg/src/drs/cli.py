"""Command-line front end.

    drs phi --space h3 --lambda 2 --s 1
    drs sweep --family case2 --q 8 --alpha 0.5 --n-list 8..1024
    drs check calibration --space dr:2,1

A run is described by one JSON config (``--config``); flags override its
fields.  Output files carry the config hash in a comment header.  Exit
codes: 0 ok, 2 config error, 3 numerical failure, 4 inconclusive check.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import hashlib
import json
import math
import os
import sys
import traceback
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INCONCLUSIVE = 0, 2, 3, 4

DEFAULTS = {
    "space": "h3",
    "grids": {
        "radial_nodes": 2048,
        "s_max": 8.0,
        "time": {"n_log": 64, "n_uniform": 193, "c": 1.0},
        "order": 6,
    },
    "tolerances": {"quadrature": 1e-8},
    "experiment": {},
    "output": "drs-out",
    "seed": 0,
    "workers": None,
}

# flag dest -> config path
FLAG_PATHS = {
    "space": ("space",),
    "radial_nodes": ("grids", "radial_nodes"),
    "s_max": ("grids", "s_max"),
    "n_log": ("grids", "time", "n_log"),
    "n_uniform": ("grids", "time", "n_uniform"),
    "time_c": ("grids", "time", "c"),
    "order": ("grids", "order"),
    "tol": ("tolerances", "quadrature"),
    "output": ("output",),
    "seed": ("seed",),
    "workers": ("workers",),
}

EXPERIMENT_FLAGS = ["lam", "s", "s_list", "profile", "t", "family", "q", "alpha", "n_list",
                    "r0", "r", "trials", "lambda_max", "nodes", "method"]


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class Inconclusive(RuntimeError):
    pass


# ------------------------------------------------------------------ config


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _set(cfg: dict, path, value):
    d = cfg
    for k in path[:-1]:
        d = d.setdefault(k, {})
    d[path[-1]] = value


def config_hash(cfg: dict) -> str:
    """Hash of everything that can change numerical output."""
    core = {k: v for k, v in cfg.items() if k not in ("output", "workers")}
    text = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _positive_int(cfg, path, name):
    v = cfg
    for k in path:
        v = v[k]
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise ConfigError(name, f"must be a positive integer, got {v!r}")


def _positive(cfg, path, name):
    v = cfg
    for k in path:
        v = v[k]
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0 or math.isinf(v):
        raise ConfigError(name, f"must be a positive number, got {v!r}")


def validate(cfg: dict) -> dict:
    from .space import parse_space
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown config field")
    try:
        parse_space(str(cfg["space"]))
    except ValueError as e:
        raise ConfigError("space", str(e)) from None
    _positive_int(cfg, ("grids", "radial_nodes"), "grids.radial_nodes")
    _positive(cfg, ("grids", "s_max"), "grids.s_max")
    _positive_int(cfg, ("grids", "time", "n_log"), "grids.time.n_log")
    _positive_int(cfg, ("grids", "time", "n_uniform"), "grids.time.n_uniform")
    _positive(cfg, ("grids", "time", "c"), "grids.time.c")
    _positive_int(cfg, ("grids", "order"), "grids.order")
    _positive(cfg, ("tolerances", "quadrature"), "tolerances.quadrature")
    if cfg["grids"]["radial_nodes"] < 16:
        raise ConfigError("grids.radial_nodes", "must be at least 16")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
        raise ConfigError("seed", f"must be an integer, got {cfg['seed']!r}")
    if cfg["workers"] is not None:
        _positive_int(cfg, ("workers",), "workers")
    return cfg


def build_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError("config", f"cannot read {args.config}: {e}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config", "top level must be a JSON object")
        cfg = _merge(cfg, loaded)
    for dest, path in FLAG_PATHS.items():
        v = getattr(args, dest, None)
        if v is not None:
            _set(cfg, path, v)
    env = os.environ.get("DRS_WORKERS")
    if env:
        try:
            cfg["workers"] = int(env)
        except ValueError:
            raise ConfigError("DRS_WORKERS", f"must be an integer, got {env!r}") from None
    exp = dict(cfg.get("experiment") or {})
    for name in EXPERIMENT_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            exp[name] = v
    cfg["experiment"] = exp
    return validate(cfg)


# ------------------------------------------------------------------ parsing helpers


def parse_n_list(text) -> list[int]:
    """'8..1024' (doubling) or '8,16,32'."""
    if isinstance(text, list):
        return [int(x) for x in text]
    text = str(text).strip()
    if ".." in text:
        a, b = text.split("..")
        lo, hi = int(a), int(b)
        if lo < 1 or hi < lo:
            raise ConfigError("experiment.n_list", f"bad range {text!r}")
        out = []
        n = lo
        while n <= hi:
            out.append(n)
            n *= 2
        return out
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise ConfigError("experiment.n_list", f"cannot parse {text!r}") from None


def parse_profile(params, text: str):
    """'gauss:center,width', 'bump:a,b', 'case1:N' or 'case2:N'."""
    from . import experiments as ex
    from .transforms import bump_profile, gaussian_profile
    try:
        kind, _, rest = str(text).partition(":")
        vals = [float(x) for x in rest.split(",") if x]
        if kind == "gauss" and len(vals) == 2:
            return gaussian_profile(vals[0], vals[1])
        if kind == "bump" and len(vals) == 2:
            return bump_profile(vals[0], vals[1])
        if kind == "case1" and len(vals) == 1:
            return ex.case1_profile(params, int(vals[0]))
        if kind == "case2" and len(vals) == 1:
            return ex.case2_profile(params, int(vals[0]))
    except ValueError as e:
        raise ConfigError("experiment.profile", str(e)) from None
    raise ConfigError("experiment.profile",
                      f"expected gauss:c,w | bump:a,b | case1:N | case2:N, got {text!r}")


def _floats(v, field):
    if isinstance(v, (int, float)):
        return [float(v)]
    if isinstance(v, list):
        return [float(x) for x in v]
    try:
        return [float(x) for x in str(v).split(",") if x]
    except ValueError:
        raise ConfigError(field, f"cannot parse {v!r}") from None


# ------------------------------------------------------------------ output


class Output:
    def __init__(self, cfg: dict, command: str):
        self.dir = Path(cfg["output"])
        self.hash = config_hash(cfg)
        self.command = command
        self.cfg = cfg

    def header(self) -> list[str]:
        return [f"drs {self.command}", f"config_hash: {self.hash}",
                f"created: {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}"]

    def write(self, name: str, text: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        p.write_text(text)
        return p

    def write_json(self, name: str, obj) -> Path:
        payload = {"command": self.command, "config_hash": self.hash, "config": self.cfg,
                   "result": obj}
        return self.write(name, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if hasattr(x, "value") and hasattr(x, "name"):
        return x.value
    if hasattr(x, "__dataclass_fields__"):
        from dataclasses import asdict
        return _jsonable(asdict(x))
    return x


# ------------------------------------------------------------------ commands


def _engine(cfg):
    from .schrodinger import Engine
    return Engine(accurate=True, order=cfg["grids"]["order"], workers=cfg["workers"])


def _space(cfg):
    from .space import parse_space
    return parse_space(cfg["space"])


def _radial(cfg, params):
    from .transforms import radial_grid
    return radial_grid(params, s_max=cfg["grids"]["s_max"], nodes=cfg["grids"]["radial_nodes"])


def _time_grid(cfg, params, profile=None):
    from .schrodinger import default_time_grid
    tg = cfg["grids"]["time"]
    return default_time_grid(params, n_log=tg["n_log"], n_uniform=tg["n_uniform"], c=tg["c"],
                             lam_hi=profile.support[1] if profile is not None else None)


def _require(exp, name):
    if name not in exp:
        raise ConfigError(f"experiment.{name}", "required for this command")
    return exp[name]


def cmd_phi(cfg, out: Output, stream):
    from .spherical import CapabilityError, METHOD_CODES, hc_terms, m0_terms, ode_matrix, phi_matrix
    params = _space(cfg)
    exp = cfg["experiment"]
    lam = _floats(_require(exp, "lam"), "experiment.lam")
    s = _floats(exp.get("s_list") or _require(exp, "s"), "experiment.s")
    if any(x <= 0 for x in s):
        raise ConfigError("experiment.s", "radii must be positive")
    lam_a, s_a = np.array(lam), np.array(s)
    v, e, codes = phi_matrix(params, lam_a, s_a, accurate=True)
    if len(lam) == 1 and len(s) == 1:
        stream.write(f"{v[0, 0]:.15g}\n")
        return EXIT_OK
    m0, _ = m0_terms(params, lam_a[:, None], s_a[None, :])
    hc, _ = hc_terms(params, lam_a[:, None], s_a[None, :])
    order = np.argsort(s_a)
    try:
        ode, _ = ode_matrix(params, lam_a, s_a[order])
        inv = np.empty_like(order)
        inv[order] = np.arange(order.size)
        ode = ode[:, inv]
    except CapabilityError:
        ode = np.full(v.shape, np.nan)
    lines = [f"# {h}" for h in out.header()]
    lines.append("lambda,s,value,error_bound,method,ode,bessel_m0,hc_leading,delta_m0,delta_hc")
    for i, lv in enumerate(lam):
        for j, sv in enumerate(s):
            row = [lv, sv, v[i, j], e[i, j]]
            tail = [ode[i, j], m0[i, j], hc[i, j], m0[i, j] - ode[i, j], hc[i, j] - ode[i, j]]
            lines.append(",".join(repr(float(x)) for x in row) + f",{METHOD_CODES[codes[i, j]].value},"
                         + ",".join(repr(float(x)) for x in tail))
    p = out.write("phi.csv", "\n".join(lines) + "\n")
    stream.write(f"wrote {p}\n")
    return EXIT_OK


def cmd_transform(cfg, out: Output, stream):
    from .transforms import forward_sft, inverse_sft, sobolev_norm, lq_norm
    params = _space(cfg)
    prof = parse_profile(params, _require(cfg["experiment"], "profile"))
    grid = _radial(cfg, params)
    f = inverse_sft(params, prof, grid, tol=cfg["tolerances"]["quadrature"],
                    workers=cfg["workers"])
    lo, hi = prof.support
    lam = np.linspace(lo, hi, 257)[1:-1]
    back = forward_sft(params, f, lam)
    ref = prof(lam)
    rt = float(np.linalg.norm(back.values - ref) / np.linalg.norm(ref))
    l2 = lq_norm(params, f, 2)
    h0 = sobolev_norm(params, prof, 0.0)
    out.write("radial.csv", f.to_csv(out.header()))
    out.write("spectral.csv", back.to_csv(out.header()))
    res = {"round_trip_error": rt, "l2_norm": l2, "h0_norm": h0,
           "plancherel_error": abs(l2 - h0) / h0, "tail_bound": back.tail_bound}
    out.write_json("transform.json", res)
    stream.write(json.dumps(_jsonable(res), sort_keys=True) + "\n")
    return EXIT_OK


def cmd_propagate(cfg, out: Output, stream):
    from .schrodinger import propagate
    params = _space(cfg)
    exp = cfg["experiment"]
    prof = parse_profile(params, _require(exp, "profile"))
    t = float(_require(exp, "t"))
    f = propagate(params, prof, t, _radial(cfg, params), engine=_engine(cfg), check=True,
                  tol=cfg["tolerances"]["quadrature"], c=cfg["grids"]["time"]["c"])
    p = out.write("propagate.csv", f.to_csv(out.header()))
    stream.write(f"wrote {p}\n")
    return EXIT_OK


def cmd_maximal(cfg, out: Output, stream):
    from .schrodinger import maximal
    params = _space(cfg)
    prof = parse_profile(params, _require(cfg["experiment"], "profile"))
    mf = maximal(params, prof, _radial(cfg, params), _time_grid(cfg, params, prof),
                 engine=_engine(cfg))
    p = out.write("maximal.csv", mf.to_csv(out.header()))
    stream.write(f"wrote {p}\n")
    return EXIT_OK


def cmd_sweep(cfg, out: Output, stream):
    from . import experiments as ex
    from .schrodinger import Engine
    params = _space(cfg)
    exp = cfg["experiment"]
    family = str(_require(exp, "family")).lower()
    fam = {"case1": ex.Family.CASE1, "case2": ex.Family.CASE2}.get(family)
    if fam is None:
        raise ConfigError("experiment.family", f"expected case1 or case2, got {family!r}")
    qs = _floats(_require(exp, "q"), "experiment.q")
    alpha = float(_require(exp, "alpha"))
    if alpha < 0:
        raise ConfigError("experiment.alpha", "must be nonnegative")
    if any(q < 1 for q in qs):
        raise ConfigError("experiment.q", "must be >= 1")
    N_list = parse_n_list(_require(exp, "n_list"))
    if len(N_list) < 4:
        raise ConfigError("experiment.n_list", "need at least 4 values")
    eng = Engine(accurate=False, order=cfg["grids"]["order"], workers=cfg["workers"])
    reports = ex.sweep(params, fam, qs, alpha, N_list, engine=eng,
                       nodes=exp.get("nodes"))
    summary = {"reports": [r.to_dict() for r in reports],
               "theorem": ex.theorem_summary(reports)}
    for r in reports:
        tag = "inf" if math.isinf(r.q) else f"{r.q:g}"
        out.write(f"sweep_{fam.value.lower()}_q{tag}_a{alpha:g}.csv", r.to_csv(out.header()))
        stream.write(f"{r.space} {r.family.value} q={tag} alpha={alpha:g}: slope "
                     f"{r.fitted_slope:.4f} +- {r.slope_stderr:.4f} (predicted {r.predicted:.4f}, "
                     f"{'admissible' if r.admissible else 'not admissible'}) {r.verdict}\n")
    out.write_json("sweep_summary.json", summary)
    stream.write(ex.format_summary(summary["theorem"]) + "\n")
    if any(r.verdict == "inconclusive" for r in reports):
        raise Inconclusive("slope standard error above the limit")
    return EXIT_OK


def cmd_check(cfg, out: Output, stream, which: str):
    from . import experiments as ex
    from .spherical import get_calibration, with_inversion_constant
    from .transforms import inversion_constant
    params = _space(cfg)
    exp = cfg["experiment"]
    if which == "calibration":
        C = inversion_constant(params)
        cal = with_inversion_constant(params, C) if get_calibration(params).C_cal is None \
            else get_calibration(params)
        p = out.write(f"calibration_{params.label.replace(':', '_').replace(',', '_')}.json",
                      cal.to_json() + "\n")
        stream.write(f"wrote {p}\n")
        return EXIT_OK
    if which == "oscillatory":
        r0 = float(exp.get("r0", 2.1))
        r = float(exp.get("r", 5.0))
        if not r > r0 >= 2:
            raise ConfigError("experiment.r0", "need r > r0 >= 2")
        trials = int(exp.get("trials", 500))
        chk = ex.oscillatory_check(params, r0, r, trials, seed=cfg["seed"],
                                   lambda_max=float(exp.get("lambda_max", 200.0)))
        res = {"max_normalized": chk.base.max_normalized,
               "max_normalized_refined": chk.refined.max_normalized,
               "relative_change": chk.relative_change, "constant": chk.constant,
               "stable": chk.stable, "inconclusive_trials": chk.base.inconclusive
               + chk.refined.inconclusive}
        out.write_json("oscillatory.json", res)
        lines = [f"# {h}" for h in out.header()] + ["s,s_prime,t,t_prime,normalized"]
        for (a, b, c, d), v in zip(chk.base.pairs, chk.base.normalized):
            lines.append(",".join(repr(float(x)) for x in (a, b, c, d, v)))
        out.write("oscillatory.csv", "\n".join(lines) + "\n")
        stream.write(json.dumps(_jsonable(res), sort_keys=True) + "\n")
        if chk.inconclusive:
            raise Inconclusive(f"{res['inconclusive_trials']} trials inconclusive")
        return EXIT_OK
    if which == "h3-global":
        if not params.is_h3:
            raise ConfigError("space", "h3-global runs on h3 only")
        rep = ex.h3_global_check(alpha=float(exp.get("alpha", 0.6)), q=2.0,
                                 q_contrast=float(exp.get("q", 1.5)))
        out.write_json("h3_global.json", rep)
        stream.write(f"L2 spread {rep.l2_spread:.4f}, q={rep.q_contrast:g} growth "
                     f"{rep.contrast_growth:.4f} (monotone {rep.contrast_monotone}), identity error "
                     f"{rep.identity_error:.3g}\n")
        return EXIT_OK
    if which == "weak-l2":
        rep = ex.weak_l2_check(params, alpha=float(exp.get("alpha", 0.6)))
        out.write_json("weak_l2.json", rep)
        stream.write(f"weak-L2 ratio spread {rep.spread:.4f} (bounded {rep.bounded})\n")
        return EXIT_OK
    raise ConfigError("check", f"unknown check {which!r}")


# ------------------------------------------------------------------ parser


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON run config; flags override its fields")
    p.add_argument("--space", help="h3, rh:<n> or dr:<m_v>,<m_z>")
    p.add_argument("--radial-nodes", type=int, dest="radial_nodes")
    p.add_argument("--s-max", type=float, dest="s_max")
    p.add_argument("--n-log", type=int, dest="n_log")
    p.add_argument("--n-uniform", type=int, dest="n_uniform")
    p.add_argument("--time-c", type=float, dest="time_c", help="time interval is (0, c/rho^2)")
    p.add_argument("--order", type=int, help="Gauss order of the lambda panels")
    p.add_argument("--tol", type=float, help="quadrature tolerance")
    p.add_argument("--out", dest="output", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drs", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phi", help="spherical function values, all methods")
    _common(p)
    p.add_argument("--lambda", dest="lam", help="one value or a comma list")
    p.add_argument("--s", dest="s", help="one radius or a comma list")

    p = sub.add_parser("transform", help="inverse/forward round trip report")
    _common(p)
    p.add_argument("--profile")

    p = sub.add_parser("propagate", help="S_t f on the radial grid")
    _common(p)
    p.add_argument("--profile")
    p.add_argument("--t", type=float)

    p = sub.add_parser("maximal", help="S* f on the radial grid")
    _common(p)
    p.add_argument("--profile")

    p = sub.add_parser("sweep", help="ratio sweep over a counterexample family")
    _common(p)
    p.add_argument("--family")
    p.add_argument("--q", help="one value or a comma list")
    p.add_argument("--alpha", type=float)
    p.add_argument("--n-list", dest="n_list", help="'8..1024' or '8,16,32,64'")
    p.add_argument("--nodes", type=int, help="radial nodes in the evaluation ball")

    p = sub.add_parser("check", help="oscillatory | h3-global | weak-l2 | calibration")
    p.add_argument("which", choices=["oscillatory", "h3-global", "weak-l2", "calibration"])
    _common(p)
    p.add_argument("--r0", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--lambda-max", type=float, dest="lambda_max")
    p.add_argument("--alpha", type=float)
    p.add_argument("--q", type=float)
    return parser


def main(argv=None, stream=None) -> int:
    from .spherical import CapabilityError, NumericalFailure
    from .transforms import TailDominanceError
    stream = stream or sys.stdout
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args)
    except ConfigError as e:
        sys.stderr.write(f"config error: {e}\n")
        return EXIT_CONFIG
    if cfg["workers"] is not None:
        os.environ["DRS_WORKERS"] = str(cfg["workers"])
    out = Output(cfg, args.command if args.command != "check" else f"check {args.which}")
    try:
        if args.command == "phi":
            return cmd_phi(cfg, out, stream)
        if args.command == "transform":
            return cmd_transform(cfg, out, stream)
        if args.command == "propagate":
            return cmd_propagate(cfg, out, stream)
        if args.command == "maximal":
            return cmd_maximal(cfg, out, stream)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, stream)
        return cmd_check(cfg, out, stream, args.which)
    except ConfigError as e:
        sys.stderr.write(f"config error: {e}\n")
        return EXIT_CONFIG
    except Inconclusive as e:
        sys.stderr.write(f"inconclusive: {e}\n")
        return EXIT_INCONCLUSIVE
    except (NumericalFailure, TailDominanceError, CapabilityError) as e:
        diag = {"error": type(e).__name__, "message": str(e),
                "traceback": traceback.format_exc()}
        p = out.write_json("diagnostics.json", diag)
        sys.stderr.write(f"numerical failure: {e} (details in {p})\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
