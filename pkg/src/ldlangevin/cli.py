"""Command line entry point: ``ldlangevin <subcommand> --manifest run.json``.

A manifest is a JSON object::

    {"name": "demo", "operation": "stationary", "seed": 7,
     "params": {"kappa": 1.0, "p": 4.0, "sigma": 1.0, "delta": 0.5},
     "knobs": {...}, "output": "runs/demo"}

Each run writes ``results.csv``, ``results.json`` and, where it makes
sense, ``figure.svg`` into the output directory.  Exit codes: 0 success,
2 invalid manifest, 3 numerical non-convergence (artifacts are still written).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cycles import regenerative_moment_ratio, simulate_cycles
from .drift import DriftFamily, DriftSpec
from .errors import LangevinError, ManifestError, NonConvergenceError
from .experiments import (SplittingConfig, n_delta_concentration, tail_curve_additive,
                          tail_curve_cycle, weibull_sum_check)
from .fpt import (BoundaryTask, heat_kernel, lamperti, simulate_first_passage,
                  verify_density_bound)
from .params import ModelParams
from .plotting import (plot_histogram_bound, plot_path, plot_summary, plot_tail_curve,
                       plot_xy)
from .sde import area_functional, simulate_path
from .stationary import StationaryLaw
from .variational import instance_from_record, solve_box

log = logging.getLogger("ldlangevin")

SUBCOMMANDS = ("simulate", "cycles", "stationary", "variational", "fpt", "tails",
               "weibull", "renewal", "report")
EXIT_OK, EXIT_INVALID, EXIT_NONCONV = 0, 2, 3


# -- manifest ---------------------------------------------------------------------

def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def manifest_hash(manifest: dict) -> str:
    """SHA-256 of the canonical manifest without its output location."""
    body = {k: v for k, v in manifest.items() if k != "output"}
    return hashlib.sha256(canonical(body).encode()).hexdigest()


def load_manifest(path) -> dict:
    try:
        with open(path) as fh:
            man = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from None
    if not isinstance(man, dict):
        raise ManifestError("manifest must be a JSON object")
    return man


def _params(man) -> ModelParams:
    p = man.get("params")
    if not isinstance(p, dict):
        raise ManifestError("manifest needs a 'params' object")
    try:
        return ModelParams(float(p["kappa"]), float(p["p"]), float(p.get("sigma", 1.0)),
                           None if p.get("delta") is None else float(p["delta"]))
    except KeyError as exc:
        raise ManifestError(f"params lacks {exc.args[0]!r}") from None


def _seed(man) -> int:
    s = man.get("seed", 0)
    if not isinstance(s, int) or not 0 <= s < 2 ** 64:
        raise ManifestError("seed must be an integer in [0, 2**64)")
    return s


def _drift(knobs, kappa) -> DriftSpec:
    return DriftSpec(knobs.get("drift", "ExactD"), kappa, float(knobs.get("eps", 0.0)))


def _splitting(knobs) -> SplittingConfig:
    d = knobs.get("splitting", {})
    return SplittingConfig(**{k: d[k] for k in ("n_particles", "p_level", "n_pilot",
                                                "n_batches", "max_levels") if k in d})


def version_string() -> str:
    """Package version plus the short commit hash when run from a checkout."""
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, cwd=Path(__file__).resolve().parent, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# -- output helpers -------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_csv(fname, header, rows, mhash) -> None:
    with open(fname, "w", newline="") as fh:
        fh.write(f"# manifest_hash={mhash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


# -- subcommands ----------------------------------------------------------------------
# each returns (results dict, csv header, csv rows, figure callback or None, converged)

def run_simulate(man, knobs, threads):
    P = _params(man)
    spec = _drift(knobs, P.kappa)
    path = simulate_path(P, spec, float(knobs.get("x0", 0.0)), float(knobs.get("horizon", 10.0)),
                         float(knobs.get("dt", 1e-3)), _seed(man), int(knobs.get("replica", 0)))
    area = area_functional(path, P.p)
    res = {"n_points": len(path), "final_value": float(path.values[-1]),
           "area": area, "time_average": area / path.horizon}
    rows = zip(path.times, path.values)

    def fig(fname, desc):
        plot_path(path.times, path.values, fname, "sample path", description=desc)
    return res, ["t[time]", "x[state]"], rows, fig, True


def run_cycles(man, knobs, threads):
    P = _params(man)
    delta = P.delta if P.delta is not None else float(knobs.get("delta", 0.5))
    spec = _drift(knobs, P.kappa)
    powers = tuple(float(q) for q in knobs.get("powers", [P.p]))
    tab = simulate_cycles(P, spec, delta, float(knobs.get("horizon", 100.0)),
                          float(knobs.get("dt", 5e-3)), _seed(man),
                          int(knobs.get("replicas", 200)), powers=powers)
    if knobs.get("balanced", True):
        tab = tab.balanced()
    law = StationaryLaw(P.kappa, P.sigma)
    est = {}
    for q in powers:
        r = regenerative_moment_ratio(tab, q)
        est[str(q)] = {"estimate": r.estimate, "ci": [r.ci_low, r.ci_high],
                       "stderr": r.stderr, "target": law.moment(q)}
    res = {"n_cycles": len(tab), "delta": delta, "ratio": est,
           "mean_duration": float(tab.durations.mean()) if len(tab) else float("nan")}
    rows = ((r.start, r.end, r.duration, r.area, r.peak) for r in tab.records(powers[0]))

    def fig(fname, desc):
        d = tab.durations
        edges = np.linspace(0.0, np.quantile(d, 0.995), 41)
        h, _ = np.histogram(d, bins=edges, density=True)
        plot_xy(0.5 * (edges[1:] + edges[:-1]), {"duration density": h}, fname,
                "cycle durations", "duration", "density", description=desc)
    return res, ["start[time]", "end[time]", "duration[time]", "area[state^p time]",
                 "peak[state]"], rows, fig, True


def run_stationary(man, knobs, threads):
    P = _params(man)
    law = StationaryLaw(P.kappa, P.sigma)
    p = float(knobs.get("p", P.p))
    res = {"moment": law.moment(p), "moment_quadrature": law.moment_quadrature(p),
           "p": p, "density_at_zero": float(law.density(0.0))}
    xs = np.linspace(-4.0, 4.0, 161) * P.sigma
    dens = law.density(xs)
    rows = zip(xs, dens)

    def fig(fname, desc):
        plot_xy(xs, {"density": dens}, fname, "stationary density", "x", "density",
                description=desc)
    return res, ["x[state]", "density[1/state]"], rows, fig, True


def run_variational(man, knobs, threads):
    rec = dict(knobs)
    if "params" in man:
        rec.setdefault("kappa", man["params"].get("kappa"))
        rec.setdefault("p", man["params"].get("p"))
        rec.setdefault("sigma", man["params"].get("sigma", 1.0))
    spec, p, m, N = instance_from_record(rec)
    variant = knobs.get("variant", "v")
    lower, upper = {"v": (None, None), "plus": (0.0, None)}.get(variant, (None, None))
    if variant == "box":
        lower, upper = knobs.get("lower"), knobs.get("upper")
    elif variant not in ("v", "plus"):
        raise ManifestError(f"unknown variational variant {variant!r}")
    extra = {k: knobs[k] for k in ("starts", "coarse", "gtol", "feas_tol") if k in knobs}
    r = solve_box(spec, p, m, N, lower, upper, seed=_seed(man), **extra)
    res = {"variant": variant, **r.to_dict()}
    rows = zip(r.path.times, r.path.values)

    def fig(fname, desc):
        plot_path(r.path.times, r.path.values, fname, "optimal path", description=desc)
    return res, ["s[time]", "xi[state]"], rows, fig, r.converged


def run_fpt(man, knobs, threads):
    P = _params(man)
    case = knobs.get("case", "bm")
    T = float(knobs.get("T", 5.0))
    sigma = P.sigma
    if case == "bm":
        ud = lamperti(lambda x: np.zeros_like(np.asarray(x, dtype=float)), 1.0)
        level = float(knobs.get("level", 1.0))
        task = BoundaryTask(level, 0.0, "up", 0.0, T)
        ref = lambda s: level * heat_kernel(s, 0.0, level) / s  # noqa: E731
    elif case in ("aux_lower", "aux_upper"):
        eps = float(knobs.get("eps", 0.25))
        delta = P.delta if P.delta is not None else float(knobs.get("delta", 0.5))
        fam = DriftFamily.AUX_LOWER if case == "aux_lower" else DriftFamily.AUX_UPPER
        ud = lamperti(DriftSpec(fam, P.kappa, eps), sigma)
        if case == "aux_lower":
            task = BoundaryTask(delta / sigma, 0.0, "up", 0.0, T)
        else:
            task = BoundaryTask(0.0, 0.0, "down", delta / sigma, T)
        ref = None
    else:
        raise ManifestError(f"unknown fpt case {case!r}")
    times = simulate_first_passage(ud, task, float(knobs.get("dt", 1e-3)), _seed(man),
                                   int(knobs.get("replicas", 10000)))
    bins = int(knobs.get("bins", 40))
    rep = verify_density_bound(ud, task, bins=bins, times=times)
    res = {"case": case, **json.loads(rep.to_json())}
    if ref is not None:
        res["exact_violations"] = verify_density_bound(ud, task, bins=bins, times=times,
                                                       reference=ref).violations
    e = rep.bins
    rows = ((e[i], e[i + 1], rep.empirical[i], rep.stderr[i], rep.bound[i])
            for i in range(len(e) - 1))

    def fig(fname, desc):
        plot_histogram_bound(rep.bins, rep.empirical, rep.bound, fname,
                             f"first passage ({case})", description=desc)
    return res, ["bin_lo[time]", "bin_hi[time]", "empirical[1/time]", "stderr[1/time]",
                 "bound[1/time]"], rows, fig, not rep.inconclusive


def run_tails(man, knobs, threads):
    P = _params(man)
    kind = knobs.get("kind", "cycle")
    spec = _drift(knobs, P.kappa)
    if kind == "cycle":
        tc = tail_curve_cycle(P, knobs.get("u_grid"), _splitting(knobs), _seed(man), spec=spec,
                              dt=float(knobs.get("dt", 5e-3)), threads=threads)
    elif kind == "additive":
        if "t_grid" not in knobs or "b" not in knobs:
            raise ManifestError("additive tails need 't_grid' and 'b'")
        sp = _splitting(knobs) if "splitting" in knobs else None
        tc = tail_curve_additive(P, knobs["t_grid"], float(knobs["b"]),
                                 int(knobs.get("replicas", 20000)), _seed(man), spec=spec,
                                 dt=float(knobs.get("dt", 1e-2)), splitting=sp, threads=threads)
    else:
        raise ManifestError(f"unknown tail kind {kind!r}")
    res = tc.to_dict()
    res["wrong_exponent_r2"] = {str(r): tc.refit(r)["r2"]
                                for r in (1.0, tc.speed_r / 2)} if np.isfinite(tc.r2) else {}
    rows = zip(tc.levels, tc.levels ** tc.speed_r, tc.log_prob, tc.log_se)

    def fig(fname, desc):
        plot_tail_curve(tc, fname, f"{kind} tail", description=desc)
    return res, ["level[area]", "level_pow_r[area^r]", "log_prob[1]", "log_prob_se[1]"], \
        rows, fig, np.isfinite(tc.slope)


def run_weibull(man, knobs, threads):
    out = weibull_sum_check(float(knobs.get("r", 0.5)), tuple(knobs.get("n_grid", [400])),
                            tuple(knobs.get("x_grid", [4.0])), float(knobs.get("B", 1.0)),
                            _splitting(knobs), _seed(man),
                            int(knobs.get("oracle_replicas", 20000)), threads=threads)
    cols = ["n", "x", "limit", "normalised", "normalised_se", "oracle_normalised",
            "share_median", "oracle_share_median", "share_threshold"]
    rows = ([row[c] for c in cols] for row in out["rows"])

    def fig(fname, desc):
        lab = [f"n={r['n']},x={r['x']}" for r in out["rows"]]
        xs = np.arange(len(lab))
        plot_xy(xs, {"splitting": [r["normalised"] for r in out["rows"]],
                     "conditional MC": [r["oracle_normalised"] for r in out["rows"]],
                     "limit": [r["limit"] for r in out["rows"]]}, fname,
                "normalised log probability", "case", "value", description=desc)
    header = ["n[1]", "x[1]", "limit[1]", "normalised[1]", "normalised_se[1]",
              "oracle_normalised[1]", "share_median[1]", "oracle_share_median[1]",
              "share_threshold[1]"]
    return out, header, rows, fig, True


def run_renewal(man, knobs, threads):
    P = _params(man)
    out = n_delta_concentration(P, float(knobs.get("t", 200.0)), float(knobs.get("x", 0.2)),
                                int(knobs.get("replicas", 10000)), spec=_drift(knobs, P.kappa),
                                dt=float(knobs.get("dt", 1e-2)), seed=_seed(man),
                                x_in_mean_units=bool(knobs.get("x_in_mean_units", True)))
    cols = ["t", "x", "mean_duration", "rate", "hits", "replicas", "log_rate", "log_rate_se"]
    header = ["t[time]", "x[1/time]", "mean_duration[time]", "rate[1/time]", "hits[1]",
              "replicas[1]", "log_rate[1/time]", "log_rate_se[1/time]"]
    return out, header, [[out[c] for c in cols]], None, True


def run_report(man, knobs, threads):
    runs = knobs.get("runs")
    if not runs or not isinstance(runs, list):
        raise ManifestError("report needs a non-empty 'runs' list of output directories")
    loaded = []
    for d in runs:
        f = Path(d) / "results.json"
        try:
            loaded.append(json.loads(f.read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read {f}: {exc}") from None
    ref = loaded[0]["manifest"].get("params")
    for r in loaded[1:]:
        if r["manifest"].get("params") != ref:
            raise ManifestError("refusing to aggregate runs with different parameter sets")
    rows, names, vals = [], [], []
    for d, r in zip(runs, loaded):
        key, val = _headline(r)
        rows.append([r["manifest"].get("name", Path(d).name), r["operation"],
                     r["manifest_hash"], key, val])
        names.append(str(rows[-1][0]))
        vals.append(val if isinstance(val, float) else float("nan"))
    res = {"runs": [{"name": r[0], "operation": r[1], "manifest_hash": r[2], "key": r[3],
                     "value": r[4]} for r in rows], "params": ref}

    def fig(fname, desc):
        plot_summary(names, vals, fname, "run summary", description=desc)
    return res, ["name", "operation", "manifest_hash", "key", "value"], rows, fig, True


def _headline(r):
    res = r["results"]
    for key in ("value", "moment", "slope", "log_rate", "final_value", "n_cycles"):
        if key in res and isinstance(res[key], (int, float)):
            return key, float(res[key])
    if "violations" in res:
        return "violations", float(len(res["violations"]))
    if "rows" in res and res["rows"]:
        return "normalised", float(res["rows"][0]["normalised"])
    return "none", float("nan")


RUNNERS = {"simulate": run_simulate, "cycles": run_cycles, "stationary": run_stationary,
           "variational": run_variational, "fpt": run_fpt, "tails": run_tails,
           "weibull": run_weibull, "renewal": run_renewal, "report": run_report}


# -- driver ---------------------------------------------------------------------------

def run(subcommand: str, manifest: dict, out_dir=None, threads: int = 1) -> int:
    """Execute one manifest and write its artifacts; returns the exit status."""
    op = manifest.get("operation", subcommand)
    if op != subcommand:
        raise ManifestError(f"manifest operation {op!r} does not match {subcommand!r}")
    out = Path(out_dir or manifest.get("output") or f"runs/{manifest.get('name', subcommand)}")
    knobs = manifest.get("knobs", {})
    if not isinstance(knobs, dict):
        raise ManifestError("'knobs' must be an object")
    seed = _seed(manifest)
    mhash = manifest_hash(manifest)
    t0 = time.perf_counter()
    try:
        res, header, rows, fig, converged = RUNNERS[subcommand](manifest, knobs, threads)
    except NonConvergenceError as exc:
        res, header, rows, fig, converged = {"error": str(exc)}, ["error"], [[str(exc)]], None, False
    wall = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "results.csv", header, rows, mhash)
    if fig is not None:
        fig(out / "figure.svg", f"manifest_hash={mhash}")
    doc = {"operation": subcommand, "manifest": manifest, "manifest_hash": mhash,
           "seed": seed, "version": version_string(),
           "wall_time": wall, "converged": bool(converged), "results": _jsonable(res)}
    (out / "results.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    log.info("%s: wrote %s", subcommand, out)
    return EXIT_OK if converged else EXIT_NONCONV


def build_parser():
    ap = argparse.ArgumentParser(prog="ldlangevin", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--manifest", required=True, help="experiment manifest (JSON)")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $LDLANGEVIN_THREADS or 1)")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    threads = args.threads or int(os.environ.get("LDLANGEVIN_THREADS", "1") or 1)
    try:
        manifest = load_manifest(args.manifest)
        return run(args.subcommand, manifest, args.out, max(1, threads))
    except (ManifestError, ValueError, TypeError, KeyError) as exc:
        log.error("invalid manifest: %s", exc)
        return EXIT_INVALID
    except LangevinError as exc:
        log.error("%s", exc)
        return EXIT_NONCONV


if __name__ == "__main__":
    sys.exit(main())
