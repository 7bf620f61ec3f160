"""Command-line experiment driver: grid-searched runs, stability data and certificates.

All outputs are CSV/JSON and are byte-identical across reruns with the same
config and seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from . import problems, stability
from .core import ObjectiveSpec, RunConfig, StepSchedule, safe_lipschitz
from .lyapunov import certify
from .methods import METHODS, get_method, run

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


class ConfigError(ValueError):
    pass


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([fmt(v) for v in row])


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


# ------------------------------------------------------------------ config

PROBLEM_IDS = ("hilbert", "diag_quadratic", "cahn_hilliard", "logsumexp", "logistic")
SCHEDULES = ("linear", "constant", "exponential")


def a_grid(spec) -> list:
    """Values i * 10^j for the given i and j ranges, sorted and deduplicated."""
    if isinstance(spec, list):
        vals = [float(v) for v in spec]
    else:
        i_vals = spec.get("i", list(range(1, 10)))
        j_lo, j_hi = spec["j"]
        vals = [float(f"{i}e{j}") for j in range(int(j_lo), int(j_hi) + 1) for i in i_vals]
    if not vals or any(not (v > 0 and math.isfinite(v)) for v in vals):
        raise ConfigError("a grid must contain positive finite values")
    return sorted(set(vals))


@dataclass
class ExperimentConfig:
    problem: dict
    methods: list = field(default_factory=lambda: ["nag_c", "proposed"])
    schedule: dict = field(default_factory=lambda: {"family": "linear", "offset": 3.0})
    a_grid: list = field(default_factory=list)
    iterations: int = 2000
    restart: bool = False
    record_every: int = 1
    normalization: str = "vlm"
    x0: str = "default"
    out: Optional[str] = None
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "problem" not in d:
            raise ConfigError("config needs a 'problem' entry")
        grid = d.pop("a_grid", None)
        if grid is None and "a" in d:
            grid = [d.pop("a")]
        if grid is None:
            raise ConfigError("config needs 'a_grid' or 'a'")
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        try:
            cfg = cls(a_grid=a_grid(grid), **d)
        except (TypeError, KeyError) as e:
            raise ConfigError(f"bad config: {e}") from None
        cfg.validate()
        return cfg

    def validate(self):
        pid = self.problem.get("id")
        if pid not in PROBLEM_IDS:
            raise ConfigError(f"unknown problem id {pid!r}; choose from {list(PROBLEM_IDS)}")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {sorted(METHODS)}")
        if self.schedule.get("family", "linear") not in SCHEDULES:
            raise ConfigError(f"unknown schedule family {self.schedule.get('family')!r}")
        if self.normalization not in ("vlm", "unit"):
            raise ConfigError("normalization must be 'vlm' or 'unit'")
        if self.x0 not in ("default", "gaussian"):
            raise ConfigError("x0 must be 'default' or 'gaussian'")
        if not (isinstance(self.iterations, int) and self.iterations >= 2):
            raise ConfigError("iterations must be an integer >= 2")
        if not (isinstance(self.record_every, int) and self.record_every >= 1):
            raise ConfigError("record_every must be a positive integer")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "out"}


def build_problem(spec: dict) -> ObjectiveSpec:
    return _build_problem(json.dumps(spec, sort_keys=True))


@lru_cache(maxsize=8)
def _build_problem(key: str) -> ObjectiveSpec:
    spec = json.loads(key)
    pid = spec.get("id")
    try:
        if pid == "hilbert":
            return problems.hilbert_quadratic(int(spec.get("d", 200)))
        if pid == "diag_quadratic":
            return problems.diag_quadratic(spec.get("weights", [1, 2, 3, 4, 5, 6]))
        if pid == "cahn_hilliard":
            return problems.cahn_hilliard(int(spec.get("N", 1001)))
        if pid == "logsumexp":
            A, b = problems.synthetic_logsumexp_data(int(spec.get("m", 1000)), int(spec.get("d", 100)),
                                                     int(spec.get("data_seed", 0)))
            return problems.logsumexp(A, b, float(spec.get("sigma", 10.0)),
                                      presolve=bool(spec.get("presolve", True)))
        if pid == "logistic":
            if "path" in spec:
                data = problems.parse_sparse_dataset(spec["path"])
            else:
                data = problems.synthetic_classification_data(
                    int(spec.get("m", 500)), int(spec.get("d", 50)),
                    float(spec.get("density", 0.2)), int(spec.get("data_seed", 0)))
            return problems.logistic(data, float(spec.get("lambda", 1e-10)),
                                     presolve=bool(spec.get("presolve", False)))
    except problems.DatasetParseError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad problem parameters: {e}") from None
    raise ConfigError(f"unknown problem id {pid!r}")


def make_schedule(spec: dict, method: str, a: float, normalization: str) -> StepSchedule:
    # "unit" scales NAG-c so its classic step s = 4 * slope equals a
    scale = 0.25 if (normalization == "unit" and method == "nag_c") else 1.0
    fam = spec.get("family", "linear")
    if fam == "linear":
        return StepSchedule.linear(a * scale, float(spec.get("offset", 3.0)))
    if fam == "constant":
        return StepSchedule.constant(a * scale)
    return StepSchedule.exponential(a * scale, float(spec.get("gamma", 1.01)))


def start_point(obj: ObjectiveSpec, mode: str, seed: int) -> np.ndarray:
    if mode == "gaussian":
        return np.random.default_rng(seed).standard_normal(obj.dim)
    return np.zeros(obj.dim) if obj.x0 is None else obj.x0


def cell_name(method: str, a: float) -> str:
    return f"{method}_a{a:.6e}.csv"


TRAJ_HEADER = ["n", "t", "f_gap", "grad_norm", "lyapunov", "restarted"]


def run_cell(cfg_dict: dict, method: str, a: float, out_dir: str) -> dict:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    obj = build_problem(cfg.problem)
    sched = make_schedule(cfg.schedule, method, a, cfg.normalization)
    x0 = start_point(obj, cfg.x0, cfg.seed)
    traj = run(get_method(method), obj, sched, x0,
               RunConfig(cfg.iterations, cfg.restart, cfg.record_every, cfg.seed))
    name = cell_name(method, a)
    write_csv(Path(out_dir) / name, TRAJ_HEADER,
              ((r.n, r.t, r.f_gap, r.grad_norm, r.lyapunov, r.restarted) for r in traj.records))
    return {"method": method, "a": a, "file": name, "diverged": traj.diverged,
            "diverged_at": traj.diverged_at,
            "final_gap": None if traj.diverged else traj.final_gap,
            "restarts": int(traj.restarted.sum())}


def best_cell(cells: list) -> Optional[dict]:
    ok = [c for c in cells if not c["diverged"] and c["final_gap"] is not None
          and math.isfinite(c["final_gap"])]
    if not ok:
        return None
    return min(ok, key=lambda c: (c["final_gap"], c["a"]))


def theory_warning(grid: list, best_a: float, a_theory: float) -> Optional[str]:
    """Warn when the best a is more than one grid step from 1/(4L)."""
    i_best = grid.index(best_a)
    i_th = int(np.argmin([abs(math.log(g / a_theory)) for g in grid]))
    if abs(i_best - i_th) > 1:
        return f"best a {best_a:g} is more than one grid step from 1/(4L) = {a_theory:.6g}"
    return None


def cmd_run(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    obj = build_problem(cfg.problem)
    cfg_dict = cfg.to_dict()
    tasks = [(m, a) for m in cfg.methods for a in cfg.a_grid]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futs = [ex.submit(run_cell, cfg_dict, m, a, str(out)) for m, a in tasks]
            cells = [f.result() for f in futs]
    else:
        cells = [run_cell(cfg_dict, m, a, str(out)) for m, a in tasks]

    L = obj.lipschitz_L
    a_theory = 1 / (4 * safe_lipschitz(obj))
    summary = {"config": cfg_dict, "problem": obj.name, "L": L, "a_theory": a_theory,
               "methods": {}}
    for m in cfg.methods:
        mc = [c for c in cells if c["method"] == m]
        best = best_cell(mc)
        entry = {"cells": mc, "best_a": None if best is None else best["a"],
                 "best_final_gap": None if best is None else best["final_gap"], "warning": None}
        if m == "nag_c" and best is not None and cfg.normalization == "vlm" and len(cfg.a_grid) > 1:
            entry["warning"] = theory_warning(cfg.a_grid, best["a"], a_theory)
            if entry["warning"]:
                print(f"warning: {entry['warning']}", file=sys.stderr)
        summary["methods"][m] = entry
    write_json(out / "summary.json", summary)
    return summary


# --------------------------------------------------------------- stability

LIMITS = {"nag_c": stability.NAG_C_LIMITS, "proposed": stability.PROPOSED_LIMITS,
          "adams2": stability.ADAMS2_LIMITS}


def cmd_stability(spec: dict, out: Path) -> dict:
    methods = spec.get("methods", ["nag_c", "proposed"])
    for m in methods:
        if m not in LIMITS:
            raise ConfigError(f"no limiting polynomial for method {m!r}")
    samples = int(spec.get("boundary_samples", 2000))
    ns = [int(n) for n in spec.get("r_curve_n", [4, 8, 12, 16, 20])]
    mu_points = int(spec.get("mu_points", 201))
    adams_w = [float(w) for w in spec.get("adams_w", [1.5, 1.1, 1.01, 1.001, 1.0001])]
    adams_mu = float(spec.get("adams_mu", -0.5))
    if samples < 2 or mu_points < 2 or any(n < 4 for n in ns):
        raise ConfigError("need boundary_samples >= 2, mu_points >= 2 and r_curve_n >= 4")
    out.mkdir(parents=True, exist_ok=True)
    report = {"regions": {}, "r_curves": []}
    for m in methods:
        rb = stability.region_boundary(LIMITS[m], samples)
        name = f"region_{m}.csv"
        write_csv(out / name, ["re_mu", "im_mu"], ((z.real, z.imag) for z in rb.samples))
        report["regions"][m] = {"file": name,
                                "real_intercepts": [float(v) for v in rb.real_intercepts()]}
    mus = np.linspace(-1.0, 0.0, mu_points)
    curves = {"nag_c": stability.nag_r_curve, "proposed": stability.proposed_r_curve}
    for m, fn in curves.items():
        if m not in methods:
            continue
        for n in ns:
            w = (n + 1) / n
            name = f"r_curve_{m}_n{n}.csv"
            write_csv(out / name, ["mu", "r"], ((mu, fn(w, mu)) for mu in mus))
            report["r_curves"].append(name)
    fixed = stability.adams_characteristic(adams_mu, 1.0)
    rows = []
    for w in adams_w:
        p = stability.adams_characteristic(adams_mu, w)
        rows.append((w, adams_mu, p.b, p.c, fixed.b, fixed.c, max(abs(p.b - fixed.b), abs(p.c - fixed.c))))
    write_csv(out / "adams_sweep.csv", ["w", "mu", "b1", "b0", "b1_fixed", "b0_fixed", "error"], rows)
    report["adams_sweep"] = "adams_sweep.csv"
    write_json(out / "stability.json", report)
    return report


# ----------------------------------------------------------------- certify

def cmd_certify(spec: dict, out: Path) -> dict:
    if "problem" not in spec:
        raise ConfigError("config needs a 'problem' entry")
    if spec.get("method", "nag_c") != "nag_c":
        raise ConfigError("certificates are available for nag_c only")
    obj = build_problem(spec["problem"])
    if obj.x_star is None:
        raise ConfigError(f"{obj.name} has no known minimiser; cannot certify")
    L = safe_lipschitz(obj)
    a = spec.get("a", "theory")
    a = 1 / (4 * L) if a == "theory" else float(a)
    if a < 0:
        raise ConfigError("a must be non-negative")
    iterations = int(spec.get("iterations", 2000))
    if iterations < 2:
        raise ConfigError("iterations must be >= 2")
    out.mkdir(parents=True, exist_ok=True)
    cert = certify(obj, a, iterations, L)
    write_csv(out / "certificate.csv", ["n", "E", "B", "f_gap", "cond1", "cond2", "cond3", "cond4"],
              ((n, e, b, g, *fl) for n, e, b, g, fl in zip(cert.n, cert.E, cert.B, cert.f_gap, cert.flags)))
    report = {"problem": obj.name, "a": a, "L": L, "iterations": iterations,
              "all_conditions_hold": cert.all_conditions_hold,
              "first_failure": dict(zip(("cond1", "cond2", "cond3", "cond4"), cert.first_failure)),
              "E_non_increasing": cert.monotone(), "max_E_increase": cert.max_increase,
              "rate_bound_slack": cert.rate_slack,
              "flags": [[bool(v) for v in row] for row in cert.flags],
              "E": [float(v) for v in cert.E]}
    write_json(out / "certificate.json", report)
    return report


# --------------------------------------------------------------------- CLI

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vlmnag", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "grid-searched optimisation runs"),
                        ("stability", "stability regions and spectral-radius curves"),
                        ("certify", "Lyapunov certificate for NAG-c")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--jobs", type=int, default=1, help="parallel grid cells")
        p.add_argument("--seed", type=int, help="seed (overrides the config)")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as e:
        print(f"error: config is not valid JSON: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if not isinstance(raw, dict):
        print("error: config must be a JSON object", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        if args.seed < 0:
            print("error: seed must be non-negative", file=sys.stderr)
            return EXIT_CONFIG
        raw["seed"] = args.seed
    out = args.out or raw.pop("out", None)
    raw.pop("out", None)
    if out is None:
        print("error: no output directory (use --out)", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "run":
            cmd_run(ExperimentConfig.from_dict(raw), Path(out), args.jobs)
        elif args.command == "stability":
            cmd_stability(raw, Path(out))
        else:
            cmd_certify(raw, Path(out))
    except (ConfigError, problems.DatasetParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
