"""Experiment runner: sweeps over one parameter and many seeds, CSV/JSON output.

Usage::

    congestion-pricing run --config cfg.json --sweep beta=0,1,2,3,4 --seeds 10 --out runs/beta
    congestion-pricing summarize runs/beta

``run`` is the default subcommand, so the flags may be given directly.

Output layout under ``--out``::

    report.json                      constants, trackability verdicts, config
    T{T}/summary.csv                 one row per (sweep value, seed)
    T{T}/{param}={value}/seed{k}.csv trajectory: t,anccvc,price_r*,phi_r*

Replicate k of a run uses seed ``splitmix64(base_seed + k)``. The same
replicate seeds are used for every sweep value (common random numbers).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .engine import SimConfig, run
from .errors import CongestionPricingError, ConvergenceError, DomainError, HypothesisError
from .game import NoiseModel, _ORACLE_BUILDERS, game_from_dict
from .metrics import anccvc_series, decay_fit, weighted_ccv
from .pricing import Schedule, ScheduleSet
from .theory import compute_constants, solve_constrained_vi, theorem1_bound, trackability_check

SWEEPABLE = ("beta", "alpha", "gamma_scale", "sigma")
FORMATS = ("csv", "json", "both")
SUMMARY_HEADER = ["sweep_param", "value", "seed", "terminal_anccvc", "tc_satisfied", "bound_value"]
_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One round of the SplitMix64 generator; a bijective 64-bit mix."""
    z = (int(x) + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def replicate_seed(base: int, k: int) -> int:
    return splitmix64((int(base) + int(k)) & _MASK64)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# -- configuration ---------------------------------------------------------------

DEFAULT_GAME = {"kind": "quadratic", "n": 20, "d": 5, "build_seed": 0}


@dataclass
class ExperimentConfig:
    """One experiment: a base setting, an optional one-parameter sweep, seeds.

    The step sizes follow the evaluation convention: gamma = gamma_scale / sqrt(T)
    held constant over the run, eta = alpha * gamma^2, zeta = gamma, constant beta.
    ``game`` is either an oracle descriptor such as ``{"kind": "quadratic", ...}``
    or a full game document.
    """

    game: dict = field(default_factory=lambda: dict(DEFAULT_GAME))
    horizons: list = field(default_factory=lambda: [500])
    gamma_scale: float = 0.5
    alpha: float = 10.0
    beta: float = 2.0
    sigma: float = 5.0
    seed: int = 0
    n_seeds: int = 1
    sweep_param: Optional[str] = None
    sweep_values: list = field(default_factory=list)
    out: str = "runs"
    emit: str = "csv"

    def __post_init__(self):
        self.horizons = [int(t) for t in self.horizons]
        if not self.horizons or min(self.horizons) < 1:
            raise DomainError("horizons must be positive integers", horizons=self.horizons)
        if len(set(self.horizons)) != len(self.horizons):
            raise DomainError("duplicate horizons", horizons=self.horizons)
        if self.n_seeds < 1:
            raise DomainError("n_seeds must be >= 1", n_seeds=self.n_seeds)
        if not 0 <= int(self.seed) <= _MASK64:
            raise DomainError("seed must be an unsigned 64-bit integer", seed=self.seed)
        if self.emit not in FORMATS:
            raise DomainError(f"emit must be one of {FORMATS}", emit=self.emit)
        if self.sweep_param is not None:
            if self.sweep_param not in SWEEPABLE:
                raise DomainError(f"cannot sweep {self.sweep_param!r}; choose from {SWEEPABLE}",
                                  param=self.sweep_param)
            if not self.sweep_values:
                raise DomainError("sweep needs at least one value", param=self.sweep_param)
            self.sweep_values = [float(v) for v in self.sweep_values]
        for value in self.values():
            for T in self.horizons:
                p = self.params(value)
                if not (math.isfinite(p["sigma"]) and p["sigma"] >= 0):
                    raise DomainError("sigma must be finite and >= 0", sigma=p["sigma"])
                if p["alpha"] < 0:
                    raise DomainError("alpha must be >= 0", alpha=p["alpha"])
                self.schedules(value, T).validate(T)

    def values(self) -> list:
        return list(self.sweep_values) if self.sweep_param else [None]

    def params(self, value=None) -> dict:
        p = {k: float(getattr(self, k)) for k in SWEEPABLE}
        if self.sweep_param is not None and value is not None:
            p[self.sweep_param] = float(value)
        return p

    def schedules(self, value, T: int) -> ScheduleSet:
        p = self.params(value)
        gamma = p["gamma_scale"] / math.sqrt(T)
        return ScheduleSet(Schedule.constant(gamma), Schedule.constant(p["alpha"] * gamma**2),
                           Schedule.constant(p["beta"]))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sweep"] = None if self.sweep_param is None else {"param": self.sweep_param,
                                                            "values": self.sweep_values}
        del d["sweep_param"], d["sweep_values"]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__} | {"sweep", "horizon"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise DomainError(f"unknown config keys {unknown}", keys=unknown)
        if "horizon" in d:
            h = d.pop("horizon")
            d["horizons"] = h if isinstance(h, list) else [h]
        sweep = d.pop("sweep", None)
        if sweep:
            d["sweep_param"], d["sweep_values"] = sweep["param"], list(sweep["values"])
        return cls(**d)


def build_game(desc: dict):
    """GameSpec from an oracle descriptor or a full game document."""
    if "n_players" in desc:
        return game_from_dict(desc)[0]
    kind = desc.get("kind")
    if kind not in _ORACLE_BUILDERS:
        raise DomainError(f"unknown game kind {kind!r}", kind=kind, known=sorted(_ORACLE_BUILDERS))
    return _ORACLE_BUILDERS[kind](desc)


# -- running ----------------------------------------------------------------------

def _value_label(param: Optional[str], value) -> str:
    return "base" if param is None else f"{param}={_fmt(value)}"


def trajectory_csv(traj) -> str:
    R = traj.n_resources
    header = ["t", "anccvc"] + [f"price_r{r + 1}" for r in range(R)] + [f"phi_r{r + 1}" for r in range(R)]
    # row t carries the price after the t-th pricing round and the congestion it responded to
    prices = np.vstack([traj.prices[1:], traj.final_prices[None]])
    series = anccvc_series(traj)
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for t in range(len(traj)):
        row = [str(t + 1), _fmt(series[t])] + [_fmt(v) for v in prices[t]] + [_fmt(v) for v in traj.phi[t]]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def trajectory_json(traj, meta: dict) -> str:
    prices = np.vstack([traj.prices[1:], traj.final_prices[None]])
    doc = dict(meta)
    doc.update({
        "t": list(range(1, len(traj) + 1)),
        "anccvc": anccvc_series(traj).tolist(),
        "price": prices.tolist(),
        "phi": traj.phi.tolist(),
    })
    return json.dumps(doc, sort_keys=True)


def _tc_all(schedules: ScheduleSet, T: int, consts) -> bool:
    a = schedules.arrays(T)
    pairs = set(zip(a["gamma"].tolist(), a["eta"].tolist()))
    return all(trackability_check(g, e, consts) for g, e in pairs)


def _run_cell(job: dict) -> dict:
    """Run one (horizon, sweep value, replicate) cell and write its trajectory."""
    cfg = ExperimentConfig.from_dict(job["config"])
    value, T, k = job["value"], job["T"], job["k"]
    game = build_game(cfg.game)
    p = cfg.params(value)
    seed = replicate_seed(cfg.seed, k)
    schedules = cfg.schedules(value, T)
    noise = NoiseModel.gaussian(p["sigma"]) if p["sigma"] > 0 else NoiseModel()
    traj = run(SimConfig(game, schedules, T, seed=seed, noise=noise))
    cell_dir = Path(cfg.out) / f"T{T}" / _value_label(cfg.sweep_param, value)
    cell_dir.mkdir(parents=True, exist_ok=True)
    meta = {"seed": seed, "replicate": k, "horizon": T, "params": p}
    if cfg.emit in ("csv", "both"):
        (cell_dir / f"seed{k}.csv").write_text(trajectory_csv(traj))
    if cfg.emit in ("json", "both"):
        (cell_dir / f"seed{k}.json").write_text(trajectory_json(traj, meta))
    return {"T": T, "value": value, "k": k, "seed": seed,
            "terminal_anccvc": float(anccvc_series(traj)[-1]),
            "weighted_ccv": weighted_ccv(traj)}


def _bound_for(cfg: ExperimentConfig, value, T: int, consts, lam_norm) -> tuple:
    """(bound or None, reason) for one sweep cell."""
    schedules = cfg.schedules(value, T)
    try:
        if lam_norm is None:
            return None, "constrained VI oracle unavailable"
        return theorem1_bound(T, schedules, consts.with_(C_tilde2=lam_norm + 1.0)), "ok"
    except HypothesisError as e:
        return None, e.message


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> dict:
    """Run every horizon x sweep value x replicate; write trajectories, summaries, report."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    game = build_game(cfg.game)
    cells = [{"config": cfg.to_dict(), "value": v, "T": T, "k": k}
             for T in cfg.horizons for v in cfg.values() for k in range(cfg.n_seeds)]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]

    # theory pass, sequential
    consts_by_sigma, cells_report = {}, []
    lam_norm, vi_info = None, None
    for T in cfg.horizons:
        for v in cfg.values():
            p = cfg.params(v)
            sigma = p["sigma"]
            if sigma not in consts_by_sigma:
                consts_by_sigma[sigma] = compute_constants(game, noise=NoiseModel.gaussian(sigma))
            consts = consts_by_sigma[sigma]
            sch = cfg.schedules(v, T)
            tc = _tc_all(sch, T, consts)
            needs_vi = tc and p["beta"] == 2.0
            if needs_vi and vi_info is None:
                try:
                    sol = solve_constrained_vi(game)
                    lam_norm = float(np.linalg.norm(sol.lambda_star))
                    vi_info = sol.to_dict()
                except ConvergenceError as e:
                    vi_info = e.to_dict()
            bound, reason = _bound_for(cfg, v, T, consts, lam_norm) if needs_vi else (None, "hypotheses fail")
            if not tc:
                reason = "trackability condition fails"
            elif p["beta"] != 2.0:
                reason = "beta != 2"
            g, _, e, _ = sch.at(1)
            cells_report.append({"T": T, "sweep_param": cfg.sweep_param, "value": v, "gamma": g,
                                 "eta": e, "tc_satisfied": tc, "bound_value": bound,
                                 "bound_status": reason})

    verdict = {(c["T"], c["value"]): c for c in cells_report}
    for T in cfg.horizons:
        rows = sorted((r for r in results if r["T"] == T),
                      key=lambda r: (cfg.values().index(r["value"]), r["k"]))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            c = verdict[(T, r["value"])]
            w.writerow([cfg.sweep_param or "none", "" if r["value"] is None else _fmt(r["value"]),
                        r["seed"], _fmt(r["terminal_anccvc"]), str(c["tc_satisfied"]).lower(),
                        "" if c["bound_value"] is None else _fmt(c["bound_value"])])
        (out / f"T{T}").mkdir(parents=True, exist_ok=True)
        (out / f"T{T}" / "summary.csv").write_text(buf.getvalue())

    report = {
        "config": cfg.to_dict(),
        "seeds": [replicate_seed(cfg.seed, k) for k in range(cfg.n_seeds)],
        "constants": {_fmt(s): c.to_dict() for s, c in consts_by_sigma.items()},
        "cells": cells_report,
        "vi": vi_info,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=float))
    return report


# -- summarizing ------------------------------------------------------------------

SUMMARY_TABLE_HEADER = ["sweep_param", "value", "horizon", "n_seeds", "mean_terminal_anccvc",
                        "std_terminal_anccvc", "decay_slope"]


def _read_summary(path: Path) -> list:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as e:
        raise CongestionPricingError(f"cannot read {path}: {e}", path=str(path))
    if not rows or list(rows[0].keys()) != SUMMARY_HEADER:
        raise CongestionPricingError(f"corrupt summary file {path}", path=str(path))
    for r in rows:
        try:
            r["terminal_anccvc"] = float(r["terminal_anccvc"])
        except (TypeError, ValueError):
            raise CongestionPricingError(f"corrupt summary row in {path}", path=str(path), row=r)
    return rows


def summarize(report_dir) -> list:
    """Mean/std of terminal ANCCVC per sweep value and horizon, and the decay slope.

    The slope is the log-log fit across horizons and needs at least three.
    Standard deviations are population (ddof=0), so a single run has std 0.
    """
    root = Path(report_dir)
    files = sorted(root.glob("T*/summary.csv"), key=lambda p: int(p.parent.name[1:]))
    if not files:
        raise CongestionPricingError(f"no T*/summary.csv under {root}", path=str(root))
    groups: dict = {}
    for f in files:
        T = int(f.parent.name[1:])
        for r in _read_summary(f):
            groups.setdefault((r["sweep_param"], r["value"]), {}).setdefault(T, []).append(r["terminal_anccvc"])
    table = []
    for (param, value), by_T in groups.items():
        Ts = sorted(by_T)
        means = [float(np.mean(by_T[T])) for T in Ts]
        slope = None
        if len(Ts) >= 3 and min(means) > 0:
            slope = decay_fit(means, Ts)
        for T, m in zip(Ts, means):
            table.append({"sweep_param": param, "value": value, "horizon": T, "n_seeds": len(by_T[T]),
                          "mean_terminal_anccvc": m, "std_terminal_anccvc": float(np.std(by_T[T])),
                          "decay_slope": slope})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_TABLE_HEADER)
    for r in table:
        w.writerow([r["sweep_param"], r["value"], r["horizon"], r["n_seeds"],
                    _fmt(r["mean_terminal_anccvc"]), _fmt(r["std_terminal_anccvc"]),
                    "" if r["decay_slope"] is None else _fmt(r["decay_slope"])])
    (root / "summary_table.csv").write_text(buf.getvalue())
    return table


# -- argument parsing ---------------------------------------------------------------

class UsageError(CongestionPricingError):
    code = "usage_error"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_sweep(text: str) -> tuple:
    if "=" not in text:
        raise UsageError("--sweep expects name=v1,v2,...", sweep=text)
    name, vals = text.split("=", 1)
    try:
        values = [float(v) for v in vals.split(",") if v.strip()]
    except ValueError:
        raise UsageError("sweep values must be numbers", sweep=text)
    return name.strip(), values


def _parse_horizons(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError("--horizon expects integers, comma separated", horizon=text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="congestion-pricing", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("--config", help="JSON experiment config")
    r.add_argument("--seed", type=int, help="base seed (u64)")
    r.add_argument("--seeds", type=int, help="replicates per sweep value")
    r.add_argument("--sweep", help="name=v1,v2,... with name in " + ",".join(SWEEPABLE))
    r.add_argument("--out", help="output directory")
    r.add_argument("--format", choices=FORMATS, help="trajectory file format")
    r.add_argument("--horizon", help="T, or several as T1,T2,...")
    r.add_argument("--beta", type=float)
    r.add_argument("--alpha", type=float, help="eta = alpha * gamma^2")
    r.add_argument("--gamma-scale", type=float, help="gamma = scale / sqrt(T)")
    r.add_argument("--sigma", type=float, help="gradient noise standard deviation")
    r.add_argument("--jobs", type=int, default=1, help="worker processes")
    s = sub.add_parser("summarize", help="aggregate summary.csv files of a run")
    s.add_argument("report_dir")
    return p


def config_from_args(args) -> ExperimentConfig:
    d = {}
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot load config: {e}", path=args.config)
        if not isinstance(d, dict):
            raise UsageError("config must be a JSON object", path=args.config)
    overrides = {"seed": args.seed, "n_seeds": args.seeds, "out": args.out, "emit": args.format,
                 "beta": args.beta, "alpha": args.alpha, "gamma_scale": args.gamma_scale,
                 "sigma": args.sigma}
    d.update({k: v for k, v in overrides.items() if v is not None})
    if args.horizon:
        d.pop("horizon", None)
        d["horizons"] = _parse_horizons(args.horizon)
    if args.sweep:
        name, values = _parse_sweep(args.sweep)
        d["sweep"] = {"param": name, "values": values}
    return ExperimentConfig.from_dict(d)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in ("run", "summarize", "-h", "--help"):
        argv = ["run"] + argv
    try:
        args = build_parser().parse_args(argv)
        if args.command == "summarize":
            table = summarize(args.report_dir)
            print(json.dumps({"rows": len(table), "out": str(Path(args.report_dir) / "summary_table.csv")}))
        else:
            cfg = config_from_args(args)
            run_experiment(cfg, jobs=max(1, args.jobs))
            print(json.dumps({"out": cfg.out, "cells": len(cfg.values()) * len(cfg.horizons),
                              "seeds": cfg.n_seeds}))
        return 0
    except CongestionPricingError as e:
        sys.stderr.write(json.dumps(e.to_dict(), default=str) + "\n")
        return 2 if isinstance(e, (UsageError, DomainError)) else 1
    except (OSError, TypeError, KeyError, ValueError) as e:
        sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e), "details": {}}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
