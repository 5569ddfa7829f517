"""Command-line entry point: ``friction-lab <group> <action> --config cfg.json``.

Small results go to stdout as JSON; tables, reports and figures go to the
``--out`` directory through atomic writes. Any failure prints one JSON object
``{"error": kind, "message": ..., ...}`` on stderr. Exit status is 0 on
success, 2 for a missing or invalid config or input file, 1 otherwise.
Relative paths inside a config resolve against the config file's directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import analysis, coarse, dynamics, estimators, kernel, rom
from .errors import ConfigError, FrictionLabError, TableError
from .marl import (
    DESK_TABULAR,
    AgentConfig,
    EnvConfig,
    ExperimentDesign,
    read_records,
    records_to_csv,
    run_experiment,
)
from .plot import atomic_write, emit_heatmap

log = logging.getLogger("friction_lab")

# ---------------------------------------------------------------------------
# schemas

NUM = {"type": "number"}
VEC = {"type": "array", "items": NUM, "minItems": 1}
MAT = {"type": "array", "items": VEC, "minItems": 1}
PATHLIKE = {"type": "string", "minLength": 1}
LINEAR = {"oneOf": [NUM, {
    "type": "object",
    "properties": {"times": VEC, "values": VEC},
    "required": ["times", "values"],
    "additionalProperties": False,
}]}
SYSTEM = {
    "type": "object",
    "properties": {"weights": VEC, "survival": VEC, "mutation": MAT, "consent_types": {"type": "array"}},
    "required": ["weights", "mutation"],
}
TRIPLE = {"alpha": NUM, "sigma": NUM, "epsilon": NUM}


def _obj(props, required=(), extra=False):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": extra}


SCHEMAS = {
    ("kernel", "eval"): _obj({**TRIPLE, "form": _obj({"kind": {"type": "string"}, "p": NUM, "q": NUM}, ["kind"])},
                             ["alpha", "sigma", "epsilon"]),
    ("kernel", "alloc"): _obj({"stakes": MAT, "alignments": {"type": "array", "minItems": 1}, "entropies": MAT},
                              ["stakes", "alignments", "entropies"]),
    ("estimate", None): _obj({"family": {"type": "string"}, "inputs": {"type": "object"},
                              "series_csv": PATHLIKE, "time_column": {"type": "string"},
                              "return_column": {"type": "string"},
                              "event_window": {**VEC, "minItems": 2, "maxItems": 2},
                              "baseline_window": {**VEC, "minItems": 2, "maxItems": 2}}),
    ("rom", "simulate"): _obj({"system": SYSTEM, "p0": VEC, "dt": {"type": "number", "exclusiveMinimum": 0},
                               "steps": {"type": "integer", "minimum": 1},
                               "every": {"type": "integer", "minimum": 1}},
                              ["system", "p0", "dt", "steps"]),
    ("rom", "stationary"): _obj({"system": SYSTEM, "tol": NUM, "max_iters": {"type": "integer", "minimum": 1}},
                                ["system"]),
    ("dyn", "rate"): _obj({**TRIPLE, "d_sigma": NUM, "d_alpha": NUM, "d_epsilon": NUM},
                          ["alpha", "sigma", "epsilon", "d_sigma", "d_alpha", "d_epsilon"]),
    ("dyn", "lyapunov"): _obj({"path": _obj({"sigma": LINEAR, "alpha": LINEAR, "epsilon": LINEAR},
                                            ["sigma", "alpha", "epsilon"]),
                               "horizon": NUM, "samples": {"type": "integer", "minimum": 2},
                               "sigma_max": NUM},
                              ["path", "horizon", "samples"]),
    ("coarse", "check"): _obj({"system": SYSTEM, "partition": {"type": "array", "items": {"type": "integer"}},
                               "tol": NUM}, ["system", "partition"]),
    ("coarse", "grain"): _obj({"system": SYSTEM, "partition": {"type": "array", "items": {"type": "integer"}},
                               "p": VEC, "tol": NUM, "strict": {"type": "boolean"}},
                              ["system", "partition", "p"]),
    ("marl", "run"): _obj({"design": {"type": "object"}, "env": {"type": "object"},
                           "agent": {"oneOf": [{"type": "object"}, {"enum": ["desk"]}]},
                           "output": PATHLIKE}),
    ("analyze", None): _obj({"records": PATHLIKE,
                             "proxies": {"type": "array", "items": {"enum": list(analysis.PROXIES)}},
                             "seed": {"type": "integer", "minimum": 0},
                             "shuffles": {"type": "integer", "minimum": 1}},
                            ["records"]),
    ("plot", "heatmap"): _obj({"records": PATHLIKE, "x": {"enum": ["alpha", "sigma", "epsilon"]},
                               "y": {"enum": ["alpha", "sigma", "epsilon"]}, "metric": {"type": "string"},
                               "output": PATHLIKE},
                              ["records"]),
}

ACTIONS = {
    "kernel": ("eval", "alloc"),
    "rom": ("simulate", "stationary"),
    "dyn": ("rate", "lyapunov"),
    "coarse": ("check", "grain"),
    "marl": ("run",),
    "plot": ("heatmap",),
}


class InputMissing(FrictionLabError):
    kind = "missing_file"

    def __init__(self, message, path):
        super().__init__(message)
        self.path = path


# ---------------------------------------------------------------------------
# helpers


class Context:
    def __init__(self, cfg, cfg_path: Path, out: Path, seed, workers):
        self.cfg = cfg
        self.base = cfg_path.parent
        self.out = out
        self.seed = seed
        self.workers = workers

    def input_path(self, rel) -> Path:
        p = Path(rel)
        if not p.is_absolute():
            p = self.base / p
        if not p.is_file():
            raise InputMissing(f"input file not found: {p}", str(p))
        return p

    def output_path(self, name) -> Path:
        return self.out / name


def load_config(path, key) -> dict:
    p = Path(path)
    if not p.is_file():
        raise InputMissing(f"config file not found: {p}", str(p))
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", path=str(p)) from None
    validator = jsonschema.Draft202012Validator(SCHEMAS[key])
    errs = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errs:
        e = errs[0]
        where = "/" + "/".join(str(x) for x in e.absolute_path)
        raise ConfigError(f"{where}: {e.message}", path=where)
    return cfg


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _triple(cfg):
    return kernel.KernelTriple(cfg["alpha"], cfg["sigma"], cfg["epsilon"])


# ---------------------------------------------------------------------------
# commands; each returns (stdout payload, exit status)


def cmd_kernel_eval(ctx):
    k = _triple(ctx.cfg)
    out = {"friction": kernel.friction(k)}
    if "form" in ctx.cfg:
        f = ctx.cfg["form"]
        out["form_value"] = kernel.friction_form(kernel.FrictionForm(f["kind"], f.get("p", 1.0), f.get("q", 1.0)), k)
    return out, 0


def cmd_kernel_alloc(ctx):
    c = ctx.cfg
    assignment, total = kernel.friction_aware_allocation(c["stakes"], c["alignments"], c["entropies"])
    return {"assignment": list(assignment), "friction": total}, 0


def cmd_estimate(ctx, mode):
    c = ctx.cfg
    if mode == "volatility_series":
        if "series_csv" not in c or "event_window" not in c or "baseline_window" not in c:
            raise ConfigError("volatility_series needs series_csv, event_window and baseline_window")
        series = estimators.return_series_from_csv(
            ctx.input_path(c["series_csv"]), c.get("time_column", "t"), c.get("return_column", "r"))
        value = estimators.volatility_friction_series(series, c["event_window"], c["baseline_window"])
        return {"family": "friction", "mode": mode, "value": value}, 0
    family = c.get("family")
    if family is None:
        owners = [f for f, table in estimators.FAMILIES.items() if mode in table]
        if len(owners) != 1:
            raise ConfigError(f"mode {mode!r} needs a 'family' in the config", path="/family")
        family = owners[0]
    value = estimators.estimate(family, mode, c.get("inputs", {}))
    return {"family": family, "mode": mode, "value": value}, 0


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write(path, buf.getvalue())


def cmd_rom_simulate(ctx):
    c = ctx.cfg
    sys_ = rom.RomSystem.from_dict(c["system"])
    traj = rom.rom_integrate(c["p0"], sys_, c["dt"], c["steps"])
    every = c.get("every", 1)
    idx = np.arange(0, traj.shape[0], every)
    if idx[-1] != traj.shape[0] - 1:
        idx = np.append(idx, traj.shape[0] - 1)
    path = ctx.output_path("trajectory.csv")
    header = ["t"] + [f"p{i}" for i in range(traj.shape[1])]
    _write_csv(path, header, ([repr(float(i * c["dt"]))] + [repr(float(x)) for x in traj[i]] for i in idx))
    return {"final": traj[-1].tolist(), "steps": int(c["steps"]), "trajectory": str(path)}, 0


def cmd_rom_stationary(ctx):
    c = ctx.cfg
    sys_ = rom.RomSystem.from_dict(c["system"])
    p = rom.stationary_distribution(sys_, tol=c.get("tol", 1e-12), max_iters=c.get("max_iters", 1_000_000))
    return {"stationary": p.tolist(), "residual": rom.stationary_residual(p, sys_)}, 0


def cmd_dyn_rate(ctx):
    c = ctx.cfg
    return {"friction_rate": dynamics.friction_rate(_triple(c), c["d_sigma"], c["d_alpha"], c["d_epsilon"])}, 0


def cmd_dyn_lyapunov(ctx):
    c = ctx.cfg
    path = dynamics.ParameterPath.from_dict(c["path"])
    rep = dynamics.lyapunov_check(path, c["horizon"], c["samples"], c.get("sigma_max"))
    return rep.to_dict(), 0


def cmd_coarse_check(ctx):
    c = ctx.cfg
    rep = coarse.check_lumpability(rom.RomSystem.from_dict(c["system"]), coarse.Partition(c["partition"]),
                                   c.get("tol", 1e-9))
    return rep.to_dict(), 0


def cmd_coarse_grain(ctx):
    c = ctx.cfg
    sys_ = rom.RomSystem.from_dict(c["system"])
    part = coarse.Partition(c["partition"])
    tol = c.get("tol", 1e-9)
    out = coarse.coarse_grain(sys_, part, c["p"], tol, c.get("strict", True))
    return {"system": out.to_dict(), "report": coarse.check_lumpability(sys_, part, tol).to_dict()}, 0


def cmd_marl_run(ctx):
    c = ctx.cfg
    design_kw = dict(c.get("design", {}))
    if ctx.seed is not None:
        design_kw["master_seed"] = ctx.seed
    try:
        design = ExperimentDesign(**design_kw)
        env = EnvConfig(**c.get("env", {}))
        agent_spec = c.get("agent", "desk")
        agent = DESK_TABULAR if agent_spec == "desk" else AgentConfig(**agent_spec)
    except TypeError as exc:
        raise ConfigError(f"unknown field: {exc}") from None
    recs = run_experiment(design, env, agent, workers=ctx.workers)
    path = ctx.output_path(c.get("output", "runs.csv"))
    atomic_write(path, records_to_csv(recs))
    failed = sum(not r.ok for r in recs)
    return {"records": len(recs), "failed": failed, "csv": str(path)}, (1 if failed else 0)


def cmd_analyze(ctx):
    c = ctx.cfg
    recs = read_records(ctx.input_path(c["records"]))
    seed = ctx.seed if ctx.seed is not None else c.get("seed", 0)
    proxies = tuple(c.get("proxies", analysis.PROXIES))
    report = analysis.analysis_report(recs, proxies, seed, c.get("shuffles", analysis.DEFAULT_SHUFFLES))
    rpath = ctx.output_path("analysis.json")
    cpath = ctx.output_path("coefficients.csv")
    atomic_write(rpath, json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n")
    atomic_write(cpath, analysis.coefficient_table(recs, proxies))
    summary = [{k: h[k] for k in ("hypothesis", "proxy", "statistic", "p_value", "supported")}
               for h in report["hypotheses"]]
    return {"report": str(rpath), "coefficients": str(cpath), "hypotheses": summary}, 0


def cmd_plot_heatmap(ctx):
    c = ctx.cfg
    recs = read_records(ctx.input_path(c["records"]))
    metric = c.get("metric", "reward_gap")
    path = ctx.output_path(c.get("output", "heatmap.svg"))
    emit_heatmap(recs, c.get("x", "alpha"), c.get("y", "sigma"), metric, path)
    return {"svg": str(path)}, 0


COMMANDS = {
    ("kernel", "eval"): cmd_kernel_eval,
    ("kernel", "alloc"): cmd_kernel_alloc,
    ("rom", "simulate"): cmd_rom_simulate,
    ("rom", "stationary"): cmd_rom_stationary,
    ("dyn", "rate"): cmd_dyn_rate,
    ("dyn", "lyapunov"): cmd_dyn_lyapunov,
    ("coarse", "check"): cmd_coarse_check,
    ("coarse", "grain"): cmd_coarse_grain,
    ("marl", "run"): cmd_marl_run,
    ("analyze", None): cmd_analyze,
    ("plot", "heatmap"): cmd_plot_heatmap,
}


# ---------------------------------------------------------------------------
# argument parsing


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON config file")
    common.add_argument("--out", default=".", help="directory for output files")
    common.add_argument("--seed", type=_u64, default=None, help="master seed override")
    common.add_argument("--workers", type=_positive, default=1, help="parallel worker processes")

    parser = argparse.ArgumentParser(prog="friction-lab", description=__doc__.splitlines()[0])
    groups = parser.add_subparsers(dest="group", required=True)
    for group, actions in ACTIONS.items():
        g = groups.add_parser(group)
        sub = g.add_subparsers(dest="action", required=True)
        for a in actions:
            sub.add_parser(a, parents=[common])
    est = groups.add_parser("estimate", parents=[common])
    est.add_argument("mode", help="estimator mode, e.g. survey, monetary, channel, volatility")
    groups.add_parser("analyze", parents=[common])
    return parser


def _error(exc) -> dict:
    out = {"error": getattr(exc, "kind", "internal"), "message": str(exc)}
    for attr in ("path", "row", "missing", "index", "step"):
        v = getattr(exc, attr, None)
        if v is not None and v != []:
            out[attr] = v
    return out


def main(argv=None) -> int:
    level = os.environ.get("FRICTION_LAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    action = getattr(args, "action", None)
    key = (args.group, action if args.group != "estimate" else None)
    try:
        cfg = load_config(args.config, key)
        ctx = Context(cfg, Path(args.config).resolve(), Path(args.out), args.seed, args.workers)
        fn = COMMANDS.get(key)
        payload, status = cmd_estimate(ctx, args.mode) if args.group == "estimate" else fn(ctx)
    except (InputMissing, ConfigError) as exc:
        print(_dump(_error(exc)), file=sys.stderr)
        return 2
    except TableError as exc:
        print(_dump(_error(exc)), file=sys.stderr)
        return 2
    except FrictionLabError as exc:
        print(_dump(_error(exc)), file=sys.stderr)
        return 1
    print(_dump(payload))
    if status:
        print(_dump({"error": "run_failures", "message": "some runs recorded an error", **payload}), file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
