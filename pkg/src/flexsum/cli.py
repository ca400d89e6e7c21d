"""``flexsum`` command line: aggregate, verify, scenario, bench.

Exit codes: 0 ok, 1 schema error, 2 parameter error, 3 oracle cap exceeded,
4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import sys
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from . import bench
from .aggregator import GridMode, TightnessConfig, aggregate
from .ders import DER_TYPES, ParameterError
from .oracle import DEFAULT_CAP, OracleCapExceeded, check_superset, check_tightness, ensemble_truth
from .scenario import EnsembleSpec, ParamRanges, ScenarioSpec, base_ensemble, generate_ensemble, scenario_by_id

EXIT_OK, EXIT_SCHEMA, EXIT_PARAMS, EXIT_ORACLE_CAP, EXIT_VERIFY = 0, 1, 2, 3, 4

_NUM = {"type": "number"}
_DER_FIELDS = {
    "battery": {"p_max": _NUM, "s": _NUM},
    "wind": {"p_max": _NUM, "s1": _NUM, "s2": _NUM, "alpha": _NUM, "p0": _NUM, "q0": _NUM},
    "pv": {"p_max": _NUM, "s": _NUM},
    "switching": {"p_on": _NUM, "gamma": _NUM},
    "box": {"p_lo": _NUM, "p_hi": _NUM, "q_lo": _NUM, "q_hi": _NUM},
}
_REQUIRED = {"battery": ["p_max", "s"], "wind": ["p_max", "s1", "s2"], "pv": ["p_max", "s"],
             "switching": ["p_on", "gamma"], "box": ["p_lo", "p_hi", "q_lo", "q_hi"]}
assert set(_DER_FIELDS) == set(DER_TYPES)

ENSEMBLE_SCHEMA = {
    "type": "object",
    "required": ["ders"],
    "properties": {
        "seed": {"type": ["integer", "null"]},
        "provenance": {"type": "string"},
        "meta": {"type": "object"},
        "ders": {
            "type": "array",
            "minItems": 1,
            "items": {"oneOf": [
                {
                    "type": "object",
                    "properties": {"type": {"const": kind}, "label": {"type": "string"}, **props},
                    "required": ["type", *_REQUIRED[kind]],
                    "additionalProperties": False,
                }
                for kind, props in _DER_FIELDS.items()
            ]},
        },
    },
}

BENCH_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "base_seed": {"type": "integer"},
        "n_values": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "eps_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "caps_p": {"type": "array", "items": {"type": ["integer", "null"]}, "minItems": 1},
        "cap_q": {"type": ["integer", "null"], "minimum": 1},
        "repeats": {"type": "integer", "minimum": 3},
        "grid_mode": {"enum": [m.value for m in GridMode]},
        "scale": {"type": "number", "exclusiveMinimum": 0},
        "shuffle": {"type": "boolean"},
        "workers": {"type": "integer", "minimum": 1},
    },
}

DEFAULT_BENCH = {
    "base_seed": 0,
    "n_values": [10, 20, 40, 80],
    "eps_values": [0.01, 0.02, 0.04, 0.08, 0.16, 0.32, 0.64],
    "caps_p": list(bench.DEFAULT_CAPS_P),
    "cap_q": bench.DEFAULT_CAP_Q,
    "repeats": 3,
    "grid_mode": GridMode.PER_STEP.value,
    "scale": 1.0,
    "shuffle": False,
    "workers": 1,
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _write_manifest(prefix: str, command: str, config: dict, seed) -> None:
    manifest = {
        "command": command,
        "config_sha256": hashlib.sha256(_canonical(config).encode()).hexdigest(),
        "seed": seed,
        "version": _version(),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    Path(f"{prefix}.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_ensemble(path) -> EnsembleSpec:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_SCHEMA, f"cannot read ensemble {path}: {exc}") from None
    try:
        jsonschema.validate(data, ENSEMBLE_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CliError(EXIT_SCHEMA, f"ensemble schema error at {where}: {exc.message}") from None
    try:
        return EnsembleSpec.from_dict(data)
    except (ParameterError, ValueError) as exc:
        raise CliError(EXIT_PARAMS, f"invalid DER parameters: {exc}") from None


def _config(args) -> TightnessConfig:
    try:
        return TightnessConfig(args.eps, args.cap_p, args.cap_q, args.grid_mode)
    except ValueError as exc:
        raise CliError(EXIT_PARAMS, str(exc)) from None


def _fmt(x) -> str:
    return repr(float(x))


def write_geometry(prefix: str, result) -> None:
    k, l, cells = result.cells()
    with open(f"{prefix}.pixels.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "l", "p_lo", "p_hi", "q_lo", "q_hi"])
        for row in zip(k.tolist(), l.tolist(), cells.tolist()):
            w.writerow([row[0], row[1], *map(_fmt, row[2])])
    with open(f"{prefix}.blocks.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["p_lo", "p_hi", "q_lo", "q_hi"])
        for b in result.blocks.blocks.tolist():
            w.writerow(map(_fmt, b))


def cmd_aggregate(args) -> int:
    ens = load_ensemble(args.ensemble)
    cfg = _config(args)
    result = aggregate(ens, cfg)
    prefix = args.out
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    write_geometry(prefix, result)
    stats = {
        "n": len(ens),
        "exact": result.exact,
        "grid": {"eps_p": result.grid.eps_p, "eps_q": result.grid.eps_q,
                 "dim_p": result.grid.dim_p, "dim_q": result.grid.dim_q},
        "bounds": result.bounds.__dict__,
        # step 0 is the first DER's discretization; folds are steps 1..N-1
        "steps": [s.as_dict() for s in result.per_step_stats[1:]],
        "initial_blocks": result.per_step_stats[0].blocks,
    }
    Path(f"{prefix}.stats.json").write_text(json.dumps(stats, indent=2) + "\n")
    _write_manifest(prefix, "aggregate", {"ensemble": ens.to_dict(), "eps": cfg.epsilon,
                                          "cap_p": cfg.cap_p, "cap_q": cfg.cap_q,
                                          "grid_mode": cfg.grid_mode.value}, ens.seed)
    print(f"{len(result.blocks)} blocks, {result.grid.count} occupied pixels -> {prefix}.*")
    return EXIT_OK


def _deflate(blocks: np.ndarray, by: float) -> np.ndarray:
    out = blocks + np.array([by, -by, by, -by])
    keep = (out[:, 0] <= out[:, 1]) & (out[:, 2] <= out[:, 3])
    return out[keep]


def cmd_verify(args) -> int:
    ens = load_ensemble(args.ensemble)
    cfg = _config(args)
    delta = args.delta if args.delta is not None else args.eps / 10
    bound = args.bound if args.bound is not None else 2 * args.eps
    if not (delta > 0 and bound > 0):
        raise CliError(EXIT_PARAMS, "delta and bound must be positive")
    try:
        truth = ensemble_truth(ens, delta, args.cap)
    except OracleCapExceeded as exc:
        print(f"oracle cap exceeded: estimated {exc.estimate} operations > cap {exc.cap}",
              file=sys.stderr)
        return EXIT_ORACLE_CAP
    result = aggregate(ens, cfg)
    target = result
    if args.deflate:
        # negative control: shrink every block by 2 eps on each side
        target = _deflate(result.blocks.blocks, 2 * args.eps)
    sup = check_superset(target, truth)
    try:
        tight = check_tightness(result, truth, bound)
    except ValueError as exc:
        raise CliError(EXIT_PARAMS, str(exc)) from None
    ok = sup.ok and tight.passed
    viol = sup.violations.tolist()
    report = {
        "violations": viol[: args.max_violations],
        "violation_count": len(viol),
        "max_gap": sup.max_gap if np.isfinite(sup.max_gap) else None,
        "worst": tight.worst,
        "worst_over_eps": tight.worst / args.eps,
        "bound": bound,
        "delta": delta,
        "pass": ok,
        "truth_points": len(truth),
        "grid_mode": cfg.grid_mode.value,
        "deflated": bool(args.deflate),
    }
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(f"superset: {len(viol)} violations; worst deviation {tight.worst:.4g} "
          f"(bound {bound:.4g} + delta {delta:.4g}) -> {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_scenario(args) -> int:
    if args.seed is None:
        raise CliError(EXIT_PARAMS, "--seed is required for ensemble generation")
    if args.spec:
        try:
            sc = ScenarioSpec.from_dict(json.loads(Path(args.spec).read_text()))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise CliError(EXIT_SCHEMA, f"cannot read scenario spec: {exc}") from None
        except ValueError as exc:
            raise CliError(EXIT_PARAMS, str(exc)) from None
    elif args.id is not None:
        try:
            sc = scenario_by_id(args.id)
        except KeyError as exc:
            raise CliError(EXIT_PARAMS, str(exc.args[0])) from None
    else:
        raise CliError(EXIT_PARAMS, "give a scenario id (1..8) or --spec FILE")
    ranges = ParamRanges()
    if args.ranges:
        data = json.loads(Path(args.ranges).read_text())
        ranges = ParamRanges(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})
    try:
        ens = generate_ensemble(sc, args.n, args.seed, ranges)
    except ValueError as exc:
        raise CliError(EXIT_PARAMS, str(exc)) from None
    text = ens.to_json()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _load_bench_config(args) -> dict:
    cfg = dict(DEFAULT_BENCH)
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text())
            jsonschema.validate(user, BENCH_SCHEMA)
        except (OSError, json.JSONDecodeError, jsonschema.ValidationError) as exc:
            raise CliError(EXIT_PARAMS, f"bad bench config: {getattr(exc, 'message', exc)}") from None
        cfg.update(user)
    for key in ("caps_p", "n_values", "eps_values"):
        if getattr(args, key) is not None:
            cfg[key] = getattr(args, key)
    if args.cap_q is not None:
        cfg["cap_q"] = args.cap_q
    if args.scale is not None:
        cfg["scale"] = args.scale
    if args.repeats is not None:
        cfg["repeats"] = args.repeats
    if cfg["repeats"] < 3 or cfg["scale"] <= 0:
        raise CliError(EXIT_PARAMS, "repeats must be >= 3 and scale positive")
    return cfg


def _fits(records) -> list[dict]:
    out = []
    groups = {}
    for r in records:
        groups.setdefault(("n", r.eps, r.cap_p, r.cap_q), []).append(r)
        groups.setdefault(("inv_eps", r.n, r.cap_p, r.cap_q), []).append(r)
    for (axis, fixed, cap_p, cap_q), recs in groups.items():
        if len(recs) < 4:
            continue
        fit = bench.fit_scaling(recs, axis)
        key = "eps" if axis == "n" else "n"
        out.append({**fit.as_dict(), key: fixed, "cap_p": cap_p, "cap_q": cap_q})
    return out


def cmd_bench(args) -> int:
    prefix = args.out
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    if args.synthetic_selftest:
        recs = bench.synthetic_records("n", 2.0, [10, 20, 40, 80])
        fit = bench.fit_scaling(recs, "n")
        bench.write_csv(recs, f"{prefix}.csv")
        Path(f"{prefix}.fits.json").write_text(json.dumps([fit.as_dict()], indent=2) + "\n")
        print(f"synthetic quadratic data: slope {fit.slope:.4f}")
        return EXIT_OK if abs(fit.slope - 2.0) <= 0.01 else EXIT_VERIFY
    cfg = _load_bench_config(args)
    caps = [(bench.scaled_cap(c, cfg["scale"]), bench.scaled_cap(cfg["cap_q"], cfg["scale"]))
            for c in cfg["caps_p"]]
    try:
        records = bench.sweep(base_ensemble(cfg["base_seed"]), cfg["n_values"], cfg["eps_values"],
                              caps, cfg["repeats"], cfg["base_seed"], cfg["grid_mode"],
                              cfg["shuffle"], cfg["workers"])
    except ValueError as exc:
        raise CliError(EXIT_PARAMS, str(exc)) from None
    bench.write_csv(records, f"{prefix}.csv")
    fits = _fits(records)
    Path(f"{prefix}.fits.json").write_text(json.dumps(fits, indent=2) + "\n")
    _write_manifest(prefix, "bench", cfg, cfg["base_seed"])
    for f in fits:
        print(f"slope vs {f['axis']}: {f['slope']:.3f} (r2 {f['r2']:.3f}, cap_p {f['cap_p']})")
    return EXIT_OK


def _int_list(s: str) -> list:
    return [None if t.strip().lower() in ("none", "") else int(t) for t in s.split(",")]


def _float_list(s: str) -> list:
    return [float(t) for t in s.split(",")]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flexsum", description="Approximate Minkowski sums of DER flexibility domains.")
    sub = ap.add_subparsers(dest="command", required=True)

    def tightness_args(p):
        p.add_argument("ensemble", help="ensemble JSON file")
        p.add_argument("--eps", type=float, required=True, help="tightness (kW and kVAr)")
        p.add_argument("--cap-p", type=int, default=None, help="upper bound on p bins")
        p.add_argument("--cap-q", type=int, default=None, help="exact number of q bins")
        p.add_argument("--grid-mode", choices=[m.value for m in GridMode], default=GridMode.PER_STEP.value)

    p = sub.add_parser("aggregate", help="aggregate an ensemble and write pixels/blocks/stats")
    tightness_args(p)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("verify", help="check superset and tightness against a sampled truth")
    tightness_args(p)
    p.add_argument("--delta", type=float, default=None, help="oracle lattice pitch (default eps/10)")
    p.add_argument("--bound", type=float, default=None, help="tightness bound (default 2 eps)")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP, help="oracle work cap per summation stage")
    p.add_argument("--deflate", action="store_true", help="negative control: shrink the result by 2 eps")
    p.add_argument("--max-violations", type=int, default=1000, help="violations listed in the report")
    p.add_argument("--out", default=None, help="report JSON path")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("scenario", help="generate a seeded ensemble from a scenario")
    p.add_argument("id", type=int, nargs="?", help="built-in scenario id 1..8")
    p.add_argument("--spec", default=None, help="custom scenario JSON instead of a built-in id")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ranges", default=None, help="JSON overriding device parameter ranges")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("bench", help="timing sweep and scaling fits")
    p.add_argument("--config", default=None, help="bench config JSON")
    p.add_argument("--caps", dest="caps_p", type=_int_list, default=None, help="comma list of p caps")
    p.add_argument("--cap-q", type=int, default=None)
    p.add_argument("--n", dest="n_values", type=_int_list, default=None, help="comma list of sizes")
    p.add_argument("--eps", dest="eps_values", type=_float_list, default=None, help="comma list of eps")
    p.add_argument("--scale", type=float, default=None, help="multiply caps (slower machines: < 1)")
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--synthetic-selftest", action="store_true")
    p.add_argument("--out", default="bench", help="output prefix")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMS


if __name__ == "__main__":
    sys.exit(main())
