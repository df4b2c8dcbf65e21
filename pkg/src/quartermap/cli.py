"""``bench`` command line: run, sweep, validate, flops.

Every option can also come from a flat ``key=value`` file passed with
``--config``; keys are the long flag names with or without the leading
dashes (``input-size`` and ``input_size`` both work). Flags given on the
command line win over the file.

Exit codes: 0 success, 1 validation failure, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict
from pathlib import Path

from . import bench, model, validation
from .pruning import QuarterMapConfig, SkipPolicy, Upsample

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG = 0, 1, 2

# option -> (type, default); None defaults fall back to the preset
OPTIONS = {
    "model": (str, "tiny"),
    "input_size": (int, None),
    "batch": (int, 8),
    "k": (int, 3),
    "m": (int, 2),
    "n": (int, 1),
    "upsample": (str, "nearest"),
    "skip_policy": (str, "first-layer"),
    "seed": (int, 0),
    "repeats": (int, 5),
    "warmup": (int, 2),
    "threads": (int, 1),
    "out": (str, "csv"),
    "out_path": (str, None),
    "n_state": (int, None),
    "scan_method": (str, None),
    "axis": (str, "mn"),
    "values": (str, None),
    "inject_fault": (str, None),
    "timing": (bool, False),
}


class ConfigError(ValueError):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    # defaults are SUPPRESSed so only flags the user typed override the config file
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="flat key=value file mirroring these flags")
    p.add_argument("--model", choices=sorted(model.PRESETS), default=S)
    p.add_argument("--input-size", dest="input_size", type=int, default=S, help="square input resolution")
    p.add_argument("--batch", type=int, default=S)
    p.add_argument("--k", type=int, default=S, help="block selection interval")
    p.add_argument("--m", type=int, default=S, help="pruning interval")
    p.add_argument("--n", type=int, default=S, help="elements retained per interval")
    p.add_argument("--upsample", choices=[u.value for u in Upsample], default=S)
    p.add_argument("--skip-policy", dest="skip_policy", choices=[s.value for s in SkipPolicy], default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--repeats", type=int, default=S)
    p.add_argument("--warmup", type=int, default=S)
    p.add_argument("--threads", type=int, default=S)
    p.add_argument("--out", choices=["csv", "json"], default=S)
    p.add_argument("--out-path", dest="out_path", default=S)
    p.add_argument("--n-state", dest="n_state", type=int, default=S)
    p.add_argument("--scan-method", dest="scan_method", choices=["sequential", "parallel"], default=S)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description="QuarterMap benchmark harness (CPU, NumPy)")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="baseline vs QuarterMap throughput with stage timings")
    _add_common(run)
    sweep = sub.add_parser("sweep", help="ablation sweep over one axis")
    _add_common(sweep)
    sweep.add_argument("--axis", choices=[a.value for a in bench.SweepAxis], default=argparse.SUPPRESS)
    sweep.add_argument("--values", default=argparse.SUPPRESS,
                       help="comma list; mn values as m:n, e.g. 1:1,2:1,4:1")
    val = sub.add_parser("validate", help="run every invariant suite")
    _add_common(val)
    val.add_argument("--inject-fault", dest="inject_fault", choices=sorted(validation.FAULTS),
                     default=argparse.SUPPRESS)
    val.add_argument("--timing", action="store_true", default=argparse.SUPPRESS,
                     help="include the slow throughput reproducibility check")
    flops = sub.add_parser("flops", help="analytic per-stage FLOP table")
    _add_common(flops)
    return parser


def read_config_file(path) -> dict:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in OPTIONS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _coerce(key: str, value):
    kind = OPTIONS[key][0]
    if value is None or not isinstance(value, str):
        return value
    if kind is bool:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} must be a boolean, got {value!r}")
    try:
        return kind(value)
    except ValueError as exc:
        raise ConfigError(f"{key} must be {kind.__name__}, got {value!r}") from exc


def resolve_options(args: argparse.Namespace) -> dict:
    opts = {key: default for key, (_, default) in OPTIONS.items()}
    given = vars(args)
    if "config" in given:
        opts.update(read_config_file(given["config"]))
    opts.update({k: v for k, v in given.items() if k in OPTIONS})
    return {key: _coerce(key, value) for key, value in opts.items()}


def model_config(opts: dict) -> model.ModelConfig:
    overrides = {"seed": opts["seed"]}
    if opts["input_size"] is not None:
        overrides["input_hw"] = opts["input_size"]
    if opts["n_state"] is not None:
        overrides["n_state"] = opts["n_state"]
    if opts["scan_method"] is not None:
        overrides["scan_method"] = opts["scan_method"]
    return model.preset(opts["model"], **overrides)


def quartermap_config(opts: dict) -> QuarterMapConfig:
    return QuarterMapConfig(
        k=opts["k"], m=opts["m"], n=opts["n"], upsample=opts["upsample"], skip_policy=opts["skip_policy"]
    )


def _check_run_opts(opts: dict) -> None:
    for key in ("batch", "repeats", "threads"):
        if opts[key] < 1:
            raise ConfigError(f"--{key.replace('_', '-')} must be >= 1, got {opts[key]}")
    if opts["warmup"] < 0:
        raise ConfigError(f"--warmup must be >= 0, got {opts['warmup']}")
    if opts["out"] not in ("csv", "json"):
        raise ConfigError(f"--out must be csv or json, got {opts['out']!r}")


def parse_values(axis: str, text: str | None) -> list:
    if not text:
        return []
    items = [v.strip() for v in text.split(",") if v.strip()]
    try:
        if axis == "mn":
            out = []
            for item in items:
                m, _, n = item.partition(":")
                out.append((int(m), int(n or 1)))
            return out
        if axis in ("k", "layer"):
            return [int(v) for v in items]
        return [Upsample(v).value for v in items]
    except ValueError as exc:
        raise ConfigError(f"bad --values for axis {axis}: {text!r}") from exc


def _emit(text: str, opts: dict) -> None:
    if opts["out_path"]:
        Path(opts["out_path"]).write_text(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _report(rows: list[dict], payload: dict, opts: dict) -> None:
    if opts["out"] == "json":
        _emit(bench.write_json({**payload, "rows": rows}), opts)
    else:
        _emit(bench.write_csv(rows), opts)


def cmd_run(opts: dict) -> int:
    cfg, qm = model_config(opts), quartermap_config(opts)
    _check_run_opts(opts)
    rows = bench.benchmark_rows(cfg, qm, opts["batch"], opts["repeats"], opts["warmup"], opts["threads"], opts["seed"])
    _report(rows, {"model": asdict(cfg), "quartermap": qm.as_dict()}, opts)
    return EXIT_OK


def cmd_sweep(opts: dict) -> int:
    cfg, qm = model_config(opts), quartermap_config(opts)
    _check_run_opts(opts)
    spec = bench.SweepSpec(
        opts["axis"],
        parse_values(opts["axis"], opts["values"]),
        repeats=opts["repeats"],
        warmup=opts["warmup"],
        batch=opts["batch"],
        threads=opts["threads"],
        seed=opts["seed"],
    )
    for _, candidate in spec.configs(qm):
        if candidate.layers is not None and max(candidate.layers) >= len(cfg.depths):
            raise ConfigError(f"layer {max(candidate.layers)} does not exist in depths {list(cfg.depths)}")
    rows = bench.run_sweep(spec, cfg, qm)
    _report(rows, {"model": asdict(cfg), "quartermap": qm.as_dict(), "axis": spec.axis.value}, opts)
    return EXIT_OK


def cmd_validate(opts: dict) -> int:
    report = validation.run_validation(seed=opts["seed"], fault=opts["inject_fault"], timing=opts["timing"])
    _emit(report.render(), opts)
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_flops(opts: dict) -> int:
    cfg, qm = model_config(opts), quartermap_config(opts)
    base, pruned = model.flop_count(cfg), model.flop_count(cfg, qm)
    rows = []
    for label, table in (("baseline", base), ("quartermap", pruned)):
        for stage in table.stages():
            rows.append({"config": label, **stage})
        rows.append({"config": label, "stage": "all", "scan_path": table.scan_path_total, "total": table.total})
    if opts["out"] == "json":
        _emit(bench.write_json({"model": asdict(cfg), "quartermap": qm.as_dict(),
                                "baseline": base.as_dict(), "pruned": pruned.as_dict()}), opts)
        return EXIT_OK
    cols = ["config", "stage", "blocks", "scan", "projection", "merge", "upsample", "residual",
            "downsample", "scan_path", "total"]
    lines = [",".join(cols)] + [",".join(str(r.get(c, "")) for c in cols) for r in rows]
    _emit("\n".join(lines), opts)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "validate": cmd_validate, "flops": cmd_flops}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve_options(args)
        return COMMANDS[args.command](opts)
    except ValueError as exc:  # ConfigError and config-class validation errors
        print(f"bench: bad config: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
