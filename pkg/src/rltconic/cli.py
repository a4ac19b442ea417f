"""Command-line entry point: solve, bench, features, train and select."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from importlib import resources
from pathlib import Path

from . import __version__
from .bnb import BnbConfig, BnbStatus, root_relaxation, solve_problem
from .conic import write_cbf
from .conic.standard import to_standard_form
from .features import FEATURE_NAMES, extract_features
from .metrics import PaceRecord, nlbpace, performance_profile, read_results_csv, write_profile_csv, write_results_csv
from .poly import ParseError, parse_problem
from .rlt import dump_relaxation
from .selector import QrfConfig, TrainingRow, load_model, oob_evaluate, save_model, select_variant, train
from .strengthen import ALL_VARIANTS, Variant

log = logging.getLogger("rltconic")

BUILTIN_PREFIX = "builtin:"
SOLVER_KEYS = {f.name for f in fields(BnbConfig)} - {"variant"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _read_instance(spec: str) -> tuple[str, bytes]:
    """Return (instance id, raw bytes); ``builtin:NAME`` reads bundled data."""
    if spec.startswith(BUILTIN_PREFIX):
        name = spec[len(BUILTIN_PREFIX):]
        res = resources.files("rltconic.data").joinpath(f"{name}.pop")
        if not res.is_file():
            raise UsageError(f"no bundled instance named {name!r}")
        return name, res.read_bytes()
    path = Path(spec)
    if not path.is_file():
        raise UsageError(f"instance file not found: {spec}")
    return path.stem, path.read_bytes()


def _load(spec: str):
    inst, raw = _read_instance(spec)
    try:
        return inst, raw, parse_problem(raw.decode("utf-8"))
    except ParseError as exc:
        raise UsageError(f"{spec}: {exc}") from exc


def _instance_files(paths) -> list[str]:
    out = []
    for p in paths:
        if os.path.isdir(p):
            found = sorted(str(f) for f in Path(p).glob("*.pop"))
            if not found:
                raise UsageError(f"no .pop files in {p}")
            out += found
        else:
            out.append(p)
    return out


def read_config(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, ``[section]`` headers are ignored."""
    cfg = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = val.strip('"').strip("'")
    return cfg


def _coerce(value: str, like):
    if isinstance(like, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def _solver_config(args, variant: Variant, clock_default: str) -> BnbConfig:
    base = BnbConfig(variant=variant, clock=clock_default)
    values = {}
    for key, val in args.file_config.items():
        if key in SOLVER_KEYS:
            values[key] = _coerce(val, getattr(base, key))
    flags = {"time_limit_s": args.time_limit, "tol": getattr(args, "tol", None), "seed": args.seed,
             "clock": getattr(args, "clock", None)}
    values.update({k: v for k, v in flags.items() if v is not None})
    try:
        return BnbConfig(**{**asdict(base), **values, "variant": variant})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid solver configuration: {exc}") from exc


def _setting(args, name: str, default):
    """Flag value, else config-file value, else ``default``."""
    val = getattr(args, name, None)
    if val is not None:
        return val
    if name in args.file_config:
        return _coerce(args.file_config[name], default)
    return default


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write(path: str, text: str, outputs: list[str]) -> None:
    Path(path).write_text(text, encoding="utf-8")
    outputs.append(path)


def _emit_manifest(args, argv, config: dict, checksums: dict, seeds: dict, outputs: list[str], t0: float) -> None:
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "config": config,
        "instances": checksums,
        "version": __version__,
        "seeds": seeds,
        "wall_time_s": time.perf_counter() - t0,
        "outputs": outputs,
    }
    text = json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n"
    target = args.manifest or (outputs[0] + ".manifest.json" if outputs else None)
    if target:
        Path(target).write_text(text, encoding="utf-8")
        log.info("manifest written to %s", target)
    else:
        log.info("run manifest: %s", json.dumps(manifest, sort_keys=True, default=str))


def _fmt(x: float) -> str:
    if not math.isfinite(x):
        return str(x)
    return repr(round(float(x), 9) + 0.0)  # + 0.0 folds -0.0 into 0.0


def cmd_solve(args, argv, t0) -> int:
    inst, raw, prob = _load(args.file)
    outputs: list[str] = []
    seeds = {"solver": args.seed}
    if args.variant == "auto":
        model_path = args.model or args.file_config.get("model")
        if not model_path:
            raise UsageError("--variant auto needs --model")
        model = load_model(model_path)
        q = _setting(args, "q", 0.5)
        variant = Variant.parse(select_variant(model, extract_features(prob), q))
        log.info("model selected variant %s", variant)
    else:
        variant = _parse_variant(args.variant)
    cfg = _solver_config(args, variant, "wall")
    if args.dump_relaxation or args.dump_cbf:
        relax = root_relaxation(prob, variant)
        if args.dump_relaxation:
            _write(args.dump_relaxation, dump_relaxation(relax, prob.names), outputs)
        if args.dump_cbf:
            _write(args.dump_cbf, write_cbf(to_standard_form(relax).program), outputs)
    try:
        res = solve_problem(prob, cfg)
    except Exception as exc:
        log.error("solve failed: %s", exc)
        return 2
    if args.trace:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t_seconds", "lb", "ub", "nodes"))
        sign = -1.0 if prob.maximize else 1.0
        for t, lb, ub, n in res.trace:
            w.writerow((repr(float(t)), repr(sign * float(lb)), repr(sign * float(ub)), n))
        _write(args.trace, buf.getvalue(), outputs)
    bound = -res.lb if prob.maximize else res.lb
    print(f"status={res.status} objective={_fmt(res.objective)} bound={_fmt(bound)} nodes={res.nodes} "
          f"time_s={res.time_s:.3f} variant={variant}")
    if res.x is not None and args.print_solution:
        for name, val in zip(prob.names, res.x):
            print(f"{name}={float(val)!r}")
    _emit_manifest(args, argv, asdict(cfg), {inst: _sha256(raw)}, seeds, outputs, t0)
    return 0


def _parse_variant(name: str) -> Variant:
    try:
        return Variant.parse(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _variant_list(spec: str) -> list[Variant]:
    if spec == "all":
        return list(ALL_VARIANTS)
    return [_parse_variant(s.strip()) for s in spec.split(",") if s.strip()]


def _bench_job(job):
    inst, text, variant, cfg = job
    prob = parse_problem(text)
    try:
        res = solve_problem(prob, cfg)
        status, t, lr, le, ub = str(res.status), res.time_s, res.lb_root, res.lb_end, res.ub
    except Exception as exc:  # recorded as a failed run
        log.warning("%s/%s failed: %s", inst, variant, exc)
        status, t, lr, le, ub = str(BnbStatus.NUMERICAL), math.nan, math.nan, math.nan, math.inf
    return PaceRecord.from_run(inst, variant.value, status, t, lr, le, ub)


def cmd_bench(args, argv, t0) -> int:
    files = _instance_files([args.dir])
    variants = _variant_list(_setting(args, "variants", "all"))
    if not variants:
        raise UsageError("empty variant list")
    jobs, checksums = [], {}
    for f in files:
        inst, raw, _ = _load(f)
        if inst in checksums:
            raise UsageError(f"duplicate instance id {inst}")
        checksums[inst] = _sha256(raw)
        for v in variants:
            jobs.append((inst, raw.decode("utf-8"), v, _solver_config(args, v, "work")))
    n_jobs = _setting(args, "jobs", 1)
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            records = list(pool.map(_bench_job, jobs))
    else:
        records = [_bench_job(j) for j in jobs]
    for r in records:
        log.info("%s %s status=%s pace=%s", r.instance, r.variant, r.status, r.pace)
    outputs: list[str] = []
    text = write_results_csv(records)
    if args.out:
        _write(args.out, text, outputs)
    else:
        sys.stdout.write(text)
    if args.profile:
        paces: dict[str, dict[str, float]] = {}
        for r in records:
            paces.setdefault(r.instance, {})[r.variant] = r.pace
        usable = {k: v for k, v in paces.items() if any(math.isfinite(p) for p in v.values())}
        if usable:
            _write(args.profile, write_profile_csv(performance_profile(usable)), outputs)
        else:
            log.warning("no instance has a finite pace; profile not written")
    config = asdict(jobs[0][3]) if jobs else {}
    config.pop("variant", None)
    config["variants"] = [v.value for v in variants]
    _emit_manifest(args, argv, config, checksums, {"solver": args.seed}, outputs, t0)
    return 0


def features_csv(rows: list[tuple[str, dict[str, float]]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("instance",) + FEATURE_NAMES)
    for inst, f in rows:
        w.writerow([inst] + [repr(float(f[k])) for k in FEATURE_NAMES])
    return buf.getvalue()


def read_features_csv(text: str) -> dict[str, dict[str, float]]:
    out = {}
    for row in csv.DictReader(io.StringIO(text)):
        inst = row.pop("instance")
        out[inst] = {k: float(v) for k, v in row.items()}
    return out


def cmd_features(args, argv, t0) -> int:
    rows, checksums = [], {}
    for f in _instance_files(args.files):
        inst, raw, prob = _load(f)
        checksums[inst] = _sha256(raw)
        rows.append((inst, extract_features(prob)))
    outputs: list[str] = []
    text = features_csv(sorted(rows, key=lambda r: r[0]))
    if args.out:
        _write(args.out, text, outputs)
    else:
        sys.stdout.write(text)
    _emit_manifest(args, argv, {}, checksums, {}, outputs, t0)
    return 0


def training_rows(records: list[PaceRecord], feats: dict[str, dict[str, float]]) -> list[TrainingRow]:
    by_inst: dict[str, dict[str, float]] = {}
    for r in records:
        by_inst.setdefault(r.instance, {})[r.variant] = r.pace
    rows = []
    for inst in sorted(by_inst):
        if inst not in feats:
            raise UsageError(f"no features for instance {inst}")
        paces = by_inst[inst]
        if not any(math.isfinite(p) for p in paces.values()):
            log.warning("skipping %s: every variant failed", inst)
            continue
        rows.append(TrainingRow(inst, feats[inst], nlbpace(paces), paces))
    return rows


def cmd_train(args, argv, t0) -> int:
    for p in (args.results, args.features):
        if not os.path.isfile(p):
            raise UsageError(f"file not found: {p}")
    records = read_results_csv(Path(args.results).read_text(encoding="utf-8"))
    feats = read_features_csv(Path(args.features).read_text(encoding="utf-8"))
    rows = training_rows(records, feats)
    cfg = QrfConfig(trees=_setting(args, "trees", 500), mtry=_setting(args, "mtry", 0) or None,
                    min_leaf=_setting(args, "min_leaf", 3), seed=args.seed if args.seed is not None else 42)
    variants = [v.value for v in ALL_VARIANTS if any(r.variant == v.value for r in records)]
    try:
        model = train(rows, cfg, feature_names=list(FEATURE_NAMES), variants=variants)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    outputs: list[str] = []
    save_model(model, args.out)
    outputs.append(args.out)
    q = _setting(args, "q", 0.5)
    report = oob_evaluate(model, rows, q)
    log.info("OOB policy geometric-mean pace %.6g (%d rows excluded)", report.policy_pace, report.excluded)
    for v, p in report.fixed_pace.items():
        log.info("  fixed %-8s %.6g", v, p)
    checksums = {p: _sha256(Path(p).read_bytes()) for p in (args.results, args.features)}
    _emit_manifest(args, argv, {**asdict(cfg), "q": q}, checksums, {"forest": cfg.seed}, outputs, t0)
    return 0


def cmd_select(args, argv, t0) -> int:
    inst, raw, prob = _load(args.file)
    if not os.path.isfile(args.model):
        raise UsageError(f"model not found: {args.model}")
    model = load_model(args.model)
    q = _setting(args, "q", 0.5)
    print(select_variant(model, extract_features(prob), q))
    _emit_manifest(args, argv, {"q": q, "model": args.model}, {inst: _sha256(raw)}, {}, [], t0)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value settings file (flags take precedence)")
    common.add_argument("--seed", type=int, help="single source of randomness")
    common.add_argument("--manifest", help="where to write the run manifest (default: next to the output)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="rltconic", description="RLT relaxations strengthened by conic constraints, "
                                             "with learned variant selection.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", parents=[common], help="solve one instance by branch-and-bound")
    s.add_argument("file", help="instance file (.pop) or builtin:NAME")
    s.add_argument("--variant", default="rlt", help="variant name or 'auto' (needs --model)")
    s.add_argument("--model", help="selector model for --variant auto")
    s.add_argument("--q", type=float, help="selection quantile")
    s.add_argument("--time-limit", type=float, help="seconds on the solver clock")
    s.add_argument("--tol", type=float, help="interior-point tolerance")
    s.add_argument("--clock", choices=("wall", "work"))
    s.add_argument("--dump-relaxation", metavar="PATH")
    s.add_argument("--dump-cbf", metavar="PATH")
    s.add_argument("--trace", metavar="PATH", help="CSV of t_seconds,lb,ub,nodes")
    s.add_argument("--print-solution", action="store_true")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", parents=[common], help="run variants over a directory of instances")
    b.add_argument("dir")
    b.add_argument("--variants", help="'all' or a comma-separated list")
    b.add_argument("--out", help="results CSV (default stdout)")
    b.add_argument("--profile", help="performance profile CSV")
    b.add_argument("--jobs", type=int)
    b.add_argument("--time-limit", type=float)
    b.add_argument("--tol", type=float)
    b.add_argument("--clock", choices=("wall", "work"), help="default: work (reproducible)")
    b.set_defaults(func=cmd_bench)

    f = sub.add_parser("features", parents=[common], help="extract instance features")
    f.add_argument("files", nargs="+", help="instance files or directories")
    f.add_argument("--out")
    f.set_defaults(func=cmd_features)

    t = sub.add_parser("train", parents=[common], help="train the variant selector")
    t.add_argument("--results", required=True)
    t.add_argument("--features", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--q", type=float)
    t.add_argument("--trees", type=int)
    t.add_argument("--mtry", type=int)
    t.add_argument("--min-leaf", type=int, dest="min_leaf")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("select", parents=[common], help="pick a variant for one instance")
    c.add_argument("file")
    c.add_argument("--model", required=True)
    c.add_argument("--q", type=float)
    c.set_defaults(func=cmd_select)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    t0 = time.perf_counter()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.file_config = read_config(args.config) if args.config else {}
        if args.seed is None and "seed" in args.file_config:
            args.seed = int(args.file_config["seed"])
        return args.func(args, argv, t0)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rltconic: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
