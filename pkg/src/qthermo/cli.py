"""Command line entry point.

    qthermo run <config>        run a scenario (every sweep point, sequentially)
    qthermo spectrum <config>   spectral report of the configured model
    qthermo sweep <config>      run sweep points concurrently (QTHERMO_WORKERS)
    qthermo verify <dir>        rerun regression fixtures and compare

Exit codes: 0 all verdicts pass, 1 some verdict failed, 2 error.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

from .config import (
    ConfigError,
    ScenarioConfig,
    SpectrumParams,
    expand_sweep,
    load_config,
    parse_config,
    serialize_config,
)
from .experiments import ScenarioResult, run_scenario, run_spectrum
from .fixtures import check_fixture, fixture_names
from .output import emit_outputs

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
WORKERS_ENV = "QTHERMO_WORKERS"


def bundled_scenarios() -> list[str]:
    root = resources.files("qthermo") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_config(ref: str) -> ScenarioConfig:
    """A path to a YAML file, or the name of a bundled scenario (e1, e2, e3, e4, spectrum)."""
    if Path(ref).exists():
        return load_config(ref)
    name = ref.lower()
    if name in bundled_scenarios():
        return parse_config((resources.files("qthermo") / "scenarios" / f"{name}.yaml").read_text("utf-8"))
    raise FileNotFoundError(f"no config file or bundled scenario named {ref!r}")


def _num(x) -> str:
    return "-" if x is None else f"{x:.3e}"


def verdict_table(result: ScenarioResult, title: str) -> str:
    rows = [(v.name, "PASS" if v.passed else "FAIL", _num(v.value), _num(v.tolerance), v.invariant)
            if v.applicable else (v.name, "n/a", _num(v.value), _num(v.tolerance), v.invariant)
            for v in result.verdicts.values()]
    head = ("verdict", "status", "value", "tolerance", "invariant")
    widths = [max(len(r[i]) for r in [head, *rows]) for i in range(len(head))]
    line = "  ".join("{:<%d}" % w for w in widths)
    out = [f"== {title}: {'PASS' if result.passed else 'FAIL'}", line.format(*head)]
    out += [line.format(*r) for r in rows]
    out += [f"warning: {w}" for w in result.warnings]
    return "\n".join(out)


def _execute(cfg: ScenarioConfig, out_dir: str | None, spectrum: bool = False) -> tuple[bool, str]:
    result = run_spectrum(cfg) if spectrum else run_scenario(cfg)
    target = out_dir if out_dir is not None else cfg.output.dir
    paths = emit_outputs(result, target, cfg.prefix, csv_files=cfg.output.csv, json_summary=cfg.output.json_summary)
    text = verdict_table(result, f"{cfg.scenario} [{cfg.prefix}]")
    text += "\n" + "\n".join(f"wrote {p}" for p in paths.values())
    return result.passed, text


def _job(cfg_text: str, out_dir: str | None) -> tuple[bool, str]:
    return _execute(parse_config(cfg_text), out_dir)


def worker_count(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def cmd_run(args) -> int:
    ok = True
    for cfg in expand_sweep(resolve_config(args.config)):
        passed, text = _execute(cfg, args.out)
        print(text, flush=True)
        ok &= passed
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_spectrum(args) -> int:
    cfg = resolve_config(args.config)
    out = cfg.output.model_copy(update={"prefix": f"{cfg.prefix}_spectrum"})
    cfg = cfg.model_copy(update={"params": SpectrumParams(t=args.t), "sweep": {}, "output": out})
    passed, text = _execute(cfg, args.out, spectrum=True)
    print(text)
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_sweep(args) -> int:
    cfgs = expand_sweep(resolve_config(args.config))
    n = worker_count(args.workers)
    texts = [serialize_config(c) for c in cfgs]
    if n == 1:
        outcomes = [_job(t, args.out) for t in texts]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            outcomes = list(pool.map(_job, texts, [args.out] * len(texts)))
    for _, text in outcomes:
        print(text)
    n_fail = sum(not p for p, _ in outcomes)
    print(f"sweep: {len(outcomes) - n_fail}/{len(outcomes)} runs passed")
    return EXIT_PASS if n_fail == 0 else EXIT_FAIL


def cmd_verify(args) -> int:
    names = args.only or fixture_names(args.fixtures)
    if not names:
        raise FileNotFoundError(f"no fixtures in {args.fixtures}")
    ok = True
    for name in names:
        check = check_fixture(args.fixtures, name, regenerate=args.regenerate)
        status = "regenerated" if args.regenerate and check.ok else ("OK" if check.ok else "MISMATCH")
        print(f"{name}: {status}")
        for m in check.mismatches:
            print(f"  {m}")
        ok &= check.ok
    return EXIT_PASS if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qthermo", description="Open quantum system thermodynamics scenarios.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario config")
    r.add_argument("config", help="YAML config path or bundled scenario name")
    r.add_argument("--out", help="output directory (overrides output.dir)")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("spectrum", help="spectral report of the configured model")
    s.add_argument("config")
    s.add_argument("--t", type=float, default=None, help="time of the frozen Hamiltonian")
    s.add_argument("--out")
    s.set_defaults(func=cmd_spectrum)
    w = sub.add_parser("sweep", help="run sweep points concurrently")
    w.add_argument("config")
    w.add_argument("--workers", type=int, default=None, help=f"worker processes (default ${WORKERS_ENV} or 1)")
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)
    v = sub.add_parser("verify", help="rerun regression fixtures")
    v.add_argument("fixtures", help="directory of <name>.yaml and <name>.expected.json")
    v.add_argument("--only", nargs="*", help="fixture names to check")
    v.add_argument("--regenerate", action="store_true", help="overwrite expected files with fresh results")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
