"""Regression fixtures: frozen verdicts and summaries from a first computation.

A fixture directory holds ``<name>.yaml`` configs next to
``<name>.expected.json`` files.  Checking a fixture reruns the scenario,
compares every verdict and summary number against the frozen copy, and
re-ingests the emitted CSVs to confirm the series-level verdicts are
reproduced from the files alone.
"""
from __future__ import annotations

import json
import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .config import load_config
from .experiments import ScenarioResult, run_scenario
from .output import _plain, dumps, emit_outputs, read_series_csv, series_checks

RTOL = 1e-6
ATOL = 1e-9
SERIES_CHECKS = ("first_law", "entropy_sign")


@dataclass
class FixtureCheck:
    name: str
    mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def expected_payload(result: ScenarioResult) -> dict:
    return _plain({
        "scenario": result.scenario,
        "passed": result.passed,
        "verdicts": {k: {"passed": v.passed, "applicable": v.applicable, "value": v.value}
                     for k, v in result.verdicts.items()},
        "summary": result.summary,
        "cycles": len(result.cycles),
        "series_rows": {k: len(s.records) for k, s in result.series.items()},
    })


def _compare(path: str, want, got, out: list[str]) -> None:
    if isinstance(want, dict):
        if not isinstance(got, dict) or set(want) != set(got):
            out.append(f"{path}: keys differ")
            return
        for k in want:
            _compare(f"{path}.{k}", want[k], got[k], out)
    elif isinstance(want, list):
        if not isinstance(got, list) or len(want) != len(got):
            out.append(f"{path}: length differs")
            return
        for i, (a, b) in enumerate(zip(want, got)):
            _compare(f"{path}[{i}]", a, b, out)
    elif isinstance(want, bool) or want is None or isinstance(want, str):
        if want != got:
            out.append(f"{path}: expected {want!r}, got {got!r}")
    elif isinstance(want, (int, float)):
        if not isinstance(got, (int, float)) or isinstance(got, bool):
            out.append(f"{path}: expected number, got {got!r}")
        elif not (math.isfinite(got) and abs(got - want) <= ATOL + RTOL * abs(want)):
            out.append(f"{path}: expected {want!r}, got {got!r}")
    else:
        out.append(f"{path}: unsupported value {want!r}")


def roundtrip_mismatches(result: ScenarioResult) -> list[str]:
    """Series verdicts recomputed from emitted CSVs must equal the in-memory values exactly."""
    out = []
    with tempfile.TemporaryDirectory() as tmp:
        paths = emit_outputs(result, tmp, "rt", json_summary=False)
        for name, s in result.series.items():
            back = read_series_csv(paths[name])
            if len(back.records) != len(s.records):
                out.append(f"csv.{name}: row count changed")
                continue
            checks = series_checks(back)
            for key in SERIES_CHECKS:
                v = result.verdicts.get(f"{name}.{key}")
                if v is not None and checks[key] != v.value:
                    out.append(f"csv.{name}.{key}: {checks[key]!r} != {v.value!r}")
    return out


def fixture_names(directory) -> list[str]:
    return sorted(p.name[: -len(".yaml")] for p in Path(directory).glob("*.yaml"))


def check_fixture(directory, name: str, regenerate: bool = False) -> FixtureCheck:
    directory = Path(directory)
    cfg = load_config(directory / f"{name}.yaml")
    result = run_scenario(cfg)
    text = dumps(expected_payload(result)) + "\n"
    got = json.loads(text)
    check = FixtureCheck(name)
    check.mismatches += roundtrip_mismatches(result)
    target = directory / f"{name}.expected.json"
    if regenerate:
        target.write_text(text, encoding="utf-8")
        return check
    if not target.exists():
        check.mismatches.append(f"missing {target.name}")
        return check
    _compare(name, json.loads(target.read_text(encoding="utf-8")), got, check.mismatches)
    return check
