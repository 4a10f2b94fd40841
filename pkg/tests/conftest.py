"""Shared fixtures: bundled scenario results are computed once per session."""
from __future__ import annotations

from importlib import resources

import numpy as np
import pytest

from qthermo.config import parse_config
from qthermo.experiments import run_scenario
from qthermo.models import CouplingSpec, Schedule, SpectralDensity, SystemSpec, assemble, discretize_bath
from qthermo.operators import PAULI_X

ACCEPTANCE_LINES: list[str] = []


def bundled_config(name: str):
    return parse_config((resources.files("qthermo") / "scenarios" / f"{name}.yaml").read_text("utf-8"))


def fermi_bath(n_modes=2, beta=1.0, alpha=1.0, lo=0.5, hi=1.5, scheme="linear", statistics="fermionic",
               fock_cutoff=4):
    sd = SpectralDensity(alpha=alpha, power=1.0, omega_min=lo, omega_max=hi)
    return discretize_bath(sd, n_modes, hi, scheme, omega_min=lo, statistics=statistics, beta=beta,
                           fock_cutoff=fock_cutoff)


def qubit_model(baths, lam=0.1, schedule=None, gap=1.0, drives=(), switching=None):
    """Qubit diag(0, gap) coupled through sigma_x to every bath."""
    system = SystemSpec(np.diag([0.0, gap]).astype(complex), tuple(drives))
    kw = {} if switching is None else {"switching": switching}
    couplings = [CouplingSpec(PAULI_X, i, lam, **kw) for i in range(len(baths))]
    return assemble(system, baths, couplings, schedule or Schedule("static", 0.05, 1.0))


class _ScenarioCache:
    def __init__(self):
        self._results = {}

    def __call__(self, name: str):
        if name not in self._results:
            self._results[name] = run_scenario(bundled_config(name))
        return self._results[name]


@pytest.fixture(scope="session")
def scenario():
    """scenario("e1") -> ScenarioResult of the bundled config, cached."""
    return _ScenarioCache()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
