"""Scenario configuration: strict YAML schema, defaults and sweep expansion.

A config is a YAML mapping with the blocks ``scenario``, ``model``,
``schedule``, ``initial_state``, ``numerics``, ``params``, ``sweep``,
``output`` and ``seed``.  Unknown keys are rejected everywhere; a validation
failure reports the offending key path and its line in the source text.
"""
from __future__ import annotations

import copy
import itertools
import math
from typing import Any, Literal, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .models import (
    CompositeModel,
    CouplingSpec,
    Profile,
    ReservoirSpec,
    Schedule,
    SpectralDensity,
    SystemSpec,
    assemble,
    discretize_bath,
)
from .operators import PAULI_X, PAULI_Y, PAULI_Z, check_hermitian, gibbs_state, pure_state, random_density

SCENARIOS = ("E1", "E2", "E3", "E4", "spectrum")

# A matrix is a named qubit operator or a nested list whose entries are
# numbers or strings accepted by complex(), e.g. "0.5-1j".
Matrix = Union[str, list[list[Union[float, str]]]]

NAMED_OPERATORS = {
    "sx": PAULI_X,
    "sy": PAULI_Y,
    "sz": PAULI_Z,
    "sp": np.array([[0, 0], [1, 0]], dtype=complex),
    "sm": np.array([[0, 1], [0, 0]], dtype=complex),
    "n": np.array([[0, 0], [0, 1]], dtype=complex),
    "id": np.eye(2, dtype=complex),
}


class ConfigError(ValueError):
    """Schema violation; ``problems`` holds (key path, line or None, message)."""

    def __init__(self, problems: list[tuple[str, int | None, str]]):
        self.problems = problems
        lines = []
        for path, line, msg in problems:
            where = f"line {line}: " if line is not None else ""
            lines.append(f"{where}{path or '<root>'}: {msg}")
        super().__init__("invalid config\n  " + "\n  ".join(lines))


def to_matrix(m: Matrix, name: str = "matrix") -> np.ndarray:
    if isinstance(m, str):
        try:
            return NAMED_OPERATORS[m].copy()
        except KeyError:
            raise ValueError(f"{name}: unknown operator name {m!r}") from None
    a = np.array([[complex(x) for x in row] for row in m], dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name}: expected a square matrix")
    return a


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ProfileConfig(_Strict):
    knots: list[tuple[float, float]] = [(0.0, 1.0)]
    interp: Literal["cosine", "step"] = "cosine"

    def build(self) -> Profile:
        return Profile(tuple(self.knots), self.interp)


class DriveConfig(_Strict):
    op: Matrix
    profile: ProfileConfig


class SystemConfig(_Strict):
    base: Matrix
    drives: list[DriveConfig] = []

    @field_validator("base")
    @classmethod
    def _base_ok(cls, v):
        check_hermitian(to_matrix(v, "base"), "system base Hamiltonian")
        return v

    def build(self) -> SystemSpec:
        return SystemSpec(
            base=to_matrix(self.base, "base"),
            drives=tuple((to_matrix(d.op, "drive op"), d.profile.build()) for d in self.drives),
        )


class SpectralDensityConfig(_Strict):
    alpha: float = Field(1.0, ge=0)
    power: float = 1.0
    omega_c: float = Field(math.inf, gt=0)
    omega_min: float = Field(0.0, ge=0)
    omega_max: float = math.inf

    def build(self) -> SpectralDensity:
        return SpectralDensity(**self.model_dump())


class BathConfig(_Strict):
    statistics: Literal["fermionic", "bosonic"] = "fermionic"
    beta: float = Field(gt=0)
    n_modes: int = Field(6, ge=1)
    scheme: Literal["linear", "gauss"] = "linear"
    fock_cutoff: int = Field(8, ge=1)
    spectral_density: SpectralDensityConfig = SpectralDensityConfig()
    discretization_max: float | None = None

    def build(self) -> ReservoirSpec:
        sd = self.spectral_density.build()
        wmax = self.discretization_max
        if wmax is None:
            wmax = sd.omega_max
        if not math.isfinite(wmax):
            raise ValueError("bath needs a finite omega_max or discretization_max")
        return discretize_bath(
            sd,
            self.n_modes,
            wmax,
            self.scheme,
            omega_min=sd.omega_min,
            statistics=self.statistics,
            beta=self.beta,
            fock_cutoff=self.fock_cutoff,
        )


class CouplingConfig(_Strict):
    system_op: Matrix = "sx"
    bath: int = Field(0, ge=0)
    lam: float = 0.1
    switching: ProfileConfig = ProfileConfig()


class ModelConfig(_Strict):
    system: SystemConfig
    baths: list[BathConfig] = Field(min_length=1)
    couplings: list[CouplingConfig] = Field(min_length=1)


class ScheduleConfig(_Strict):
    kind: Literal["static", "ramp", "periodic", "quasi_static"] = "static"
    dt: float = Field(0.05, gt=0)
    horizon: float | None = Field(None, ge=0)
    period: float | None = None
    tau: float | None = None
    ramp_time: float | None = None
    t0: float = 0.0


class InitialStateConfig(_Strict):
    kind: Literal["maximally_mixed", "gibbs", "coherent", "pure", "matrix", "random"] = "maximally_mixed"
    beta: float | None = Field(None, gt=0)
    coherence: float = Field(0.5, ge=0, le=1)
    vector: list[Union[float, str]] | None = None
    matrix: Matrix | None = None
    rank: int | None = Field(None, ge=1)


class Tolerances(_Strict):
    first_law: float = 1e-8
    entropy_sign: float = 1e-9
    entropy_rate: float = 1e-6
    rte_plateau: float = 0.05
    weak_equilibrium: float = 1e-6
    rate_rel: float = 0.2
    isothermal_ratio: float = 0.5
    monotone_slack: float = 0.1
    shrink_factor: float = 2.0
    decouple: float = 0.02
    bath_slack: float = 1.0
    current_sum_rel: float = 1e-3
    sign: float = 1e-8
    oracle_rel: float = 0.2
    cycle_energy: float = 1e-6
    carnot: float = 1e-6
    identity: float = 1e-8
    floquet_residual: float = 1e-10
    convergence_slack: float = 0.5
    gibbs: float = 1e-9
    eigdiff: float = 1e-10
    complete_positivity: float = 1e-10


class NumericsConfig(_Strict):
    stride: int = Field(10, ge=1)
    k_B: float = Field(1.0, gt=0)
    tail_fraction: float = Field(0.25, gt=0, le=1)
    weak_dt: float = Field(0.05, gt=0)
    lamb_shift: bool = False
    tolerances: Tolerances = Tolerances()


class E1Params(_Strict):
    kind: Literal["E1"] = "E1"
    weak: bool = True
    weak_horizon: float | None = Field(None, gt=0)


class DecouplingParams(_Strict):
    enabled: bool = True
    initial_state: InitialStateConfig = InitialStateConfig()
    t_eq: float | None = Field(None, ge=0)
    tau_factors: list[float] = [0.0, 50.0, 100.0, 200.0, 400.0]
    exact: bool = True
    exact_t_eq: float | None = Field(None, ge=0)
    exact_tau: float | None = Field(None, gt=0)


class E2Params(_Strict):
    kind: Literal["E2"] = "E2"
    channel: Literal["weak", "exact"] = "weak"
    tau_factors: list[float] = [50.0, 100.0, 200.0, 400.0]
    observables: list[Matrix] = ["sx", "sy", "sz"]
    decoupling: DecouplingParams = DecouplingParams()


class E3Params(_Strict):
    kind: Literal["E3"] = "E3"
    weak: bool = True
    weak_horizon: float | None = Field(None, gt=0)


class E4Params(_Strict):
    kind: Literal["E4"] = "E4"
    n_cycles: int = Field(30, ge=2)
    late_cycles: int = Field(5, ge=1)
    single_bath_check: bool = True
    single_bath_beta: float | None = Field(None, gt=0)


class SpectrumParams(_Strict):
    kind: Literal["spectrum"] = "spectrum"
    t: float | None = None
    liouvillean: bool = True


PARAMS = {"E1": E1Params, "E2": E2Params, "E3": E3Params, "E4": E4Params, "spectrum": SpectrumParams}
ParamsConfig = Union[E1Params, E2Params, E3Params, E4Params, SpectrumParams]


class OutputConfig(_Strict):
    dir: str = "out"
    prefix: str | None = None
    csv: bool = True
    json_summary: bool = True


class ScenarioConfig(_Strict):
    scenario: Literal["E1", "E2", "E3", "E4", "spectrum"]
    model: ModelConfig
    schedule: ScheduleConfig = ScheduleConfig()
    initial_state: InitialStateConfig = InitialStateConfig()
    numerics: NumericsConfig = NumericsConfig()
    params: ParamsConfig = Field(discriminator="kind")
    sweep: dict[str, list[Any]] = {}
    output: OutputConfig = OutputConfig()
    seed: int | None = None

    @model_validator(mode="before")
    @classmethod
    def _fill_params(cls, data):
        if isinstance(data, dict):
            scen = data.get("scenario")
            params = data.get("params")
            if scen in PARAMS and (params is None or isinstance(params, dict)):
                data = dict(data)
                params = dict(params or {})
                params.setdefault("kind", scen)
                data["params"] = params
        return data

    @model_validator(mode="after")
    def _consistent(self):
        if self.params.kind != self.scenario:
            raise ValueError(f"params block is for {self.params.kind}, scenario is {self.scenario}")
        n = len(self.model.baths)
        for c in self.model.couplings:
            if c.bath >= n:
                raise ValueError(f"coupling refers to bath {c.bath}, only {n} defined")
        return self

    @property
    def prefix(self) -> str:
        return self.output.prefix or self.scenario.lower()


# ---------------------------------------------------------------------------
# parsing and serialisation


def _line_of(root, loc: tuple) -> int | None:
    node = root
    line = node.start_mark.line + 1 if node is not None else None
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == str(key):
                    nxt = v
                    line = k.start_mark.line + 1
                    break
            if nxt is None:
                return line
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            return line
    return line


def parse_config(text: str) -> ScenarioConfig:
    """Validate YAML ``text`` into a :class:`ScenarioConfig` with all defaults filled."""
    try:
        data = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError([("", mark.line + 1 if mark else None, f"YAML syntax: {exc}")]) from exc
    if not isinstance(data, dict):
        raise ConfigError([("", 1, "top level must be a mapping")])
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            # drop the discriminator tag pydantic inserts into union paths
            loc = tuple(p for p in err["loc"] if p not in PARAMS)
            path = ".".join(str(p) for p in loc)
            problems.append((path, _line_of(root, loc), err["msg"]))
        raise ConfigError(problems) from None


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_to_dict(cfg: ScenarioConfig) -> dict:
    return cfg.model_dump(mode="python")


def serialize_config(cfg: ScenarioConfig) -> str:
    """YAML text that parses back to an equal config."""
    data = _plain(config_to_dict(cfg))
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None, width=100)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _set_path(data: dict, path: str, value) -> None:
    keys = path.split(".")
    node = data
    for k in keys[:-1]:
        node = node[int(k)] if isinstance(node, list) else node[k]
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        if last not in node:
            raise KeyError(path)
        node[last] = value


def expand_sweep(cfg: ScenarioConfig) -> list[ScenarioConfig]:
    """Cartesian product of the sweep block; each run gets its own output prefix."""
    if not cfg.sweep:
        return [cfg]
    base = config_to_dict(cfg)
    base["sweep"] = {}
    keys = list(cfg.sweep)
    out = []
    for idx, combo in enumerate(itertools.product(*(cfg.sweep[k] for k in keys))):
        data = copy.deepcopy(base)
        for k, v in zip(keys, combo):
            try:
                _set_path(data, k, v)
            except (KeyError, IndexError, ValueError, TypeError):
                raise ConfigError([(f"sweep.{k}", None, "path does not name a config field")]) from None
        data["output"]["prefix"] = f"{cfg.prefix}_{idx:03d}"
        try:
            out.append(ScenarioConfig.model_validate(data))
        except ValidationError as exc:
            raise ConfigError([(f"sweep.{k}", None, str(exc))]) from None
    return out


# ---------------------------------------------------------------------------
# building physics objects


def build_model(cfg: ScenarioConfig, schedule: Schedule | None = None) -> CompositeModel:
    """Assemble the composite model; a missing horizon defaults to half the recurrence time."""
    system = cfg.model.system.build()
    baths = [b.build() for b in cfg.model.baths]
    couplings = [
        CouplingSpec(to_matrix(c.system_op, "system_op"), c.bath, c.lam, c.switching.build())
        for c in cfg.model.couplings
    ]
    if schedule is None:
        schedule = build_schedule(cfg, baths)
    return assemble(system, baths, couplings, schedule)


def build_schedule(cfg: ScenarioConfig, baths=None) -> Schedule:
    s = cfg.schedule
    horizon = s.horizon
    if horizon is None:
        from .models import recurrence_time

        baths = baths if baths is not None else [b.build() for b in cfg.model.baths]
        t_half = 0.5 * recurrence_time(baths)
        horizon = math.floor(t_half / s.dt + 1e-9) * s.dt
    return Schedule(kind=s.kind, dt=s.dt, horizon=horizon, period=s.period, tau=s.tau,
                    ramp_time=s.ramp_time, t0=s.t0)


def build_initial_state(cfg: ScenarioConfig, h_sys: np.ndarray,
                        init: InitialStateConfig | None = None) -> np.ndarray:
    """Initial system density matrix for the system Hamiltonian ``h_sys``."""
    init = init or cfg.initial_state
    d = h_sys.shape[0]
    beta = init.beta if init.beta is not None else cfg.model.baths[0].beta
    if init.kind == "maximally_mixed":
        return np.eye(d, dtype=complex) / d
    if init.kind == "gibbs":
        return gibbs_state(h_sys, beta)
    if init.kind == "coherent":
        # Gibbs populations with the coherence between the two lowest levels
        # set to a fraction of its positivity bound, in the energy eigenbasis
        w, v = np.linalg.eigh(h_sys)
        p = np.exp(-beta * (w - w.min()))
        p /= p.sum()
        r = np.diag(p).astype(complex)
        c = init.coherence * math.sqrt(p[0] * p[1])
        r[0, 1] = r[1, 0] = c
        return v @ r @ v.conj().T
    if init.kind == "pure":
        if init.vector is None or len(init.vector) != d:
            raise ValueError("pure initial state needs a vector of the system dimension")
        return pure_state([complex(x) for x in init.vector])
    if init.kind == "matrix":
        if init.matrix is None:
            raise ValueError("matrix initial state needs 'matrix'")
        return to_matrix(init.matrix, "initial_state.matrix")
    rng = np.random.default_rng(cfg.seed)
    return random_density(d, rng, init.rank)
