"""Runnable scenario suites with named pass/fail verdicts.

E1  return to equilibrium (exact finite bath and weak-coupling channels)
E2  isothermal theorem sweep and quasi-static decoupling (zeroth law)
E3  two-bath non-equilibrium steady state, Clausius direction
E4  periodically driven two-stroke-pair heat engine, Carnot bound

Every time series carries the first-law and entropy-sign checks as
verdicts, so a scenario only passes if its thermodynamic bookkeeping does.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .config import (
    ScenarioConfig,
    build_initial_state,
    build_model,
    config_to_dict,
    to_matrix,
)
from .dynamics import propagate
from .models import (
    CompositeModel,
    CouplingSpec,
    Profile,
    ReservoirSpec,
    Schedule,
    SystemSpec,
    assemble,
    initial_product_state,
)
from .operators import (
    embed,
    expectation,
    gibbs_state,
    log_partition,
    partial_trace,
    trace_distance,
    von_neumann_entropy,
)
from .spectral import (
    FloquetError,
    SpectralReport,
    choi_matrix,
    fgr_resonance_check,
    floquet_map,
    liouvillean_spectrum,
    model_generator,
    period_step_maps,
    vec,
    weak_coupling_run,
)
from .thermo import (
    CycleReport,
    ThermoEvaluator,
    ThermoRecord,
    entropy_production_rate,
    make_cycle_report,
    reversible_entropy,
    tail_currents,
)

# Named invariants that verdicts refer to.
INVARIANTS = {
    "first_law": "dU/dt = sum_i dQ_i + dA pointwise, relative to max(|U|, 1)",
    "entropy_sign": "relative entropy to the reference state is nonpositive",
    "entropy_rate": "dS/dt from finite differences equals sum_i beta_i dQ_i",
    "fgr_condition": "one level shift on the real axis, all others strictly damped",
    "return_to_equilibrium": "reduced state approaches the reduced coupled Gibbs state",
    "relaxation_rate": "observed decay rate matches 1/tau_R from the level shifts",
    "isothermal_theorem": "quasi-static states track instantaneous equilibrium",
    "reversible_entropy": "Delta S approaches Delta S_rev in the quasi-static limit",
    "free_energy": "Delta A approaches Delta F in the quasi-static limit",
    "zeroth_law_decoupling": "quasi-static decoupling leaves the system Gibbs at the bath temperature",
    "bath_return": "the reservoir returns to its initial equilibrium state",
    "steady_current_balance": "steady heat currents sum to zero",
    "clausius": "heat flows from the hot reservoir into the system",
    "entropy_production": "entropy production rate is nonnegative",
    "strict_entropy_production": "entropy production is strictly positive off equilibrium at weak coupling",
    "golden_rule_current": "steady current matches the two-level golden-rule formula",
    "fixed_point": "weak-coupling generator or monodromy fixed point residual",
    "cycle_energy": "Delta U vanishes over a cycle of a periodic state",
    "cycle_first_law": "Delta U = sum_i Delta Q_i + Delta A over a cycle",
    "clausius_inequality": "sum_i Delta Q_i / T_i <= 0 over a cycle",
    "carnot": "engine efficiency does not exceed the Carnot bound",
    "carnot_identity": "eta_C - eta = T_2 Delta E / Delta Q_1",
    "floquet_convergence": "cycle-to-cycle distance decays with the subdominant monodromy eigenvalue",
    "thomson_planck": "no positive work output from a cycle at one temperature",
    "liouvillean_spectrum": "spectrum of ad_H equals the eigenvalue differences of H",
    "davies_gibbs": "single-bath Davies stationary state is the Gibbs state",
    "trace_preservation": "generator annihilates the trace functional",
    "complete_positivity": "Choi matrix of the step map is positive semidefinite",
}


class RecurrenceGuardError(ValueError):
    """The requested horizon reaches past half the finite-bath recurrence time."""


@dataclass
class Verdict:
    name: str
    passed: bool
    value: float | None
    tolerance: float | None
    invariant: str
    applicable: bool = True
    detail: str = ""

    def __post_init__(self):
        if self.invariant not in INVARIANTS:
            raise KeyError(f"unknown invariant {self.invariant!r}")
        self.passed = bool(self.passed)
        if self.value is not None:
            self.value = float(self.value)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "applicable": self.applicable,
            "value": self.value,
            "tolerance": self.tolerance,
            "invariant": self.invariant,
            "detail": self.detail,
        }


@dataclass
class Series:
    """A ThermoRecord stream plus aligned diagnostic columns."""

    records: list[ThermoRecord]
    n_baths: int
    diagnostics: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])


@dataclass
class ScenarioResult:
    scenario: str
    parameters: dict
    series: dict[str, Series] = field(default_factory=dict)
    verdicts: dict[str, Verdict] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    spectral: SpectralReport | None = None
    cycles: list[CycleReport] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values() if v.applicable)

    def add(self, v: Verdict) -> None:
        if v.name in self.verdicts:
            raise KeyError(f"duplicate verdict {v.name!r}")
        self.verdicts[v.name] = v

    def failed(self) -> list[Verdict]:
        return [v for v in self.verdicts.values() if v.applicable and not v.passed]


# ---------------------------------------------------------------------------
# shared checks


def first_law_error(records: Sequence[ThermoRecord]) -> float:
    if not records:
        return 0.0
    return max(abs(r.first_law_residual) / max(abs(r.U_S), 1.0) for r in records)


def max_relative_entropy(records: Sequence[ThermoRecord]) -> float:
    vals = [r.S_rel for r in records if not math.isnan(r.S_rel)]
    return max(vals) if vals else -math.inf


def entropy_rate_mismatch(records: Sequence[ThermoRecord]) -> float:
    """max |sum_i beta_i dQ_i - dS/dt| with dS/dt from a five-point stencil of S_rel."""
    if len(records) < 5:
        raise ValueError("need at least five records")
    t = np.array([r.t for r in records])
    h = np.diff(t)
    if not np.allclose(h, h[0], rtol=1e-9, atol=1e-12):
        raise ValueError("entropy-rate check needs a uniform grid")
    s = np.array([r.S_rel for r in records])
    fd = (s[:-4] - 8 * s[1:-3] + 8 * s[3:-1] - s[4:]) / (12 * h[0])
    rate = np.array([r.dS_dt for r in records])[2:-2]
    return float(np.max(np.abs(fd - rate)))


def add_series(result: ScenarioResult, name: str, series: Series, cfg: ScenarioConfig) -> None:
    tol = cfg.numerics.tolerances
    result.series[name] = series
    fl = first_law_error(series.records)
    result.add(Verdict(f"{name}.first_law", fl < tol.first_law, fl, tol.first_law, "first_law"))
    s = max_relative_entropy(series.records)
    bound = tol.entropy_sign * cfg.numerics.k_B
    result.add(Verdict(f"{name}.entropy_sign", s <= bound, s, bound, "entropy_sign"))


def fit_decay_rate(t: np.ndarray, y: np.ndarray, floor: float = 1e-12) -> float:
    """Least-squares slope of -log y over the points with y above ``floor``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = y > floor
    if mask.sum() < 3:
        return 0.0
    slope = np.polyfit(t[mask], np.log(y[mask]), 1)[0]
    return float(-slope)


def _guard(model: CompositeModel, horizon: float) -> None:
    if horizon > 0.5 * model.t_rec + 1e-9:
        raise RecurrenceGuardError(
            f"horizon {horizon:.4g} exceeds half the recurrence time {model.t_rec:.4g}"
        )


def _require_baths(model: CompositeModel, n: int) -> None:
    if len(model.baths) != n:
        raise ValueError(f"scenario needs exactly {n} reservoir(s), got {len(model.baths)}")


def _parameters(cfg: ScenarioConfig, model: CompositeModel, **extra) -> dict:
    p = config_to_dict(cfg)
    p["derived"] = {"dim": model.dim, "t_rec": model.t_rec, **extra}
    return p


def _exact_series(model: CompositeModel, rho0: np.ndarray, k_B: float, stride: int,
                  extra=None) -> tuple[Series, list]:
    """Exact run with thermodynamic records and optional per-point diagnostics."""
    ev = ThermoEvaluator(model, k_B=k_B)
    extra = extra or {}

    def rec(t, rho):
        return ev(t, rho), {k: f(t, rho) for k, f in extra.items()}

    traj = propagate(model, None, rho0, stride=stride, recorder=rec)
    records = [r for r, _ in traj.records]
    diags = {k: np.array([d[k] for _, d in traj.records]) for k in extra}
    return Series(records, len(model.baths), diags), traj.states


def _weak_series(model, rho0, sched, cfg, target=None) -> tuple[Series, object]:
    run = weak_coupling_run(model, rho0, sched, k_B=cfg.numerics.k_B,
                            lamb_shift=cfg.numerics.lamb_shift)
    diags = {}
    if target is not None:
        diags["trace_distance"] = np.array([trace_distance(r, target) for r in run.states])
    return Series(run.records, len(model.baths), diags), run


def _frozen_schedule(sched: Schedule, t_end: float, horizon: float, dt: float) -> Schedule:
    """Grid starting at t_end on which the protocol phase stays at its final value."""
    n = max(1, int(math.ceil(horizon / dt - 1e-9)))
    if sched.kind == "static":
        return Schedule(kind="static", dt=dt, horizon=n * dt, t0=t_end)
    if sched.kind == "ramp" and t_end >= sched.ramp_time:
        return replace(sched, dt=dt, horizon=n * dt, t0=t_end)
    raise ValueError("weak-coupling relaxation needs a static Hamiltonian after the ramp")


# ---------------------------------------------------------------------------
# E1


def run_return_to_equilibrium(cfg: ScenarioConfig) -> ScenarioResult:
    tol = cfg.numerics.tolerances
    k_B = cfg.numerics.k_B
    model = build_model(cfg)
    _require_baths(model, 1)
    sched = model.schedule
    _guard(model, sched.horizon)
    t_end = sched.t0 + sched.horizon
    beta = model.baths[0].beta
    result = ScenarioResult("E1", _parameters(cfg, model, horizon=sched.horizon))

    report = fgr_resonance_check(model, t_end, lamb_shift=True)
    result.spectral = report
    result.add(Verdict("fgr_condition", report.fgr_condition_met, report.tau_R, report.tol, "fgr_condition"))

    target = partial_trace(gibbs_state(model.hamiltonian(t_end), beta), [0], model.layout)
    rho_s0 = build_initial_state(cfg, model.h0_local(sched.t0))
    rho0 = initial_product_state(model, rho_s0)
    layout = model.layout
    series, _ = _exact_series(
        model, rho0, k_B, cfg.numerics.stride,
        {"trace_distance": lambda t, r: trace_distance(partial_trace(r, [0], layout), target)},
    )
    add_series(result, "exact", series, cfg)
    t = series.times
    d = series.diagnostics["trace_distance"]
    n = len(d)
    tail = d[int(math.floor((1 - cfg.numerics.tail_fraction) * (n - 1))):]
    plateau = float(tail.min())
    result.add(Verdict("exact.plateau", plateau < tol.rte_plateau, plateau, tol.rte_plateau,
                       "return_to_equilibrium"))
    q = max(1, n // 4)
    rate = fit_decay_rate(t, d)
    trend = rate > 0 and d[-q:].mean() < d[:q].mean()
    result.add(Verdict("exact.monotone_trend", trend, rate, 0.0, "return_to_equilibrium",
                       detail="fitted log-slope negative and final quarter below first quarter"))
    tau_r = report.tau_R
    rel = abs(rate * tau_r - 1.0) if tau_r else math.inf
    result.add(Verdict("exact.relaxation_rate", rel <= tol.rate_rel, rel, tol.rate_rel, "relaxation_rate",
                       detail=f"fitted rate {rate:.6g}, 1/tau_R {1 / tau_r if tau_r else math.nan:.6g}"))
    mismatch = entropy_rate_mismatch(series.records)
    result.add(Verdict("exact.entropy_rate", mismatch < tol.entropy_rate, mismatch, tol.entropy_rate,
                       "entropy_rate"))
    result.summary.update(D0=float(d[0]), plateau=plateau, fitted_rate=rate, tau_R=tau_r,
                          t_rec=model.t_rec, horizon=sched.horizon)

    if cfg.params.weak:
        h_s = model.system.h0(model.phase(t_end))
        weak_target = gibbs_state(h_s, beta)
        horizon = cfg.params.weak_horizon or 40.0 * (tau_r or 1.0)
        wsched = _frozen_schedule(sched, t_end, horizon, cfg.numerics.weak_dt)
        wseries, _ = _weak_series(model, rho_s0, wsched, cfg, weak_target)
        add_series(result, "weak", wseries, cfg)
        wd = wseries.diagnostics["trace_distance"]
        result.add(Verdict("weak.equilibrium", wd[-1] < tol.weak_equilibrium, wd[-1],
                           tol.weak_equilibrium, "return_to_equilibrium"))
        wrate = fit_decay_rate(wseries.times, wd, floor=1e-10)
        wrel = abs(wrate * tau_r - 1.0) if tau_r else math.inf
        result.add(Verdict("weak.relaxation_rate", wrel <= tol.rate_rel, wrel, tol.rate_rel,
                           "relaxation_rate"))
        result.summary.update(weak_final_distance=float(wd[-1]), weak_rate=wrate)
    return result


# ---------------------------------------------------------------------------
# E2


def minimum_gap(system: SystemSpec, n_grid: int = 201) -> float:
    """Smallest level spacing of H_0^S(s) over s in [0, 1]."""
    gaps = []
    for s in np.linspace(0.0, 1.0, n_grid):
        w = np.linalg.eigvalsh(system.h0(s))
        gaps.append(np.min(np.diff(w)))
    return float(min(gaps))


def run_isothermal_sweep(cfg: ScenarioConfig, tau_list: Sequence[float] | None = None) -> ScenarioResult:
    tol = cfg.numerics.tolerances
    k_B = cfg.numerics.k_B
    params = cfg.params
    model = build_model(cfg, Schedule(kind="static", dt=cfg.schedule.dt, horizon=0.0))
    _require_baths(model, 1)
    beta = model.baths[0].beta
    gap = minimum_gap(model.system)
    if tau_list is None:
        tau_list = [f / gap for f in params.tau_factors]
    tau_list = sorted(float(x) for x in tau_list)
    if params.channel == "exact":
        _guard(model, tau_list[-1])
    observables = [to_matrix(o, "observable") for o in params.observables]
    result = ScenarioResult("E2", _parameters(cfg, model, gap=gap, tau_list=tau_list))
    h0, h1 = model.system.h0(0.0), model.system.h0(1.0)
    rows = []
    for tau in tau_list:
        n = max(1, int(round(tau / cfg.schedule.dt)))
        sched = Schedule(kind="quasi_static", dt=tau / n, horizon=tau, tau=tau)
        if params.channel == "weak":
            row = _isothermal_weak(model, cfg, sched, observables, beta, k_B)
        else:
            row = _isothermal_exact(model, cfg, sched, observables, beta, k_B)
        series = row.pop("series")
        add_series(result, f"tau_{len(rows):02d}", series, cfg)
        rows.append({"tau": tau, "tau_gap": tau * gap, **row})
    deltas = np.array([r["Delta"] for r in rows])
    ds_gap = np.array([abs(r["dS"] - r["dS_rev"]) for r in rows])
    da_gap = np.array([abs(r["dA"] - r["dF"]) for r in rows])
    slack = 1.0 + tol.monotone_slack
    mono = bool(np.all(deltas[1:] <= slack * deltas[:-1]))
    with np.errstate(divide="ignore", invalid="ignore"):
        worst = float(np.nanmax(deltas[1:] / deltas[:-1])) if len(rows) > 1 and deltas[:-1].all() else 0.0
    result.add(Verdict("isothermal.monotone", mono, worst, slack, "isothermal_theorem"))
    ratio = float(deltas[-1] / deltas[0]) if deltas[0] > 0 else math.inf
    result.add(Verdict("isothermal.ratio", ratio < tol.isothermal_ratio, ratio, tol.isothermal_ratio,
                       "isothermal_theorem"))
    shrink_s = float(ds_gap[0] / ds_gap[-1]) if ds_gap[-1] > 0 else math.inf
    shrink_a = float(da_gap[0] / da_gap[-1]) if da_gap[-1] > 0 else math.inf
    result.add(Verdict("isothermal.entropy_shrink", shrink_s >= tol.shrink_factor, shrink_s,
                       tol.shrink_factor, "reversible_entropy"))
    result.add(Verdict("isothermal.work_shrink", shrink_a >= tol.shrink_factor, shrink_a,
                       tol.shrink_factor, "free_energy"))
    result.summary["sweep"] = rows
    result.summary["gap"] = gap
    result.summary["F_change"] = -(log_partition(h1, beta) - log_partition(h0, beta)) / beta

    if params.decoupling.enabled:
        dec = run_decoupling_zeroth_law(cfg, gap=gap)
        for name, s in dec.series.items():
            result.series[f"decoupling_{name}"] = s
        for v in dec.verdicts.values():
            result.add(replace(v, name=f"decoupling.{v.name}"))
        result.summary["decoupling"] = dec.summary
        result.warnings.extend(dec.warnings)
    return result


def _isothermal_weak(model, cfg, sched, observables, beta, k_B) -> dict:
    rho0 = build_initial_state(cfg, model.system.h0(0.0))
    series, run = _weak_series(model, rho0, sched, cfg)
    delta = 0.0
    for t, r in zip(run.times, run.states):
        g = gibbs_state(model.system.h0(sched.phase(t)), beta)
        for a in observables:
            delta = max(delta, abs(expectation(r, a) - expectation(g, a)))
    g0 = gibbs_state(model.system.h0(0.0), beta)
    g1 = gibbs_state(model.system.h0(1.0), beta)
    f = lambda h: -log_partition(h, beta) / (k_B * beta)  # noqa: E731
    return {
        "series": series,
        "Delta": delta,
        "dS": series.records[-1].S_rel - series.records[0].S_rel,
        "dS_rev": k_B * (von_neumann_entropy(g1) - von_neumann_entropy(g0)),
        "dA": float(run.step_work.sum()),
        "dF": f(model.system.h0(1.0)) - f(model.system.h0(0.0)),
    }


def _isothermal_exact(model, cfg, sched, observables, beta, k_B) -> dict:
    m = model.with_schedule(sched)
    rho_s0 = build_initial_state(cfg, m.h0_local(0.0))
    rho0 = initial_product_state(m, rho_s0)
    obs = {f"o{i}": embed(a, 0, m.layout) for i, a in enumerate(observables)}
    ev = ThermoEvaluator(m, k_B=k_B)
    traj = propagate(m, None, rho0, obs, stride=cfg.numerics.stride, recorder=ev, equilibrium_beta=beta)
    delta = max(float(np.max(np.abs(traj.observables[k] - traj.equilibrium[k]))) for k in obs)
    recs = traj.records
    t = traj.times
    r0 = reversible_entropy(m, t[0], beta, k_B)
    r1 = reversible_entropy(m, t[-1], beta, k_B)
    return {
        "series": Series(recs, len(m.baths)),
        "Delta": delta,
        "dS": recs[-1].S_rel - recs[0].S_rel,
        "dS_rev": r1.S_rev - r0.S_rev,
        "dA": float(np.trapezoid([r.dA for r in recs], t)),
        "dF": r1.F - r0.F,
    }


def _decoupling_model(model: CompositeModel, schedule: Schedule) -> CompositeModel:
    """Static system at s = 0 with every coupling switched from 1 to 0 over s in [0, 1]."""
    system = SystemSpec(base=model.system.h0(0.0))
    off = Profile(((0.0, 1.0), (1.0, 0.0)))
    couplings = [CouplingSpec(c.system_op, c.bath_index, c.lam, off) for c in model.couplings]
    return assemble(system, model.baths, couplings, schedule)


def run_decoupling_zeroth_law(cfg: ScenarioConfig, gap: float | None = None) -> ScenarioResult:
    """Equilibrate for t_eq at full coupling, then switch off over tau (tau = 0: sudden)."""
    tol = cfg.numerics.tolerances
    dp = cfg.params.decoupling if cfg.scenario == "E2" else None
    if dp is None:
        raise ValueError("decoupling runs are configured in an E2 params block")
    base = build_model(cfg, Schedule(kind="static", dt=cfg.schedule.dt, horizon=0.0))
    _require_baths(base, 1)
    beta = base.baths[0].beta
    gap = gap if gap is not None else minimum_gap(base.system)
    static = _decoupling_model(base, Schedule(kind="static", dt=cfg.schedule.dt, horizon=0.0))
    h_s = static.system.h0(0.0)
    target = gibbs_state(h_s, beta)
    report = fgr_resonance_check(static, 0.0, lamb_shift=False)
    tau_r = report.tau_R or 1.0
    t_eq = dp.t_eq if dp.t_eq is not None else 4.0 * tau_r
    rho_s0 = build_initial_state(cfg, h_s, dp.initial_state)
    result = ScenarioResult("E2", {"t_eq": t_eq, "gap": gap})
    dt = cfg.numerics.weak_dt
    rows = []
    for f in sorted(dp.tau_factors):
        tau = f / gap
        n_eq = int(round(t_eq / dt))
        if tau == 0.0:
            sched = Schedule(kind="static", dt=dt, horizon=n_eq * dt)
        else:
            n_tau = max(1, int(round(tau / dt)))
            sched = Schedule(kind="quasi_static", dt=dt, horizon=(n_eq + n_tau) * dt, tau=n_tau * dt,
                             t0=-n_eq * dt)
        run = weak_coupling_run(static, rho_s0, sched, k_B=cfg.numerics.k_B,
                                lamb_shift=cfg.numerics.lamb_shift, record=False)
        rows.append({"tau": tau, "distance": trace_distance(run.final_state, target)})
    dist = np.array([r["distance"] for r in rows])
    slack = 1.0 + tol.monotone_slack
    mono = bool(np.all(dist[1:] <= slack * dist[:-1] + 1e-14))
    result.add(Verdict("weak.monotone", mono, None, slack, "zeroth_law_decoupling",
                       detail="final distance nonincreasing in tau"))
    result.add(Verdict("weak.final", dist[-1] < tol.decouple, dist[-1], tol.decouple, "zeroth_law_decoupling"))
    result.summary["weak"] = rows

    if dp.exact:
        t_eq_x = dp.exact_t_eq if dp.exact_t_eq is not None else 0.2 * base.t_rec
        tau_x = dp.exact_tau if dp.exact_tau is not None else 0.25 * base.t_rec
        h = cfg.schedule.dt
        n_eq, n_tau = int(round(t_eq_x / h)), max(1, int(round(tau_x / h)))
        sched = Schedule(kind="quasi_static", dt=h, horizon=(n_eq + n_tau) * h, tau=n_tau * h, t0=-n_eq * h)
        _guard(base, sched.horizon)
        m = _decoupling_model(base, sched)
        # the exact run starts from the uncoupled equilibrium product state
        rho0 = initial_product_state(m, target)
        series, states = _exact_series(m, rho0, cfg.numerics.k_B, cfg.numerics.stride)
        add_series(result, "exact", series, cfg)
        final = states[-1]
        ds = trace_distance(partial_trace(final, [0], m.layout), target)
        result.add(Verdict("exact.system", ds < tol.decouple, ds, tol.decouple, "zeroth_law_decoupling"))
        for i, (b, hr) in enumerate(zip(m.baths, m.h_res_local)):
            dr = trace_distance(partial_trace(final, [i + 1], m.layout), gibbs_state(hr, b.beta))
            bound = tol.bath_slack / b.n_modes
            result.add(Verdict(f"exact.bath_{i + 1}", dr < bound, dr, bound, "bath_return",
                               detail="slack bath_slack / n_modes"))
        result.summary["exact"] = {"t_eq": n_eq * h, "tau": n_tau * h, "system_distance": ds}
    return result


# ---------------------------------------------------------------------------
# E3


def golden_rule_currents(h_sys: np.ndarray, couplings: Sequence[tuple[np.ndarray, ReservoirSpec]]) -> np.ndarray:
    """Steady heat currents of a two-level system from rate balance.

    Each bath i has down/up rates gamma = |<g|A_i|e>|^2 G_i(+-eps) built from
    the continuum spectral density; p_e = sum up / sum (up + down) and
    P_i = eps (up_i p_g - down_i p_e).
    """
    if h_sys.shape != (2, 2):
        raise ValueError("golden-rule oracle is for two-level systems")
    w, v = np.linalg.eigh(h_sys)
    eps = float(w[1] - w[0])
    up, down = [], []
    for a, bath in couplings:
        m2 = abs((v[:, 0].conj() @ a @ v[:, 1])) ** 2
        j = float(bath.spectral_density(eps))
        x = bath.beta * eps
        if bath.statistics == "fermionic":
            n = 1.0 / (math.exp(x) + 1.0)
            emit = 1.0 - n
        else:
            n = 1.0 / math.expm1(x)
            emit = 1.0 + n
        down.append(2 * math.pi * m2 * j * emit)
        up.append(2 * math.pi * m2 * j * n)
    up, down = np.array(up), np.array(down)
    p_e = up.sum() / (up.sum() + down.sum())
    return eps * (up * (1 - p_e) - down * p_e)


def run_ness_two_baths(cfg: ScenarioConfig) -> ScenarioResult:
    tol = cfg.numerics.tolerances
    k_B = cfg.numerics.k_B
    model = build_model(cfg)
    _require_baths(model, 2)
    b1, b2 = model.baths
    if b1.beta > b2.beta:
        raise ValueError("reservoir 1 must be the hotter one (beta_1 <= beta_2)")
    sched = model.schedule
    _guard(model, sched.horizon)
    t_end = sched.t0 + sched.horizon
    result = ScenarioResult("E3", _parameters(cfg, model, horizon=sched.horizon))
    report = fgr_resonance_check(model, t_end, lamb_shift=True)
    result.spectral = report

    h_s = model.system.h0(model.phase(t_end))
    rho_s0 = build_initial_state(cfg, model.h0_local(sched.t0))
    rho0 = initial_product_state(model, rho_s0)
    series, _ = _exact_series(model, rho0, k_B, cfg.numerics.stride)
    add_series(result, "exact", series, cfg)
    window = cfg.numerics.tail_fraction * sched.horizon
    p = tail_currents(series.records, window)
    e_rate, e_std = entropy_production_rate(series.records, window)
    rel_sum = abs(p.sum()) / abs(p[0]) if p[0] != 0 else math.inf
    result.add(Verdict("exact.current_balance", rel_sum < tol.current_sum_rel, rel_sum, tol.current_sum_rel,
                       "steady_current_balance", detail="|P1 + P2| / |P1| over the tail window"))
    result.add(Verdict("exact.clausius", p[0] >= -tol.sign, p[0], -tol.sign, "clausius"))
    result.add(Verdict("exact.entropy_production", e_rate >= -tol.sign, e_rate, -tol.sign,
                       "entropy_production"))
    mismatch = entropy_rate_mismatch(series.records)
    result.add(Verdict("exact.entropy_rate", mismatch < tol.entropy_rate, mismatch, tol.entropy_rate,
                       "entropy_rate"))
    result.summary.update(tail_currents=p.tolist(), tail_entropy_production=e_rate,
                          tail_entropy_production_std=e_std, window=window)

    oracle = None
    if model.d == 2:
        pairs = [(c.lam * c.switching(model.phase(t_end)) * c.system_op, model.baths[c.bath_index])
                 for c in model.couplings]
        per_bath = [np.zeros((2, 2), dtype=complex) for _ in model.baths]
        for (a, b), c in zip(pairs, model.couplings):
            per_bath[c.bath_index] = per_bath[c.bath_index] + a
        oracle = golden_rule_currents(h_s, list(zip(per_bath, model.baths)))
        result.summary["golden_rule_currents"] = oracle.tolist()
        rel = abs(p[0] - oracle[0]) / abs(oracle[0]) if oracle[0] else math.inf
        result.add(Verdict("exact.golden_rule", rel <= tol.oracle_rel, rel, tol.oracle_rel,
                           "golden_rule_current"))

    if cfg.params.weak:
        gen = model_generator(model, t_end, lamb_shift=cfg.numerics.lamb_shift)
        ness = gen.stationary_state()
        resid = float(np.linalg.norm(gen.matrix @ vec(ness)))
        result.add(Verdict("weak.fixed_point", resid < tol.floquet_residual, resid, tol.floquet_residual,
                           "fixed_point"))
        pw = np.array(gen.heat_currents(ness))
        e_weak = -k_B * float(np.dot(gen.betas, pw))
        strict = b1.beta < b2.beta
        result.add(Verdict("weak.strict_entropy_production", e_weak > 0, e_weak, 0.0,
                           "strict_entropy_production", applicable=strict,
                           detail="" if strict else "equal temperatures"))
        result.add(Verdict("weak.entropy_production", e_weak >= -tol.sign, e_weak, -tol.sign,
                           "entropy_production"))
        result.add(Verdict("weak.clausius", pw[0] >= -tol.sign, pw[0], -tol.sign, "clausius"))
        if oracle is not None:
            rel = abs(pw[0] - oracle[0]) / abs(oracle[0]) if oracle[0] else abs(pw[0])
            result.add(Verdict("weak.golden_rule", rel <= tol.oracle_rel, rel, tol.oracle_rel,
                               "golden_rule_current"))
        horizon = cfg.params.weak_horizon or 40.0 * (report.tau_R or 1.0)
        wsched = _frozen_schedule(sched, t_end, horizon, cfg.numerics.weak_dt)
        wseries, _ = _weak_series(model, rho_s0, wsched, cfg, ness)
        add_series(result, "weak", wseries, cfg)
        result.summary.update(weak_currents=pw.tolist(), weak_entropy_production=e_weak,
                              weak_final_distance=float(wseries.diagnostics["trace_distance"][-1]))
    return result


# ---------------------------------------------------------------------------
# E4


def cycle_reports(run, period_steps: int, temperatures: Sequence[float]) -> list[CycleReport]:
    """One report per completed cycle from the exact step bookkeeping of a weak run."""
    n_cycles = (len(run.times) - 1) // period_steps
    out = []
    for c in range(n_cycles):
        du, dq, da = run.window_balance(c * period_steps, (c + 1) * period_steps)
        out.append(make_cycle_report(c + 1, du, dq, da, temperatures))
    return out


def _late_cycle_verdicts(result: ScenarioResult, prefix: str, late: list[CycleReport], tol) -> None:
    du = max(abs(c.dU) for c in late)
    result.add(Verdict(f"{prefix}.cycle_energy", du < tol.cycle_energy, du, tol.cycle_energy, "cycle_energy"))
    fl = max(abs(c.dU - sum(c.dQ) - c.dA) for c in late)
    result.add(Verdict(f"{prefix}.cycle_first_law", fl < tol.first_law, fl, tol.first_law, "cycle_first_law"))
    de = min(c.dE for c in late)
    result.add(Verdict(f"{prefix}.entropy_production", de >= -tol.sign, de, -tol.sign, "entropy_production"))
    cl = max(c.clausius_sum for c in late)
    result.add(Verdict(f"{prefix}.clausius_inequality", cl <= tol.sign, cl, tol.sign, "clausius_inequality"))


def run_heat_engine(cfg: ScenarioConfig) -> ScenarioResult:
    tol = cfg.numerics.tolerances
    k_B = cfg.numerics.k_B
    params = cfg.params
    if cfg.schedule.kind != "periodic" or not cfg.schedule.period:
        raise ValueError("heat engine needs a periodic schedule")
    period = cfg.schedule.period
    dt = cfg.numerics.weak_dt
    k = int(round(period / dt))
    if not math.isclose(k * dt, period, rel_tol=1e-9):
        raise ValueError("period must be an integer multiple of numerics.weak_dt")
    sched = Schedule(kind="periodic", dt=dt, horizon=params.n_cycles * period, period=period)
    model = build_model(cfg, Schedule(kind="static", dt=dt, horizon=0.0))
    model = model.with_schedule(sched)
    _require_baths(model, 2)
    if model.baths[0].beta > model.baths[1].beta:
        raise ValueError("reservoir 1 must be the hotter one (beta_1 <= beta_2)")
    temps = [1.0 / (k_B * b.beta) for b in model.baths]
    result = ScenarioResult("E4", _parameters(cfg, model, period_steps=k, temperatures=temps))

    rho_s0 = build_initial_state(cfg, model.system.h0(0.0))
    lamb = cfg.numerics.lamb_shift
    floq = floquet_map(period_step_maps(model, sched, lamb))
    result.add(Verdict("floquet.residual", floq.residual < tol.floquet_residual, floq.residual,
                       tol.floquet_residual, "fixed_point"))
    run = weak_coupling_run(model, rho_s0, sched, k_B=k_B, lamb_shift=lamb)
    dist = np.array([trace_distance(run.states[c * k], floq.periodic_state)
                     for c in range(params.n_cycles + 1)])
    add_series(result, "weak", Series(run.records, 2, {
        "periodic_distance": np.array([trace_distance(s, floq.periodic_state)
                                       for s in run.states])}), cfg)
    cycles = cycle_reports(run, k, temps)
    result.cycles = cycles
    late = cycles[-params.late_cycles:]
    _late_cycle_verdicts(result, "engine", late, tol)

    # geometric convergence: successive distance ratios bounded by the subdominant eigenvalue
    bound = floq.subdominant * (1.0 + tol.convergence_slack)
    ratios = [dist[i + 1] / dist[i] for i in range(len(dist) - 1) if dist[i] > 1e-10 and dist[i + 1] > 1e-13]
    worst = max(ratios) if ratios else 0.0
    result.add(Verdict("floquet.convergence", worst <= bound, worst, bound, "floquet_convergence",
                       applicable=bool(ratios)))

    engines = [c for c in late if c.engine]
    is_engine = bool(engines) and len(engines) == len(late)
    t_cold = min(temps)
    if is_engine:
        excess = max(c.eta - c.eta_carnot for c in engines)
        ident = max(abs((c.eta_carnot - c.eta) - t_cold * c.dE / c.dQ[c.hot_index]) for c in engines)
    else:
        excess = ident = None
    note = "" if is_engine else "not an engine at these parameters"
    result.add(Verdict("engine.carnot", excess is None or excess <= tol.carnot, excess, tol.carnot, "carnot",
                       applicable=is_engine, detail=note))
    result.add(Verdict("engine.carnot_identity", ident is None or ident < tol.identity, ident, tol.identity,
                       "carnot_identity", applicable=is_engine, detail=note))
    result.summary.update(
        engine_mode=is_engine,
        eta=late[-1].eta,
        eta_carnot=late[-1].eta_carnot,
        work_output=late[-1].work_output,
        subdominant=floq.subdominant,
        floquet_residual=floq.residual,
        cycle_distances=dist.tolist(),
    )

    if params.single_bath_check:
        beta_eq = params.single_bath_beta or model.baths[0].beta
        baths = tuple(replace(b, beta=beta_eq) for b in model.baths)
        eq_model = assemble(model.system, baths, model.couplings, Schedule(
            kind="static", dt=dt, horizon=0.0)).with_schedule(sched)
        eq_run = weak_coupling_run(eq_model, rho_s0, sched, k_B=k_B, lamb_shift=lamb)
        add_series(result, "single_bath", Series(eq_run.records, 2), cfg)
        t_eq = 1.0 / (k_B * beta_eq)
        eq_cycles = cycle_reports(eq_run, k, [t_eq, t_eq])
        eq_late = eq_cycles[-params.late_cycles:]
        _late_cycle_verdicts(result, "single_bath", eq_late, tol)
        w_out = max(c.work_output for c in eq_late)
        result.add(Verdict("single_bath.thomson_planck", w_out <= tol.sign, w_out, tol.sign, "thomson_planck",
                           detail="work output -Delta A over late cycles"))
        result.summary["single_bath"] = {"beta": beta_eq, "work_output": w_out,
                                         "cycles": [c.as_dict() for c in eq_late]}
    return result


# ---------------------------------------------------------------------------
# spectrum


def run_spectrum(cfg: ScenarioConfig) -> ScenarioResult:
    tol = cfg.numerics.tolerances
    model = build_model(cfg)
    sched = model.schedule
    t = getattr(cfg.params, "t", None)
    t = t if t is not None else sched.t0 + sched.horizon
    result = ScenarioResult("spectrum", _parameters(cfg, model, t=t))
    report = fgr_resonance_check(model, t, lamb_shift=True)
    result.spectral = report
    result.add(Verdict("fgr_condition", report.fgr_condition_met, report.tau_R, report.tol, "fgr_condition"))
    if getattr(cfg.params, "liouvillean", True) and model.dim <= 8:
        lv = liouvillean_spectrum(model, t)
        w = np.linalg.eigvalsh(model.hamiltonian(t))
        diffs = np.sort((w[:, None] - w[None, :]).ravel())
        err = float(np.max(np.abs(np.sort(lv.eigenvalues) - diffs)))
        result.add(Verdict("liouvillean_eigdiff", err < tol.eigdiff, err, tol.eigdiff, "liouvillean_spectrum"))
        result.summary["liouvillean_kernel_dim"] = lv.kernel_dim
    gen = model_generator(model, t, lamb_shift=cfg.numerics.lamb_shift)
    d = gen.d
    tp = float(np.max(np.abs(vec(np.eye(d)).conj() @ gen.matrix)))
    result.add(Verdict("davies.trace_preservation", tp < tol.gibbs, tp, tol.gibbs, "trace_preservation"))
    choi = choi_matrix(expm(gen.matrix * cfg.schedule.dt))
    lo = float(np.linalg.eigvalsh(0.5 * (choi + choi.conj().T)).min())
    result.add(Verdict("davies.complete_positivity", lo >= -tol.complete_positivity, lo, -tol.complete_positivity,
                       "complete_positivity"))
    betas = {b.beta for b in model.baths}
    if len(betas) == 1:
        beta = betas.pop()
        try:
            g = float(np.max(np.abs(gen.stationary_state() - gibbs_state(gen.h_sys, beta))))
            note = ""
        except FloquetError:
            g, note = math.inf, "stationary state is not unique"
        result.add(Verdict("davies.gibbs", g < tol.gibbs, g, tol.gibbs, "davies_gibbs", detail=note))
    result.summary["rates"] = [[(float(w), float(r)) for w, r in rs] for rs in gen.rates]
    return result


RUNNERS = {
    "E1": run_return_to_equilibrium,
    "E2": run_isothermal_sweep,
    "E3": run_ness_two_baths,
    "E4": run_heat_engine,
    "spectrum": run_spectrum,
}


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    return RUNNERS[cfg.scenario](cfg)
