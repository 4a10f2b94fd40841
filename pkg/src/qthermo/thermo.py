"""Internal energy, heat, work and entropy along trajectories.

Sign conventions: a positive heat current dQ_i means energy flowing from
reservoir i into the system; dA = Tr(rho dH^S/dt) is the power delivered to
the system by the external drive.  Entropies are in units of k_B.

The internal energy includes the interaction term, U^S = Tr(rho (H_0^S + I)),
which is what makes the first-law identity close exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .models import CompositeModel, Schedule, log_reference_state
from .operators import (
    EIG_FLOOR,
    embed,
    expectation,
    expm_unitary,
    gibbs_state,
    log_partition,
)

ETA_THRESHOLD = 1e-10
IMAG_FAULT = 1e-10


class ThermoFault(RuntimeError):
    pass


@dataclass(frozen=True)
class ThermoRecord:
    t: float
    U_S: float
    dQ: tuple[float, ...]
    dA: float
    S_rel: float
    dS_dt: float
    first_law_residual: float
    U_S_bare: float = math.nan
    dU_dt: float = math.nan


@dataclass(frozen=True)
class CycleReport:
    index: int
    dU: float
    dQ: tuple[float, ...]
    dA: float
    dE: float
    clausius_sum: float
    eta: float | None
    eta_carnot: float | None
    hot_index: int
    engine: bool

    @property
    def work_output(self) -> float:
        """Work delivered to the environment over the cycle, -dA."""
        return -self.dA

    def as_dict(self) -> dict:
        return {
            "index": self.index,
            "dU": self.dU,
            "dQ": list(self.dQ),
            "dA": self.dA,
            "work_output": self.work_output,
            "dE": self.dE,
            "clausius_sum": self.clausius_sum,
            "eta": self.eta,
            "eta_carnot": self.eta_carnot,
            "hot_index": self.hot_index,
            "engine": self.engine,
        }


# ---------------------------------------------------------------------------
# pointwise functionals on the composite space


def internal_energy(rho: np.ndarray, model: CompositeModel, t: float) -> float:
    return expectation(rho, model.h_sys(t))


def bare_internal_energy(rho: np.ndarray, model: CompositeModel, t: float) -> float:
    """Tr(rho H_0^S(t)), the diagnostic convention without the interaction."""
    return expectation(rho, embed(model.h0_local(t), 0, model.layout))


def heat_current(rho: np.ndarray, model: CompositeModel, t: float, i: int) -> float:
    """i Tr(rho [H^{R_i}, I(t)])."""
    c = model.h_res[i] @ model.interaction(t)
    val = 1j * np.einsum("ij,ji->", rho, c - c.conj().T)
    if abs(val.imag) > IMAG_FAULT * max(1.0, abs(val.real)):
        raise ThermoFault(f"heat current has imaginary part {val.imag:.3e}")
    return float(val.real)


def work_rate(rho: np.ndarray, model: CompositeModel, t: float, dt: float | None = None) -> float:
    """Tr(rho dH^S/dt), derivative by central difference with step dt/10."""
    dt = dt if dt is not None else model.schedule.dt
    return expectation(rho, model.h_sys_dot(t, dt / 10))


def relative_entropy(rho: np.ndarray, model: CompositeModel, k_B: float = 1.0,
                     floor: float = EIG_FLOOR) -> float:
    """-k_B Tr(rho (log rho - log P^R)); nonpositive by Klein's inequality."""
    w = np.linalg.eigvalsh(rho)
    w = np.maximum(w, floor)
    s_self = float(np.sum(w * np.log(w)))
    return -k_B * (s_self - expectation(rho, log_reference_state(model)))


class ThermoEvaluator:
    """Cached evaluation of :class:`ThermoRecord` for one model.

    Commutators i[H^{R_i}, X_j] of the bath Hamiltonians with the static
    coupling operators are built once; per-point work is then traces only,
    except for the Heisenberg derivative of U^S which is formed from the full
    commutator [H(t), H^S(t)] as an independent route to the first law.
    """

    def __init__(self, model: CompositeModel, k_B: float = 1.0, dt: float | None = None,
                 entropy: bool = True):
        self.model = model
        self.k_B = k_B
        self.dt = dt if dt is not None else model.schedule.dt
        self.entropy = entropy
        n = len(model.baths)
        self._cur = [[None] * len(model.couplings) for _ in range(n)]
        for j, c in enumerate(model.couplings):
            i = c.bath_index
            m = model.h_res[i] @ model.x_ops[j]
            self._cur[i][j] = 1j * (m - m.conj().T)
        self._log_ref = log_reference_state(model) if entropy else None

    def heat_currents(self, rho: np.ndarray, t: float) -> tuple[float, ...]:
        ph = self.model.phase(t)
        out = []
        for row in self._cur:
            q = 0.0
            for j, cur in enumerate(row):
                if cur is None:
                    continue
                c = self.model.couplings[j]
                s = c.lam * c.switching(ph)
                if s:
                    q += s * expectation(rho, cur)
            out.append(q)
        return tuple(out)

    def relative_entropy(self, rho: np.ndarray) -> float:
        w = np.maximum(np.linalg.eigvalsh(rho), EIG_FLOOR)
        return -self.k_B * (float(np.sum(w * np.log(w))) - expectation(rho, self._log_ref))

    def __call__(self, t: float, rho: np.ndarray) -> ThermoRecord:
        m = self.model
        hs = m.h_sys(t)
        h = hs + m._h_res_sum
        hdot = m.h_sys_dot(t, self.dt / 10)
        u = expectation(rho, hs)
        dq = self.heat_currents(rho, t)
        da = expectation(rho, hdot)
        comm = h @ hs
        du = float((1j * np.einsum("ij,ji->", rho, comm - comm.conj().T)).real) + da
        s_rel = self.relative_entropy(rho) if self.entropy else math.nan
        ds = entropy_rate_from_currents(dq, m.betas, self.k_B)
        return ThermoRecord(
            t=float(t),
            U_S=u,
            dQ=dq,
            dA=da,
            S_rel=s_rel,
            dS_dt=ds,
            first_law_residual=du - sum(dq) - da,
            U_S_bare=bare_internal_energy(rho, m, t),
            dU_dt=du,
        )


def entropy_rate_from_currents(dq: Sequence[float], betas: Sequence[float], k_B: float = 1.0) -> float:
    """sum_i dQ_i / T_i with T_i = 1 / (k_B beta_i)."""
    return float(sum(k_B * b * q for b, q in zip(betas, dq)))


def entropy_rate(records: Sequence[ThermoRecord]) -> np.ndarray:
    return np.array([r.dS_dt for r in records])


def shift_state(model: CompositeModel, rho: np.ndarray, t: float, h: float, substeps: int = 1) -> np.ndarray:
    """Propagate rho from t to t + h (h may be negative) with midpoint steps."""
    dt = h / substeps
    for k in range(substeps):
        u = expm_unitary(model.hamiltonian(t + (k + 0.5) * dt), dt)
        rho = u @ rho @ u.conj().T
    return rho


def entropy_rate_fd(model: CompositeModel, rho: np.ndarray, t: float, h: float,
                    k_B: float = 1.0) -> float:
    """Five-point central difference of the relative entropy around t."""
    ev = ThermoEvaluator(model, k_B=k_B)
    s = {}
    for k in (-2, -1, 1, 2):
        s[k] = ev.relative_entropy(shift_state(model, rho, t, k * h, substeps=abs(k)))
    return (s[-2] - 8 * s[-1] + 8 * s[1] - s[2]) / (12 * h)


def tail_window(records: Sequence[ThermoRecord], fraction: float = 0.25) -> list[ThermoRecord]:
    if not 0 < fraction <= 1:
        raise ValueError("tail fraction must be in (0, 1]")
    t = np.array([r.t for r in records])
    start = t[-1] - fraction * (t[-1] - t[0])
    return [r for r in records if r.t >= start - 1e-12]


def time_average(t: np.ndarray, y: np.ndarray) -> float:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < 2:
        return float(y[0])
    return float(np.trapezoid(y, t) / (t[-1] - t[0]))


def entropy_production_rate(records: Sequence[ThermoRecord], window: float) -> tuple[float, float]:
    """-(time average of dS/dt) over the trailing ``window``; returns (E, std)."""
    t = np.array([r.t for r in records])
    if not records or window > t[-1] - t[0] + 1e-12:
        raise ValueError("window longer than the trajectory")
    mask = t >= t[-1] - window - 1e-12
    ds = np.array([r.dS_dt for r in records])[mask]
    return -time_average(t[mask], ds), float(np.std(ds))


def tail_currents(records: Sequence[ThermoRecord], window: float) -> np.ndarray:
    t = np.array([r.t for r in records])
    if not records or window > t[-1] - t[0] + 1e-12:
        raise ValueError("window longer than the trajectory")
    mask = t >= t[-1] - window - 1e-12
    dq = np.array([r.dQ for r in records])[mask]
    return np.array([time_average(t[mask], dq[:, i]) for i in range(dq.shape[1])])


@dataclass(frozen=True)
class ReversibleQuantities:
    U_rev: float
    F: float
    S_rev: float
    log_Z: float
    log_Z_R: float


def reversible_entropy(model: CompositeModel, t: float, beta: float, k_B: float = 1.0) -> ReversibleQuantities:
    """Equilibrium entropy and free energy from the instantaneous Gibbs state of H(t).

    F = -k_B T log(Z_beta(t) / Z^R),  S_rev = (U_rev - F) / T - k_B log d.
    """
    h = model.hamiltonian(t)
    log_z = log_partition(h, beta)
    log_zr = sum(log_partition(hr, beta) for hr in model.h_res_local)
    g = gibbs_state(h, beta)
    temp = 1.0 / (k_B * beta)
    u_rev = expectation(g, model.h_sys(t))
    f = -k_B * temp * (log_z - log_zr)
    s_rev = (u_rev - f) / temp - k_B * math.log(model.d)
    return ReversibleQuantities(U_rev=u_rev, F=f, S_rev=s_rev, log_Z=log_z, log_Z_R=log_zr)


# ---------------------------------------------------------------------------
# cycles


def carnot_bound(t_hot: float, t_cold: float) -> float:
    if not t_hot >= t_cold > 0:
        raise ValueError("need T1 >= T2 > 0")
    return 1.0 - t_cold / t_hot


def hottest_order(temperatures: Sequence[float]) -> list[int]:
    """Reservoir indices sorted from hottest to coldest (stable)."""
    return sorted(range(len(temperatures)), key=lambda i: -temperatures[i])


def make_cycle_report(index: int, dU: float, dQ: Sequence[float], dA: float,
                      temperatures: Sequence[float], threshold: float = ETA_THRESHOLD) -> CycleReport:
    dQ = tuple(float(q) for q in dQ)
    clausius = float(sum(q / T for q, T in zip(dQ, temperatures)))
    order = hottest_order(temperatures)
    hot = order[0]
    eta_c = carnot_bound(temperatures[hot], temperatures[order[-1]]) if len(order) > 1 else 0.0
    q_hot = dQ[hot] if dQ else 0.0
    eta = -dA / q_hot if q_hot > threshold else None
    engine = q_hot > threshold and -dA > threshold
    return CycleReport(
        index=index,
        dU=float(dU),
        dQ=dQ,
        dA=float(dA),
        dE=-clausius,
        clausius_sum=clausius,
        eta=eta,
        eta_carnot=eta_c,
        hot_index=hot,
        engine=engine,
    )


def cycle_aggregate(records: Sequence[ThermoRecord], sched: Schedule, n: int,
                    temperatures: Sequence[float]) -> CycleReport:
    """Per-cycle balance over [n tau*, (n + 1) tau*] by the trapezoid rule."""
    if sched.kind != "periodic":
        raise ValueError("cycle aggregates need a periodic schedule")
    tau = sched.period
    t = np.array([r.t for r in records])
    lo, hi = n * tau, (n + 1) * tau
    tol = 1e-9 * max(1.0, hi)
    mask = (t >= lo - tol) & (t <= hi + tol)
    if not mask.any() or t[mask][0] > lo + tol or t[mask][-1] < hi - tol:
        raise ValueError(f"trajectory does not cover cycle {n}")
    sel = [r for r, m in zip(records, mask) if m]
    ts = t[mask]
    dq = np.array([r.dQ for r in sel])
    dQ = [float(np.trapezoid(dq[:, i], ts)) for i in range(dq.shape[1])]
    dA = float(np.trapezoid([r.dA for r in sel], ts))
    dU = sel[-1].U_S - sel[0].U_S
    return make_cycle_report(n, dU, dQ, dA, temperatures)
