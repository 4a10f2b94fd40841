"""Unitary Liouville-von Neumann evolution of the composite density matrix.

The integrator is the exponential midpoint rule (second-order Magnus):
each step conjugates with exp(-i H(t + dt/2) dt), so trace, positivity and
the spectrum of the state are preserved to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .models import CompositeModel, Schedule
from .operators import as_operator, embed, expectation, expm_unitary, gibbs_state

Recorder = Callable[[float, np.ndarray], object]


@dataclass
class Trajectory:
    times: np.ndarray
    state_times: np.ndarray
    states: list[np.ndarray]
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    records: list = field(default_factory=list)
    equilibrium: dict[str, np.ndarray] = field(default_factory=dict)
    warning: str | None = None
    model: CompositeModel | None = None

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def step(rho: np.ndarray, model: CompositeModel, t: float, dt: float) -> np.ndarray:
    """One exponential-midpoint step of the Liouville equation."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = expm_unitary(model.hamiltonian(t + 0.5 * dt), dt)
    return u @ rho @ u.conj().T


class _Stepper:
    """Midpoint propagator that reuses U while H(t + dt/2) is unchanged."""

    def __init__(self, model: CompositeModel, dt: float):
        self.model = model
        self.dt = dt
        self._h = None
        self._u = None

    def __call__(self, rho: np.ndarray, t: float) -> np.ndarray:
        h = self.model.hamiltonian(t + 0.5 * self.dt)
        if self._h is None or not np.array_equal(h, self._h):
            self._h = h
            self._u = expm_unitary(h, self.dt)
        u = self._u
        out = u @ rho @ u.conj().T
        return 0.5 * (out + out.conj().T)


def propagate(
    model: CompositeModel,
    sched: Schedule | None,
    rho0: np.ndarray,
    observables: Mapping[str, np.ndarray] | None = None,
    *,
    stride: int = 10,
    recorder: Recorder | None = None,
    equilibrium_beta: float | None = None,
) -> Trajectory:
    """Integrate over the schedule grid.

    Observables (full-space operators) and ``recorder(t, rho)`` are evaluated
    at every grid point; states are stored every ``stride`` steps and at the
    end.  With ``equilibrium_beta`` the instantaneous Gibbs expectations of
    the observables are recorded as well.
    """
    if sched is not None and sched != model.schedule:
        model = model.with_schedule(sched)
    sched = model.schedule
    rho = as_operator(rho0)
    if rho.shape[0] != model.dim:
        raise ValueError(f"state dim {rho.shape[0]} does not match model dim {model.dim}")
    observables = dict(observables or {})
    warning = model.check_horizon(sched.horizon)
    times = sched.grid()
    n = len(times)
    obs = {k: np.empty(n) for k in observables}
    eq = {k: np.empty(n) for k in observables} if equilibrium_beta is not None else {}
    states, state_times, records = [], [], []
    stepper = _Stepper(model, sched.dt)
    for k, t in enumerate(times):
        if k:
            rho = stepper(rho, times[k - 1])
        for name, a in observables.items():
            obs[name][k] = expectation(rho, a)
        if eq:
            g = gibbs_state(model.hamiltonian(t), equilibrium_beta)
            for name, a in observables.items():
                eq[name][k] = expectation(g, a)
        if recorder is not None:
            records.append(recorder(t, rho))
        if k % stride == 0 or k == n - 1:
            states.append(rho)
            state_times.append(t)
    return Trajectory(
        times=times,
        state_times=np.asarray(state_times),
        states=states,
        observables=obs,
        records=records,
        equilibrium=eq,
        warning=warning,
        model=model,
    )


def quasi_static_propagate(
    model: CompositeModel,
    tau: float,
    s_range: tuple[float, float],
    rho0: np.ndarray,
    observables: Mapping[str, np.ndarray] | None = None,
    *,
    beta: float | None = None,
    dt: float | None = None,
    stride: int = 10,
    recorder: Recorder | None = None,
) -> Trajectory:
    """Drive with rescaled time s = t / tau over ``s_range``.

    Also records the instantaneous equilibrium expectations Tr(Gibbs(H(tau s), beta) A).
    A model whose own schedule is static is propagated unchanged.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    s0, s1 = s_range
    dt = dt or model.schedule.dt
    if beta is None:
        if len(model.baths) != 1:
            raise ValueError("beta must be given unless the model has exactly one bath")
        beta = model.baths[0].beta
    if model.schedule.kind == "static":
        sched = replace(model.schedule, dt=dt, horizon=tau * (s1 - s0), t0=0.0)
    else:
        sched = Schedule(kind="quasi_static", dt=dt, horizon=tau * (s1 - s0), tau=tau, t0=tau * s0)
    return propagate(
        model, sched, rho0, observables, stride=stride, recorder=recorder, equilibrium_beta=beta
    )


def heisenberg_expectation(traj: Trajectory, a: np.ndarray, slot: int | None = None) -> np.ndarray:
    """Tr(rho_t A) at the stored states; ``slot`` embeds a local operator first."""
    if slot is not None:
        a = embed(a, slot, traj.model.layout)
    a = as_operator(a)
    if traj.states and a.shape != traj.states[0].shape:
        raise ValueError("observable dimension does not match the trajectory")
    return np.array([expectation(r, a) for r in traj.states])


def heisenberg_evolve(model: CompositeModel, a: np.ndarray, t_end: float, dt: float) -> np.ndarray:
    """Heisenberg-picture A(t) = U(t,0)^dag A U(t,0) on the midpoint grid.

    The full propagator is accumulated then applied once; used to check the
    Schroedinger/Heisenberg duality.
    """
    n = int(round(t_end / dt))
    u_total = np.eye(model.dim, dtype=complex)
    for k in range(n):
        u_total = expm_unitary(model.hamiltonian((k + 0.5) * dt), dt) @ u_total
    return u_total.conj().T @ a @ u_total
