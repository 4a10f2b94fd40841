"""Finite system + reservoir models with time-dependent protocols.

A model is a d-level system coupled in a star geometry to free Fermi or Bose
reservoirs, each truncated to a handful of modes.  Time dependence enters
through a :class:`Schedule`, which maps physical time onto a protocol phase,
and :class:`Profile` objects, which map the phase onto control values
(drive amplitudes, coupling switches).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .operators import (
    SubsystemLayout,
    check_density,
    check_hermitian,
    embed,
    gibbs_state,
    identity,
    log_partition,
    tensor,
)

MAX_TOTAL_DIM = 4096
MAX_FERMION_MODES = 12
DEFAULT_FOCK_CUTOFF = 8


class RecurrenceWarning(UserWarning):
    """Horizon is long enough for the finite reservoirs to revive."""


# ---------------------------------------------------------------------------
# protocols


@dataclass(frozen=True)
class Profile:
    """Piecewise control value as a function of protocol phase.

    ``knots`` are (phase, value) pairs.  Between knots the value follows a
    half-cosine (C1 at the knots) or is held constant (``interp="step"``).
    Outside the knot range the end values are held.
    """

    knots: tuple[tuple[float, float], ...]
    interp: str = "cosine"

    def __post_init__(self):
        knots = tuple((float(x), float(y)) for x, y in self.knots)
        if not knots:
            raise ValueError("profile needs at least one knot")
        xs = [x for x, _ in knots]
        if any(b < a for a, b in zip(xs, xs[1:])):
            raise ValueError("profile knots must be sorted by phase")
        if self.interp not in ("cosine", "step"):
            raise ValueError(f"unknown interpolation {self.interp!r}")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def constant(cls, value: float) -> "Profile":
        return cls(((0.0, value),))

    def __call__(self, x: float) -> float:
        knots = self.knots
        if x <= knots[0][0]:
            return knots[0][1]
        if x >= knots[-1][0]:
            return knots[-1][1]
        for (x0, y0), (x1, y1) in zip(knots, knots[1:]):
            if x0 <= x < x1:
                if self.interp == "step" or x1 == x0:
                    return y0
                u = (x - x0) / (x1 - x0)
                return y0 + (y1 - y0) * 0.5 * (1.0 - math.cos(math.pi * u))
        return knots[-1][1]  # pragma: no cover

    @property
    def is_constant(self) -> bool:
        return len({y for _, y in self.knots}) == 1


SCHEDULE_KINDS = ("static", "ramp", "periodic", "quasi_static")


@dataclass(frozen=True)
class Schedule:
    """Map from physical time to protocol phase, plus the time grid.

    static        phase = 0
    ramp          phase = clip(t / ramp_time, 0, 1)
    periodic      phase = (t mod period) / period
    quasi_static  phase = s = t / tau
    """

    kind: str = "static"
    dt: float = 0.05
    horizon: float = 10.0
    period: float | None = None
    tau: float | None = None
    ramp_time: float | None = None
    t0: float = 0.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.kind == "periodic" and not (self.period and self.period > 0):
            raise ValueError("periodic schedule needs a positive period")
        if self.kind == "quasi_static" and not (self.tau and self.tau > 0):
            raise ValueError("quasi-static schedule needs a positive tau")
        if self.kind == "ramp" and not (self.ramp_time and self.ramp_time > 0):
            raise ValueError("ramp schedule needs a positive ramp_time")

    def phase(self, t: float) -> float:
        if self.kind == "static":
            return 0.0
        if self.kind == "ramp":
            return min(max(t / self.ramp_time, 0.0), 1.0)
        if self.kind == "periodic":
            return math.fmod(t, self.period) / self.period % 1.0
        return t / self.tau

    def phase_rate(self) -> float:
        """d(phase)/dt where the phase is not clamped."""
        if self.kind == "static":
            return 0.0
        if self.kind == "ramp":
            return 1.0 / self.ramp_time
        if self.kind == "periodic":
            return 1.0 / self.period
        return 1.0 / self.tau

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def grid(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


# ---------------------------------------------------------------------------
# system, reservoirs, couplings


@dataclass(frozen=True)
class SystemSpec:
    """H_0^S(phase) = base + sum_m profile_m(phase) * op_m."""

    base: np.ndarray
    drives: tuple[tuple[np.ndarray, Profile], ...] = ()
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        base = check_hermitian(self.base, "system Hamiltonian")
        d = base.shape[0]
        if not 2 <= d <= 16:
            raise ValueError(f"system dimension must be in [2, 16], got {d}")
        drives = []
        for op, prof in self.drives:
            op = check_hermitian(op, "drive operator")
            if op.shape != base.shape:
                raise ValueError("drive operator shape differs from the base Hamiltonian")
            drives.append((op, prof))
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "drives", tuple(drives))

    @property
    def d(self) -> int:
        return self.base.shape[0]

    def h0(self, phase: float) -> np.ndarray:
        h = self.base.copy()
        for op, prof in self.drives:
            h = h + prof(phase) * op
        return h

    @property
    def is_static(self) -> bool:
        return all(p.is_constant for _, p in self.drives)


@dataclass(frozen=True)
class SpectralDensity:
    """J(w) = alpha * w**power * exp(-w / omega_c) on (omega_min, omega_max]."""

    alpha: float = 1.0
    power: float = 1.0
    omega_c: float = math.inf
    omega_min: float = 0.0
    omega_max: float = math.inf

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        inside = (w > self.omega_min) & (w <= self.omega_max)
        wp = np.where(inside, w, 1.0)
        out = self.alpha * wp**self.power * np.exp(-wp / self.omega_c)
        out = np.where(inside, out, 0.0)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class ReservoirSpec:
    statistics: str
    mode_freqs: tuple[float, ...]
    mode_couplings: tuple[float, ...]
    beta: float
    fock_cutoff: int = DEFAULT_FOCK_CUTOFF
    spectral_density: SpectralDensity | None = None

    def __post_init__(self):
        if self.statistics not in ("fermionic", "bosonic"):
            raise ValueError(f"unknown statistics {self.statistics!r}")
        freqs = tuple(float(w) for w in self.mode_freqs)
        gs = tuple(float(g) for g in self.mode_couplings)
        if len(freqs) != len(gs):
            raise ValueError("mode_freqs and mode_couplings differ in length")
        if any(w <= 0 for w in freqs):
            raise ValueError("mode frequencies must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.fock_cutoff < 1:
            raise ValueError("fock_cutoff must be positive")
        object.__setattr__(self, "mode_freqs", freqs)
        object.__setattr__(self, "mode_couplings", gs)

    @property
    def n_modes(self) -> int:
        return len(self.mode_freqs)

    @property
    def local_dim(self) -> int:
        return 2 if self.statistics == "fermionic" else self.fock_cutoff

    @property
    def dim(self) -> int:
        return self.local_dim ** self.n_modes

    @property
    def temperature(self) -> float:
        return 1.0 / self.beta


def discretize_bath(
    spectral_density: Callable[[float], float],
    n_modes: int,
    omega_max: float,
    scheme: str = "linear",
    *,
    omega_min: float = 0.0,
    statistics: str = "fermionic",
    beta: float = 1.0,
    fock_cutoff: int = DEFAULT_FOCK_CUTOFF,
) -> ReservoirSpec:
    """Star-geometry modes with g_k = sqrt(J(w_k) * weight_k).

    ``linear`` is the midpoint rule on (omega_min, omega_max]; ``gauss`` uses
    Gauss-Legendre nodes on the same interval.
    """
    if n_modes < 1:
        raise ValueError("need at least one mode")
    if not omega_max > omega_min >= 0:
        raise ValueError("need 0 <= omega_min < omega_max")
    width = omega_max - omega_min
    if scheme == "linear":
        nodes = omega_min + width * (np.arange(n_modes) + 0.5) / n_modes
        weights = np.full(n_modes, width / n_modes)
    elif scheme == "gauss":
        x, wq = np.polynomial.legendre.leggauss(n_modes)
        nodes = omega_min + 0.5 * width * (x + 1.0)
        weights = 0.5 * width * wq
    else:
        raise ValueError(f"unknown discretization scheme {scheme!r}")
    j = np.array([float(spectral_density(w)) for w in nodes])
    if np.any(j < 0):
        raise ValueError("spectral density is negative on the discretization grid")
    g = np.sqrt(j * weights)
    sd = spectral_density if isinstance(spectral_density, SpectralDensity) else None
    return ReservoirSpec(
        statistics=statistics,
        mode_freqs=tuple(nodes),
        mode_couplings=tuple(g),
        beta=beta,
        fock_cutoff=fock_cutoff,
        spectral_density=sd,
    )


_LOWER = np.array([[0, 1], [0, 0]], dtype=complex)
_PARITY = np.diag([1.0, -1.0]).astype(complex)


def build_fermionic_ops(spec: ReservoirSpec) -> tuple[np.ndarray, list[np.ndarray]]:
    """Jordan-Wigner modes local to the bath.

    Returns H_bath = sum_k w_k c_k^dag c_k and the fields c_k + c_k^dag.
    Basis per mode: (empty, occupied).
    """
    if spec.statistics != "fermionic":
        raise ValueError("reservoir is not fermionic")
    n = spec.n_modes
    if n > MAX_FERMION_MODES:
        raise ValueError(f"{n} fermionic modes exceed the limit of {MAX_FERMION_MODES}")
    cs = fermion_annihilators(n)
    h = sum(w * c.conj().T @ c for w, c in zip(spec.mode_freqs, cs))
    return np.asarray(h, dtype=complex), [c + c.conj().T for c in cs]


def fermion_annihilators(n: int) -> list[np.ndarray]:
    out = []
    for k in range(n):
        factors = [_PARITY] * k + [_LOWER] + [identity(2)] * (n - k - 1)
        out.append(tensor(*factors))
    return out


def boson_annihilator(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff)), 1).astype(complex)


def build_bosonic_ops(spec: ReservoirSpec) -> tuple[np.ndarray, list[np.ndarray]]:
    """Truncated Fock modes; returns H_bath and the fields a_k + a_k^dag."""
    if spec.statistics != "bosonic":
        raise ValueError("reservoir is not bosonic")
    if spec.dim > MAX_TOTAL_DIM:
        raise ValueError(f"bath dimension {spec.dim} exceeds {MAX_TOTAL_DIM}")
    n, m = spec.n_modes, spec.fock_cutoff
    a = boson_annihilator(m)
    layout = SubsystemLayout((m,) * n)
    ops = [embed(a, k, layout) for k in range(n)]
    h = sum(w * op.conj().T @ op for w, op in zip(spec.mode_freqs, ops))
    return np.asarray(h, dtype=complex), [op + op.conj().T for op in ops]


def build_bath_ops(spec: ReservoirSpec) -> tuple[np.ndarray, list[np.ndarray]]:
    if spec.statistics == "fermionic":
        return build_fermionic_ops(spec)
    return build_bosonic_ops(spec)


@dataclass(frozen=True)
class CouplingSpec:
    """lam * switching(phase) * system_op (x) sum_k g_k field_k on one bath."""

    system_op: np.ndarray
    bath_index: int
    lam: float
    switching: Profile = field(default_factory=lambda: Profile.constant(1.0))

    def __post_init__(self):
        object.__setattr__(self, "system_op", check_hermitian(self.system_op, "coupling operator"))
        vals = [y for _, y in self.switching.knots]
        if min(vals) < 0 or max(vals) > 1:
            raise ValueError("switching factor must stay within [0, 1]")


# ---------------------------------------------------------------------------
# composite model


def recurrence_time(baths: Sequence[ReservoirSpec]) -> float:
    """2 pi / (smallest spacing of mode frequencies), the revival scale of a finite comb."""
    gaps = []
    for b in baths:
        freqs = np.unique(np.round(b.mode_freqs, 12))
        if len(freqs) == 1:
            gaps.append(freqs[0])
        else:
            gaps.append(np.diff(freqs).min())
    if not gaps:
        return math.inf
    return 2 * math.pi / min(gaps)


@dataclass(frozen=True, eq=False)
class CompositeModel:
    """System (x) reservoirs with H(t) = H_0^S(t) + I(t) + sum_i H^{R_i}.

    Embedded operators are precomputed on the full space; the bath
    Hamiltonians are static.
    """

    system: SystemSpec
    baths: tuple[ReservoirSpec, ...]
    couplings: tuple[CouplingSpec, ...]
    schedule: Schedule
    layout: SubsystemLayout
    h_res_local: tuple[np.ndarray, ...]
    h_res: tuple[np.ndarray, ...]
    x_ops: tuple[np.ndarray, ...]
    t_rec: float

    @property
    def d(self) -> int:
        return self.system.d

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    @property
    def betas(self) -> tuple[float, ...]:
        return tuple(b.beta for b in self.baths)

    def with_schedule(self, schedule: Schedule) -> "CompositeModel":
        return replace(self, schedule=schedule)

    def phase(self, t: float) -> float:
        return self.schedule.phase(t)

    def h0_local(self, t: float) -> np.ndarray:
        return self.system.h0(self.phase(t))

    def interaction(self, t: float) -> np.ndarray:
        ph = self.phase(t)
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for c, x in zip(self.couplings, self.x_ops):
            s = c.lam * c.switching(ph)
            if s != 0.0:
                out += s * x
        return out

    def h_sys(self, t: float) -> np.ndarray:
        """H^S(t) = H_0^S(t) (x) 1 + I(t) on the full space."""
        return self._embed_sys(self.h0_local(t)) + self.interaction(t)

    def h_sys_dot(self, t: float, h: float) -> np.ndarray:
        """Central difference of H^S(.) with step h."""
        if self.schedule.kind == "static":
            return np.zeros((self.dim, self.dim), dtype=complex)
        return (self.h_sys(t + h) - self.h_sys(t - h)) / (2 * h)

    def h_res_total(self) -> np.ndarray:
        if not self.h_res:
            return np.zeros((self.dim, self.dim), dtype=complex)
        return sum(self.h_res)

    def hamiltonian(self, t: float) -> np.ndarray:
        return self.h_sys(t) + self._h_res_sum

    @property
    def _h_res_sum(self) -> np.ndarray:
        cached = self.__dict__.get("_hres_cache")
        if cached is None:
            cached = self.h_res_total()
            object.__setattr__(self, "_hres_cache", cached)
        return cached

    def _embed_sys(self, op: np.ndarray) -> np.ndarray:
        return embed(op, 0, self.layout)

    def is_static(self) -> bool:
        return self.schedule.kind == "static" or (
            self.system.is_static and all(c.switching.is_constant for c in self.couplings)
        )

    def check_horizon(self, horizon: float) -> str | None:
        if horizon > 0.5 * self.t_rec:
            msg = (
                f"horizon {horizon:.3g} exceeds half the reservoir recurrence time "
                f"{self.t_rec:.3g}; finite baths will revive"
            )
            warnings.warn(msg, RecurrenceWarning, stacklevel=3)
            return msg
        return None


def assemble(
    system: SystemSpec,
    baths: Sequence[ReservoirSpec],
    couplings: Sequence[CouplingSpec],
    schedule: Schedule,
) -> CompositeModel:
    baths = tuple(baths)
    couplings = tuple(couplings)
    layout = SubsystemLayout((system.d,) + tuple(b.dim for b in baths))
    if layout.total_dim > MAX_TOTAL_DIM:
        raise ValueError(f"total dimension {layout.total_dim} exceeds {MAX_TOTAL_DIM}")
    for c in couplings:
        if not 0 <= c.bath_index < len(baths):
            raise ValueError(f"coupling refers to bath {c.bath_index}, only {len(baths)} defined")
        if c.system_op.shape[0] != system.d:
            raise ValueError("coupling operator dimension differs from the system dimension")
    h_local, fields = [], []
    for b in baths:
        h, fs = build_bath_ops(b)
        h_local.append(h)
        if b.n_modes:
            fields.append(sum(g * f for g, f in zip(b.mode_couplings, fs)))
        else:
            fields.append(np.zeros_like(h))
    h_res = tuple(embed(h, i + 1, layout) for i, h in enumerate(h_local))
    x_ops = []
    for c in couplings:
        i = c.bath_index
        mid = int(np.prod(layout.factor_dims[1:i + 1]))
        right = int(np.prod(layout.factor_dims[i + 2:]))
        x_ops.append(tensor(c.system_op, identity(mid), fields[i], identity(right)))
    model = CompositeModel(
        system=system,
        baths=baths,
        couplings=couplings,
        schedule=schedule,
        layout=layout,
        h_res_local=tuple(h_local),
        h_res=h_res,
        x_ops=tuple(x_ops),
        t_rec=recurrence_time(baths),
    )
    model.check_horizon(schedule.horizon)
    return model


def initial_product_state(model: CompositeModel, sys_state) -> np.ndarray:
    """sys_state (x) Gibbs(H^{R_1}, beta_1) (x) ..."""
    sys_state = check_density(sys_state, "system state")
    if sys_state.shape[0] != model.d:
        raise ValueError(f"system state has dim {sys_state.shape[0]}, model has d = {model.d}")
    factors = [sys_state] + [gibbs_state(h, b.beta) for h, b in zip(model.h_res_local, model.baths)]
    return tensor(*factors)


def reference_state(model: CompositeModel) -> np.ndarray:
    """(1/d) 1^S (x) Gibbs states of the reservoirs."""
    return initial_product_state(model, identity(model.d) / model.d)


def log_reference_state(model: CompositeModel) -> np.ndarray:
    """log of the reference state, -log d - sum_i (beta_i H^{R_i} + log Z^{R_i})."""
    out = -math.log(model.d) * identity(model.dim)
    for h_loc, h, b in zip(model.h_res_local, model.h_res, model.baths):
        out = out - b.beta * h - log_partition(h_loc, b.beta) * identity(model.dim)
    return out
