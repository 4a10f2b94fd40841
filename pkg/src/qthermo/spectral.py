"""Superoperators, second-order level shifts and weak-coupling generators.

Vectorisation is column-stacking throughout: vec(A X B) = (B^T (x) A) vec(X).
With this convention the Liouvillean ad_H acts as 1 (x) H - H^T (x) 1 and
generates d/dt vec(rho) = -i L vec(rho).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, linalg

from .models import CompositeModel, ReservoirSpec, Schedule
from .operators import (
    as_operator,
    check_density,
    check_hermitian,
    eigh,
    expectation,
    gibbs_state,
    identity,
    von_neumann_entropy,
)
from .thermo import ThermoRecord, entropy_rate_from_currents

CLUSTER_TOL = 1e-10
NEAR_DEGENERATE = 1e-8
SUPEROP_MAX_DIM = 64


class SecularityError(ValueError):
    """Bohr frequencies too close for the secular (rotating-wave) construction."""


class FloquetError(RuntimeError):
    pass


def vec(a: np.ndarray) -> np.ndarray:
    return np.asarray(a).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    d = d or int(round(math.sqrt(v.size)))
    return v.reshape((d, d), order="F")


def spre(a: np.ndarray) -> np.ndarray:
    """X -> A X."""
    return np.kron(identity(a.shape[0]), a)


def spost(b: np.ndarray) -> np.ndarray:
    """X -> X B."""
    return np.kron(b.T, identity(b.shape[0]))


def sprepost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """X -> A X B."""
    return np.kron(b.T, a)


def liouvillean(h) -> np.ndarray:
    """ad_h as a d^2 x d^2 matrix: L vec(X) = vec([h, X])."""
    h = as_operator(h)
    return spre(h) - spost(h)


def choi_matrix(superop: np.ndarray) -> np.ndarray:
    """sum_ij |i><j| (x) S(|i><j|)."""
    d = int(round(math.sqrt(superop.shape[0])))
    out = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1.0
            out += np.kron(e, unvec(superop @ vec(e), d))
    return out


# ---------------------------------------------------------------------------
# Liouvillean spectra


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    kernel_dim: int
    level_shifts: dict[float, np.ndarray] = field(default_factory=dict)
    lamb_shifts: dict[float, np.ndarray] = field(default_factory=dict)
    fgr_condition_met: bool | None = None
    tau_R: float | None = None
    eta: float | None = None
    tol: float = 1e-9

    def as_dict(self) -> dict:
        def cplx(a):
            return [[float(np.real(z)), float(np.imag(z))] for z in np.ravel(a)]

        return {
            "eigenvalues": [float(np.real(z)) for z in np.ravel(self.eigenvalues)],
            "kernel_dim": self.kernel_dim,
            "level_shifts": {repr(k): cplx(v) for k, v in self.level_shifts.items()},
            "fgr_condition_met": self.fgr_condition_met,
            "tau_R": self.tau_R,
            "eta": self.eta,
            "tol": self.tol,
        }


def liouvillean_spectrum(model: CompositeModel, t: float = 0.0, tol: float = 1e-9) -> SpectralReport:
    """Eigenvalues of ad_{H(t)} on the composite space and its kernel dimension."""
    if model.dim > SUPEROP_MAX_DIM:
        raise ValueError(f"total dimension {model.dim} exceeds {SUPEROP_MAX_DIM} for the superoperator")
    lv = liouvillean(model.hamiltonian(t))
    ev = np.linalg.eigvalsh(lv)
    return SpectralReport(eigenvalues=ev, kernel_dim=int(np.sum(np.abs(ev) < tol)), tol=tol)


# ---------------------------------------------------------------------------
# bath correlation spectra


def _occupation(statistics: str, x: float) -> float:
    """Bose or Fermi occupation at beta * omega = x > 0."""
    if statistics == "bosonic":
        return 1.0 / math.expm1(x) if x < 700 else 0.0
    return 1.0 / (math.exp(x) + 1.0) if x < 700 else 0.0


def spectral_function(bath: ReservoirSpec, nu: float) -> float:
    """G(nu) = 2 pi x (emission/absorption weighted) J(|nu|) for the field sum_k g_k (b_k + b_k^dag).

    Positive nu: the system loses energy nu to the bath.  Detailed balance
    G(-nu) = exp(-beta nu) G(nu) holds by construction.
    """
    j = bath.spectral_density
    if j is None:
        raise ValueError("continuum spectral density not available; use comb_gamma")
    beta = bath.beta
    a = abs(nu)
    if a < 1e-12:
        # nu -> 0 limit; only bosons with an Ohmic J survive
        if bath.statistics == "fermionic":
            return 2 * math.pi * 0.5 * float(j(0.0))
        w0 = 1e-9
        return 2 * math.pi * float(j(w0)) * (1.0 + _occupation("bosonic", beta * w0)) if j(w0) else 0.0
    n = _occupation(bath.statistics, beta * a)
    ja = float(j(a))
    if nu > 0:
        return 2 * math.pi * ja * (1.0 + n if bath.statistics == "bosonic" else 1.0 - n)
    return 2 * math.pi * ja * n


def _support(bath: ReservoirSpec) -> tuple[float, float]:
    j = bath.spectral_density
    lo = j.omega_min
    hi = j.omega_max
    if not math.isfinite(hi):
        hi = j.omega_c * 40.0 if math.isfinite(j.omega_c) else 1e3
    return lo, hi


def principal_value_shift(bath: ReservoirSpec, omega: float) -> float:
    """S(omega) = (1/2 pi) P int G(nu) / (omega - nu) d nu."""
    lo, hi = _support(bath)
    total = 0.0
    for a, b, sign in ((lo, hi, 1.0), (-hi, -lo, -1.0)):
        f = (lambda nu: spectral_function(bath, nu))
        if a < omega < b:
            val, _ = integrate.quad(f, a, b, weight="cauchy", wvar=omega, limit=400)
            total += -val
        else:
            val, _ = integrate.quad(lambda nu: f(nu) / (omega - nu), a, b, limit=400)
            total += val
    return total / (2 * math.pi)


def comb_gamma(bath: ReservoirSpec, omega: float, width: float | None = None) -> complex:
    """One-sided correlation transform for a discrete mode comb, Lorentzian-broadened.

    Each mode contributes w i / (omega - w_k + i width) with thermal weights.
    """
    freqs = np.asarray(bath.mode_freqs)
    g2 = np.asarray(bath.mode_couplings) ** 2
    if width is None:
        width = float(np.diff(np.sort(freqs)).mean()) if len(freqs) > 1 else 0.1 * freqs[0]
    n = np.array([_occupation(bath.statistics, bath.beta * w) for w in freqs])
    emit = g2 * (1.0 + n if bath.statistics == "bosonic" else 1.0 - n)
    absorb = g2 * n
    total = 0j
    for wk, e, a in zip(freqs, emit, absorb):
        total += e * 1j / (omega - wk + 1j * width)
        total += a * 1j / (omega + wk + 1j * width)
    return complex(total)


def gamma_transform(bath: ReservoirSpec, omega: float, lamb_shift: bool = True) -> complex:
    """Gamma(omega) = G(omega) / 2 + i S(omega): the eta -> 0+ limit of
    (1/2 pi) int G(nu) i / (omega - nu + i eta), split into half-residue
    and principal value."""
    if bath.spectral_density is None:
        return comb_gamma(bath, omega)
    re = 0.5 * spectral_function(bath, omega)
    im = principal_value_shift(bath, omega) if lamb_shift else 0.0
    return complex(re, im)


# ---------------------------------------------------------------------------
# Bohr-frequency decomposition


def _level_groups(w: np.ndarray, tol: float) -> list[np.ndarray]:
    groups, cur = [], [0]
    for k in range(1, len(w)):
        if w[k] - w[cur[0]] <= tol:
            cur.append(k)
        else:
            groups.append(np.array(cur))
            cur = [k]
    groups.append(np.array(cur))
    return groups


def bohr_decomposition(h: np.ndarray, a: np.ndarray, tol: float = CLUSTER_TOL,
                       near: float = NEAR_DEGENERATE) -> list[tuple[float, np.ndarray]]:
    """Components A(omega) = sum_{E' - E = omega} P(E) A P(E'), with sum_omega A(omega) = A."""
    w, v = eigh(h)
    scale = max(1.0, float(np.max(np.abs(w))))
    groups = _level_groups(w, tol * scale)
    energies = [float(w[g].mean()) for g in groups]
    projs = [v[:, g] @ v[:, g].conj().T for g in groups]
    comps: dict[float, np.ndarray] = {}
    keys: list[float] = []
    for i, ei in enumerate(energies):
        for j, ej in enumerate(energies):
            om = ej - ei
            blk = projs[i] @ a @ projs[j]
            key = next((k for k in keys if abs(k - om) <= tol * scale), None)
            if key is None:
                keys.append(om)
                key = om
                comps[key] = blk
            else:
                comps[key] = comps[key] + blk
    ks = sorted(keys)
    for k0, k1 in zip(ks, ks[1:]):
        if k1 - k0 < near * scale:
            raise SecularityError(
                f"Bohr frequencies {k0!r} and {k1!r} differ by {k1 - k0:.2e}; secular approximation invalid"
            )
    return [(k, comps[k]) for k in ks]


# ---------------------------------------------------------------------------
# Davies generator


@dataclass(frozen=True)
class BathCoupling:
    """Effective system operator (lam * switching already folded in) on one bath."""

    system_op: np.ndarray
    bath: ReservoirSpec


@dataclass
class WeakCouplingGenerator:
    matrix: np.ndarray
    dissipators: list[np.ndarray]
    h_sys: np.ndarray
    h_lamb: np.ndarray
    rates: list[list[tuple[float, float]]]
    betas: tuple[float, ...]

    @property
    def d(self) -> int:
        return self.h_sys.shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(rho), self.d)

    def heat_currents(self, rho: np.ndarray) -> tuple[float, ...]:
        """Tr(D_i(rho) H_S) for every bath."""
        v = vec(rho)
        ht = vec(self.h_sys.T)
        return tuple(float(np.real(ht @ (D @ v))) for D in self.dissipators)

    def stationary_state(self, tol: float = 1e-9) -> np.ndarray:
        return stationary_state(self.matrix, tol=tol)


def stationary_state(gen: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Unique null vector of a Lindblad generator as a density matrix."""
    d = int(round(math.sqrt(gen.shape[0])))
    _, s, vh = np.linalg.svd(gen)
    if len(s) > 1 and s[-2] < tol * max(1.0, s[0]):
        raise FloquetError("stationary state is not unique")
    rho = unvec(vh[-1].conj(), d)
    rho = rho / np.trace(rho)
    return 0.5 * (rho + rho.conj().T)


def _dissipator(comps: Sequence[tuple[float, np.ndarray]], gammas: Sequence[float]) -> np.ndarray:
    d = comps[0][1].shape[0]
    out = np.zeros((d * d, d * d), dtype=complex)
    for (om, a), g in zip(comps, gammas):
        if g == 0.0 or not np.any(a):
            continue
        ad = a.conj().T
        ada = ad @ a
        out += g * (sprepost(a, ad) - 0.5 * spre(ada) - 0.5 * spost(ada))
    return out


def davies_generator(h_sys, couplings: Sequence[BathCoupling], baths: Sequence[ReservoirSpec] | None = None,
                     *, lamb_shift: bool = False) -> WeakCouplingGenerator:
    """Secular weak-coupling Lindblad generator for a static system Hamiltonian.

    ``couplings`` carry the full coupling strength in their system operator.
    Several couplings to the same bath are merged into one operator (they
    share the bath field).  One dissipator is returned per bath in
    ``baths`` order (defaults to the order of first appearance).
    """
    h = check_hermitian(h_sys, "system Hamiltonian")
    d = h.shape[0]
    if baths is None:
        baths = []
        for c in couplings:
            if not any(c.bath is b for b in baths):
                baths.append(c.bath)
    baths = list(baths)
    merged = [np.zeros((d, d), dtype=complex) for _ in baths]
    for c in couplings:
        idx = next(i for i, b in enumerate(baths) if b is c.bath)
        merged[idx] = merged[idx] + as_operator(c.system_op)
    dissipators, rates = [], []
    h_lamb = np.zeros((d, d), dtype=complex)
    for b, a in zip(baths, merged):
        if not np.any(a):
            dissipators.append(np.zeros((d * d, d * d), dtype=complex))
            rates.append([])
            continue
        comps = bohr_decomposition(h, a)
        gam = [2.0 * gamma_transform(b, om, lamb_shift=False).real for om, _ in comps]
        dissipators.append(_dissipator(comps, gam))
        rates.append([(om, g) for (om, _), g in zip(comps, gam)])
        if lamb_shift:
            for om, ao in comps:
                s = gamma_transform(b, om, lamb_shift=True).imag
                h_lamb = h_lamb + s * ao.conj().T @ ao
    matrix = -1j * liouvillean(h + h_lamb) + sum(dissipators)
    return WeakCouplingGenerator(
        matrix=matrix,
        dissipators=dissipators,
        h_sys=h,
        h_lamb=h_lamb,
        rates=rates,
        betas=tuple(b.beta for b in baths),
    )


def model_couplings(model: CompositeModel, phase: float) -> list[BathCoupling]:
    out = []
    for c in model.couplings:
        s = c.lam * c.switching(phase)
        out.append(BathCoupling(system_op=s * c.system_op, bath=model.baths[c.bath_index]))
    return out


def model_generator(model: CompositeModel, t: float, lamb_shift: bool = False) -> WeakCouplingGenerator:
    """Davies generator of ``model`` frozen at time t (instantaneous H_0^S and switches)."""
    return generator_at_phase(model, model.phase(t), lamb_shift=lamb_shift)


def generator_at_phase(model: CompositeModel, phase: float, lamb_shift: bool = False) -> WeakCouplingGenerator:
    return davies_generator(model.system.h0(phase), model_couplings(model, phase), model.baths,
                            lamb_shift=lamb_shift)


# ---------------------------------------------------------------------------
# second-order level shifts


def redfield_tensor(h: np.ndarray, couplings: Sequence[BathCoupling], lamb_shift: bool = True) -> np.ndarray:
    """Non-secular Bloch-Redfield dissipative superoperator (Schroedinger picture)."""
    d = h.shape[0]
    out = np.zeros((d * d, d * d), dtype=complex)
    for c in couplings:
        if not np.any(c.system_op):
            continue
        comps = bohr_decomposition(h, as_operator(c.system_op))
        gam = [gamma_transform(c.bath, om, lamb_shift=lamb_shift) for om, _ in comps]
        for (om, a), g in zip(comps, gam):
            for (om2, a2), g2 in zip(comps, gam):
                a2d = a2.conj().T
                # Gamma(w) (A(w) X A(w')^dag - A(w')^dag A(w) X) + h.c. part
                out += g * (sprepost(a, a2d) - spre(a2d @ a))
                out += np.conj(g2) * (sprepost(a, a2d) - spost(a2d @ a))
    return out


def fgr_resonance_check(model: CompositeModel, t: float | None = None, *, tol: float = 1e-10,
                        lamb_shift: bool = True) -> SpectralReport:
    """Second-order level shifts of every eigenvalue cluster of ad_{H_0^S}.

    The perturbed Liouvillean is L0 + Lambda with -i Lambda = P_e R P_e on
    the cluster of ad_{H_0^S} at eigenvalue e.  Resonances are shifts with
    negative imaginary part; the condition holds when exactly one shift
    (the equilibrium) stays on the real axis.
    """
    if t is None:
        t = model.schedule.t0 + model.schedule.horizon
    ph = model.phase(t)
    h = model.system.h0(ph)
    couplings = model_couplings(model, ph)
    return level_shift_report(h, couplings, tol=tol, lamb_shift=lamb_shift)


def level_shift_report(h: np.ndarray, couplings: Sequence[BathCoupling], *, tol: float = 1e-10,
                       lamb_shift: bool = True) -> SpectralReport:
    h = check_hermitian(h)
    w, v = eigh(h)
    scale = max(1.0, float(np.max(np.abs(w))))
    diffs = (w[:, None] - w[None, :]).ravel(order="F")  # |a><b| at column-stacked index a + d b
    order = np.argsort(diffs)
    clusters: list[list[int]] = []
    for k in order:
        if clusters and abs(diffs[k] - diffs[clusters[-1][0]]) <= CLUSTER_TOL * scale:
            clusters[-1].append(int(k))
        else:
            clusters.append([int(k)])
    centres = [float(diffs[c].mean()) for c in clusters]
    for c0, c1 in zip(centres, centres[1:]):
        if c1 - c0 < NEAR_DEGENERATE * scale:
            raise SecularityError(
                f"Liouvillean clusters at {c0!r} and {c1!r} overlap; refine the model"
            )
    r = redfield_tensor(h, couplings, lamb_shift=lamb_shift)
    # into the eigenbasis of h: X -> V^dag X V
    u = np.kron(v.T, v.conj().T)
    r_eig = u @ r @ u.conj().T
    shifts, lambs, all_shifts = {}, {}, []
    for cen, idx in zip(centres, clusters):
        blk = r_eig[np.ix_(idx, idx)]
        lam = 1j * np.linalg.eigvals(blk)
        key = round(cen, 12)
        shifts[key] = lam
        lambs[key] = lam.real
        all_shifts.extend(lam)
    all_shifts = np.array(all_shifts)
    im = all_shifts.imag
    on_axis = np.abs(im) < tol
    met = bool(on_axis.sum() == 1 and np.all(im[~on_axis] < -tol))
    nonzero = np.abs(im[~on_axis]) if (~on_axis).any() else np.array([])
    tau_r = float(1.0 / nonzero.min()) if nonzero.size else None
    ev = np.sort(diffs)
    gaps = np.diff(np.unique(np.round(ev, 10)))
    eta = 1e-6 * float(gaps.min()) if gaps.size else None
    return SpectralReport(
        eigenvalues=ev,
        kernel_dim=int(np.sum(np.abs(ev) < 1e-9)),
        level_shifts=shifts,
        lamb_shifts=lambs,
        fgr_condition_met=met,
        tau_R=tau_r,
        eta=eta,
        tol=tol,
    )


# ---------------------------------------------------------------------------
# propagation and periodic driving


@dataclass
class SystemTrajectory:
    times: np.ndarray
    states: list[np.ndarray]


def lindblad_propagate(gen: WeakCouplingGenerator | np.ndarray, rho0: np.ndarray,
                       grid: Sequence[float]) -> SystemTrajectory:
    """rho(t) = exp(t G) rho0 on ``grid`` (exact exponentials between grid points)."""
    g = gen.matrix if isinstance(gen, WeakCouplingGenerator) else np.asarray(gen)
    grid = np.asarray(grid, dtype=float)
    d = int(round(math.sqrt(g.shape[0])))
    v = vec(as_operator(rho0)).astype(complex)
    states = []
    t_prev = grid[0] if len(grid) else 0.0
    cache: dict[float, np.ndarray] = {}
    v = linalg.expm(g * t_prev) @ v if t_prev else v
    for t in grid:
        h = float(t - t_prev)
        if h:
            key = round(h, 14)
            p = cache.get(key)
            if p is None:
                p = cache[key] = linalg.expm(g * h)
            v = p @ v
        rho = unvec(v, d)
        states.append(0.5 * (rho + rho.conj().T))
        t_prev = t
    return SystemTrajectory(times=grid, states=states)


@dataclass
class FloquetResult:
    monodromy: np.ndarray
    periodic_state: np.ndarray
    eigenvalues: np.ndarray
    subdominant: float
    residual: float


def floquet_map(step_maps: Sequence[np.ndarray], tol: float = 1e-9) -> FloquetResult:
    """Monodromy M = E_{K-1} ... E_0 of one period and its fixed point.

    ``step_maps`` are the per-step superoperator propagators in time order.
    """
    m = step_maps[0]
    for e in step_maps[1:]:
        m = e @ m
    ev, vecs = np.linalg.eig(m)
    dist = np.abs(ev - 1.0)
    ones = np.flatnonzero(dist < tol)
    if len(ones) != 1:
        raise FloquetError(f"monodromy has {len(ones)} eigenvalues at 1; no unique periodic state")
    k = ones[0]
    d = int(round(math.sqrt(m.shape[0])))
    rho = unvec(vecs[:, k], d)
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    rest = np.delete(np.abs(ev), k)
    sub = float(rest.max()) if rest.size else 0.0
    if sub >= 1.0 - tol:
        raise FloquetError("monodromy is not contractive off its fixed point")
    residual = float(np.linalg.norm(m @ vec(rho) - vec(rho)))
    return FloquetResult(monodromy=m, periodic_state=rho, eigenvalues=ev, subdominant=sub, residual=residual)


def gibbs_check(gen: WeakCouplingGenerator, beta: float) -> float:
    """max |stationary - Gibbs(H_S, beta)| entrywise."""
    return float(np.max(np.abs(gen.stationary_state() - gibbs_state(gen.h_sys, beta))))


# ---------------------------------------------------------------------------
# driven weak-coupling runs with exact step bookkeeping


def van_loan_step(gen: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """(exp(G dt), int_0^dt exp(G s) ds) from one augmented exponential."""
    n = gen.shape[0]
    aug = np.zeros((2 * n, 2 * n), dtype=complex)
    aug[:n, :n] = gen
    aug[:n, n:] = np.eye(n)
    e = linalg.expm(aug * dt)
    return e[:n, :n], e[:n, n:]


@dataclass
class WeakRun:
    """System-level trajectory of a weak-coupling run.

    The generator is frozen at each step midpoint.  ``step_heat[k, i]`` is the
    exact heat from bath i over step k for that piecewise-constant generator
    and ``step_work[k]`` the work of the Hamiltonian jumps at the step ends,
    so ``energies[k + 1] - energies[k] = step_work[k] + step_heat[k].sum()``
    to rounding.
    """

    times: np.ndarray
    states: list[np.ndarray]
    records: list[ThermoRecord]
    energies: np.ndarray
    step_heat: np.ndarray
    step_work: np.ndarray
    betas: tuple[float, ...]
    schedule: Schedule

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def window_balance(self, k0: int, k1: int) -> tuple[float, np.ndarray, float]:
        """(dU, dQ per bath, dA) between grid indices k0 <= k1."""
        du = float(self.energies[k1] - self.energies[k0])
        return du, self.step_heat[k0:k1].sum(axis=0), float(self.step_work[k0:k1].sum())


class _GeneratorCache:
    """Davies generators and step propagators keyed by protocol phase."""

    def __init__(self, model: CompositeModel, dt: float, lamb_shift: bool):
        self.model = model
        self.dt = dt
        self.lamb_shift = lamb_shift
        self._gen: dict[float, WeakCouplingGenerator] = {}
        self._step: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def generator(self, phase: float) -> WeakCouplingGenerator:
        key = round(phase, 12)
        g = self._gen.get(key)
        if g is None:
            g = self._gen[key] = generator_at_phase(self.model, phase, self.lamb_shift)
        return g

    def step(self, phase: float) -> tuple[WeakCouplingGenerator, np.ndarray, np.ndarray]:
        key = round(phase, 12)
        g = self.generator(phase)
        pair = self._step.get(key)
        if pair is None:
            pair = self._step[key] = van_loan_step(g.matrix, self.dt)
        return g, pair[0], pair[1]


def weak_record(model: CompositeModel, gen: WeakCouplingGenerator, t: float, rho: np.ndarray,
                hdot: np.ndarray, s_rel: float, k_B: float = 1.0) -> ThermoRecord:
    """Pointwise thermodynamic record in the weak-coupling limit.

    U^S = Tr(rho H_0^S); dU/dt = Tr(H_0^S G(rho)) + Tr(rho dH_0^S/dt) is formed
    from the full generator, independently of the per-bath currents.
    """
    h = gen.h_sys
    dq = gen.heat_currents(rho)
    da = expectation(rho, hdot)
    du = float(np.real(np.einsum("ij,ji->", h, gen.apply(rho)))) + da
    u = expectation(rho, h)
    return ThermoRecord(
        t=float(t),
        U_S=u,
        dQ=dq,
        dA=da,
        S_rel=s_rel,
        dS_dt=entropy_rate_from_currents(dq, gen.betas, k_B),
        first_law_residual=du - sum(dq) - da,
        U_S_bare=u,
        dU_dt=du,
    )


def weak_coupling_run(model: CompositeModel, rho0: np.ndarray, schedule: Schedule | None = None,
                      *, k_B: float = 1.0, lamb_shift: bool = False, record: bool = True) -> WeakRun:
    """Propagate the system state with the instantaneous Davies generator.

    ``S_rel`` in the records is the weak-coupling form of the relative entropy
    with respect to (1/d) 1 (x) bath Gibbs states: the initial system term
    k_B (S_vN(rho0) - log d) plus the accumulated sum_i beta_i Q_i, which
    stays nonpositive by Spohn's inequality.
    """
    sched = schedule or model.schedule
    rho = check_density(rho0, "system state")
    if rho.shape[0] != model.d:
        raise ValueError(f"state dim {rho.shape[0]} does not match system dim {model.d}")
    times = sched.grid()
    dt = sched.dt
    cache = _GeneratorCache(model, dt, lamb_shift)
    betas = model.betas
    n = len(times)
    n_b = len(model.baths)
    h_at = lambda t: model.system.h0(sched.phase(t))  # noqa: E731
    eps = dt / 10

    def hdot(t):
        if sched.kind == "static":
            return np.zeros((model.d, model.d), dtype=complex)
        return (h_at(t + eps) - h_at(t - eps)) / (2 * eps)

    s_rel = k_B * (von_neumann_entropy(rho) - math.log(model.d))
    states = [rho]
    energies = np.empty(n)
    energies[0] = expectation(rho, h_at(times[0]))
    step_heat = np.zeros((max(n - 1, 0), n_b))
    step_work = np.zeros(max(n - 1, 0))
    records = []
    if record:
        records.append(weak_record(model, cache.generator(sched.phase(times[0])), times[0], rho,
                                   hdot(times[0]), s_rel, k_B))
    v = vec(rho)
    for k in range(n - 1):
        t0, t1 = times[k], times[k + 1]
        gen, prop, integ = cache.step(sched.phase(0.5 * (t0 + t1)))
        h_mid = gen.h_sys
        w = expectation(rho, h_mid - h_at(t0))
        acc = integ @ v
        ht = vec(h_mid.T)
        for i, dmat in enumerate(gen.dissipators):
            step_heat[k, i] = float(np.real(ht @ (dmat @ acc)))
        v = prop @ v
        rho = unvec(v, model.d)
        rho = 0.5 * (rho + rho.conj().T)
        h1 = h_at(t1)
        w += expectation(rho, h1 - h_mid)
        step_work[k] = w
        energies[k + 1] = expectation(rho, h1)
        s_rel += k_B * float(np.dot(betas, step_heat[k]))
        states.append(rho)
        if record:
            records.append(weak_record(model, cache.generator(sched.phase(t1)), t1, rho, hdot(t1),
                                       s_rel, k_B))
    return WeakRun(
        times=times,
        states=states,
        records=records,
        energies=energies,
        step_heat=step_heat,
        step_work=step_work,
        betas=betas,
        schedule=sched,
    )


def period_step_maps(model: CompositeModel, schedule: Schedule, lamb_shift: bool = False) -> list[np.ndarray]:
    """Per-step propagators exp(G(t_k + dt/2) dt) over one period, in time order."""
    if schedule.kind != "periodic":
        raise ValueError("period maps need a periodic schedule")
    k = int(round(schedule.period / schedule.dt))
    if not math.isclose(k * schedule.dt, schedule.period, rel_tol=1e-9):
        raise ValueError("period must be an integer multiple of dt")
    cache = _GeneratorCache(model, schedule.dt, lamb_shift)
    return [cache.step(schedule.phase((j + 0.5) * schedule.dt))[1] for j in range(k)]
