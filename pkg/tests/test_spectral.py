"""Superoperators, FGR level shifts, Davies generators, Floquet maps and weak-coupling runs."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, linalg

from conftest import bundled_config, fermi_bath, qubit_model
from qthermo.config import ScenarioConfig, build_initial_state, build_model
from qthermo.dynamics import propagate
from qthermo.models import CouplingSpec, Profile, Schedule, assemble, initial_product_state
from qthermo.operators import (
    PAULI_X,
    PAULI_Z,
    gibbs_state,
    partial_trace,
    random_density,
    random_hermitian,
    trace_distance,
)
from qthermo.spectral import (
    BathCoupling,
    FloquetError,
    SecularityError,
    choi_matrix,
    davies_generator,
    fgr_resonance_check,
    floquet_map,
    lindblad_propagate,
    liouvillean,
    liouvillean_spectrum,
    model_generator,
    period_step_maps,
    spectral_function,
    unvec,
    van_loan_step,
    vec,
    weak_coupling_run,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def spread_hamiltonian(d, rng, min_gap=0.15):
    """Random Hermitian with level spacings >= min_gap and distinct Bohr frequencies."""
    while True:
        w = np.sort(rng.uniform(0, 2, size=d))
        diffs = np.sort((w[:, None] - w[None, :])[np.triu_indices(d, 1)])
        if np.diff(w).min() > min_gap and (d < 3 or np.diff(diffs).min() > 0.02):
            break
    q, _ = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q @ np.diag(w) @ q.conj().T


def e1_config(lam):
    data = bundled_config("e1").model_dump()
    data["model"]["couplings"][0]["lam"] = lam
    return ScenarioConfig.model_validate(data)


def exact_vs_weak_deviation(lam):
    cfg = e1_config(lam)
    m = build_model(cfg)
    rs = build_initial_state(cfg, m.system.h0(0.0))
    traj = propagate(m, None, initial_product_state(m, rs), stride=1)
    weak = lindblad_propagate(model_generator(m, 0.0, lamb_shift=True), rs, traj.state_times)
    return max(trace_distance(partial_trace(r, [0], m.layout), w) for r, w in zip(traj.states, weak.states))


class TestSuperoperators:
    @settings(max_examples=25, deadline=None)
    @given(seeds)
    def test_liouvillean_is_commutator(self, seed):
        rng = np.random.default_rng(seed)
        h, x = random_hermitian(3, rng), random_density(3, rng)
        np.testing.assert_allclose(unvec(liouvillean(h) @ vec(x)), h @ x - x @ h, atol=1e-13)

    @settings(max_examples=25, deadline=None)
    @given(seeds, st.integers(2, 8))
    def test_spectrum_is_eigendifferences(self, seed, d):
        rng = np.random.default_rng(seed)
        h = random_hermitian(d, rng)
        w = np.linalg.eigvalsh(h)
        ev = np.sort(np.linalg.eigvalsh(liouvillean(h)))
        np.testing.assert_allclose(ev, np.sort((w[:, None] - w[None, :]).ravel()), atol=1e-10)

    def test_qubit_example(self):
        ev = np.sort(np.linalg.eigvalsh(liouvillean(np.diag([0.0, 0.7]))))
        np.testing.assert_allclose(ev, [-0.7, 0, 0, 0.7])

    def test_choi_of_identity_and_transpose(self):
        choi = choi_matrix(np.eye(4))
        assert np.linalg.eigvalsh(choi).min() > -1e-14
        transpose = np.zeros((4, 4))
        for i in range(2):
            for j in range(2):
                transpose[i + 2 * j, j + 2 * i] = 1.0
        assert np.linalg.eigvalsh(choi_matrix(transpose)).min() < -0.5

    def test_model_spectrum_kernel(self):
        m = qubit_model([fermi_bath(1)], lam=0.0, gap=0.7)
        rep = liouvillean_spectrum(m)
        assert rep.kernel_dim > 1  # product degeneracy of the uncoupled model


class TestFermiGoldenRule:
    def test_zero_coupling_fails_condition(self):
        rep = fgr_resonance_check(qubit_model([fermi_bath(2)], lam=0.0), 0.0)
        assert not rep.fgr_condition_met

    def test_pure_dephasing_fails_condition(self):
        m = qubit_model([fermi_bath(2)], lam=0.1)
        m = assemble(m.system, m.baths, [CouplingSpec(PAULI_Z, 0, 0.1)], m.schedule)
        assert not fgr_resonance_check(m, 0.0).fgr_condition_met

    def test_relaxation_time_hand_formula(self):
        bath = fermi_bath(6, beta=1.0, alpha=4.0)
        m = qubit_model([bath], lam=0.1)
        rep = fgr_resonance_check(m, 0.0)
        assert rep.fgr_condition_met
        total = 0.1**2 * 2 * math.pi * bath.spectral_density(1.0)  # gamma_up + gamma_down, fermions
        assert rep.tau_R == pytest.approx(2.0 / total, rel=1e-10)


class TestDavies:
    @settings(max_examples=20, deadline=None)
    @given(seeds, st.integers(2, 4), st.floats(0.2, 3.0))
    def test_single_bath_gibbs_and_structure(self, seed, d, beta):
        rng = np.random.default_rng(seed)
        h = spread_hamiltonian(d, rng)
        a = random_hermitian(d, rng, scale=0.1)
        bath = fermi_bath(2, beta=beta, lo=0.0, hi=3.0)
        try:
            gen = davies_generator(h, [BathCoupling(a, bath)])
        except SecularityError:
            return
        np.testing.assert_allclose(gen.stationary_state(), gibbs_state(h, beta), atol=1e-9)
        np.testing.assert_allclose(vec(np.eye(d)).conj() @ gen.matrix, 0, atol=1e-12)
        assert np.linalg.eigvalsh(choi_matrix(linalg.expm(gen.matrix * 0.3))).min() > -1e-10

    def test_detailed_balance_rates(self):
        bath = fermi_bath(2, beta=1.7, lo=0.0, hi=3.0)
        gen = davies_generator(np.diag([0.0, 0.6, 1.5]), [BathCoupling(random_hermitian(3, np.random.default_rng(1)), bath)])
        rates = dict(gen.rates[0])
        for om, g in rates.items():
            if om > 0:
                assert rates[-om] == pytest.approx(math.exp(-1.7 * om) * g, rel=1e-12)

    def test_spectral_function_kms(self):
        for stats in ("fermionic", "bosonic"):
            bath = fermi_bath(2, beta=0.8, lo=0.0, hi=3.0, statistics=stats)
            assert spectral_function(bath, -1.1) == pytest.approx(math.exp(-0.8 * 1.1) * spectral_function(bath, 1.1))

    def test_equal_temperatures_no_current(self):
        b1, b2 = fermi_bath(2, beta=1.2), fermi_bath(3, beta=1.2)
        h = np.diag([0.0, 1.0])
        gen = davies_generator(h, [BathCoupling(0.1 * PAULI_X, b1), BathCoupling(0.07 * PAULI_X, b2)])
        rho = gen.stationary_state()
        np.testing.assert_allclose(rho, gibbs_state(h, 1.2), atol=1e-12)
        np.testing.assert_allclose(gen.heat_currents(rho), 0, atol=1e-14)

    def test_secularity_error(self):
        bath = fermi_bath(2, lo=0.0, hi=3.0)
        with pytest.raises(SecularityError):
            davies_generator(np.diag([0.0, 1.0, 2.0 + 1e-9]), [BathCoupling(random_hermitian(3, np.random.default_rng(0)), bath)])


class TestLindbladPropagation:
    def test_initial_and_long_time(self, rng):
        bath = fermi_bath(2, beta=0.9)
        h = np.diag([0.0, 1.0])
        gen = davies_generator(h, [BathCoupling(0.3 * PAULI_X, bath)])
        rho0 = random_density(2, rng)
        tr = lindblad_propagate(gen, rho0, [0.0, 1.0, 500.0])
        np.testing.assert_allclose(tr.states[0], rho0, atol=1e-15)
        assert abs(np.trace(tr.states[1]) - 1) < 1e-10
        np.testing.assert_allclose(tr.states[-1], gibbs_state(h, 0.9), atol=1e-10)

    def test_exact_reduced_dynamics_second_order(self):
        """Deviation from the exact reduced dynamics scales as lambda^2."""
        d1, d2 = exact_vs_weak_deviation(0.05), exact_vs_weak_deviation(0.025)
        assert 3.0 < d1 / d2 < 5.0

    @pytest.mark.xfail(strict=True, reason="initial-slip prefactor ~10 lambda^2 for the six-mode bath; see decisions ledger")
    def test_exact_reduced_dynamics_bound(self):
        assert exact_vs_weak_deviation(0.05) < 5e-3


class TestFloquet:
    def _generator(self):
        bath = fermi_bath(2, beta=0.9)
        return davies_generator(np.diag([0.0, 1.0]), [BathCoupling(0.3 * PAULI_X, bath)])

    def test_static_generator(self):
        gen = self._generator()
        step = linalg.expm(gen.matrix * 0.1)
        res = floquet_map([step] * 20)
        np.testing.assert_allclose(res.monodromy, linalg.expm(gen.matrix * 2.0), atol=1e-12)
        np.testing.assert_allclose(res.periodic_state, gen.stationary_state(), atol=1e-12)
        assert res.residual < 1e-10

    def test_geometric_convergence_matches_subdominant(self, rng):
        baths = [fermi_bath(2, beta=0.5), fermi_bath(2, beta=2.0)]
        sched = Schedule("periodic", 0.25, 20.0, period=5.0)
        m = qubit_model(baths, lam=0.3, drives=[(PAULI_Z, Profile(((0, 0.0), (0.5, 0.5), (1, 0.0))))])
        res = floquet_map(period_step_maps(m, sched))
        assert res.residual < 1e-10
        v = vec(random_density(2, rng))
        dists = []
        for _ in range(12):
            v = res.monodromy @ v
            dists.append(np.linalg.norm(v - vec(res.periodic_state)))
        ratio = dists[-1] / dists[-2]
        assert ratio == pytest.approx(res.subdominant, rel=0.05)

    def test_non_unique_fixed_point(self):
        with pytest.raises(FloquetError):
            floquet_map([np.eye(4)])


class TestWeakRuns:
    def test_van_loan_integral(self):
        gen = self._gen()
        e, integral = van_loan_step(gen, 0.7)
        np.testing.assert_allclose(e, linalg.expm(gen * 0.7), atol=1e-13)
        oracle = integrate.quad_vec(lambda s: linalg.expm(gen * s), 0, 0.7, epsabs=1e-13)[0]
        np.testing.assert_allclose(integral, oracle, atol=1e-10)

    def _gen(self):
        return davies_generator(np.diag([0.0, 1.0]), [BathCoupling(0.3 * PAULI_X, fermi_bath(2))]).matrix

    def test_step_energy_bookkeeping(self):
        baths = [fermi_bath(2, beta=0.5), fermi_bath(2, beta=2.0)]
        sched = Schedule("periodic", 0.1, 20.0, period=4.0)
        m = qubit_model(baths, lam=0.3, drives=[(PAULI_Z, Profile(((0, 0.0), (0.5, 0.5), (1, 0.0))))])
        run = weak_coupling_run(m, np.eye(2) / 2, sched)
        lhs = np.diff(run.energies)
        rhs = run.step_work + run.step_heat.sum(axis=1)
        np.testing.assert_allclose(lhs, rhs, atol=1e-13)
        for r in run.records:
            assert abs(r.first_law_residual) < 1e-12
            assert r.S_rel <= 1e-12

    def test_static_run_reaches_gibbs(self):
        m = qubit_model([fermi_bath(2, beta=1.4)], lam=0.3)
        run = weak_coupling_run(m, np.array([[0, 0], [0, 1]], dtype=complex), Schedule("static", 0.5, 400.0))
        np.testing.assert_allclose(run.final_state, gibbs_state(np.diag([0.0, 1.0]), 1.4), atol=1e-9)
