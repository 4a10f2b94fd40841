"""Model builder: protocols, reservoir discretization, second quantization, assembly."""
import math
import warnings

import numpy as np
import pytest
from scipy import integrate, linalg

from conftest import fermi_bath, qubit_model
from qthermo.models import (
    Profile,
    RecurrenceWarning,
    ReservoirSpec,
    Schedule,
    SpectralDensity,
    SystemSpec,
    boson_annihilator,
    build_bath_ops,
    discretize_bath,
    fermion_annihilators,
    initial_product_state,
    log_reference_state,
    recurrence_time,
    reference_state,
)
from qthermo.operators import PAULI_Z, gibbs_state, partial_trace, random_density


def anti(a, b):
    return a @ b + b @ a


class TestProtocols:
    def test_cosine_profile(self):
        p = Profile(((0.0, 1.0), (1.0, 3.0)))
        assert p(-1) == 1.0 and p(2) == 3.0
        assert p(0.5) == pytest.approx(2.0)
        assert p(0.25) == pytest.approx(1.0 + 2.0 * 0.5 * (1 - math.cos(math.pi / 4)))

    def test_step_profile(self):
        p = Profile(((0.0, 1.0), (0.4, 0.0)), interp="step")
        assert p(0.39) == 1.0 and p(0.4) == 0.0

    def test_unsorted_knots_rejected(self):
        with pytest.raises(ValueError):
            Profile(((1.0, 0.0), (0.0, 1.0)))

    @pytest.mark.parametrize("kind,kw,t,phase", [
        ("static", {}, 3.0, 0.0),
        ("ramp", {"ramp_time": 2.0}, 1.0, 0.5),
        ("ramp", {"ramp_time": 2.0}, 5.0, 1.0),
        ("periodic", {"period": 4.0}, 9.0, 0.25),
        ("quasi_static", {"tau": 10.0}, 2.5, 0.25),
    ])
    def test_schedule_phase(self, kind, kw, t, phase):
        assert Schedule(kind, 0.1, 10.0, **kw).phase(t) == pytest.approx(phase)

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            Schedule("periodic", 0.1, 1.0)
        with pytest.raises(ValueError):
            Schedule("static", -0.1, 1.0)

    def test_grid(self):
        s = Schedule("static", 0.25, 1.0)
        np.testing.assert_allclose(s.grid(), [0, 0.25, 0.5, 0.75, 1.0])


class TestDiscretization:
    def test_linear_weights_approximate_integral(self):
        sd = SpectralDensity(alpha=2.0, power=1.0, omega_c=3.0, omega_max=4.0)
        bath = discretize_bath(sd, 200, 4.0)
        exact = integrate.quad(sd, 0, 4.0)[0]
        assert sum(g**2 for g in bath.mode_couplings) == pytest.approx(exact, rel=1e-4)

    def test_gauss_is_exact_for_polynomials(self):
        sd = SpectralDensity(alpha=1.5, power=3.0, omega_min=0.5, omega_max=2.5)
        bath = discretize_bath(sd, 3, 2.5, "gauss", omega_min=0.5)
        exact = 1.5 * (2.5**4 - 0.5**4) / 4
        assert sum(g**2 for g in bath.mode_couplings) == pytest.approx(exact, rel=1e-13)

    def test_linear_nodes_are_midpoints(self):
        bath = fermi_bath(n_modes=4, lo=0.5, hi=1.5)
        np.testing.assert_allclose(bath.mode_freqs, [0.625, 0.875, 1.125, 1.375])

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            ReservoirSpec("fermionic", (1.0,), (0.1,), beta=-1.0)
        with pytest.raises(ValueError):
            discretize_bath(SpectralDensity(), 3, 1.0, "simpson")

    def test_recurrence_time(self):
        bath = fermi_bath(n_modes=4, lo=0.5, hi=1.5)
        assert recurrence_time([bath]) == pytest.approx(2 * math.pi / 0.25)


class TestSecondQuantization:
    def test_fermion_car(self):
        cs = fermion_annihilators(3)
        eye = np.eye(8)
        for i, ci in enumerate(cs):
            for j, cj in enumerate(cs):
                np.testing.assert_allclose(anti(ci, cj.conj().T), eye * (i == j), atol=1e-15)
                np.testing.assert_allclose(anti(ci, cj), 0, atol=1e-15)

    def test_boson_ccr_below_cutoff(self):
        a = boson_annihilator(6)
        comm = a @ a.conj().T - a.conj().T @ a
        np.testing.assert_allclose(np.diag(comm)[:-1], 1.0)

    def test_bath_hamiltonian_spectrum(self):
        bath = fermi_bath(n_modes=3)
        h, fields = build_bath_ops(bath)
        w = np.sort(np.linalg.eigvalsh(h))
        occ = np.array(np.meshgrid(*[[0, 1]] * 3, indexing="ij")).reshape(3, -1).T
        np.testing.assert_allclose(w, np.sort(occ @ np.array(bath.mode_freqs)), atol=1e-13)
        assert len(fields) == 3

    def test_fermi_occupation_of_gibbs(self):
        bath = fermi_bath(n_modes=2, beta=2.0)
        h, _ = build_bath_ops(bath)
        g = gibbs_state(h, 2.0)
        c0 = fermion_annihilators(2)[0]
        n0 = np.trace(g @ c0.conj().T @ c0).real
        assert n0 == pytest.approx(1 / (math.exp(2.0 * bath.mode_freqs[0]) + 1), rel=1e-12)


class TestAssembly:
    def test_dimensions_and_hermiticity(self):
        m = qubit_model([fermi_bath(2), fermi_bath(1, beta=2.0)])
        assert m.layout.factor_dims == (2, 4, 2)
        h = m.hamiltonian(0.3)
        np.testing.assert_allclose(h, h.conj().T)

    def test_interaction_vanishes_at_zero_coupling(self):
        m = qubit_model([fermi_bath(2)], lam=0.0)
        np.testing.assert_allclose(m.interaction(0.0), 0)

    def test_initial_product_state_marginals(self, rng):
        m = qubit_model([fermi_bath(2, beta=0.7)])
        rho_s = random_density(2, rng)
        rho = initial_product_state(m, rho_s)
        np.testing.assert_allclose(partial_trace(rho, [0], m.layout), rho_s, atol=1e-14)
        np.testing.assert_allclose(partial_trace(rho, [1], m.layout), gibbs_state(m.h_res_local[0], 0.7), atol=1e-14)

    def test_log_reference_state_vs_logm(self):
        m = qubit_model([fermi_bath(2, beta=0.7), fermi_bath(1, beta=1.3)])
        np.testing.assert_allclose(log_reference_state(m), linalg.logm(reference_state(m)), atol=1e-10)

    def test_recurrence_warning(self):
        bath = fermi_bath(n_modes=4)
        with pytest.warns(RecurrenceWarning):
            qubit_model([bath], schedule=Schedule("static", 0.05, 0.6 * recurrence_time([bath])))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            qubit_model([bath], schedule=Schedule("static", 0.05, 0.4 * recurrence_time([bath])))

    def test_drive_enters_system_hamiltonian(self):
        sched = Schedule("ramp", 0.1, 2.0, ramp_time=1.0)
        m = qubit_model([fermi_bath(1)], schedule=sched, drives=[(PAULI_Z, Profile(((0, 0.0), (1, 0.5))))])
        np.testing.assert_allclose(m.h0_local(2.0), np.diag([0.5, 0.5]))

    def test_system_dimension_bounds(self):
        with pytest.raises(ValueError):
            SystemSpec(np.zeros((1, 1)))
