"""Thermodynamic functionals: first law, heat currents, relative entropy, cycle algebra."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from conftest import fermi_bath, qubit_model
from qthermo.dynamics import propagate
from qthermo.models import Profile, Schedule, initial_product_state, reference_state
from qthermo.operators import PAULI_Z, expectation, gibbs_state, random_density, von_neumann_entropy
from qthermo.thermo import (
    ThermoEvaluator,
    ThermoRecord,
    carnot_bound,
    entropy_production_rate,
    entropy_rate_fd,
    make_cycle_report,
    reversible_entropy,
    shift_state,
    tail_currents,
)


def two_bath_driven(dt=0.02, horizon=3.0):
    sched = Schedule("periodic", dt, horizon, period=2.0)
    drive = (PAULI_Z, Profile(((0.0, 0.0), (0.5, 0.4), (1.0, 0.0))))
    return qubit_model([fermi_bath(2, beta=0.5), fermi_bath(2, beta=2.0)], lam=0.25, schedule=sched, drives=[drive])


class TestFirstLaw:
    def test_pointwise_residual_on_random_states(self, rng):
        m = two_bath_driven()
        ev = ThermoEvaluator(m)
        for t in rng.uniform(0, 3, size=5):
            rec = ev(t, random_density(m.dim, rng))
            assert abs(rec.first_law_residual) < 1e-10 * max(1.0, abs(rec.U_S))

    def test_integrated_balance(self, rng):
        """U(T) - U(0) against the trapezoid integral of the currents, an independent route."""
        m = two_bath_driven()
        rho0 = initial_product_state(m, random_density(2, rng))
        traj = propagate(m, None, rho0, recorder=ThermoEvaluator(m))
        recs = traj.records
        t = np.array([r.t for r in recs])
        flux = np.array([sum(r.dQ) + r.dA for r in recs])
        du = recs[-1].U_S - recs[0].U_S
        assert abs(du - np.trapezoid(flux, t)) < 5e-4

    def test_heat_current_is_bath_energy_loss(self, rng):
        m = two_bath_driven()
        rho = initial_product_state(m, random_density(2, rng))
        t, h = 0.7, 1e-3
        q = ThermoEvaluator(m).heat_currents(rho, t)
        for i, hr in enumerate(m.h_res):
            e_plus = expectation(shift_state(m, rho, t, h, 4), hr)
            e_minus = expectation(shift_state(m, rho, t, -h, 4), hr)
            assert q[i] == pytest.approx(-(e_plus - e_minus) / (2 * h), abs=1e-6)


class TestRelativeEntropy:
    def test_zero_at_reference(self):
        m = two_bath_driven()
        assert ThermoEvaluator(m).relative_entropy(reference_state(m)) == pytest.approx(0.0, abs=1e-12)

    def test_logm_oracle_and_sign(self, rng):
        m = two_bath_driven()
        ev = ThermoEvaluator(m)
        ref = reference_state(m)
        for _ in range(3):
            rho = random_density(m.dim, rng)
            s = ev.relative_entropy(rho)
            oracle = -np.trace(rho @ (linalg.logm(rho) - linalg.logm(ref))).real
            assert s == pytest.approx(oracle, abs=1e-9)
            assert s <= 0

    def test_rate_identity(self, rng):
        """dS/dt by finite differences equals sum_i beta_i dQ_i for exact dynamics."""
        m = two_bath_driven()
        rho = initial_product_state(m, random_density(2, rng))
        rho = shift_state(m, rho, 0.0, 0.6, 30)
        rec = ThermoEvaluator(m)(0.6, rho)
        assert entropy_rate_fd(m, rho, 0.6, 1e-3) == pytest.approx(rec.dS_dt, abs=1e-8)


class TestEquilibriumQuantities:
    def test_reversible_entropy_decoupled(self):
        m = qubit_model([fermi_bath(2, beta=1.3)], lam=0.0, gap=0.8)
        rq = reversible_entropy(m, 0.0, 1.3)
        g = gibbs_state(np.diag([0.0, 0.8]), 1.3)
        assert rq.S_rev == pytest.approx(von_neumann_entropy(g) - math.log(2), abs=1e-12)
        z_s = 1 + math.exp(-1.3 * 0.8)
        assert rq.F == pytest.approx(-math.log(z_s) / 1.3, abs=1e-12)


class TestCycleAlgebra:
    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.01, 5.0), st.floats(-5.0, -0.001), st.floats(0.2, 1.0), st.floats(1.0, 5.0))
    def test_carnot_gap_identity(self, dq1, dq2, t2, t1):
        dA = -(dq1 + dq2)  # closed cycle, dU = 0
        rep = make_cycle_report(0, 0.0, (dq1, dq2), dA, (t1, t2))
        assert rep.eta is not None
        lhs = rep.eta_carnot - rep.eta
        assert lhs == pytest.approx(t2 * rep.dE / dq1, rel=1e-9, abs=1e-12)

    def test_engine_flags(self):
        rep = make_cycle_report(3, 0.0, (1.0, -0.6), -0.4, (2.0, 1.0))
        assert rep.engine and rep.eta == pytest.approx(0.4) and rep.work_output == pytest.approx(0.4)
        assert rep.eta <= rep.eta_carnot
        refrigerator = make_cycle_report(0, 0.0, (-0.2, 0.1), 0.1, (2.0, 1.0))
        assert not refrigerator.engine and refrigerator.eta is None

    def test_carnot_bound_validation(self):
        assert carnot_bound(2.0, 0.5) == pytest.approx(0.75)
        with pytest.raises(ValueError):
            carnot_bound(0.5, 2.0)


class TestTailAverages:
    def _records(self, n=101):
        t = np.linspace(0, 10, n)
        return [ThermoRecord(t=x, U_S=0.0, dQ=(0.3, -0.3 + 0.01 * math.sin(x)), dA=0.0, S_rel=0.0,
                             dS_dt=-0.05, first_law_residual=0.0) for x in t]

    def test_constant_currents(self):
        p = tail_currents(self._records(), 2.0)
        assert p[0] == pytest.approx(0.3)
        e, std = entropy_production_rate(self._records(), 2.0)
        assert e == pytest.approx(0.05) and std == pytest.approx(0.0, abs=1e-15)

    def test_window_too_long(self):
        with pytest.raises(ValueError):
            tail_currents(self._records(), 20.0)
