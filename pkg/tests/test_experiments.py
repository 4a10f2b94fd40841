"""Scenario runners: negative controls, guards and individual sub-clauses."""
import math

import numpy as np
import pytest

from conftest import bundled_config, fermi_bath
from qthermo.config import ScenarioConfig
from qthermo.experiments import (
    RecurrenceGuardError,
    Verdict,
    fit_decay_rate,
    golden_rule_currents,
    run_heat_engine,
    run_isothermal_sweep,
    run_ness_two_baths,
    run_return_to_equilibrium,
)
from qthermo.operators import PAULI_X
from qthermo.spectral import BathCoupling, davies_generator


def variant(name, **changes):
    """Bundled config with dotted-path overrides."""
    data = bundled_config(name).model_dump()
    for path, value in changes.items():
        node = data
        *head, last = path.split("__")
        for key in head:
            node = node[int(key)] if isinstance(node, list) else node[key]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    return ScenarioConfig.model_validate(data)


class TestHelpers:
    def test_fit_decay_rate_exact_exponential(self):
        t = np.linspace(0, 10, 51)
        assert fit_decay_rate(t, 0.3 * np.exp(-0.7 * t)) == pytest.approx(0.7, rel=1e-12)

    def test_fit_decay_rate_needs_points(self):
        assert fit_decay_rate([0, 1, 2], [1.0, 0.0, 0.0]) == 0.0

    def test_unknown_invariant(self):
        with pytest.raises(KeyError):
            Verdict("x", True, 0.0, 1.0, "not_an_invariant")


class TestGoldenRuleOracle:
    def test_closed_form_two_baths(self):
        hot, cold = fermi_bath(2, beta=0.5), fermi_bath(2, beta=2.0)
        lam = 0.1
        p = golden_rule_currents(np.diag([0.0, 1.0]), [(lam * PAULI_X, hot), (lam * PAULI_X, cold)])
        j = hot.spectral_density(1.0)
        n1, n2 = 1 / (math.exp(0.5) + 1), 1 / (math.exp(2.0) + 1)
        u1, d1, u2, d2 = (2 * math.pi * lam**2 * j * x for x in (n1, 1 - n1, n2, 1 - n2))
        expected = (u1 * d2 - d1 * u2) / (u1 + d1 + u2 + d2)
        assert p[0] == pytest.approx(expected, rel=1e-12)
        assert p.sum() == pytest.approx(0.0, abs=1e-16)

    def test_matches_davies_currents(self):
        baths = [fermi_bath(2, beta=0.5), fermi_bath(3, beta=2.0)]
        couplings = [(0.1 * PAULI_X, baths[0]), (0.2 * PAULI_X, baths[1])]
        h = np.diag([0.0, 1.0])
        gen = davies_generator(h, [BathCoupling(a, b) for a, b in couplings])
        np.testing.assert_allclose(gen.heat_currents(gen.stationary_state()),
                                   golden_rule_currents(h, couplings), rtol=1e-10)

    def test_rejects_larger_systems(self):
        with pytest.raises(ValueError):
            golden_rule_currents(np.eye(3), [])


class TestReturnToEquilibrium:
    def test_zero_coupling_is_a_failing_control(self):
        res = run_return_to_equilibrium(variant("e1", model__couplings__0__lam=0.0))
        assert not res.verdicts["fgr_condition"].passed
        assert not res.verdicts["exact.plateau"].passed
        assert not res.passed
        # thermodynamic bookkeeping still holds on the failing run
        assert res.verdicts["exact.first_law"].passed

    def test_recurrence_guard(self):
        cfg = variant("e1", schedule__horizon=30.0)
        with pytest.warns(Warning), pytest.raises(RecurrenceGuardError):
            run_return_to_equilibrium(cfg)


class TestIsothermal:
    def test_static_protocol_stays_at_equilibrium(self):
        cfg = variant("e2", model__system__drives=[], params__decoupling__enabled=False,
                      params__tau_factors=[5.0, 10.0])
        res = run_isothermal_sweep(cfg)
        for row in res.summary["sweep"]:
            assert row["Delta"] < 1e-12
            assert abs(row["dA"]) < 1e-14
            assert row["dF"] == pytest.approx(0.0, abs=1e-14)


class TestNESS:
    def _small(self, beta_hot, beta_cold):
        return variant("e3", model__baths__0__beta=beta_hot, model__baths__1__beta=beta_cold,
                       model__baths__0__n_modes=2, model__baths__1__n_modes=2)

    def test_reversed_temperatures_rejected(self):
        with pytest.raises(ValueError, match="hotter"):
            run_ness_two_baths(self._small(2.0, 0.5))

    def test_equal_temperatures_give_no_current(self):
        res = run_ness_two_baths(self._small(1.0, 1.0))
        np.testing.assert_allclose(res.summary["weak_currents"], 0.0, atol=1e-14)
        np.testing.assert_allclose(res.summary["golden_rule_currents"], 0.0, atol=1e-14)
        assert not res.verdicts["weak.strict_entropy_production"].applicable

    @pytest.mark.slow
    @pytest.mark.parametrize("name", [
        "exact.first_law", "exact.entropy_sign", "exact.clausius", "exact.entropy_production",
        "exact.entropy_rate", "exact.golden_rule", "weak.fixed_point", "weak.strict_entropy_production",
        "weak.entropy_production", "weak.clausius", "weak.golden_rule", "weak.first_law", "weak.entropy_sign",
    ])
    def test_bundled_sub_clause(self, scenario, name):
        v = scenario("e3").verdicts[name]
        assert v.applicable and v.passed, (name, v.value, v.tolerance)


class TestHeatEngine:
    def test_without_drive_no_work(self):
        cfg = variant("e4", model__system__drives__0__profile={"knots": [[0.0, 2.0], [1.0, 2.0]]},
                      params__n_cycles=4, params__late_cycles=2)
        res = run_heat_engine(cfg)
        for c in res.cycles:
            assert abs(c.dA) < 1e-14
        assert not res.verdicts["engine.carnot"].applicable

    def test_reversed_temperatures_rejected(self):
        cfg = variant("e4", model__baths__0__beta=2.0, model__baths__1__beta=0.5)
        with pytest.raises(ValueError, match="hotter"):
            run_heat_engine(cfg)

    def test_bundled_cycle_reports(self, scenario):
        res = scenario("e4")
        assert len(res.cycles) == 30
        assert res.summary["engine_mode"]
        assert res.cycles[-1].work_output > 0
        assert res.summary["eta"] <= res.summary["eta_carnot"]
