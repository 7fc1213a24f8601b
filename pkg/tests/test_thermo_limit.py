import math

import numpy as np
import pytest

from gcdual import (
    ConfigError,
    ConvergenceRecord,
    HomeomorphismReport,
    MacroState,
    RegionError,
    ThermoParams,
    analyticity_bound,
    box_sequence,
    conjugacy_tolerance,
    domain_estimate,
    entropy_limit,
    get_model,
    hard_spheres,
    homeomorphism_check,
    ideal_gas,
    parameter_convergence,
    pressure_estimate,
)
from gcdual.dual import ideal_gas_closed_form
from gcdual.thermo_limit import PressureSequence, _extrapolate, _extrapolate_vectors


def test_box_sequence():
    seq = box_sequence(1, 3, R0=0.25, rho_exp=0.5)
    assert seq.levels == (1, 2, 3)
    assert seq.box(2).sides == (4.0, 4.0, 4.0) and seq.box(2).margin == pytest.approx(0.5)
    assert seq.inner(2).sides == (3.0, 3.0, 3.0)
    with pytest.raises(ConfigError):
        box_sequence(3, 1)
    with pytest.raises(ConfigError):
        box_sequence(1, 2, rho_exp=1.0)
    with pytest.raises(ConfigError):
        box_sequence(0, 1, R0=0.5)


def test_extrapolation_is_exact_on_geometric_sequences():
    v = 2.0 + 3.0 * 2.0 ** (-1.5 * np.arange(5))
    lim, p = _extrapolate(v)
    assert lim == pytest.approx(2.0, rel=1e-12) and p == pytest.approx(1.5, rel=1e-12)
    rows = np.outer(2.0 ** -np.arange(4), np.ones(5)) + 1.0
    lim, p = _extrapolate_vectors(rows)
    assert np.allclose(lim, 1.0) and p == pytest.approx(1.0)
    # no geometric decay: report the last member
    assert _extrapolate(np.array([1.0, 2.0, 4.0])) == (4.0, None)


def test_ideal_gas_pressure_is_volume_independent():
    p = ThermoParams(-1.0, (0.2, 0, 0), -1.3)
    ps = pressure_estimate(ideal_gas(), p, box_sequence(0, 3))
    assert np.allclose(ps.phi, ps.phi[0], rtol=1e-14) and ps.xi == pytest.approx(ps.phi[0])
    back = PressureSequence.from_dict(ps.to_dict())
    assert back.to_dict() == ps.to_dict()


def test_ideal_gas_parameter_convergence_record():
    x = MacroState(0.8, (0.1, 0, 0), 1.3)
    rec = parameter_convergence(x, ideal_gas(), box_sequence(0, 2))
    ref = ideal_gas_closed_form(x).as_vector()
    assert rec.solved_levels() == [0, 1, 2] and not rec.failures
    assert all(np.allclose(p.as_vector(), ref, atol=1e-9) for p in rec.params)
    assert np.all(rec.cauchy_diffs < 1e-9)
    rows = rec.rows()
    assert len(rows) == 3 and len(rows[0]) == 10 and math.isnan(rows[0][-1])
    assert rows[2][1] == 64.0
    back = ConvergenceRecord.from_dict(rec.to_dict())
    assert back.to_dict() == rec.to_dict()


def test_infeasible_levels_are_recorded():
    # negative kinetic excess is infeasible at every volume
    rec = parameter_convergence(MacroState(0.5, (0.5, 0, 0), 0.1), ideal_gas(), box_sequence(0, 1))
    assert rec.solved_levels() == [] and set(rec.failures) == {0, 1} and rec.limit is None
    assert ConvergenceRecord.from_dict(rec.to_dict()).failures.keys() == {0, 1}


def test_domain_estimate_for_ideal_gas():
    dom = domain_estimate(ideal_gas(), box_sequence(0, 1))
    assert dom.contains(MacroState(0.5, (0.2, 0, 0), 0.5))
    assert not dom.contains(MacroState(0.5, (0.2, 0, 0), 0.01))
    assert not dom(MacroState(0.0, (0, 0, 0), 1.0))


def test_ideal_gas_entropy_limit():
    seq = box_sequence(0, 1)
    param_axes = [np.linspace(-4.0, -2.0, 17)] + [np.linspace(-0.2, 0.2, 5)] * 3 + [np.linspace(-1.4, -0.6, 17)]
    macro_axes = [np.array([0.8, 1.0]), np.zeros(1), np.zeros(1), np.zeros(1), np.array([1.4, 1.6])]
    s = entropy_limit(ideal_gas(), macro_axes, seq, param_axes)
    model = get_model(ideal_gas(), seq.box(1))
    spacing = [a[1] - a[0] for a in param_axes]
    for i, rho in enumerate(macro_axes[0]):
        for j, E in enumerate(macro_axes[4]):
            x = MacroState(rho, (0, 0, 0), E)
            theta = ideal_gas_closed_form(x).as_vector()
            exact = -(theta @ x.as_vector() - rho)
            tol = conjugacy_tolerance(spacing, np.diag(model.evaluate(theta).hessian))
            got = s.values[i, 0, 0, 0, j]
            # the grid maximum never exceeds the true supremum
            assert exact - 1e-12 <= got <= exact + tol


def test_homeomorphism_report():
    seq = box_sequence(0, 1)
    rep = homeomorphism_check(ideal_gas(), [ThermoParams(-1.0, (0, 0, 0), -1.0),
                                            ThermoParams(-1.5, (0.1, 0, 0), -0.8)], seq)
    assert rep.passed and rep.level == 1 and rep.images.shape == (2, 5)
    back = HomeomorphismReport.from_dict(rep.to_dict())
    assert back.to_dict() == rep.to_dict()


def test_region_error_above_analyticity_bound():
    hs = hard_spheres(0.5)
    bound = analyticity_bound(hs, (0, 0, 0), -1.0).mu_max
    with pytest.raises(RegionError):
        homeomorphism_check(hs, [ThermoParams(bound + 0.5, (0, 0, 0), -1.0)], box_sequence(0, 1))
