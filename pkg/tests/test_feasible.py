import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import BOX, POTENTIALS
from gcdual import (
    FeasibilityVerdict,
    MacroState,
    SlabDescription,
    TruncationWarning,
    generator_points,
    ideal_gas,
    membership,
    per_n_stability,
    rough_bound_check,
    slab,
    witness_holds,
)

N_MAX = 16


def lower_envelope(n_max, L):
    """Lower convex envelope of (n, -n L_n) at integer n, by brute force over pairs."""
    pts = [(0, 0.0)] + [(n, -n * L[n - 1]) for n in range(1, n_max + 1) if np.isfinite(L[n - 1])]

    def env(N):
        best = math.inf
        for n0, h0 in pts:
            for n1, h1 in pts:
                if n0 <= N <= n1 and n1 > n0:
                    best = min(best, h0 + (h1 - h0) * (N - n0) / (n1 - n0))
                elif n0 == n1 == N:
                    best = min(best, h0)
        return best

    return env


def test_slab_contains():
    s = SlabDescription(3, 2.0, 8.0)
    assert s.H_min == -6.0
    assert s.contains(3, (0, 0, 0), -6.0) and not s.contains(3, (0, 0, 0), -6.1)
    # |P|^2 <= 2 n (H + n L)
    assert s.contains(3, (6.0, 0, 0), 0.0) and not s.contains(3, (6.1, 0, 0), 0.0)
    assert not s.contains(2, (0, 0, 0), 0.0)
    assert SlabDescription(0, 0.0).contains(0, (0, 0, 0), 0.0)
    assert SlabDescription(2, -math.inf).empty
    assert SlabDescription.from_dict(s.to_dict()) == s


def test_slab_uses_per_n_stability():
    sw = POTENTIALS["square_well"]
    assert slab(sw, BOX, 2).L_n == pytest.approx(per_n_stability(sw, BOX, 2))
    assert slab(ideal_gas(), BOX, 4).H_min == 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1.5), st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(0.1, 3.0))
def test_ideal_gas_hull_is_the_kinetic_paraboloid(rho, u, excess):
    # the hull is rho > 0, E >= |u|^2 / (2 rho), truncated at n_max
    u = np.asarray(u) * rho
    kin = float(u @ u) / (2 * rho)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        inside = membership(MacroState(rho, u, kin + excess * rho), ideal_gas(), BOX, n_max=N_MAX)
        outside = membership(MacroState(rho, u, kin - excess * rho), ideal_gas(), BOX, n_max=N_MAX)
    assert inside.status == "interior" and inside.margin > 0
    assert outside.status == "exterior" and outside.margin < 0


def test_square_well_energy_floor():
    sw = POTENTIALS["square_well"]
    L = [per_n_stability(sw, BOX, n) for n in range(1, N_MAX + 1)]
    env = lower_envelope(N_MAX, L)
    V = BOX.volume
    for N in (1.5, 3.0, 5.5, 9.0):
        floor = env(N) / V
        rho = N / V
        gap = 0.05 * abs(floor) + 0.05
        assert membership(MacroState(rho, (0, 0, 0), floor + gap), sw, BOX, n_max=N_MAX).status == "interior"
        v = membership(MacroState(rho, (0, 0, 0), floor - gap), sw, BOX, n_max=N_MAX)
        assert v.status == "exterior"
        gens = generator_points(sw, BOX, N_MAX)
        assert witness_holds(v, MacroState(rho, (0, 0, 0), floor - gap), gens)


def test_exterior_witness_separates_generators():
    x = MacroState(0.5, (0.3, -0.2, 0.1), 0.05)
    v = membership(x, ideal_gas(), BOX, n_max=N_MAX)
    assert v.status == "exterior" and v.witness.shape == (5,) and v.witness[4] > 0
    assert witness_holds(v, x, generator_points(ideal_gas(), BOX, N_MAX, seed=3))


def test_boundary_band():
    x = MacroState(0.5, (0, 0, 0), 1e-9)
    assert membership(x, ideal_gas(), BOX, n_max=N_MAX, tol=1e-6).status == "boundary"


def test_truncation_warning():
    with pytest.warns(TruncationWarning):
        membership(MacroState(N_MAX / BOX.volume, (0, 0, 0), 5.0), ideal_gas(), BOX, n_max=N_MAX)


def test_stability_override():
    # a deeper floor makes a point interior
    sw = POTENTIALS["square_well"]
    x = MacroState(0.25, (0, 0, 0), -20.0)
    assert membership(x, sw, BOX, n_max=N_MAX).status == "exterior"
    deep = np.full(N_MAX, 400.0)
    assert membership(x, sw, BOX, n_max=N_MAX, stability=deep).status == "interior"


def test_rough_bound_check():
    sw = POTENTIALS["square_well"]
    assert not rough_bound_check(MacroState(0.0, (0, 0, 0), 1.0), sw)
    assert rough_bound_check(MacroState(0.1, (0, 0, 0), -0.1 * sw.stability_L), sw)
    assert not rough_bound_check(MacroState(0.1, (0, 0, 0), -0.1 * sw.stability_L - 1e-9), sw)


def test_verdict_round_trip():
    v = membership(MacroState(0.5, (0.3, 0, 0), 0.01), ideal_gas(), BOX, n_max=N_MAX)
    back = FeasibilityVerdict.from_dict(v.to_dict())
    assert back.to_dict() == v.to_dict()
