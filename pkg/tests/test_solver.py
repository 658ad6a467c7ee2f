import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import P1_ORBIT_Z0, make_p1
from oracles import p1_sigma
from posorbit.errors import SeedInvalid, SingularJacobian
from posorbit.fields import identity_h, power_g
from posorbit.flow import SystemInstance, constant_weight, harmonic_oscillator
from posorbit.solver import (StartGrid, StepPolicy, _dedupe, continue_lambda, multistart_solve, newton_periodic,
                             nonexistence_probe, orbit_from_point, probe_r0)

# z0 of the P1 orbit at lambda = 50 to ten digits; h = id, g = u^3 scale as z0(lam) = sqrt(50/lam) z0(50)
Z0_50 = np.array([0.4125177318, 0.5360553654])


def scaled_z0(lam):
    return math.sqrt(50.0 / lam) * Z0_50


# ---------------------------------------------------------------------------- Newton

def test_trivial_orbit(p1):
    o = newton_periodic(p1, (0.0, 0.0))
    assert o.trivial and o.residual_norm == 0.0 and o.newton_iters == 0


def test_harmonic_oscillator_is_singular():
    with pytest.raises(SingularJacobian):
        newton_periodic(harmonic_oscillator(), (1.0, 0.0))


def test_tolerance_range(p1):
    with pytest.raises(ValueError):
        newton_periodic(p1, P1_ORBIT_Z0, tol=1e-3)


def test_p1_orbit(p1_orbit):
    o = p1_orbit
    assert np.allclose(o.z0, Z0_50, atol=1e-8)
    assert o.residual_norm < 1e-9 and o.confirm_residual < 1e-9
    assert o.strong_ok and o.min_u > 0
    assert o.max_u == pytest.approx(0.51374587, abs=1e-7)
    assert p1_sigma() < o.argmax_t < 0.5 - p1_sigma()
    assert o.positivity["argmax_in_Jn"] and o.positivity["first_order_ok"]
    assert o.index == 1


def test_orbit_balances_weighted_nonlinearity(p1, p1_orbit):
    # one period of v' = -lam a g(u) returns v to its start
    ts = np.linspace(0, 1, 20001)
    uu, _ = p1_orbit.trajectory.dense(ts)
    vals = p1.a.values(ts) * uu ** 3
    integral = float(np.sum((vals[1:] + vals[:-1]) * 0.5 * np.diff(ts)))
    assert abs(integral) < 1e-6


def test_negative_start_fails_weak_check(p1):
    o = orbit_from_point(p1, (-0.5, 0.0))
    assert not o.positivity["weak_ok"] and not o.strong_ok


def test_summary_keys(p1_orbit):
    s = p1_orbit.summary()
    assert set(s) == {"lambda", "u0", "v0", "residual", "min_u", "max_u", "argmax_t", "strong_ok", "tol"}


# ---------------------------------------------------------------------------- multistart

def test_multistart_p1(p1_multistart):
    ms = p1_multistart
    assert ms.starts == 256 and len(ms.positive) == 1
    assert np.allclose(ms.positive[0].z0, Z0_50, atol=1e-8)
    assert ms.trivial is not None and ms.trivial.trivial
    assert sum(ms.failures.values()) <= ms.starts


def test_multistart_positive_mean(p1_plus_multistart):
    assert p1_plus_multistart.starts >= 256 and not p1_plus_multistart.positive


def test_multistart_negative_weight():
    sys = SystemInstance(identity_h(), power_g(3.0), constant_weight(-1.0, 1.0), 50.0)
    ms = multistart_solve(sys, StartGrid((0.0, 1.0), (-1.0, 1.0), (4, 4)))
    assert not ms.orbits


def test_start_grid():
    pts = StartGrid((0, 1), (-1, 1), (4, 5)).points()
    assert len(pts) == 20
    with pytest.raises(ValueError):
        StartGrid((0, 1), (-1, 1), (2, 5)).points()


@settings(max_examples=20, deadline=None)
@given(st.permutations(list(range(4))))
def test_dedupe_is_order_independent(p1_orbit, perm):
    import copy
    copies = []
    for k, dz in enumerate([0.0, 1e-9, 0.2, 0.2 + 1e-9]):
        o = copy.copy(p1_orbit)
        o.z0 = (o.z0[0] + dz, o.z0[1])
        o.max_u = p1_orbit.max_u + dz
        copies.append(o)
    out = _dedupe([copies[i] for i in perm])
    assert [o.z0 for o in out] == [copies[0].z0, copies[2].z0]


# ---------------------------------------------------------------------------- continuation

@pytest.mark.parametrize("lam_end", [200.0, 5.0])
def test_continuation_matches_scaling(p1, p1_orbit, lam_end):
    br = continue_lambda(p1, p1_orbit, lam_end)
    assert br.reason == "range end" and br.lambdas[-1] == pytest.approx(lam_end)
    for lam, o in br.points:
        assert o.strong_ok
        assert np.allclose(o.z0, scaled_z0(lam), atol=1e-8)
    lams = br.lambdas
    assert all(np.sign(lam_end - 50) * (b - a) > 0 for a, b in zip(lams, lams[1:]))


def test_continuation_seed_checks(p1, p1_orbit):
    with pytest.raises(SeedInvalid):
        continue_lambda(p1, None, 100.0)
    with pytest.raises(SeedInvalid):
        continue_lambda(p1, newton_periodic(p1, (0.0, 0.0)), 100.0)
    with pytest.raises(SeedInvalid):
        continue_lambda(p1.with_(lam=60.0), p1_orbit, 100.0)
    br = continue_lambda(p1, p1_orbit, 50.0, StepPolicy())
    assert len(br.points) == 1 and br.reason == "range end"


# ---------------------------------------------------------------------------- probes

def test_probe_finds_known_orbit(p1, p1_orbit):
    res = nonexistence_probe(p1, p1_orbit.max_u, theta_grid=(1.0,), band=0.05)
    assert not res.negative
    t_star, r_peak, _ = res.witnesses[1.0][0]
    assert r_peak == pytest.approx(p1_orbit.max_u, abs=1e-7)


def test_probe_is_negative_near_zero(p1):
    res = nonexistence_probe(p1, 1e-3)
    assert res.negative and set(res.found) == {0.25, 0.5, 0.75, 1.0}
    with pytest.raises(ValueError):
        nonexistence_probe(p1, 1e-3, theta_grid=(0.0,))


def test_probe_r0(p1):
    r, log = probe_r0(p1)
    assert r == pytest.approx(1e-2) and log[-1].negative
