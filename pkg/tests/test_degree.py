import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_p1
from oracles import winding_number
from posorbit.degree import (DegreeResult, Rectangle, annulus_degree, averaged_field, poincare_residual_degree,
                             small_ball_degree, winding_degree)
from posorbit.errors import BoundaryBlowup, NotNested, Uncertified, ZeroOnBoundary
from posorbit.fields import identity_h, power_g, pt_power_h
from posorbit.flow import SystemInstance, constant_weight

UNIT = Rectangle.square(1.0)


def cpow(k):
    def F(z):
        w = complex(z[0], z[1]) ** k
        return (w.real, w.imag)
    return F


def negative_weight_system():
    return SystemInstance(identity_h(), power_g(3.0), constant_weight(-1.0, 1.0), 50.0)


# ---------------------------------------------------------------------------- rectangle

def test_rectangle_boundary_walk():
    box = Rectangle((1.0, -1.0), (2.0, 0.5))
    assert box.perimeter == pytest.approx(10.0)
    assert box.point(0.0) == pytest.approx((3.0, -1.0))
    corners = [box.point(s) for s in box.corners_s()]
    assert corners == [pytest.approx(c) for c in [(3.0, -0.5), (-1.0, -0.5), (-1.0, -1.5), (3.0, -1.5)]]
    assert Rectangle.square(0.5).strictly_inside(UNIT)
    assert not UNIT.strictly_inside(UNIT)
    with pytest.raises(ValueError):
        Rectangle((0, 0), (0.0, 1.0))


# ---------------------------------------------------------------------------- winding engine

@pytest.mark.parametrize("k", [1, 2, 3])
def test_power_maps(k):
    res = winding_degree(cpow(k), UNIT)
    assert res.certified and res.degree == k == winding_number(cpow(k))


def test_reflection_and_composition():
    refl = lambda z: (z[0], -z[1])
    assert winding_degree(refl, UNIT).degree == -1
    comp = lambda z: cpow(2)(refl(z))
    assert winding_degree(comp, UNIT).degree == -2 == winding_number(comp)


def test_random_linear_maps_give_sign_det():
    rng = np.random.default_rng(7)
    for _ in range(20):
        M = rng.normal(size=(2, 2))
        while abs(np.linalg.det(M)) < 1e-2:
            M = rng.normal(size=(2, 2))
        res = winding_degree(lambda z: M @ np.asarray(z), Rectangle.square(rng.uniform(0.1, 3.0)))
        assert res.certified and res.degree == int(np.sign(np.linalg.det(M)))


@settings(max_examples=30, deadline=None)
@given(m=st.lists(st.floats(-5, 5), min_size=4, max_size=4),
       cu=st.floats(-2, 2), cv=st.floats(-2, 2), ru=st.floats(0.05, 3), rv=st.floats(0.05, 3))
def test_linear_degree_matches_containment(m, cu, cv, ru, rv):
    M = np.array(m).reshape(2, 2)
    box = Rectangle((cu, cv), (ru, rv))
    if abs(np.linalg.det(M)) < 1e-2 or min(ru - abs(cu), rv - abs(cv), abs(abs(cu) - ru), abs(abs(cv) - rv)) < 1e-3:
        return
    res = winding_degree(lambda z: M @ np.asarray(z), box)
    want = int(np.sign(np.linalg.det(M))) if box.contains_point((0.0, 0.0)) else 0
    assert res.degree == want


def test_refinement_doubling_preserves_degree():
    F = lambda z: (z[0] ** 3 - 3 * z[0] * z[1] ** 2 + 0.1, 3 * z[0] ** 2 * z[1] - z[1] ** 3 - 0.05)
    a = winding_degree(F, UNIT, max_points=512, init_points=64)
    b = winding_degree(F, UNIT, max_points=1024, init_points=128)
    assert a.certified and b.certified and a.degree == b.degree == 3


def test_zero_on_boundary():
    with pytest.raises(ZeroOnBoundary):
        winding_degree(lambda z: (z[0] - 1.0, z[1]), UNIT)


def test_uncertified_when_points_run_out():
    with pytest.raises(Uncertified) as ei:
        winding_degree(cpow(20), UNIT, max_points=64)
    assert ei.value.result is not None and not ei.value.result.certified
    assert winding_degree(cpow(20), UNIT, max_points=4096).degree == 20
    with pytest.raises(ValueError):
        winding_degree(cpow(1), UNIT, max_points=10)


def test_samples_csv(tmp_path):
    res = winding_degree(cpow(1), UNIT)
    path = tmp_path / "b.csv"
    res.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "s,u,v,Fu,Fv" and len(lines) == res.points_used + 1
    d = res.to_dict(with_samples=True)
    assert d["winding"] == pytest.approx(1.0) and len(d["samples"]) == res.points_used


# ---------------------------------------------------------------------------- averaged field

def test_averaged_field_examples():
    F = averaged_field(make_p1())
    assert F((0.5, 0.0))[1] == pytest.approx(50 * (-0.3) * 0.125)
    assert F((-2.0, 0.0))[1] == 2.0
    assert F((0.0, 0.7))[0] == pytest.approx(-0.7)
    sys = make_p1().with_(h=pt_power_h(3.0, 1.0))
    assert averaged_field(sys).h_sharp(1.0) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("r0", [1e-3, 1e-1, 0.5, 1.0])
def test_small_ball_degree_is_minus_one(r0):
    res = small_ball_degree(make_p1(), r0)
    assert res.certified and res.degree == -1


def test_positive_mean_changes_degree():
    res = small_ball_degree(make_p1(offset=0.3), 0.5)
    assert res.certified and res.degree != -1


# ---------------------------------------------------------------------------- Poincare residual

@pytest.mark.parametrize("r", [1e-2, 0.1])
def test_rest_point_index_matches_averaged_field(r):
    sys = negative_weight_system()
    p = poincare_residual_degree(sys, Rectangle.square(r), tol=1e-9)
    assert p.certified and p.degree == small_ball_degree(sys, r).degree


def test_boundary_blowup_is_reported():
    with pytest.raises(BoundaryBlowup):
        poincare_residual_degree(negative_weight_system(), Rectangle.square(0.5), tol=1e-9)


def test_p1_small_box_poincare_degree():
    p = poincare_residual_degree(make_p1(), Rectangle.square(1e-2), tol=1e-9)
    assert p.certified and p.degree == -1


# ---------------------------------------------------------------------------- annulus

def _fake(deg, r, certified=True):
    return DegreeResult(deg, 1.0, 64, certified, 2 * math.pi * deg, Rectangle.square(r))


def test_annulus_examples():
    assert annulus_degree(_fake(-1, 0.1), _fake(0, 1.0)) == 1
    assert annulus_degree(_fake(1, 0.1), _fake(1, 1.0)) == 0
    with pytest.raises(NotNested):
        annulus_degree(_fake(-1, 0.1, certified=False), _fake(0, 1.0))
    with pytest.raises(NotNested):
        annulus_degree(_fake(-1, 1.0), _fake(0, 1.0))
