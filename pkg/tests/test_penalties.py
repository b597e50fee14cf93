import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plaqr.penalties import (LASSO, MCP, SCAD, PenaltySpec, concave_part, concave_part_deriv,
                             penalty, penalty_deriv)

scad = PenaltySpec(SCAD, 1.0)
mcp = PenaltySpec(MCP, 1.0)

specs_st = st.builds(PenaltySpec, st.sampled_from([SCAD, MCP]), st.floats(0.05, 5.0))


def test_defaults_and_validation():
    assert scad.a == 3.7 and mcp.a == 3.0 and PenaltySpec(LASSO, 1.0).a is None
    with pytest.raises(ValueError):
        PenaltySpec(SCAD, 1.0, a=2.0)
    with pytest.raises(ValueError):
        PenaltySpec(MCP, 1.0, a=1.0)
    with pytest.raises(ValueError):
        PenaltySpec(SCAD, -1.0)
    with pytest.raises(ValueError):
        PenaltySpec("ridge", 1.0)


def test_penalty_hand_values():
    assert penalty(scad, 0.5) == pytest.approx(0.5)
    assert penalty(scad, 2.0) == pytest.approx(4.9 / 2.7)
    assert penalty(scad, -2.0) == pytest.approx(1.814815, abs=1e-6)
    assert penalty(mcp, 4.0) == pytest.approx(1.5)
    assert penalty(PenaltySpec(LASSO, 0.3), -2.0) == pytest.approx(0.6)


def test_derivative_hand_values():
    assert penalty_deriv(scad, 0.0) == 1.0
    assert penalty_deriv(scad, 5.0) == 0.0
    assert penalty_deriv(mcp, 1.5) == pytest.approx(0.5)
    assert penalty_deriv(PenaltySpec(LASSO, 0.4), 10.0) == 0.4


def test_concave_part_hand_values():
    assert concave_part(scad, 0.5) == 0.0 and concave_part_deriv(scad, 0.5) == 0.0
    # middle branch at 2: (b - lam)^2 / (2(a-1)) = 1/5.4, which is what the
    # identity with the penalty forces
    assert concave_part(scad, 2.0) == pytest.approx(1 / 5.4)
    assert concave_part(scad, 2.0) == pytest.approx(2.0 - penalty(scad, 2.0))
    assert concave_part_deriv(scad, 2.0) == pytest.approx(0.370370, abs=1e-6)
    assert concave_part(mcp, 1.0) == pytest.approx(1 / 6)
    assert concave_part_deriv(mcp, 1.0) == pytest.approx(1 / 3)
    assert np.all(concave_part(PenaltySpec(LASSO, 1.0), np.linspace(-3, 3, 7)) == 0.0)


@pytest.mark.parametrize("spec", [scad, mcp, PenaltySpec(SCAD, 0.3, 5.0), PenaltySpec(MCP, 2.0, 1.5)])
def test_decomposition_identity_on_grid(spec):
    b = np.linspace(-3 * spec.a * spec.lam, 3 * spec.a * spec.lam, 10_001)
    assert np.max(np.abs(penalty(spec, b) - (spec.lam * np.abs(b) - concave_part(spec, b)))) < 1e-12


@given(specs_st)
def test_continuity_at_branch_points(spec):
    for k in (spec.lam, spec.a * spec.lam):
        h = 1e-11 * max(1.0, k)
        for f in (penalty, penalty_deriv, concave_part, concave_part_deriv):
            assert abs(f(spec, k - h) - f(spec, k + h)) < 1e-10 * max(1.0, k)


@given(specs_st, st.floats(0.0, 1.0))
def test_derivatives_match_finite_differences(spec, u):
    b = u * 1.5 * spec.a * spec.lam
    h = 1e-7 * max(1.0, b)
    if min(abs(b - spec.lam), abs(b - spec.a * spec.lam), b) < 2 * h:
        return
    fd = (penalty(spec, b + h) - penalty(spec, b - h)) / (2 * h)
    assert fd == pytest.approx(penalty_deriv(spec, b), abs=1e-6)
    fd = (concave_part(spec, b + h) - concave_part(spec, b - h)) / (2 * h)
    assert fd == pytest.approx(concave_part_deriv(spec, b), abs=1e-6)
    assert concave_part_deriv(spec, -b) == pytest.approx(-concave_part_deriv(spec, b))


@given(specs_st, st.lists(st.floats(-20, 20), min_size=2, max_size=2), st.floats(0, 1))
def test_parts_are_convex(spec, ends, t):
    x, y = ends
    m = t * x + (1 - t) * y
    assert concave_part(spec, m) <= t * concave_part(spec, x) + (1 - t) * concave_part(spec, y) + 1e-9
    # and the penalty itself is concave on the half-line
    x, y, m = abs(x), abs(y), t * abs(x) + (1 - t) * abs(y)
    assert penalty(spec, m) >= t * penalty(spec, x) + (1 - t) * penalty(spec, y) - 1e-9


@given(specs_st, st.floats(1.0001, 50.0))
def test_flat_beyond_a_lambda(spec, c):
    b = c * spec.a * spec.lam
    assert penalty_deriv(spec, b) == 0.0
    assert penalty(spec, b) == pytest.approx(penalty(spec, spec.a * spec.lam))


@given(specs_st, st.floats(0, 100))
def test_derivative_in_range_and_monotone_penalty(spec, b):
    d = penalty_deriv(spec, b)
    assert 0.0 <= d <= spec.lam
    assert penalty(spec, b + 0.1) >= penalty(spec, b) - 1e-12
