"""Problem registry checks: exact solutions, residual oracles, priors,
boundary data, numerical stability of the closed forms."""

import math

import numpy as np
import pytest

from spinnlab import autodiff as ad
from spinnlab.errors import UnknownProblemError
from spinnlab.problems import (PROBLEM_NAMES, exact_ex1, exact_ex2, exact_intro,
                               get_problem, ode_test_grid, prior_for,
                               residual_of_exact)

# frozen from 50-digit evaluations of the closed forms
EX1_MID = 1.0066928509242849
EX2_MID = 1.6306068646851072
INTRO_MID = 0.61061743115109749


def test_exact_ex1_values():
    assert exact_ex1(0.0, 0.1) == 0.0
    assert abs(exact_ex1(1.0, 0.1) - 1.0) < 1e-14
    assert abs(exact_ex1(0.5, 0.1) - EX1_MID) < 1e-12


def test_exact_ex2_values():
    assert exact_ex2(0.0, 0.1) == 0.0
    assert abs(exact_ex2(1.0, 0.1) - 1.0) < 1e-14
    assert abs(exact_ex2(0.5, 0.1) - EX2_MID) < 1e-12


def test_exact_intro_values():
    eps = 0.1
    assert abs(exact_intro(1.0, eps) - (1.0 + math.exp(-1.0))) < 1e-15
    assert abs(exact_intro(0.0, eps) - (1.0 + math.exp(-(1.0 + eps) / eps))) < 1e-15
    assert abs(exact_intro(0.5, eps) - INTRO_MID) < 1e-14


@pytest.mark.parametrize("name", ["ex1", "ex2", "intro"])
def test_residual_oracle_moderate_epsilon(name, rng):
    """|residual(exact)| < 1e-8 at 1000 random interior points, eps = 0.1."""
    prob = get_problem(name, 0.1)
    xs = rng.uniform(1e-6, 1.0 - 1e-6, 1000)
    assert np.abs(residual_of_exact(prob, xs)).max() < 1e-8


@pytest.mark.parametrize("name", ["ex1", "ex2", "intro"])
def test_residual_oracle_small_epsilon(name, rng):
    """eps = 1e-3: < 1e-6 away from the layer, < 1e-3 inside it."""
    eps = 1e-3
    prob = get_problem(name, eps)
    a = prob.priors[0].position
    xs = rng.uniform(0.0, 1.0, 3000)
    far = xs[np.abs(xs - a) > 10 * eps][:1000]
    near = xs[np.abs(xs - a) <= 10 * eps]
    assert np.abs(residual_of_exact(prob, far)).max() < 1e-6
    if len(near):
        assert np.abs(residual_of_exact(prob, near)).max() < 1e-3


def test_exact_solutions_honor_dirichlet_data():
    for name in ("ex1", "ex2", "intro"):
        prob = get_problem(name, 1e-3)
        for face in prob.dirichlet:
            want = float(ad.value_of(face.trace([None])))
            got = float(np.asarray(ad.value_of(
                prob.exact([np.array([face.position])]))).item())
            assert abs(got - want) < 1e-14


def test_stable_evaluators_tiny_epsilon():
    """No overflow for eps down to 1e-6 (negative exponents only)."""
    xs = np.linspace(0.0, 1.0, 1001)
    with np.errstate(over="raise"):
        for name in ("ex1", "ex2", "intro"):
            prob = get_problem(name, 1e-6)
            vals = np.asarray(ad.value_of(prob.exact([xs])))
            assert np.all(np.isfinite(vals))


def test_zero_bundle_residuals():
    """All-zero function: homogeneous problems vanish, ex1 leaves -forcing."""
    zero = ad.DerivativeBundle(0.0, [0.0, 0.0], [0.0, 0.0])
    prob3 = get_problem("ex3")
    assert prob3.residual([0.3, 0.4], zero) == 0.0
    eps = 0.1
    prob1 = get_problem("ex1", eps)
    x = 0.3
    zero1 = ad.DerivativeBundle(0.0, [0.0], [0.0])
    want = -(eps * math.pi**2 * math.sin(math.pi * x) + math.pi * math.cos(math.pi * x))
    assert abs(prob1.residual([x], zero1) - want) < 1e-15


def test_residual_of_exact_bundle_values():
    """Example-1 exact bundle at x = 0.5 drives the residual below 1e-8."""
    prob = get_problem("ex1", 0.1)
    assert abs(residual_of_exact(prob, [0.5])[0]) < 1e-8


PRIOR_TABLE = {
    "ex1": (0, 1.0, 1.0),
    "ex2": (0, 0.0, 1.0),
    "ex3": (0, 1.0, 1.0),
    "ex4": (1, 0.0, 1.0),
    "ex5": (0, 0.0, 1.0),
    "ex6": (0, 1.0, 1.0),
}


@pytest.mark.parametrize("name,expect", sorted(PRIOR_TABLE.items()))
def test_prior_table(name, expect):
    (prior,) = prior_for(name)
    assert (prior.normal_dim, prior.position, prior.decay) == expect


def test_intro_prior_decay_tracks_epsilon():
    (prior,) = prior_for("intro", 0.01)
    assert prior.normal_dim == 0 and prior.position == 1.0
    assert abs(prior.decay - 1.01) < 1e-15
    assert abs(float(prior.trace([])) - (1.0 + math.exp(-1.0))) < 1e-15


def test_prior_traces():
    ys = np.array([[0.25], [0.5]])
    (p3,) = prior_for("ex3")
    np.testing.assert_allclose(np.asarray(p3.trace([ys])).reshape(-1),
                               2.0 * np.sin(np.pi * ys[:, 0]), rtol=1e-15)
    (p4,) = prior_for("ex4")
    np.testing.assert_allclose(np.asarray(p4.trace([ys])).reshape(-1),
                               2.0 * np.sin(np.pi * ys[:, 0]), rtol=1e-15)
    (p5,) = prior_for("ex5")
    assert p5.trace([ys]) == 0.0


def test_unknown_problem():
    with pytest.raises(UnknownProblemError) as exc:
        get_problem("ex9")
    assert "ex9" in str(exc.value)
    assert "ex1" in str(exc.value)


def test_every_face_has_one_dirichlet_trace():
    for name in PROBLEM_NAMES:
        prob = get_problem(name)
        seen = {(f.dim, f.position) for f in prob.dirichlet}
        if prob.domain == "interval":
            assert seen == {(0, 0.0), (0, 1.0)}
        elif prob.domain == "square":
            assert seen == {(0, 0.0), (0, 1.0), (1, 0.0), (1, 1.0)}
        else:
            assert seen == {(0, 0.0), (0, 1.0)}
            assert prob.initial is not None and prob.initial.dim == prob.time_dim


def test_ode_test_grid_layout():
    prob = get_problem("ex1", 1e-3)
    pts, vals = ode_test_grid(prob)
    assert pts.shape == (2001, 1)
    assert len(vals) == 2001
    xs = pts[:, 0]
    assert np.all(np.diff(xs) >= 0.0)
    assert xs[0] == 0.0 and xs[-1] == 1.0
    # a thousand points sit within 0.5 of the layer, the closest at eps/100
    near = xs[np.abs(xs - 1.0) <= 0.5 + 1e-12]
    assert len(near) >= 1000
    dist = np.abs(xs - 1.0)
    assert np.isclose(dist[dist > 0].min(), 1e-3 / 100)
