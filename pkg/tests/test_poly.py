import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rltconic.instances import random_problem
from rltconic.poly import (ParseError, Polynomial, Sense, check_feasible, evaluate, parse_problem,
                           write_problem)


def test_eq4_parses(eq4):
    assert eq4.names == ("x1", "x2", "x3", "x4")
    assert eq4.lower == (1.0, 0.0, 0.0, 0.0)
    assert eq4.upper == (10.0, 8.0, 15.0, 7.0)
    assert eq4.degree == 3
    assert eq4.objective.as_dict() == {(0, 0): 1.0, (1, 1): 1.0, (0, 1, 2): 1.0}
    (c,) = eq4.constraints
    assert c.sense is Sense.GE and c.rhs == 1.0
    assert c.poly.as_dict() == {(0, 1): 1.0, (0, 3): 1.0}


def test_eq4_optimum_point(eq4):
    x = [1.0, 0.0, 0.0, 1.0]
    assert check_feasible(eq4, x)
    assert evaluate(eq4.objective, x) == 1.0


def test_canonical_form_merges_terms():
    p = Polynomial({(1, 0): 2.0, (0, 1): 3.0, (2,): 0.0})
    assert p.as_dict() == {(0, 1): 5.0}


def test_max_and_le_are_normalised():
    prob = parse_problem("var x in [0, 2]\nvar y in [0, 1]\nmax: x*y\nst c: x + y <= 2\n")
    assert prob.maximize
    assert prob.objective.as_dict() == {(0, 1): -1.0}
    (c,) = prob.constraints
    assert c.sense is Sense.GE and c.rhs == -2.0
    assert prob.objective_value([2.0, 1.0]) == 2.0


@pytest.mark.parametrize("text", [
    "var x in [0, 1]\n",                           # no objective
    "var x in [0, 1]\nmin: x*y\n",                 # undeclared variable
    "var x in [2, 1]\nmin: x\n",                   # reversed bounds
    "var x in [-1, 1]\nmin: x\n",                  # negative lower bound
    "var x in [0, 1]\nmin: x +\n",                 # dangling operator
    "var x in [0, inf]\nmin: x\n",                 # unbounded
])
def test_parse_errors(text):
    with pytest.raises((ParseError, ValueError)):
        parse_problem(text)


def test_feasibility_tolerance(eq4):
    assert not check_feasible(eq4, [1.0, 0.0, 0.0, 0.99])
    assert check_feasible(eq4, [1.0, 0.0, 0.0, 1.0 - 1e-9], tol=1e-6)
    with pytest.raises(ValueError):
        check_feasible(eq4, [1.0, 0.0, 0.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5), st.integers(1, 4))
def test_write_parse_roundtrip(seed, n, degree):
    prob = random_problem(seed, n=n, degree=degree, constraints=2)
    back = parse_problem(write_problem(prob))
    assert back.names == prob.names and back.lower == prob.lower and back.upper == prob.upper
    assert back.objective.as_dict() == prob.objective.as_dict()
    for a, b in zip(back.constraints, prob.constraints):
        assert a.poly.as_dict() == b.poly.as_dict() and a.rhs == b.rhs and a.sense is b.sense


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_arithmetic_matches_evaluation(seed):
    rng = np.random.default_rng(seed)
    a = random_problem(rng, n=3).objective
    b = random_problem(rng, n=3).objective
    x = rng.uniform(0, 2, size=3)
    assert math.isclose(evaluate(a + b, x), evaluate(a, x) + evaluate(b, x), abs_tol=1e-9)
    assert math.isclose(evaluate(a - b, x), evaluate(a, x) - evaluate(b, x), abs_tol=1e-9)
    assert math.isclose(evaluate(a.scale(-2.5), x), -2.5 * evaluate(a, x), abs_tol=1e-9)
