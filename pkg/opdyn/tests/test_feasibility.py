# Licensed to the Apache Software Foundation (ASF) under one
# or more contributor license agreements.  See the NOTICE file
# distributed with this work for additional information
# regarding copyright ownership.  The ASF licenses this file
# to you under the Apache License, Version 2.0 (the
# "License"); you may not use this file except in compliance
# with the License.  You may obtain a copy of the License at
#
#   http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing,
# software distributed under the License is distributed on an
# "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
# KIND, either express or implied.  See the License for the
# specific language governing permissions and limitations
# under the License.

import math

import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings
from hypothesis import strategies as st

from opdyn.exceptions import DimensionMismatch, InvalidParameter, Overflow, SolverFailure
from opdyn.operators import Dense, Diagonal, RankOneFix, Scalar
from opdyn.recurrence import (
    ball_return_feasibility,
    certify_recurrent_set,
    projected_gradient_feasibility,
)
from opdyn.sets import FiniteList, OnePlusInverse, Powers, ScalarFamily
from opdyn.space import Ball, Rng, Vector, norm, sample_array

moduli = st.complex_numbers(
    min_magnitude=1e-3, max_magnitude=3.0, allow_nan=False, allow_infinity=False
)


def _check_feasible(t, b, result):
    assert b.contains(result.z, slack=1e-12)
    assert result.value == pytest.approx(norm(Vector(t.matvec(result.z.coords)) - b.center))


@settings(max_examples=60, deadline=None)
@given(a=moduli, c=moduli, r=st.floats(min_value=0.01, max_value=2.0))
def test_scalar_ball_return_matches_closed_form(a, c, r):
    # a B(c, r) is the disc of radius |a| r around a c.
    t = Scalar(1, a)
    b = Ball(Vector([c]), r)
    result = ball_return_feasibility(t, b)
    expected = max(0.0, abs(a * c - c) - abs(a) * r)
    assert result.value == pytest.approx(expected, abs=1e-9)
    _check_feasible(t, b, result)


@settings(max_examples=20, deadline=None)
@given(a=moduli, c=moduli, seed=st.integers(min_value=0, max_value=2**32))
def test_scalar_ball_return_against_sampling(a, c, seed):
    t = Scalar(1, a)
    b = Ball(Vector([c]), 0.5)
    exact = ball_return_feasibility(t, b).value
    points = sample_array(b, Rng(seed), 4000)
    sampled = np.abs(a * points[:, 0] - c).min()
    assert exact <= sampled + 1e-12
    # Uniform samples in a disc land within a few percent of the radius of the optimum.
    assert sampled - exact <= 0.1 * abs(a)


@settings(max_examples=25, deadline=None)
@given(
    dim=st.integers(min_value=2, max_value=4),
    seed=st.integers(min_value=0, max_value=2**32),
    r=st.floats(min_value=0.05, max_value=1.0),
)
def test_dense_ball_return_against_projected_gradient(dim, seed, r):
    gen = np.random.default_rng(seed)
    m = gen.standard_normal((dim, dim)) + 1j * gen.standard_normal((dim, dim))
    t = Dense(m / math.sqrt(dim))
    b = Ball(Vector(gen.standard_normal(dim) + 1j * gen.standard_normal(dim)), r)
    exact = ball_return_feasibility(t, b)
    oracle = projected_gradient_feasibility(t, b)
    _check_feasible(t, b, exact)
    _check_feasible(t, b, oracle)
    assert exact.value <= oracle.value + 1e-9
    assert oracle.value - exact.value <= 0.05
    samples = sample_array(b, Rng(seed), 500)
    sampled = np.linalg.norm(samples @ t.to_matrix().T - b.center.coords, axis=1).min()
    assert exact.value <= sampled + 1e-9


def test_boundary_solution_with_singular_operator():
    t = Diagonal([0.5, 0.0])
    b = Ball(Vector([1.0, 1.0]), 0.1)
    result = ball_return_feasibility(t, b)
    assert result.value == pytest.approx(math.hypot(0.45, 1.0), rel=1e-9)
    _check_feasible(t, b, result)


def test_zero_operator_and_point_ball():
    b = Ball(Vector([3.0, 4.0]), 0.5)
    assert ball_return_feasibility(Scalar(2, 0.0), b).value == pytest.approx(5.0)
    point = Ball(Vector([1.0, 0.0]), 0.0)
    assert ball_return_feasibility(Scalar(2, 2.0), point).value == pytest.approx(1.0)


def test_feasibility_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        ball_return_feasibility(Scalar(3, 1.0), Ball(Vector([1.0]), 0.1))


def test_certify_scalar_family_is_budget_relative():
    gamma = ScalarFamily(1, OnePlusInverse())
    b = Ball(Vector([1.0]), 0.01)
    (short,) = certify_recurrent_set(gamma, [b], 10)
    assert short.certificate is None
    assert short.budget_relative
    assert short.best_index == 10
    assert short.best_value == pytest.approx(0.1 - 0.011, abs=1e-9)
    (long,) = certify_recurrent_set(gamma, [b], 200)
    cert = long.certificate
    assert cert is not None
    assert cert.op_index == 50
    assert cert.value <= b.radius - cert.margin
    assert b.contains(cert.z, slack=1e-12)
    assert cert.margin == pytest.approx(1e-8)


def test_rank_one_fix_is_not_a_recurrent_operator():
    gamma = Powers(RankOneFix(4))
    (verdict,) = certify_recurrent_set(gamma, [Ball(Vector.basis(4, 2), 0.5)], 50)
    assert verdict.certificate is None
    assert verdict.best_value == pytest.approx(1.0, abs=1e-9)


def test_certify_rejects_bad_margins():
    gamma = ScalarFamily(1, OnePlusInverse())
    with pytest.raises(InvalidParameter):
        certify_recurrent_set(gamma, [Ball(Vector([1.0]), 0.01)], 10, margin=0.01)
    with pytest.raises(InvalidParameter):
        certify_recurrent_set(gamma, [Ball(Vector([1.0]), 0.0)], 10)
    with pytest.raises(DimensionMismatch):
        certify_recurrent_set(gamma, [Ball(Vector([1.0, 0.0]), 0.1)], 10)


def test_verdicts_do_not_depend_on_workers():
    gamma = ScalarFamily(2, OnePlusInverse())
    balls = [Ball(Vector([1.0, k * 0.5j]), 0.05 * k) for k in range(1, 7)]
    serial = certify_recurrent_set(gamma, balls, 300, workers=1)
    threaded = certify_recurrent_set(gamma, balls, 300, workers=4)
    for a, b in zip(serial, threaded, strict=True):
        assert (a.best_index, a.best_value) == (b.best_index, b.best_value)
        assert (a.certificate is None) == (b.certificate is None)


@pytest.fixture
def broken_root_finder(monkeypatch):
    def fail(*_: object, **__: object) -> float:
        msg = "f(a) and f(b) must have different signs"
        raise ValueError(msg)

    monkeypatch.setattr(scipy.optimize, "brentq", fail)


@pytest.mark.usefixtures("broken_root_finder")
def test_solver_failure_is_recorded_per_ball():
    gamma = FiniteList((Scalar(1, 2.0),))
    b = Ball(Vector([1.0]), 0.4)
    with pytest.raises(SolverFailure):
        ball_return_feasibility(gamma.operator(1), b)
    (verdict,) = certify_recurrent_set(gamma, [b], 1)
    assert isinstance(verdict.failure, SolverFailure)
    assert verdict.certificate is None


@pytest.mark.usefixtures("broken_root_finder")
def test_solver_failure_falls_back_to_projected_gradient():
    gamma = FiniteList((Scalar(1, 2.0),))
    b = Ball(Vector([1.0]), 0.4)
    (verdict,) = certify_recurrent_set(gamma, [b], 1, fallback=True)
    assert verdict.failure is None
    assert verdict.certificate is not None
    assert verdict.certificate.value == pytest.approx(0.2, abs=1e-6)


def test_large_powers_solve_without_overflow():
    # ||T||^2 is beyond the float range, T itself is not.
    t = Scalar(1, 2.0**600)
    b = Ball(Vector([1.0]), 0.1)
    result = ball_return_feasibility(t, b)
    assert math.isfinite(result.value)
    assert result.value == pytest.approx(2.0**600 * 0.9, rel=1e-9)
    assert b.contains(result.z, slack=1e-12)


def test_non_finite_member_is_rejected():
    with pytest.raises(Overflow):
        ball_return_feasibility(Dense(np.array([[np.inf]])), Ball(Vector([1.0]), 0.1))


def test_overflowing_family_is_a_miss_not_a_failure():
    gamma = Powers(Scalar(1, 2.0))
    (verdict,) = certify_recurrent_set(gamma, [Ball(Vector([1.0]), 0.1)], 1100)
    assert verdict.failure is None
    assert verdict.certificate is None
    assert verdict.budget == 1100
    assert verdict.best_index == 1
    assert verdict.best_value == pytest.approx(0.8, abs=1e-9)
