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

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from opdyn import config
from opdyn.exceptions import (
    BudgetExceeded,
    DimensionCapExceeded,
    DimensionMismatch,
    InvalidParameter,
    NonConvergence,
    UnknownVariant,
    WindowViolation,
)
from opdyn.operators import (
    BackwardShift,
    Composition,
    Dense,
    Diagonal,
    DirectSum,
    ForwardShift,
    RankOneFix,
    Scalar,
    TruncationWindow,
    apply,
    build_operator,
    check_window,
    estimate_norm,
    identity,
    materialize,
    norm_upper_bound,
    operator_norm,
    power_apply,
    safe_norm,
    sequence_space_power,
    support,
)
from opdyn.settings import get_settings
from opdyn.space import Vector


def test_build_every_kind():
    specs = [
        {"kind": "dense", "matrix": [[1, 2], [3, 4]]},
        {"kind": "diagonal", "entries": [1, [0, 1]]},
        {"kind": "backward_shift", "dim": 2, "weight": 2},
        {"kind": "forward_shift", "dim": 2},
        {"kind": "scalar", "dim": 2, "a": [0, 1]},
        {"kind": "identity", "dim": 2},
        {"kind": "rank_one_fix", "dim": 2},
        {
            "kind": "composition",
            "left": {"kind": "identity", "dim": 2},
            "right": {"kind": "forward_shift", "dim": 2},
        },
        {
            "kind": "direct_sum",
            "parts": [{"kind": "identity", "dim": 1}, {"kind": "scalar", "dim": 1, "a": 3}],
        },
    ]
    for spec in specs:
        assert build_operator(spec).shape == (2, 2)


def test_build_rejects_unknown_kind():
    with pytest.raises(UnknownVariant):
        build_operator({"kind": "spiral", "dim": 2})


def test_build_rejects_malformed():
    with pytest.raises(InvalidParameter):
        build_operator({"kind": "scalar", "dim": 0, "a": 1})
    with pytest.raises(InvalidParameter):
        build_operator({"kind": "dense", "matrix": [[1, 2], [3]]})


def test_build_from_model():
    spec = config.BackwardShiftSpec(kind="backward_shift", dim=8, weight=2)
    op = build_operator(spec)
    assert isinstance(op, BackwardShift)
    assert operator_norm(op) == 2.0


def test_structured_matvec_matches_matrix(np_rng):
    x = np_rng.standard_normal(5) + 1j * np_rng.standard_normal(5)
    ops = [
        BackwardShift(5, 2.0),
        ForwardShift(5, 0.5j),
        Scalar(5, 1 + 1j),
        Diagonal(np.arange(1, 6)),
        RankOneFix(5),
        Composition(BackwardShift(5, 2.0), ForwardShift(5, 1.0)),
        DirectSum((Scalar(2, 2.0), BackwardShift(3, 1.0))),
    ]
    for op in ops:
        np.testing.assert_allclose(op.matvec(x), op.to_matrix() @ x, atol=1e-12)


def test_backward_shift_action():
    b = BackwardShift(4, 2.0)
    x = Vector([1, 2, 3, 4])
    assert apply(b, x).coords.tolist() == [4, 6, 8, 0]


def test_forward_shift_drops_the_tail():
    s = ForwardShift(3)
    assert apply(s, Vector([1, 2, 3])).coords.tolist() == [0, 1, 2]


def test_shift_powers():
    b = BackwardShift(6, 2.0)
    x = Vector(np.arange(1, 7))
    np.testing.assert_allclose(
        power_apply(b, 3, x).coords,
        np.linalg.matrix_power(b.to_matrix(), 3) @ x.coords,
    )
    assert isinstance(b.power(0), Scalar)
    assert b.power(6).weight == 0


def test_huge_powers_do_not_overflow():
    p = Scalar(1, 10.0).power(1000)
    assert np.isinf(abs(p.a))


def test_power_apply_zero_is_identity():
    x = Vector([1, 2])
    assert power_apply(Dense([[0, 1], [1, 0]]), 0, x) is x


def test_power_apply_budget(monkeypatch):
    monkeypatch.setenv("OPDYN_POWER_BUDGET", "10")
    get_settings.cache_clear()
    with pytest.raises(BudgetExceeded):
        power_apply(identity(2), 11, Vector([1, 0]))
    with pytest.raises(InvalidParameter):
        power_apply(identity(2), -1, Vector([1, 0]))


def test_apply_checks_dimension():
    with pytest.raises(DimensionMismatch):
        apply(identity(3), Vector([1, 2]))


def test_composition_checks_inner_dimension():
    with pytest.raises(DimensionMismatch):
        Composition(identity(2), identity(3))


def test_structured_norms():
    assert operator_norm(Diagonal([1, -3j, 2])) == 3.0
    assert operator_norm(BackwardShift(4, 2.0)) == 2.0
    assert operator_norm(BackwardShift(1, 2.0)) == 0.0
    assert operator_norm(RankOneFix(3)) == 1.0
    assert operator_norm(DirectSum((Scalar(1, 2.0), Scalar(2, 5.0)))) == 5.0


@settings(max_examples=30, deadline=None)
@given(
    rows=st.integers(min_value=1, max_value=6),
    cols=st.integers(min_value=1, max_value=6),
    seed=st.integers(min_value=0, max_value=2**32),
)
def test_norm_estimate_matches_svd(rows, cols, seed):
    gen = np.random.default_rng(seed)
    m = gen.standard_normal((rows, cols)) + 1j * gen.standard_normal((rows, cols))
    estimate = estimate_norm(m, strict=False)
    exact = np.linalg.norm(m, 2)
    assert estimate.value <= exact * (1 + 1e-12)
    assert estimate.value == pytest.approx(exact, rel=1e-6)


@seed(20240601)
@settings(max_examples=40, deadline=None)
@given(
    entries=arrays(
        np.complex128,
        st.integers(min_value=1, max_value=8),
        elements=st.complex_numbers(
            min_magnitude=1e-3, max_magnitude=10.0, allow_nan=False, allow_infinity=False
        ),
    )
)
def test_diagonal_norm_is_the_largest_modulus(entries):
    op = Diagonal(entries)
    largest = float(np.abs(entries).max())
    assert op.norm() == (largest, 0.0)
    assert estimate_norm(op.to_matrix(), strict=False).value == pytest.approx(largest, rel=1e-6)
    x = np.ones(entries.size, dtype=np.complex128)
    np.testing.assert_allclose(op.matvec(x), op.to_matrix() @ x)


def test_norm_of_zero_matrix():
    assert estimate_norm(np.zeros((3, 3))) == (0.0, 0.0)


def test_norm_non_convergence(monkeypatch):
    monkeypatch.setenv("OPDYN_POWER_ITERATION_CAP", "1")
    get_settings.cache_clear()
    m = np.diag([1.0, 0.999, 0.5])
    with pytest.raises(NonConvergence):
        estimate_norm(m)
    assert estimate_norm(m, strict=False).value == pytest.approx(1.0)
    assert safe_norm(Dense(m)) == pytest.approx(norm_upper_bound(Dense(m)))


def test_upper_bound_dominates_norm(np_rng):
    m = np_rng.standard_normal((4, 4))
    assert norm_upper_bound(Dense(m)) >= np.linalg.norm(m, 2)


def _every_variant(gen, n):
    def cplx(*shape):
        return gen.standard_normal(shape) + 1j * gen.standard_normal(shape)

    weight = complex(cplx(1)[0])
    steps = int(gen.integers(1, n + 1))
    return [
        Dense(cplx(n, n)),
        Diagonal(cplx(n)),
        Scalar(n, weight),
        RankOneFix(n),
        BackwardShift(n, weight, steps),
        ForwardShift(n, weight, steps),
        Composition(Dense(cplx(n, n)), Diagonal(cplx(n))),
        DirectSum((Scalar(1, weight), Dense(cplx(n - 1, n - 1)))),
        identity(n),
    ]


@settings(max_examples=30, deadline=None)
@given(
    n=st.integers(min_value=2, max_value=5),
    seed=st.integers(min_value=0, max_value=2**32),
)
def test_images_are_bounded_by_the_norm(n, seed):
    gen = np.random.default_rng(seed)
    x = gen.standard_normal(n) + 1j * gen.standard_normal(n)
    x /= np.linalg.norm(x)
    for op in _every_variant(gen, n):
        bound = safe_norm(op)
        assert np.linalg.norm(op.matvec(x)) <= bound + 1e-9, type(op).__name__


def test_materialize_columns_are_images():
    op = BackwardShift(3, 2.0)
    m = materialize(op)
    for i in range(1, 4):
        np.testing.assert_array_equal(m[:, i - 1], apply(op, Vector.basis(3, i)).coords)


def test_materialize_cap(monkeypatch):
    monkeypatch.setenv("OPDYN_DENSE_CAP", "4")
    get_settings.cache_clear()
    with pytest.raises(DimensionCapExceeded):
        materialize(identity(5))


def test_support():
    assert support(Vector([0, 1, 0, 2, 0])) == 4
    assert support(Vector([0, 0])) == 0


def test_window_admission():
    window = TruncationWindow(8, 6, 5)
    x = Vector(np.r_[1.0, np.zeros(4), 2.0**-5, 0.0, 0.0])
    check_window(window, BackwardShift(8, 2.0), x, 5)
    with pytest.raises(WindowViolation):
        check_window(window, BackwardShift(8, 2.0), x, 6)
    with pytest.raises(WindowViolation):
        check_window(window, ForwardShift(8), x, 5)
    with pytest.raises(WindowViolation):
        check_window(TruncationWindow(8, 2, 5), BackwardShift(8, 2.0), x, 1)


def test_truncated_forward_shift_equals_sequence_space_inside_window():
    window = TruncationWindow(8, 3, 5)
    s = ForwardShift(8, 2.0)
    x = Vector([1, 2, 3, 0, 0, 0, 0, 0])
    check_window(window, s, x, 5)
    exact = sequence_space_power(s, 5, x)
    truncated = power_apply(s, 5, x).coords
    for k, value in exact.items():
        assert truncated[k - 1] == value
    assert np.count_nonzero(truncated) == len(exact)


def test_truncation_loses_mass_outside_window():
    s = ForwardShift(4)
    x = Vector([0, 0, 0, 1])
    assert 5 in sequence_space_power(s, 1, x)
    assert power_apply(s, 1, x).is_zero()


def test_sequence_space_backward_shift():
    b = BackwardShift(8, 2.0)
    x = Vector(np.r_[1.0, np.zeros(4), 2.0**-5, 0.0, 0.0])
    assert sequence_space_power(b, 5, x) == {1: 1.0}
    assert sequence_space_power(RankOneFix(8), 3, x) == {1: 1.0}
