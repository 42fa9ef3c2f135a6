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

"""Entire C-regularized groups S(z) = exp(zA) C and their recurrence scans."""

from __future__ import annotations

import cmath
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from opdyn import config
from opdyn.exceptions import (
    DimensionMismatch,
    GridTooLarge,
    InvalidParameter,
    NotCommuting,
    Overflow,
)
from opdyn.operators import (
    Composition,
    Dense,
    Diagonal,
    Operator,
    Scalar,
    build_operator,
    estimate_norm,
    materialize,
    safe_norm,
)
from opdyn.recurrence import BallVerdict, RecurrenceWitness, certify_recurrent_set, residual
from opdyn.sets import CRegGrid, Powers, checked_inverse
from opdyn.settings import get_settings
from opdyn.space import Ball, Vector
from opdyn.transforms import TransferredWitness, commutant_pushforward

logger = logging.getLogger(__name__)

GENERATOR_COMMUTE_TOL = 1e-10
PERIOD_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CRegGroup:
    """S(z) = exp(z A) C for commuting A and C.

    S(0) = C and S(z + w) C = S(z) S(w) then hold by construction. A zero
    regularizer gives the degenerate group S = 0.
    """

    generator: Operator
    regularizer: Operator
    degenerate: bool = False

    @property
    def dim(self) -> int:
        """Dimension of the space."""
        return self.generator.dim

    @property
    def is_exponential_scalar(self) -> bool:
        """Whether A = I, so S(z) = e^z C."""
        return isinstance(self.generator, Scalar) and self.generator.a == 1.0

    def evaluate(self, z: complex) -> Operator:
        """Return S(z); see :func:`evaluate`."""
        return evaluate(self, z)


def build_group(a: Operator, c: Operator) -> CRegGroup:
    """Pair a generator with a regularizer.

    Raises
    ------
    NotCommuting
        If ``||AC - CA||`` exceeds ``1e-10``.
    """
    if not a.is_square or a.shape != c.shape:
        raise DimensionMismatch(a.dim, c.dim, what="regularizer")
    a_m, c_m = materialize(a), materialize(c)
    defect = float(np.linalg.norm(a_m @ c_m - c_m @ a_m, 2))
    if defect > GENERATOR_COMMUTE_TOL:
        raise NotCommuting(defect, GENERATOR_COMMUTE_TOL)
    degenerate = not np.any(c_m)
    if degenerate:
        logger.info("zero regularizer: the group is identically zero")
    return CRegGroup(a, c, degenerate)


def group_from_spec(spec: config.GroupSpec) -> CRegGroup:
    """Build a group from its config description."""
    return build_group(build_operator(spec.generator), build_operator(spec.regularizer))


def _exp_factor(a: Operator, z: complex) -> Operator:
    match a:
        case Scalar(a=value):
            return Scalar(a.dim, cmath.exp(z * value))
        case Diagonal(entries=entries):
            return Diagonal(np.exp(z * entries))
    return Dense(scipy.linalg.expm(z * materialize(a)))


def evaluate(group: CRegGroup, z: complex) -> Operator:
    """Return S(z) = exp(z A) C.

    The exponential is componentwise for scalar and diagonal generators and
    :func:`scipy.linalg.expm` (scaling and squaring) otherwise. ``S(0)`` is the
    regularizer itself.

    Raises
    ------
    Overflow
        If ``exp(|z| ||A||)`` would exceed ``Settings.overflow_guard``.
    """
    z = complex(z)
    if z == 0:
        return group.regularizer
    growth = abs(z) * safe_norm(group.generator)
    if growth > math.log(get_settings().overflow_guard):
        msg = f"exp(|z| ||A||) = exp({growth:.3g}) exceeds the overflow guard"
        raise Overflow(msg)
    factor = _exp_factor(group.generator, z)
    c = group.regularizer
    match factor, c:
        case Scalar(a=s), Scalar(a=k):
            return Scalar(group.dim, s * k)
        case Diagonal(entries=d), Scalar(a=k):
            return Diagonal(d * k)
        case Scalar(a=s), Diagonal(entries=d):
            return Diagonal(s * d)
        case Diagonal(entries=d1), Diagonal(entries=d2):
            return Diagonal(d1 * d2)
    return Composition(factor, c)


@dataclass(frozen=True)
class AxiomsDefect:
    """Largest ``||S(z+w)C - S(z)S(w)||`` over the samples and ``||S(0) - C||``."""

    max_defect: float
    identity_defect: float


def axioms_defect(group: CRegGroup, samples: Sequence[tuple[complex, complex]]) -> AxiomsDefect:
    """Measure the group law on sample pairs."""
    c = materialize(group.regularizer)
    identity_defect = float(np.linalg.norm(materialize(evaluate(group, 0)) - c, 2))
    worst = 0.0
    for z, w in samples:
        lhs = materialize(evaluate(group, z + w)) @ c
        rhs = materialize(evaluate(group, z)) @ materialize(evaluate(group, w))
        worst = max(worst, estimate_norm(lhs - rhs, strict=False).value)
    return AxiomsDefect(worst, identity_defect)


@dataclass(frozen=True)
class ComplexGrid:
    """A finite ordered list of complex points."""

    points: tuple[complex, ...]

    @classmethod
    def rectangle(
        cls,
        re: tuple[float, float],
        im: tuple[float, float],
        step: float,
        extra: Sequence[complex] = (),
    ) -> ComplexGrid:
        """Lattice points ``re0 + i step`` by ``im0 + j step``, then ``extra``.

        The real part is the outer loop.
        """
        if step <= 0:
            msg = f"grid step must be positive, got {step}"
            raise InvalidParameter(msg)
        axes = []
        for lo, hi in (re, im):
            if hi < lo:
                msg = f"empty grid range [{lo}, {hi}]"
                raise InvalidParameter(msg)
            count = math.floor((hi - lo) / step + 1e-9) + 1
            axes.append(lo + step * np.arange(count))
        total = axes[0].size * axes[1].size
        cap = get_settings().max_grid_points
        if total > cap:
            msg = f"{total} grid points exceed the cap of {cap}"
            raise GridTooLarge(msg)
        points = [complex(x, y) for x in axes[0] for y in axes[1]]
        return cls((*points, *(complex(p) for p in extra)))

    @classmethod
    def from_spec(cls, spec: config.GridSpec) -> ComplexGrid:
        """Build a grid from its config description."""
        if spec.rectangle is None:
            if not spec.points:
                msg = "a grid needs a rectangle or explicit points"
                raise InvalidParameter(msg)
            return cls(tuple(spec.points))
        r = spec.rectangle
        return cls.rectangle(r.re, r.im, r.step, spec.points)

    def period_indices(self) -> list[int]:
        """1-based indices of the points 2 pi i k, k != 0."""
        out = []
        for k, z in enumerate(self.points, start=1):
            turns = z.imag / (2.0 * math.pi)
            on_axis = abs(z.real) <= PERIOD_TOL
            if on_axis and round(turns) != 0 and abs(turns - round(turns)) <= PERIOD_TOL:
                out.append(k)
        return out


@dataclass(frozen=True)
class GroupScan:
    """Certificates of the grid family, plus exact-period returns of e^z C."""

    verdicts: list[BallVerdict]
    period_indices: list[int]
    period_returns: list[bool] | None


def group_recurrence_scan(
    group: CRegGroup,
    grid: ComplexGrid,
    balls: Sequence[Ball],
    margin: float | None = None,
    budget: int | None = None,
    *,
    workers: int = 1,
) -> GroupScan:
    """Certify ``{S(z) : z in grid}`` on ``balls``.

    For the exponential scalar group, ``period_returns[i]`` tells whether ball
    ``i`` was certified by a point 2 pi i k of the grid.
    """
    family = CRegGrid(group, grid.points)
    verdicts = certify_recurrent_set(
        family, balls, budget or family.size, margin, workers=workers
    )
    periods = grid.period_indices()
    returns = None
    if group.is_exponential_scalar:
        returns = [
            v.certificate is not None and v.certificate.op_index in periods for v in verdicts
        ]
    return GroupScan(verdicts, periods, returns)


def c_image_witness(
    group: CRegGroup,
    grid: ComplexGrid,
    x: Vector,
    witness: RecurrenceWitness,
    tol: float = GENERATOR_COMMUTE_TOL,
) -> TransferredWitness:
    """Move a grid-family witness at ``x`` to ``Cx``.

    S(z) commutes with C, so the residual at ``Cx`` is at most ``||C||`` times
    the residual at ``x``.
    """
    family = CRegGrid(group, grid.points)
    return commutant_pushforward(family, group.regularizer, x, witness, tol)


def orbit_image_witness(
    group: CRegGroup,
    grid: ComplexGrid,
    z0: complex,
    x: Vector,
    witness: RecurrenceWitness,
    tol: float = 1e-9,
) -> TransferredWitness:
    """Move a grid-family witness at ``x`` to ``S(z0) x``."""
    family = CRegGrid(group, grid.points)
    return commutant_pushforward(family, evaluate(group, z0), x, witness, tol)


def similar_group(
    group: CRegGroup, phi: Operator, phi_inv: Operator | None = None
) -> CRegGroup:
    """Return h(z) = phi^-1 S(z) phi, generated by phi^-1 A phi and phi^-1 C phi.

    Scalar generators and regularizers are kept as they are.

    Raises
    ------
    NotInvertible
        If ``phi`` does not invert.
    """
    inverse = checked_inverse(phi, phi_inv, group.dim)

    def conjugate(op: Operator) -> Operator:
        if isinstance(op, Scalar):
            return op
        return Dense(materialize(inverse) @ materialize(op) @ materialize(phi))

    return build_group(conjugate(group.generator), conjugate(group.regularizer))


def conjugation_defect(
    group: CRegGroup,
    similar: CRegGroup,
    phi: Operator,
    phi_inv: Operator,
    points: Sequence[complex],
) -> float:
    """Largest ``||h(z) - phi^-1 S(z) phi||`` over ``points``."""
    p, q = materialize(phi), materialize(phi_inv)
    worst = 0.0
    for z in points:
        diff = materialize(evaluate(similar, z)) - q @ materialize(evaluate(group, z)) @ p
        worst = max(worst, float(np.linalg.norm(diff, 2)))
    return worst


@dataclass(frozen=True)
class PowerScanRow:
    """Residual of ``x`` under the powers of the single operator S(z0)."""

    z0: complex
    residual: float
    op_index: int
    recurrent: bool

    @property
    def real_part_zero(self) -> bool:
        """Whether z0 is purely imaginary."""
        return abs(self.z0.real) <= PERIOD_TOL

    @property
    def outside_unit_disc(self) -> bool:
        """Whether |z0| > 1."""
        return abs(self.z0) > 1.0


def power_recurrence_scan(
    group: CRegGroup,
    points: Sequence[complex],
    x: Vector,
    budget: int,
    eps: float = 1e-2,
) -> list[PowerScanRow]:
    """For each z0, search returns of ``x`` under {S(z0)^n : n >= 1}.

    Puts the boundary between recurrent and non-recurrent single operators on
    record: purely imaginary z0 give unimodular e^z0 even when |z0| > 1.
    """
    rows = []
    for z0 in points:
        powers = Powers(evaluate(group, z0))
        value, witness = residual(powers, x, budget)
        rows.append(PowerScanRow(complex(z0), value, witness.op_index, value < eps))
    return rows
