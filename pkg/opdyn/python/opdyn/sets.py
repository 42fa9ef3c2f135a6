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

"""Countable operator sets, enumerated by 1-based index.

Enumeration order is part of the contract: witnesses are reported by index and
ties go to the smallest one, so every variant fixes a deterministic order.
"""

from __future__ import annotations

import abc
import cmath
import logging
import math
from collections.abc import Iterator
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from opdyn import config
from opdyn.exceptions import (
    DimensionMismatch,
    InvalidParameter,
    NotInvertible,
    NotUnimodular,
    UnknownVariant,
)
from opdyn.operators import (
    Composition,
    Dense,
    DirectSum,
    Operator,
    Scalar,
    build_operator,
)

logger = logging.getLogger(__name__)

UNIMODULAR_TOL = 1e-12
PHASE_CHECK_TERMS = 64
INVERSE_TOL = 1e-10


@dataclass(frozen=True)
class EnumerationBudget:
    """The largest index any search may touch."""

    max_index: int

    def __post_init__(self) -> None:
        if self.max_index < 1:
            msg = f"enumeration budget must be positive, got {self.max_index}"
            raise InvalidParameter(msg)

    @classmethod
    def of(cls, budget: int | EnumerationBudget) -> EnumerationBudget:
        """Coerce a plain integer."""
        return budget if isinstance(budget, EnumerationBudget) else cls(budget)


# Index sequences


class IndexSequence(abc.ABC):
    """A complex sequence indexed from 1."""

    @abc.abstractmethod
    def __call__(self, n: int) -> complex:
        """Value at index ``n``."""

    @property
    def length(self) -> int | None:
        """Number of terms, ``None`` when infinite."""
        return None


@dataclass(frozen=True)
class OnePlusInverse(IndexSequence):
    """a_n = 1 + scale / n, tending to 1 from above for positive ``scale``."""

    scale: complex = 1.0

    def __call__(self, n: int) -> complex:
        """1 + scale / n."""
        return 1.0 + complex(self.scale) / n


@dataclass(frozen=True)
class UnimodularPhase(IndexSequence):
    """lambda_n = exp(i n theta)."""

    theta: float

    def __call__(self, n: int) -> complex:
        """exp(i n theta)."""
        return cmath.exp(1j * n * self.theta)


@dataclass(frozen=True)
class ExplicitList(IndexSequence):
    """Finitely many values; index n reads ``values[n - 1]``."""

    values: tuple[complex, ...]

    def __post_init__(self) -> None:
        if not self.values:
            msg = "an explicit sequence needs at least one value"
            raise InvalidParameter(msg)
        object.__setattr__(self, "values", tuple(complex(v) for v in self.values))

    def __call__(self, n: int) -> complex:
        """values[n - 1]."""
        if not 1 <= n <= len(self.values):
            msg = f"index {n} outside 1..{len(self.values)}"
            raise InvalidParameter(msg)
        return self.values[n - 1]

    @property
    def length(self) -> int:
        """Number of values."""
        return len(self.values)


def build_sequence(spec: config.SequenceSpec) -> IndexSequence:
    """Build an index sequence from its config description."""
    match spec:
        case config.OnePlusInverseSpec(scale=scale):
            return OnePlusInverse(scale)
        case config.UnimodularPhaseSpec(theta=theta):
            return UnimodularPhase(theta)
        case config.ExplicitListSpec(values=values):
            return ExplicitList(tuple(values))
    msg = f"unknown sequence variant {type(spec).__name__}"
    raise UnknownVariant(msg)


# Operator sets


class OperatorSet(abc.ABC):
    """A countable set Gamma = {T_1, T_2, ...} of operators on C^dim."""

    @property
    @abc.abstractmethod
    def dim(self) -> int:
        """Dimension every member acts on."""

    @property
    @abc.abstractmethod
    def size(self) -> int | None:
        """Number of members, ``None`` when infinite."""

    @abc.abstractmethod
    def _operator(self, k: int) -> Operator: ...

    def operator(self, k: int) -> Operator:
        """Return T_k (1-based)."""
        if k < 1 or (self.size is not None and k > self.size):
            msg = f"operator index {k} outside the set"
            raise InvalidParameter(msg)
        return self._operator(k)

    def bound(self, budget: int | EnumerationBudget) -> int:
        """Number of members enumerated under ``budget``."""
        limit = EnumerationBudget.of(budget).max_index
        return limit if self.size is None else min(limit, self.size)

    def enumerate(self, budget: int | EnumerationBudget) -> Iterator[tuple[int, Operator]]:
        """Yield ``(k, T_k)`` for k = 1 .. min(budget, size), in index order."""
        for k in range(1, self.bound(budget) + 1):
            yield k, self._operator(k)

    def images(
        self, x: np.ndarray, budget: int | EnumerationBudget
    ) -> Iterator[tuple[int, np.ndarray]]:
        """Yield ``(k, T_k x)`` on raw coordinates, in index order."""
        for k, op in self.enumerate(budget):
            yield k, op.matvec(x)


def _check_dim(op: Operator, dim: int) -> None:
    if not op.is_square or op.dim != dim:
        raise DimensionMismatch(dim, op.dim, what="set member")


@dataclass(frozen=True, eq=False)
class FiniteList(OperatorSet):
    """An explicit finite list."""

    ops: tuple[Operator, ...]

    def __post_init__(self) -> None:
        ops = tuple(self.ops)
        if not ops:
            msg = "a finite operator list needs at least one operator"
            raise InvalidParameter(msg)
        for op in ops:
            _check_dim(op, ops[0].dim)
        object.__setattr__(self, "ops", ops)

    @property
    def dim(self) -> int:
        """Common dimension."""
        return self.ops[0].dim

    @property
    def size(self) -> int:
        """Length of the list."""
        return len(self.ops)

    def _operator(self, k: int) -> Operator:
        return self.ops[k - 1]


@dataclass(frozen=True, eq=False)
class Powers(OperatorSet):
    """T_k = base^(start + k - 1); ``start`` is 1 unless the identity is wanted."""

    base: Operator
    start: int = 1

    def __post_init__(self) -> None:
        if self.start < 0:
            msg = f"start exponent must be nonnegative, got {self.start}"
            raise InvalidParameter(msg)
        _check_dim(self.base, self.base.dim)

    @property
    def dim(self) -> int:
        """Dimension of the base."""
        return self.base.dim

    @property
    def size(self) -> None:
        """Infinite."""
        return None

    def exponent(self, k: int) -> int:
        """Exponent of T_k."""
        return self.start + k - 1

    def _operator(self, k: int) -> Operator:
        return self.base.power(self.exponent(k))

    def images(
        self, x: np.ndarray, budget: int | EnumerationBudget
    ) -> Iterator[tuple[int, np.ndarray]]:
        """Walk the orbit T^start x, T^(start+1) x, ... one application at a time."""
        y = self.base.power(self.start).matvec(x)
        for k in range(1, self.bound(budget) + 1):
            yield k, y
            y = self.base.matvec(y)

    def enumerate(self, budget: int | EnumerationBudget) -> Iterator[tuple[int, Operator]]:
        """Yield powers, reusing structured forms or multiplying up dense ones."""
        if not isinstance(self.base, (Dense, Composition)):
            yield from super().enumerate(budget)
            return
        step = self.base.to_matrix()
        current = np.linalg.matrix_power(step, self.start)
        for k in range(1, self.bound(budget) + 1):
            yield k, Dense(current)
            current = current @ step


@dataclass(frozen=True, eq=False)
class ScalarFamily(OperatorSet):
    """T_n = a_n I."""

    dim_: int
    sequence: IndexSequence

    @property
    def dim(self) -> int:
        """Dimension."""
        return self.dim_

    @property
    def size(self) -> int | None:
        """Length of the sequence."""
        return self.sequence.length

    def _operator(self, k: int) -> Operator:
        return Scalar(self.dim_, self.sequence(k))


@dataclass(frozen=True, eq=False)
class UnimodularScaled(OperatorSet):
    """Gamma_1 = {lambda_n T_n}; every lambda_n must have modulus 1."""

    base: OperatorSet
    phases: IndexSequence

    def __post_init__(self) -> None:
        terms = self.size if self.size is not None else PHASE_CHECK_TERMS
        for k in range(1, terms + 1):
            self.phase(k)

    @property
    def dim(self) -> int:
        """Dimension of the base set."""
        return self.base.dim

    @property
    def size(self) -> int | None:
        """The shorter of base and phases."""
        sizes = [s for s in (self.base.size, self.phases.length) if s is not None]
        return min(sizes) if sizes else None

    def phase(self, k: int) -> complex:
        """lambda_k, checked to be unimodular."""
        lam = self.phases(k)
        if abs(abs(lam) - 1.0) > UNIMODULAR_TOL:
            raise NotUnimodular(k, abs(lam))
        return lam

    def _operator(self, k: int) -> Operator:
        lam = self.phase(k)
        return Composition(Scalar(self.dim, lam), self.base.operator(k))


@dataclass(frozen=True, eq=False)
class DirectSumSet(OperatorSet):
    """Direct sum of sets acting on the direct-sum space.

    ``diagonal`` pairs equal indices, T_k = A_k (+) B_k. ``product`` runs over
    every index tuple in mixed-radix order with the first part most significant,
    so it needs finite parts.
    """

    parts: tuple[OperatorSet, ...]
    mode: str = "diagonal"

    def __post_init__(self) -> None:
        parts = tuple(self.parts)
        if not parts:
            msg = "a direct-sum set needs at least one part"
            raise InvalidParameter(msg)
        if self.mode not in ("diagonal", "product"):
            msg = f"unknown direct-sum mode {self.mode!r}"
            raise InvalidParameter(msg)
        if self.mode == "product" and any(p.size is None for p in parts):
            msg = "product mode needs finite parts"
            raise InvalidParameter(msg)
        object.__setattr__(self, "parts", parts)

    @property
    def part_dims(self) -> list[int]:
        """Dimensions of the summands."""
        return [p.dim for p in self.parts]

    @property
    def dim(self) -> int:
        """Summed dimension."""
        return sum(self.part_dims)

    @property
    def size(self) -> int | None:
        """Shortest part (diagonal) or the product of sizes (product)."""
        sizes = [p.size for p in self.parts]
        if self.mode == "product":
            return math.prod(s for s in sizes if s is not None)
        finite = [s for s in sizes if s is not None]
        return min(finite) if finite else None

    def component_indices(self, k: int) -> tuple[int, ...]:
        """Index into each part used by T_k."""
        if self.mode == "diagonal":
            return (k,) * len(self.parts)
        rem = k - 1
        digits = []
        for part in reversed(self.parts):
            size = part.size or 1
            digits.append(rem % size + 1)
            rem //= size
        return tuple(reversed(digits))

    def _operator(self, k: int) -> Operator:
        idx = self.component_indices(k)
        return DirectSum(tuple(p.operator(i) for p, i in zip(self.parts, idx, strict=True)))


def checked_inverse(phi: Operator, phi_inv: Operator | None, dim: int) -> Operator:
    """Return ``phi_inv`` (or the numerical inverse) after checking ``phi phi_inv = I``.

    Raises
    ------
    NotInvertible
        If ``phi`` is singular or ``||phi phi_inv - I||`` exceeds ``1e-10``.
    """
    _check_dim(phi, dim)
    m = phi.to_matrix()
    if phi_inv is None:
        try:
            inverse: Operator = Dense(np.linalg.inv(m))
        except np.linalg.LinAlgError as exc:
            msg = "conjugating operator is singular"
            raise NotInvertible(msg) from exc
    else:
        _check_dim(phi_inv, dim)
        inverse = phi_inv
    defect = float(np.linalg.norm(m @ inverse.to_matrix() - np.eye(dim), 2))
    if defect > INVERSE_TOL:
        msg = f"phi @ phi_inv differs from the identity by {defect:.3e}"
        raise NotInvertible(msg)
    return inverse


@dataclass(frozen=True, eq=False)
class ConjugateSet(OperatorSet):
    """S_k = phi T_k phi^-1 over a base set."""

    base: OperatorSet
    phi: Operator
    phi_inv: Operator | None = None
    _inverse: Operator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_inverse", checked_inverse(self.phi, self.phi_inv, self.base.dim))

    @property
    def inverse(self) -> Operator:
        """The inverse used for conjugation."""
        return self._inverse

    @property
    def dim(self) -> int:
        """Dimension of the base."""
        return self.base.dim

    @property
    def size(self) -> int | None:
        """Same as the base."""
        return self.base.size

    def _operator(self, k: int) -> Operator:
        return Composition(self.phi, Composition(self.base.operator(k), self._inverse))


class RegularizedGroup(Protocol):
    """What :class:`CRegGrid` needs from a C-regularized group."""

    @property
    def dim(self) -> int: ...

    def evaluate(self, z: complex) -> Operator: ...


@dataclass(frozen=True, eq=False)
class CRegGrid(OperatorSet):
    """S(z_k) for the k-th point of a finite complex grid."""

    group: RegularizedGroup
    points: tuple[complex, ...]

    def __post_init__(self) -> None:
        if not self.points:
            msg = "a group grid needs at least one point"
            raise InvalidParameter(msg)
        object.__setattr__(self, "points", tuple(complex(z) for z in self.points))

    @property
    def dim(self) -> int:
        """Dimension of the group."""
        return self.group.dim

    @property
    def size(self) -> int:
        """Number of grid points."""
        return len(self.points)

    def point(self, k: int) -> complex:
        """z_k."""
        return self.points[k - 1]

    def _operator(self, k: int) -> Operator:
        return self.group.evaluate(self.points[k - 1])


def build_set(spec: config.SetSpec) -> OperatorSet:
    """Build an operator set from its config description.

    Raises
    ------
    UnknownVariant
        For an unknown set kind.
    NotInvertible
        If a conjugating pair does not invert.
    """
    match spec:
        case config.FiniteListSetSpec(ops=ops):
            return FiniteList(tuple(build_operator(o) for o in ops))
        case config.PowersSpec(base=base, start_exponent=start):
            return Powers(build_operator(base), start)
        case config.ScalarFamilySpec(dim=dim, sequence=seq):
            return ScalarFamily(dim, build_sequence(seq))
        case config.UnimodularScaledSpec(base=base, phases=phases):
            return UnimodularScaled(build_set(base), build_sequence(phases))
        case config.DirectSumSetSpec(parts=parts, mode=mode):
            return DirectSumSet(tuple(build_set(p) for p in parts), mode)
        case config.ConjugateSetSpec(base=base, phi=phi, phi_inv=phi_inv):
            inverse = None if phi_inv is None else build_operator(phi_inv)
            return ConjugateSet(build_set(base), build_operator(phi), inverse)
        case config.CRegGridSpec(group=group, grid=grid):
            from opdyn.reggroups import ComplexGrid, group_from_spec

            return CRegGrid(group_from_spec(group), ComplexGrid.from_spec(grid).points)
    msg = f"unknown set variant {type(spec).__name__}"
    raise UnknownVariant(msg)

