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

"""Bounded operators on C^dim with exact structured forms and a dense fallback.

Sequence-space operators (the shifts) act on C^dim by truncation: coordinates
pushed past index ``dim`` are dropped. Results are exact inside a declared
:class:`TruncationWindow`.
"""

from __future__ import annotations

import abc
import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np
import scipy.linalg
from pydantic import TypeAdapter, ValidationError

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
from opdyn.settings import get_settings
from opdyn.space import Vector

logger = logging.getLogger(__name__)


class NormEstimate(NamedTuple):
    """An operator-norm value and an error bound on it."""

    value: float
    error_bound: float

    @property
    def upper(self) -> float:
        """``value + error_bound``."""
        return self.value + self.error_bound


def estimate_norm(matrix: np.ndarray, *, strict: bool = True) -> NormEstimate:
    """Estimate the 2-norm of ``matrix`` by power iteration on its Gram matrix.

    The start vector is drawn from ``Settings.power_iteration_seed``, so the
    estimate is deterministic. Iteration stops when the eigen-residual of the
    Rayleigh quotient drops below ``Settings.power_iteration_tol`` relative to
    the quotient; that residual, mapped to singular values, is the error bound.

    Parameters
    ----------
    matrix
        Any complex 2-D array (rectangular allowed).
    strict
        When true, a non-converged run raises :class:`NonConvergence`. When
        false it falls back to an SVD-based norm and logs a warning.

    Returns
    -------
    NormEstimate
        The estimate never exceeds the true norm.
    """
    m = np.asarray(matrix, dtype=np.complex128)
    if m.size == 0 or not np.any(m):
        return NormEstimate(0.0, 0.0)
    settings = get_settings()
    gram = m.conj().T @ m
    gen = np.random.default_rng(settings.power_iteration_seed)
    n = gram.shape[0]
    v = gen.standard_normal(n) + 1j * gen.standard_normal(n)
    v /= np.linalg.norm(v)
    for iteration in range(1, settings.power_iteration_cap + 1):
        w = gram @ v
        lam = float(np.real(np.vdot(v, w)))
        resid = float(np.linalg.norm(w - lam * v))
        if lam > 0.0 and resid <= settings.power_iteration_tol * lam:
            sigma = math.sqrt(lam)
            logger.debug("power iteration converged after %d steps", iteration)
            return NormEstimate(sigma, resid / (2.0 * sigma))
        length = np.linalg.norm(w)
        if length == 0.0:
            break
        v = w / length
    if strict:
        msg = (
            f"power iteration did not reach relative residual "
            f"{settings.power_iteration_tol:g} in {settings.power_iteration_cap} steps"
        )
        raise NonConvergence(msg)
    logger.warning("power iteration did not converge; falling back to the SVD norm")
    return NormEstimate(float(scipy.linalg.norm(m, 2)), 0.0)


class Operator(abc.ABC):
    """A bounded linear map. Instances are immutable."""

    @property
    @abc.abstractmethod
    def shape(self) -> tuple[int, int]:
        """(codomain dimension, domain dimension)."""

    @property
    def dim(self) -> int:
        """Domain dimension."""
        return self.shape[1]

    @property
    def is_square(self) -> bool:
        """Whether domain and codomain agree."""
        return self.shape[0] == self.shape[1]

    @abc.abstractmethod
    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Apply to a raw coordinate array (no validation)."""

    @abc.abstractmethod
    def to_matrix(self) -> np.ndarray:
        """Dense matrix of the operator (no cap check)."""

    def norm(self) -> NormEstimate:
        """Operator 2-norm, exact for structured variants."""
        return estimate_norm(self.to_matrix())

    def power(self, n: int) -> Operator:
        """Return the ``n``-th power as an operator."""
        _require_square(self)
        return Dense(np.linalg.matrix_power(self.to_matrix(), n))


def _require_square(op: Operator) -> None:
    if not op.is_square:
        raise DimensionMismatch(op.shape[1], op.shape[0], what="operator codomain")


def _cpow(a: complex, n: int) -> complex:
    try:
        return complex(a) ** n
    except OverflowError:
        return complex(math.inf, 0.0)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.complex128)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dense(Operator):
    """An explicit matrix."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = _frozen(self.matrix)
        if m.ndim != 2 or 0 in m.shape:
            msg = f"dense operator needs a nonempty 2-D matrix, got shape {m.shape}"
            raise InvalidParameter(msg)
        object.__setattr__(self, "matrix", m)

    @property
    def shape(self) -> tuple[int, int]:
        """(rows, cols)."""
        return (int(self.matrix.shape[0]), int(self.matrix.shape[1]))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Matrix-vector product."""
        return self.matrix @ x

    def to_matrix(self) -> np.ndarray:
        """Copy of the matrix."""
        return np.array(self.matrix)


@dataclass(frozen=True, eq=False)
class Diagonal(Operator):
    """Componentwise multiplication by ``entries``."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        d = _frozen(self.entries)
        if d.ndim != 1 or d.size == 0:
            msg = "diagonal operator needs a nonempty 1-D entry array"
            raise InvalidParameter(msg)
        object.__setattr__(self, "entries", d)

    @property
    def shape(self) -> tuple[int, int]:
        """Square, one row per entry."""
        return (int(self.entries.size), int(self.entries.size))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Componentwise product."""
        return self.entries * x

    def to_matrix(self) -> np.ndarray:
        """``diag(entries)``."""
        return np.diag(self.entries)

    def norm(self) -> NormEstimate:
        """Largest modulus."""
        return NormEstimate(float(np.max(np.abs(self.entries))), 0.0)

    def power(self, n: int) -> Operator:
        """Entrywise powers."""
        return Diagonal(self.entries**n)


@dataclass(frozen=True, eq=False)
class _Shift(Operator):
    dim_: int
    weight: complex = 1.0
    steps: int = 1

    def __post_init__(self) -> None:
        if self.dim_ < 1 or self.steps < 1:
            msg = f"shift needs dim >= 1 and steps >= 1, got {self.dim_}, {self.steps}"
            raise InvalidParameter(msg)
        object.__setattr__(self, "weight", complex(self.weight))

    @property
    def shape(self) -> tuple[int, int]:
        """Square."""
        return (self.dim_, self.dim_)

    def norm(self) -> NormEstimate:
        """``|weight|`` while the shift is not nilpotent-zero, else 0."""
        value = abs(self.weight) if self.steps < self.dim_ else 0.0
        return NormEstimate(value, 0.0)

    def power(self, n: int) -> Operator:
        """``weight**n`` with ``steps * n``."""
        if n == 0:
            return Scalar(self.dim_, 1.0)
        if self.steps * n >= self.dim_:
            return type(self)(self.dim_, 0.0, self.steps * n)
        return type(self)(self.dim_, _cpow(self.weight, n), self.steps * n)


class BackwardShift(_Shift):
    """(Bx)_k = weight * x_(k+steps).

    With weight lambda, |lambda| > 1, this is Rolewicz's operator.
    """

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Shift toward e_1, dropping the leading coordinates."""
        out = np.zeros_like(x, dtype=np.complex128)
        if self.steps < self.dim_:
            out[: self.dim_ - self.steps] = self.weight * x[self.steps :]
        return out

    def to_matrix(self) -> np.ndarray:
        """Weighted superdiagonal."""
        return self.weight * np.eye(self.dim_, k=self.steps, dtype=np.complex128)


class ForwardShift(_Shift):
    """(Sx)_(k+steps) = weight * x_k; mass pushed past ``dim`` is dropped."""

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Shift away from e_1."""
        out = np.zeros_like(x, dtype=np.complex128)
        if self.steps < self.dim_:
            out[self.steps :] = self.weight * x[: self.dim_ - self.steps]
        return out

    def to_matrix(self) -> np.ndarray:
        """Weighted subdiagonal."""
        return self.weight * np.eye(self.dim_, k=-self.steps, dtype=np.complex128)


@dataclass(frozen=True, eq=False)
class Scalar(Operator):
    """``a`` times the identity."""

    dim_: int
    a: complex

    def __post_init__(self) -> None:
        if self.dim_ < 1:
            msg = f"dimension must be positive, got {self.dim_}"
            raise InvalidParameter(msg)
        object.__setattr__(self, "a", complex(self.a))

    @property
    def shape(self) -> tuple[int, int]:
        """Square."""
        return (self.dim_, self.dim_)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Scale."""
        return self.a * x

    def to_matrix(self) -> np.ndarray:
        """``a * I``."""
        return self.a * np.eye(self.dim_, dtype=np.complex128)

    def norm(self) -> NormEstimate:
        """``|a|``."""
        return NormEstimate(abs(self.a), 0.0)

    def power(self, n: int) -> Operator:
        """``a**n``."""
        return Scalar(self.dim_, _cpow(self.a, n))


@dataclass(frozen=True, eq=False)
class RankOneFix(Operator):
    """e_1 -> e_1 and e_k -> 0 for k >= 2: a recurrent vector, not a recurrent operator."""

    dim_: int

    @property
    def shape(self) -> tuple[int, int]:
        """Square."""
        return (self.dim_, self.dim_)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Keep the first coordinate."""
        out = np.zeros_like(x, dtype=np.complex128)
        out[0] = x[0]
        return out

    def to_matrix(self) -> np.ndarray:
        """The matrix unit E_11."""
        m = np.zeros((self.dim_, self.dim_), dtype=np.complex128)
        m[0, 0] = 1.0
        return m

    def norm(self) -> NormEstimate:
        """A projection: norm 1."""
        return NormEstimate(1.0, 0.0)

    def power(self, n: int) -> Operator:
        """Idempotent; the zeroth power is the identity."""
        return Scalar(self.dim_, 1.0) if n == 0 else self


@dataclass(frozen=True, eq=False)
class Composition(Operator):
    """``left`` after ``right``."""

    left: Operator
    right: Operator

    def __post_init__(self) -> None:
        if self.left.shape[1] != self.right.shape[0]:
            raise DimensionMismatch(
                self.left.shape[1], self.right.shape[0], what="composition inner"
            )

    @property
    def shape(self) -> tuple[int, int]:
        """(left codomain, right domain)."""
        return (self.left.shape[0], self.right.shape[1])

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Apply ``right`` then ``left``."""
        return self.left.matvec(self.right.matvec(x))

    def to_matrix(self) -> np.ndarray:
        """Product of the two matrices."""
        return self.left.to_matrix() @ self.right.to_matrix()


@dataclass(frozen=True, eq=False)
class DirectSum(Operator):
    """Block-diagonal operator acting blockwise on a direct-sum space."""

    parts: tuple[Operator, ...]

    def __post_init__(self) -> None:
        parts = tuple(self.parts)
        if not parts:
            msg = "direct sum needs at least one part"
            raise InvalidParameter(msg)
        for part in parts:
            _require_square(part)
        object.__setattr__(self, "parts", parts)

    @property
    def part_dims(self) -> list[int]:
        """Dimensions of the blocks."""
        return [p.dim for p in self.parts]

    @property
    def shape(self) -> tuple[int, int]:
        """Square, of the summed dimension."""
        n = sum(self.part_dims)
        return (n, n)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Apply each part to its block."""
        cuts = np.cumsum(self.part_dims)[:-1]
        blocks = np.split(x, cuts)
        return np.concatenate([p.matvec(b) for p, b in zip(self.parts, blocks, strict=True)])

    def to_matrix(self) -> np.ndarray:
        """``scipy.linalg.block_diag`` of the parts."""
        return scipy.linalg.block_diag(*[p.to_matrix() for p in self.parts])

    def norm(self) -> NormEstimate:
        """Largest part norm."""
        estimates = [p.norm() for p in self.parts]
        return max(estimates, key=lambda e: e.value)

    def power(self, n: int) -> Operator:
        """Blockwise powers."""
        return DirectSum(tuple(p.power(n) for p in self.parts))


def identity(dim: int) -> Operator:
    """The identity on C^dim."""
    return Scalar(dim, 1.0)


_OPERATOR_ADAPTER: TypeAdapter[Any] = TypeAdapter(config.OperatorSpec)
_OPERATOR_KINDS = config.kind_tags(config.OperatorSpec)


def build_operator(spec: Mapping[str, Any] | config.OperatorSpec) -> Operator:
    """Build an operator from its config description.

    Parameters
    ----------
    spec
        A validated spec model or a plain mapping in the config schema.

    Raises
    ------
    UnknownVariant
        If the mapping names an unknown ``kind``.
    DimensionMismatch
        If composed or summed parts do not fit together.

    Examples
    --------
    >>> op = build_operator({"kind": "backward_shift", "dim": 8, "weight": 2})
    >>> operator_norm(op)
    2.0
    """
    if isinstance(spec, Mapping):
        kind = spec.get("kind")
        if kind not in _OPERATOR_KINDS:
            msg = f"unknown operator variant {kind!r}"
            raise UnknownVariant(msg)
        try:
            spec = _OPERATOR_ADAPTER.validate_python(spec)
        except ValidationError as exc:
            msg = f"malformed {kind} operator: {exc.errors()[0]['msg']}"
            raise InvalidParameter(msg) from exc
    return _build(spec)


def _build(spec: config.OperatorSpec) -> Operator:
    match spec:
        case config.DenseSpec(matrix=rows):
            widths = {len(r) for r in rows}
            if len(widths) != 1:
                msg = "dense matrix rows have different lengths"
                raise InvalidParameter(msg)
            return Dense(np.array(rows, dtype=np.complex128))
        case config.DiagonalSpec(entries=entries):
            return Diagonal(np.array(entries, dtype=np.complex128))
        case config.BackwardShiftSpec(dim=dim, weight=weight):
            return BackwardShift(dim, weight)
        case config.ForwardShiftSpec(dim=dim, weight=weight):
            return ForwardShift(dim, weight)
        case config.ScalarSpec(dim=dim, a=a):
            return Scalar(dim, a)
        case config.IdentitySpec(dim=dim):
            return identity(dim)
        case config.RankOneFixSpec(dim=dim):
            return RankOneFix(dim)
        case config.CompositionSpec(left=left, right=right):
            return Composition(_build(left), _build(right))
        case config.DirectSumSpec(parts=parts):
            return DirectSum(tuple(_build(p) for p in parts))
    msg = f"unknown operator variant {type(spec).__name__}"
    raise UnknownVariant(msg)


def apply(t: Operator, x: Vector) -> Vector:
    """Return ``T x``."""
    if x.dim != t.dim:
        raise DimensionMismatch(t.dim, x.dim)
    return Vector(t.matvec(x.coords))


def power_apply(t: Operator, n: int, x: Vector) -> Vector:
    """Return ``T^n x``; ``n`` is capped by ``Settings.power_budget``."""
    if n < 0:
        msg = f"power must be nonnegative, got {n}"
        raise InvalidParameter(msg)
    budget = get_settings().power_budget
    if n > budget:
        raise BudgetExceeded(n, budget)
    if x.dim != t.dim:
        raise DimensionMismatch(t.dim, x.dim)
    if n == 0:
        return x
    return Vector(t.power(n).matvec(x.coords))


def operator_norm(t: Operator) -> float:
    """Return the operator 2-norm.

    Exact for diagonal, scalar, shift, rank-one and direct-sum forms; a power
    iteration estimate otherwise (see :func:`estimate_norm`).

    Raises
    ------
    NonConvergence
        If the power iteration hits its cap. :func:`norm_upper_bound` is the
        fallback.
    """
    return t.norm().value


def norm_upper_bound(t: Operator) -> float:
    """A cheap upper bound: the structured norm or the Frobenius norm."""
    if isinstance(t, (Diagonal, Scalar, _Shift, RankOneFix)):
        return t.norm().value
    return float(np.linalg.norm(t.to_matrix(), "fro"))


def safe_norm(t: Operator) -> float:
    """Operator norm, degrading to :func:`norm_upper_bound` on non-convergence."""
    try:
        return t.norm().upper
    except NonConvergence:
        logger.warning("operator norm did not converge; using the Frobenius bound")
        return norm_upper_bound(t)


def materialize(t: Operator) -> np.ndarray:
    """Return the dense matrix of ``T``; column i is ``T e_i``.

    Raises
    ------
    DimensionCapExceeded
        Above ``Settings.dense_cap``.
    """
    cap = get_settings().dense_cap
    size = max(t.shape)
    if size > cap:
        raise DimensionCapExceeded(size, cap)
    return t.to_matrix()


@dataclass(frozen=True)
class TruncationWindow:
    """Regime in which truncated shift computations equal the sequence-space ones.

    Forward shifts need ``support_bound + power_bound <= dim``; every other
    variant needs ``support_bound <= dim``.
    """

    dim: int
    support_bound: int
    power_bound: int

    def __post_init__(self) -> None:
        if self.dim < 1 or self.support_bound < 1 or self.power_bound < 0:
            msg = f"invalid truncation window {self}"
            raise InvalidParameter(msg)

    def admits(self, t: Operator) -> bool:
        """Whether the window bounds suit ``t``."""
        if t.dim != self.dim:
            return False
        if _contains_forward_shift(t):
            return self.support_bound + self.power_bound <= self.dim
        return self.support_bound <= self.dim


def _contains_forward_shift(t: Operator) -> bool:
    match t:
        case ForwardShift():
            return True
        case Composition(left=left, right=right):
            return _contains_forward_shift(left) or _contains_forward_shift(right)
        case DirectSum(parts=parts):
            return any(_contains_forward_shift(p) for p in parts)
    return False


def support(x: Vector) -> int:
    """1-based index of the last nonzero coordinate (0 for the zero vector)."""
    nonzero = np.flatnonzero(x.coords)
    return int(nonzero[-1]) + 1 if nonzero.size else 0


def check_window(window: TruncationWindow, t: Operator, x: Vector, n: int) -> None:
    """Reject ``(T, x, n)`` outside ``window``.

    Raises
    ------
    WindowViolation
        If the operator, the support of ``x`` or the power break the window.
    """
    if not window.admits(t):
        msg = f"{type(t).__name__} on C^{t.dim} is not exact in {window}"
        raise WindowViolation(msg)
    if support(x) > window.support_bound:
        msg = f"support {support(x)} exceeds the window bound {window.support_bound}"
        raise WindowViolation(msg)
    if n > window.power_bound:
        msg = f"power {n} exceeds the window bound {window.power_bound}"
        raise WindowViolation(msg)


def sequence_space_power(t: Operator, n: int, x: Vector) -> dict[int, complex]:
    """Compute ``T^n x`` in the sequence space by index arithmetic.

    ``x`` is read as a finitely supported sequence. The result maps 1-based
    indices to nonzero values and may reach past ``dim``; comparing it with
    :func:`power_apply` tells whether truncation lost anything.
    """
    entries = {k + 1: complex(c) for k, c in enumerate(x.coords) if c != 0}
    match t:
        case BackwardShift(weight=w, steps=s):
            factor = w**n
            return {k - s * n: factor * c for k, c in entries.items() if k - s * n >= 1}
        case ForwardShift(weight=w, steps=s):
            factor = w**n
            return {k + s * n: factor * c for k, c in entries.items()}
        case Scalar(a=a):
            return {k: a**n * c for k, c in entries.items()}
        case Diagonal(entries=d):
            return {k: d[k - 1] ** n * c for k, c in entries.items()}
        case RankOneFix():
            if n == 0:
                return entries
            return {1: entries[1]} if 1 in entries else {}
    msg = f"no sequence-space model for {type(t).__name__}"
    raise UnknownVariant(msg)

