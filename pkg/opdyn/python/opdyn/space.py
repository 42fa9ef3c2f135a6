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

"""The ambient space: complex vectors, norms, balls, sampling and lattices."""

from __future__ import annotations

import enum
import itertools
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from opdyn.exceptions import DimensionMismatch, GridTooLarge, InvalidParameter
from opdyn.settings import get_settings

logger = logging.getLogger(__name__)

# Keeps roundoff inside closed balls when a point is placed on the sphere.
INTERIOR_SHRINK = 1.0 - 8.0 * np.finfo(np.float64).eps


@dataclass(frozen=True, eq=False)
class Vector:
    """An immutable finite-dimensional complex vector.

    Parameters
    ----------
    coords
        Anything :func:`numpy.asarray` turns into a nonempty 1-D array of finite
        numbers. The coordinates are copied and frozen.

    Notes
    -----
    Basis vectors are 1-based, so ``Vector.basis(4, 1)`` is e_1.
    """

    coords: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.coords, dtype=np.complex128)
        if arr.ndim != 1 or arr.size == 0:
            msg = f"a vector needs a nonempty 1-D coordinate array, got shape {arr.shape}"
            raise InvalidParameter(msg)
        if not np.all(np.isfinite(arr)):
            msg = "vector coordinates must be finite"
            raise InvalidParameter(msg)
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)

    @property
    def dim(self) -> int:
        """Complex dimension."""
        return int(self.coords.size)

    @classmethod
    def zeros(cls, dim: int) -> Vector:
        """Return the zero vector of ``dim`` coordinates."""
        return cls(np.zeros(dim, dtype=np.complex128))

    @classmethod
    def basis(cls, dim: int, k: int) -> Vector:
        """Return e_k in C^dim (``k`` is 1-based)."""
        if not 1 <= k <= dim:
            msg = f"basis index {k} outside 1..{dim}"
            raise InvalidParameter(msg)
        arr = np.zeros(dim, dtype=np.complex128)
        arr[k - 1] = 1.0
        return cls(arr)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float] | complex | float]) -> Vector:
        """Build a vector from ``[re, im]`` pairs (plain numbers are also accepted)."""
        return cls([_to_complex(p) for p in pairs])

    @classmethod
    def direct_sum(cls, parts: Sequence[Vector]) -> Vector:
        """Concatenate vectors into a vector of the direct-sum space."""
        return cls(np.concatenate([p.coords for p in parts]))

    def to_pairs(self) -> list[list[float]]:
        """Return the coordinates as ``[re, im]`` pairs."""
        return [[float(c.real), float(c.imag)] for c in self.coords]

    def split(self, dims: Sequence[int]) -> list[Vector]:
        """Split into consecutive blocks of the given dimensions."""
        if sum(dims) != self.dim:
            raise DimensionMismatch(sum(dims), self.dim)
        cuts = np.cumsum(dims)[:-1]
        return [Vector(block) for block in np.split(self.coords, cuts)]

    def is_zero(self) -> bool:
        """Whether every coordinate is exactly zero."""
        return not np.any(self.coords)

    def isclose(self, other: Vector, atol: float = 1e-12) -> bool:
        """Whether ``other`` is within ``atol`` in the 2-norm."""
        _check_dims(self, other)
        return bool(np.linalg.norm(self.coords - other.coords) <= atol)

    def __add__(self, other: Vector) -> Vector:
        """Coordinatewise sum."""
        _check_dims(self, other)
        return Vector(self.coords + other.coords)

    def __sub__(self, other: Vector) -> Vector:
        """Coordinatewise difference."""
        _check_dims(self, other)
        return Vector(self.coords - other.coords)

    def __neg__(self) -> Vector:
        """Additive inverse."""
        return Vector(-self.coords)

    def __mul__(self, alpha: complex) -> Vector:
        """Scalar multiple."""
        return Vector(complex(alpha) * self.coords)

    __rmul__ = __mul__


def _check_dims(a: Vector, b: Vector) -> None:
    if a.dim != b.dim:
        raise DimensionMismatch(a.dim, b.dim)


def _to_complex(value: Sequence[float] | complex | float) -> complex:
    if isinstance(value, (int, float, complex)):
        return complex(value)
    re, im = value
    return complex(float(re), float(im))


class NormKind(enum.Enum):
    """The two supported norms. The feasibility solver is Euclidean only."""

    TWO = "2"
    INF = "inf"

    @classmethod
    def parse(cls, p: int | float | str) -> NormKind:
        """Map ``2`` / ``"inf"`` / ``math.inf`` to a norm kind."""
        if p in (2, "2"):
            return cls.TWO
        if p in ("inf", "∞") or (isinstance(p, float) and math.isinf(p)):
            return cls.INF
        msg = f"unsupported norm p={p!r}; only 2 and inf"
        raise InvalidParameter(msg)

    @property
    def ord(self) -> float:
        """The ``ord`` argument for :func:`numpy.linalg.norm`."""
        return 2.0 if self is NormKind.TWO else math.inf


def norm(v: Vector, kind: NormKind = NormKind.TWO) -> float:
    """Return the p-norm of ``v``."""
    return float(np.linalg.norm(v.coords, ord=kind.ord))


@dataclass(frozen=True, eq=False)
class Ball:
    """The closed ball of ``radius`` around ``center``.

    Open-ball claims are handled by the callers through strict margins.
    """

    center: Vector
    radius: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.radius) or self.radius < 0:
            msg = f"ball radius must be finite and nonnegative, got {self.radius!r}"
            raise InvalidParameter(msg)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        """Dimension of the ambient space."""
        return self.center.dim

    def contains(self, w: Vector, slack: float = 0.0) -> bool:
        """Whether ``w`` lies in the closed ball enlarged by ``slack``."""
        return norm(w - self.center) <= self.radius + slack


@dataclass(frozen=True)
class Rng:
    """A reproducible sample stream: (seed, stream) fixes every draw.

    Parallel workers use distinct ``stream`` indices under one seed.
    """

    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            msg = f"seed must be an unsigned 64-bit integer, got {self.seed}"
            raise InvalidParameter(msg)
        if self.stream < 0:
            msg = f"stream index must be nonnegative, got {self.stream}"
            raise InvalidParameter(msg)

    def generator(self) -> np.random.Generator:
        """Return a fresh generator positioned at the start of this stream."""
        return np.random.default_rng(
            np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        )


def sample_array(b: Ball, rng: Rng, count: int) -> np.ndarray:
    """Draw ``count`` points uniformly from ``b``, one per row.

    The direction is a normalized complex Gaussian; the radius is scaled by
    ``u**(1/(2*dim))`` because C^dim is R^(2*dim).
    """
    gen = rng.generator()
    dim = b.dim
    g = gen.standard_normal((count, dim)) + 1j * gen.standard_normal((count, dim))
    lengths = np.linalg.norm(g, axis=1, keepdims=True)
    # A Gaussian draw of exactly zero has probability zero; guard the division anyway.
    lengths[lengths == 0.0] = 1.0
    u = gen.random((count, 1))
    radii = b.radius * INTERIOR_SHRINK * u ** (1.0 / (2 * dim))
    return b.center.coords + radii * (g / lengths)


def sample_in_ball(b: Ball, rng: Rng) -> Vector:
    """Draw one uniform point of ``b`` (the first draw of the stream)."""
    if b.radius == 0.0:
        return b.center
    return Vector(sample_array(b, rng, 1)[0])


def grid_points(b: Ball, per_axis: int) -> list[Vector]:
    """Return a deterministic lattice of points of ``b``.

    The real and imaginary part of every coordinate take ``per_axis`` evenly
    spaced offsets across the cube inscribed in the ball, so every lattice point
    lies in ``b``. The center always comes first when ``per_axis`` is even and
    sits in the middle of the lattice order when it is odd.

    Raises
    ------
    GridTooLarge
        If ``dim * per_axis`` exceeds ``Settings.grid_cap`` or the lattice would
        hold more than ``Settings.max_grid_points`` points.
    """
    if per_axis < 1:
        msg = f"per_axis must be at least 1, got {per_axis}"
        raise InvalidParameter(msg)
    settings = get_settings()
    dim = b.dim
    if dim * per_axis > settings.grid_cap:
        msg = f"dim*per_axis = {dim * per_axis} exceeds grid cap {settings.grid_cap}"
        raise GridTooLarge(msg)
    if per_axis == 1:
        return [b.center]
    total = per_axis ** (2 * dim)
    if total > settings.max_grid_points:
        msg = f"{total} lattice points exceed the cap of {settings.max_grid_points}"
        raise GridTooLarge(msg)

    half = b.radius * INTERIOR_SHRINK / math.sqrt(2 * dim)
    offsets = np.linspace(-half, half, per_axis)
    if per_axis % 2 == 1:
        offsets[per_axis // 2] = 0.0
    points = []
    if per_axis % 2 == 0:
        points.append(b.center)
    c = b.center.coords
    for combo in itertools.product(offsets, repeat=2 * dim):
        flat = np.asarray(combo)
        points.append(Vector(c + flat[0::2] + 1j * flat[1::2]))
    logger.debug("grid of %d points around a ball of radius %g", len(points), b.radius)
    return points
