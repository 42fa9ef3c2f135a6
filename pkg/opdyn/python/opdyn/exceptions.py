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

"""Errors raised by opdyn.

Every error derives from :class:`Error`, so callers can catch the whole family
at once. Errors that carry structured data build their message themselves.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from opdyn.recurrence import NestedBallTrace

__all__ = [
    "BoundViolation",
    "BudgetExceeded",
    "ConfigError",
    "DimensionCapExceeded",
    "DimensionMismatch",
    "Error",
    "GridTooLarge",
    "InvalidParameter",
    "NonConvergence",
    "NotCommuting",
    "NotDecomposable",
    "NotDenseRange",
    "NotInvertible",
    "NotMultiplicative",
    "NotProductClosed",
    "NotUnimodular",
    "Overflow",
    "PairingDefect",
    "SchemaError",
    "SolverFailure",
    "StepFailed",
    "UnknownExample",
    "UnknownKind",
    "UnknownVariant",
    "WindowViolation",
    "ZeroImage",
    "ZeroVector",
]


class Error(Exception):
    """Base class of every opdyn error."""


class DimensionMismatch(Error):
    """Operands live in spaces of different dimension."""

    def __init__(self, expected: int, actual: int, what: str = "vector") -> None:
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what} has dimension {actual}, expected {expected}")


class UnknownVariant(Error):
    """An operator description names a variant that does not exist."""


class BudgetExceeded(Error):
    """A requested power or index exceeds the configured budget."""

    def __init__(self, requested: int, budget: int) -> None:
        self.requested = requested
        self.budget = budget
        super().__init__(f"requested {requested} exceeds the budget of {budget}")


class NonConvergence(Error):
    """An iterative estimate did not converge within its iteration cap."""


class DimensionCapExceeded(Error):
    """A dense materialization was requested above the configured cap."""

    def __init__(self, dim: int, cap: int) -> None:
        self.dim = dim
        self.cap = cap
        super().__init__(f"dimension {dim} exceeds the dense cap of {cap}")


class GridTooLarge(Error):
    """A lattice request exceeds the configured grid caps."""


class WindowViolation(Error):
    """A shift computation falls outside its declared truncation window."""


class InvalidParameter(Error, ValueError):
    """A numeric parameter is outside its admissible range."""


class NotUnimodular(Error):
    """A phase sequence has an entry off the unit circle."""

    def __init__(self, index: int, modulus: float) -> None:
        self.index = index
        self.modulus = modulus
        super().__init__(f"|lambda_{index}| = {modulus!r}, expected 1")


class NotInvertible(Error):
    """A map required to be invertible is not (to tolerance)."""


class NotDenseRange(Error):
    """An intertwiner does not have full row rank."""


class ZeroVector(Error):
    """Vector recurrence is only defined for nonzero vectors."""


class SolverFailure(Error):
    """The ball-return solver could not bracket its scalar root."""


class StepFailed(Error):
    """The nested-ball construction found no return at some step.

    The partial trace built so far is kept on :attr:`trace`.
    """

    def __init__(self, step: int, budget: int, trace: NestedBallTrace) -> None:
        self.step = step
        self.budget = budget
        self.trace = trace
        super().__init__(
            f"no operator within budget {budget} returns the shrunken ball at step {step}"
        )


class NotCommuting(Error):
    """A commutation defect exceeds its tolerance."""

    def __init__(self, defect: float, tol: float) -> None:
        self.defect = defect
        self.tol = tol
        super().__init__(f"commutation defect {defect:.3e} exceeds {tol:.3e}")


class ZeroImage(Error):
    """A transferred vector vanished, so it cannot be a recurrent vector."""


class PairingDefect(Error):
    """A paired operator does not intertwine to tolerance."""

    def __init__(self, index: int, defect: float, tol: float) -> None:
        self.index = index
        self.defect = defect
        self.tol = tol
        super().__init__(
            f"intertwining defect {defect:.3e} at index {index} exceeds {tol:.3e}"
        )


class NotDecomposable(Error):
    """An operator is not a direct sum matching the component spaces."""


class NotProductClosed(Error):
    """A sampled product of set elements was not found in the enumeration."""


class NotMultiplicative(Error):
    """A phase sequence does not follow the index semigroup law."""


class BoundViolation(Error):
    """A recomputed residual broke the bound a transfer result promised."""


class Overflow(Error):
    """An exponential would exceed the overflow guard."""


class UnknownExample(Error):
    """No built-in scenario has the requested name."""


class ConfigError(Error):
    """Base class of configuration errors (CLI exit code 3)."""


class SchemaError(ConfigError):
    """A config document does not match the schema."""

    def __init__(self, path: str, reason: str) -> None:
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class UnknownKind(ConfigError):
    """A config document uses an unknown ``kind`` tag."""

    def __init__(self, path: str, kind: object) -> None:
        self.path = path
        self.kind = kind
        super().__init__(f"{path}: unknown kind {kind!r}")
