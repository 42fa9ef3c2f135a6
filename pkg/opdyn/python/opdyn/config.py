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

"""JSON schema of analysis configs, as pydantic models.

Complex numbers are written as ``[re, im]`` pairs (plain reals are accepted
too). Operators, sequences, operator sets and analyses are tagged unions on
their ``kind`` field.
"""

from __future__ import annotations

import typing
from typing import Annotated, Any, Literal

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
)


def _coerce_complex(value: Any) -> Any:  # noqa: ANN401
    if isinstance(value, (list, tuple)) and len(value) == 2:
        re, im = value
        if isinstance(re, (int, float)) and isinstance(im, (int, float)):
            return complex(float(re), float(im))
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    return value


Complex = Annotated[complex, BeforeValidator(_coerce_complex)]
VectorSpec = Annotated[list[Complex], Field(min_length=1)]


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# Operators


class DenseSpec(_Spec):
    """A dense matrix, row by row (may be rectangular for intertwiners)."""

    kind: Literal["dense"]
    matrix: Annotated[list[Annotated[list[Complex], Field(min_length=1)]], Field(min_length=1)]


class DiagonalSpec(_Spec):
    """Diagonal entries."""

    kind: Literal["diagonal"]
    entries: VectorSpec


class BackwardShiftSpec(_Spec):
    """Weighted backward shift: e_1 -> 0, e_(k+1) -> weight * e_k."""

    kind: Literal["backward_shift"]
    dim: PositiveInt
    weight: Complex = 1 + 0j


class ForwardShiftSpec(_Spec):
    """Weighted forward shift: e_k -> weight * e_(k+1), truncated at ``dim``."""

    kind: Literal["forward_shift"]
    dim: PositiveInt
    weight: Complex = 1 + 0j


class ScalarSpec(_Spec):
    """``a`` times the identity."""

    kind: Literal["scalar"]
    dim: PositiveInt
    a: Complex


class IdentitySpec(_Spec):
    """The identity."""

    kind: Literal["identity"]
    dim: PositiveInt


class RankOneFixSpec(_Spec):
    """e_1 -> e_1 and e_k -> 0 for k >= 2."""

    kind: Literal["rank_one_fix"]
    dim: PositiveInt


class CompositionSpec(_Spec):
    """``left`` after ``right``."""

    kind: Literal["composition"]
    left: OperatorSpec
    right: OperatorSpec


class DirectSumSpec(_Spec):
    """Block-diagonal direct sum of square parts."""

    kind: Literal["direct_sum"]
    parts: Annotated[list[OperatorSpec], Field(min_length=1)]


OperatorSpec = Annotated[
    DenseSpec
    | DiagonalSpec
    | BackwardShiftSpec
    | ForwardShiftSpec
    | ScalarSpec
    | IdentitySpec
    | RankOneFixSpec
    | CompositionSpec
    | DirectSumSpec,
    Field(discriminator="kind"),
]


# Index sequences


class OnePlusInverseSpec(_Spec):
    """a_n = 1 + scale / n."""

    kind: Literal["one_plus_inverse"]
    scale: Complex = 1 + 0j


class UnimodularPhaseSpec(_Spec):
    """lambda_n = exp(i * n * theta)."""

    kind: Literal["unimodular_phase"]
    theta: float


class ExplicitListSpec(_Spec):
    """A finite list; index n reads ``values[n - 1]``."""

    kind: Literal["explicit_list"]
    values: VectorSpec


SequenceSpec = Annotated[
    OnePlusInverseSpec | UnimodularPhaseSpec | ExplicitListSpec,
    Field(discriminator="kind"),
]


# C-regularized groups and grids


class GroupSpec(_Spec):
    """S(z) = exp(z * generator) @ regularizer."""

    generator: OperatorSpec
    regularizer: OperatorSpec


class RectangleSpec(_Spec):
    """Lattice re_min..re_max x im_min..im_max with spacing ``step``."""

    re: tuple[float, float]
    im: tuple[float, float]
    step: PositiveFloat


class GridSpec(_Spec):
    """A finite list of complex points: an optional rectangle, then extra points."""

    rectangle: RectangleSpec | None = None
    points: list[Complex] = Field(default_factory=list)


# Operator sets


class FiniteListSetSpec(_Spec):
    """An explicit finite list of operators."""

    kind: Literal["finite_list"]
    ops: Annotated[list[OperatorSpec], Field(min_length=1)]


class PowersSpec(_Spec):
    """T^start, T^(start+1), ..."""

    kind: Literal["powers"]
    base: OperatorSpec
    start_exponent: Annotated[int, Field(ge=0)] = 1


class ScalarFamilySpec(_Spec):
    """a_n * I for an index sequence a_n."""

    kind: Literal["scalar_family"]
    dim: PositiveInt
    sequence: SequenceSpec


class UnimodularScaledSpec(_Spec):
    """lambda_n * T_n over a base set."""

    kind: Literal["unimodular_scaled"]
    base: SetSpec
    phases: SequenceSpec


class DirectSumSetSpec(_Spec):
    """Direct sum of sets, paired diagonally or as the full product."""

    kind: Literal["direct_sum_set"]
    parts: Annotated[list[SetSpec], Field(min_length=1)]
    mode: Literal["diagonal", "product"] = "diagonal"


class ConjugateSetSpec(_Spec):
    """phi T phi^-1 over a base set; ``phi_inv`` defaults to the numerical inverse."""

    kind: Literal["conjugate_set"]
    base: SetSpec
    phi: OperatorSpec
    phi_inv: OperatorSpec | None = None


class CRegGridSpec(_Spec):
    """S(z) for z on a grid."""

    kind: Literal["creg_grid"]
    group: GroupSpec
    grid: GridSpec


SetSpec = Annotated[
    FiniteListSetSpec
    | PowersSpec
    | ScalarFamilySpec
    | UnimodularScaledSpec
    | DirectSumSetSpec
    | ConjugateSetSpec
    | CRegGridSpec,
    Field(discriminator="kind"),
]


# Analyses


class BallSpec(_Spec):
    """A ball; certify and construct need a positive radius."""

    center: VectorSpec
    radius: NonNegativeFloat


class BallGridSpec(_Spec):
    """Balls of radius ``sub_radius`` centered on a lattice of a ball."""

    center: VectorSpec
    radius: NonNegativeFloat
    per_axis: PositiveInt
    sub_radius: PositiveFloat


class ProbeSampleSpec(_Spec):
    """``count`` probes drawn uniformly from a ball with the config seed."""

    count: PositiveInt
    ball: BallSpec


class _Analysis(_Spec):
    budget: PositiveInt | None = None


class ResidualAnalysis(_Analysis):
    """min over the set of ||T x - x||."""

    kind: Literal["residual"]
    x: VectorSpec


class EpsRecurrentAnalysis(_Analysis):
    """First witness with residual below ``eps``."""

    kind: Literal["eps_recurrent"]
    x: VectorSpec
    eps: PositiveFloat


class LatticeSpec(_Spec):
    """The lattice of :func:`opdyn.space.grid_points` in a ball."""

    center: VectorSpec
    radius: NonNegativeFloat
    per_axis: PositiveInt


class EpsLatticeAnalysis(_Analysis):
    """``eps_recurrent`` at every nonzero point of a lattice."""

    kind: Literal["eps_lattice"]
    lattice: LatticeSpec
    eps: PositiveFloat


class GdeltaAnalysis(_Analysis):
    """Witnesses for every level 1/s, s = 1..s_max."""

    kind: Literal["gdelta"]
    x: VectorSpec
    s_max: PositiveInt


class CertifySetAnalysis(_Analysis):
    """Ball-return certificates for explicit balls and/or a ball lattice."""

    kind: Literal["certify_set"]
    balls: list[BallSpec] = Field(default_factory=list)
    grid: BallGridSpec | None = None
    margin: PositiveFloat | None = None
    fallback: bool = False


class ConstructAnalysis(_Analysis):
    """Nested-ball construction of a recurrent vector."""

    kind: Literal["construct"]
    ball: BallSpec
    steps: PositiveInt
    theta: Annotated[float, Field(gt=0.0, lt=1.0)] = 0.5


class OrbitRatioAnalysis(_Analysis):
    """Fraction of probes within ``delta`` of the orbit."""

    kind: Literal["orbit_ratio"]
    x: VectorSpec
    delta: PositiveFloat
    probes: list[VectorSpec] = Field(default_factory=list)
    sample: ProbeSampleSpec | None = None


class GroupScanAnalysis(_Analysis):
    """Ball-return certificates of a C-regularized group over a grid."""

    kind: Literal["group_scan"]
    group: GroupSpec
    grid: GridSpec
    balls: Annotated[list[BallSpec], Field(min_length=1)]
    margin: PositiveFloat | None = None


class TransferCheckAnalysis(_Analysis):
    """Witness search under a set and under its unimodular rescaling."""

    kind: Literal["transfer_check"]
    phases: SequenceSpec
    x: VectorSpec
    eps: PositiveFloat
    enlargement: PositiveInt = 10


AnalysisSpec = Annotated[
    ResidualAnalysis
    | EpsRecurrentAnalysis
    | EpsLatticeAnalysis
    | GdeltaAnalysis
    | CertifySetAnalysis
    | ConstructAnalysis
    | OrbitRatioAnalysis
    | GroupScanAnalysis
    | TransferCheckAnalysis,
    Field(discriminator="kind"),
]


class SpaceSpec(_Spec):
    """The ambient space C^dim and the reporting norm."""

    dim: PositiveInt
    norm_p: Literal[2, "inf"] = 2


class Tolerances(_Spec):
    """Tolerances shared by the analyses of one config."""

    margin_fraction: PositiveFloat = 1e-6


class AnalysisConfig(_Spec):
    """A full analysis config document."""

    space: SpaceSpec
    operator_set: SetSpec | None = None
    analyses: Annotated[list[AnalysisSpec], Field(min_length=1)]
    seed: Annotated[int, Field(ge=0, lt=2**64)] = 0
    budget: PositiveInt = 100
    tolerances: Tolerances = Field(default_factory=Tolerances)


def _rebuild(model: type[BaseModel]) -> None:
    for sub in model.__subclasses__():
        sub.model_rebuild()
        _rebuild(sub)


_rebuild(_Spec)


def kind_tags(alias: Any) -> frozenset[str]:  # noqa: ANN401
    """Return the `kind` tags of a tagged union such as :data:`OperatorSpec`."""
    union = typing.get_args(alias)[0]
    return frozenset(
        tag
        for model in typing.get_args(union)
        for tag in typing.get_args(model.model_fields["kind"].annotation)
    )


KIND_TAGS = frozenset().union(
    *(kind_tags(a) for a in (OperatorSpec, SequenceSpec, SetSpec, AnalysisSpec))
)


def format_location(loc: tuple[int | str, ...]) -> str:
    """Render a pydantic error location as ``analyses[0].balls[0].radius``.

    Discriminator tags that pydantic inserts into the location are dropped.
    """
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        elif part in KIND_TAGS:
            continue
        else:
            out += f".{part}" if out else str(part)
    return out or "$"

