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

"""Moving recurrence witnesses and certificates between sets and spaces.

Each transfer recomputes the residual it hands out and checks it against the
bound the transfer promises; a broken bound raises :class:`BoundViolation`.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from opdyn.exceptions import (
    BoundViolation,
    DimensionMismatch,
    NotCommuting,
    NotDecomposable,
    NotDenseRange,
    NotMultiplicative,
    NotProductClosed,
    PairingDefect,
    ZeroImage,
)
from opdyn.operators import DirectSum, NormEstimate, Operator, estimate_norm, materialize
from opdyn.recurrence import (
    VERIFY_SLACK,
    RecurrenceWitness,
    SetRecurrenceCertificate,
    is_eps_recurrent,
    residual,
)
from opdyn.sets import DirectSumSet, EnumerationBudget, IndexSequence, OperatorSet, UnimodularScaled
from opdyn.space import Ball, Vector, norm

logger = logging.getLogger(__name__)

COMMUTE_TOL = 1e-9
RANK_TOL = 1e-10
PYTHAGORAS_TOL = 1e-12
PRODUCT_TOL = 1e-9


def _same_index(k: int) -> int:
    return k


@dataclass(frozen=True, eq=False)
class IntertwinerMap:
    """A dense-range map phi: X -> Y and the pairing k -> j with S_j phi = phi T_k.

    Dense range is checked as full row rank: every singular value is at least
    ``1e-10`` times the largest.
    """

    phi: Operator
    pairing: Callable[[int], int] = field(default=_same_index)

    def __post_init__(self) -> None:
        m = materialize(self.phi)
        s = scipy.linalg.svdvals(m)
        rows = m.shape[0]
        if s.size < rows or s[0] == 0.0 or s[rows - 1] < RANK_TOL * s[0]:
            msg = f"phi ({m.shape[0]}x{m.shape[1]}) does not have full row rank"
            raise NotDenseRange(msg)

    @property
    def norm(self) -> float:
        """Upper estimate of ``||phi||``."""
        return self.phi.norm().upper


def _as_map(phi: Operator | IntertwinerMap) -> IntertwinerMap:
    return phi if isinstance(phi, IntertwinerMap) else IntertwinerMap(phi)


def intertwining_defect(phi: Operator | IntertwinerMap, t: Operator, s: Operator) -> NormEstimate:
    """Return ``||S phi - phi T||`` with its power-iteration error bound."""
    phi_op = phi.phi if isinstance(phi, IntertwinerMap) else phi
    rows, cols = phi_op.shape
    if t.shape != (cols, cols):
        raise DimensionMismatch(cols, t.dim, what="intertwined domain")
    if s.shape != (rows, rows):
        raise DimensionMismatch(rows, s.dim, what="intertwined codomain")
    m = materialize(phi_op)
    return estimate_norm(materialize(s) @ m - m @ materialize(t))


@dataclass(frozen=True)
class TransferredWitness:
    """A witness at the transferred vector ``x`` together with the bound it meets."""

    x: Vector
    witness: RecurrenceWitness
    bound: float


def _apply_residual(op: Operator, x: Vector) -> float:
    return norm(Vector(op.matvec(x.coords)) - x)


def _check_bound(value: float, bound: float, what: str) -> None:
    if value > bound + VERIFY_SLACK:
        msg = f"{what}: residual {value:.3e} exceeds the transfer bound {bound:.3e}"
        raise BoundViolation(msg)


def commutant_pushforward(
    gamma: OperatorSet,
    s: Operator,
    x: Vector,
    witness: RecurrenceWitness,
    tol: float = COMMUTE_TOL,
) -> TransferredWitness:
    """Move a witness at ``x`` to ``Sx`` for an ``S`` commuting with the witness operator.

    ``||T(Sx) - Sx|| <= ||S(Tx - x)|| + ||TS - ST|| ||x||``, so the transferred
    residual is at most ``||S|| residual + defect ||x||``.

    Raises
    ------
    NotCommuting
        If ``||T_k S - S T_k||`` exceeds ``tol``.
    ZeroImage
        If ``Sx = 0``; zero is never a recurrent vector.
    """
    if s.shape != (gamma.dim, gamma.dim):
        raise DimensionMismatch(gamma.dim, s.dim, what="commutant")
    t = gamma.operator(witness.op_index)
    t_m, s_m = materialize(t), materialize(s)
    defect = estimate_norm(t_m @ s_m - s_m @ t_m).upper
    if defect > tol:
        raise NotCommuting(defect, tol)
    sx = Vector(s.matvec(x.coords))
    if sx.is_zero():
        msg = "S maps the recurrent vector to zero"
        raise ZeroImage(msg)
    value = _apply_residual(t, sx)
    bound = s.norm().upper * witness.residual + defect * norm(x)
    _check_bound(value, bound, "commutant push-forward")
    return TransferredWitness(sx, RecurrenceWitness(witness.op_index, value), bound)


def _paired_defect(
    phi: IntertwinerMap, gamma: OperatorSet, gamma1: OperatorSet, k: int, tol: float
) -> tuple[Operator, Operator, float]:
    j = phi.pairing(k)
    t, s = gamma.operator(k), gamma1.operator(j)
    defect = intertwining_defect(phi, t, s).upper
    if defect > tol:
        raise PairingDefect(k, defect, tol)
    return t, s, defect


def pushforward_witness(
    phi: Operator | IntertwinerMap,
    gamma: OperatorSet,
    gamma1: OperatorSet,
    x: Vector,
    witness: RecurrenceWitness,
    tol: float = COMMUTE_TOL,
) -> TransferredWitness:
    """Move a witness of ``gamma`` at ``x`` to one of ``gamma1`` at ``phi x``.

    With S = gamma1[pairing(k)] and delta = ||S phi - phi T_k||, the new
    residual is at most ``||phi|| residual + delta ||x||``.

    Raises
    ------
    PairingDefect
        If ``delta`` exceeds ``tol``.
    ZeroImage
        If ``phi x = 0``.
    """
    phi_map = _as_map(phi)
    _, s, defect = _paired_defect(phi_map, gamma, gamma1, witness.op_index, tol)
    y = Vector(phi_map.phi.matvec(x.coords))
    if y.is_zero():
        msg = "phi maps the recurrent vector to zero"
        raise ZeroImage(msg)
    value = _apply_residual(s, y)
    bound = phi_map.norm * witness.residual + defect * norm(x)
    _check_bound(value, bound, "quasi-similar push-forward")
    return TransferredWitness(y, RecurrenceWitness(phi_map.pairing(witness.op_index), value), bound)


def pushforward_set_certificate(
    phi: Operator | IntertwinerMap,
    certificate: SetRecurrenceCertificate,
    gamma: OperatorSet,
    gamma1: OperatorSet,
    tol: float = COMMUTE_TOL,
) -> SetRecurrenceCertificate:
    """Map a ball-return certificate of ``gamma`` to one of ``gamma1``.

    A return on B(c, r) becomes a return on B(phi c, ||phi|| r) at ``phi z``
    with value at most ``||phi|| value + delta ||z||``.
    """
    phi_map = _as_map(phi)
    _, s, defect = _paired_defect(phi_map, gamma, gamma1, certificate.op_index, tol)
    scale = phi_map.norm
    center = Vector(phi_map.phi.matvec(certificate.ball.center.coords))
    z = Vector(phi_map.phi.matvec(certificate.z.coords))
    radius = scale * certificate.ball.radius
    value = norm(Vector(s.matvec(z.coords)) - center)
    bound = scale * certificate.value + defect * norm(certificate.z)
    _check_bound(value, bound, "certificate push-forward")
    if value >= radius:
        msg = f"mapped return {value:.3e} is not inside the image ball of radius {radius:.3e}"
        raise BoundViolation(msg)
    return SetRecurrenceCertificate(
        Ball(center, radius), phi_map.pairing(certificate.op_index), z, value, radius - value
    )


@dataclass(frozen=True)
class ComponentWitness:
    """Witness of one summand; ``zero`` marks a vanishing component."""

    part: int
    x: Vector
    witness: RecurrenceWitness | None
    zero: bool


def _decompose(gamma: OperatorSet, k: int) -> tuple[DirectSumSet, DirectSum]:
    if not isinstance(gamma, DirectSumSet):
        msg = f"{type(gamma).__name__} is not a direct sum of sets"
        raise NotDecomposable(msg)
    op = gamma.operator(k)
    if not isinstance(op, DirectSum) or op.part_dims != gamma.part_dims:
        msg = f"operator {k} does not split along the summands"
        raise NotDecomposable(msg)
    return gamma, op


def project_direct_sum_witness(
    gamma: OperatorSet, x: Vector, witness: RecurrenceWitness
) -> list[ComponentWitness]:
    """Split a witness of a direct sum of sets into witnesses of the summands.

    Component residuals satisfy ``sum res_i^2 = res^2`` in the 2-norm.
    """
    dsum, op = _decompose(gamma, witness.op_index)
    indices = dsum.component_indices(witness.op_index)
    out = []
    total = 0.0
    for i, (part, xi, k_i) in enumerate(
        zip(op.parts, x.split(dsum.part_dims), indices, strict=True), start=1
    ):
        value = _apply_residual(part, xi)
        total += value * value
        if xi.is_zero():
            out.append(ComponentWitness(i, xi, None, zero=True))
        else:
            out.append(ComponentWitness(i, xi, RecurrenceWitness(k_i, value), zero=False))
    expected = witness.residual**2
    if abs(total - expected) > PYTHAGORAS_TOL * max(1.0, expected):
        msg = f"component residuals square-sum to {total:.3e}, expected {expected:.3e}"
        raise BoundViolation(msg)
    return out


def project_direct_sum_certificate(
    gamma: OperatorSet, certificate: SetRecurrenceCertificate
) -> list[SetRecurrenceCertificate]:
    """Split a certificate on a ball of the sum space into certificates of the summands.

    Each component ball keeps the radius and the margin.
    """
    dsum, op = _decompose(gamma, certificate.op_index)
    indices = dsum.component_indices(certificate.op_index)
    dims = dsum.part_dims
    radius = certificate.ball.radius
    out = []
    for part, c_i, z_i, k_i in zip(
        op.parts,
        certificate.ball.center.split(dims),
        certificate.z.split(dims),
        indices,
        strict=True,
    ):
        value = norm(Vector(part.matvec(z_i.coords)) - c_i)
        _check_bound(value, certificate.value, "direct-sum certificate")
        out.append(SetRecurrenceCertificate(Ball(c_i, radius), k_i, z_i, value, certificate.margin))
    return out


@dataclass(frozen=True)
class TransferCheck:
    """Witness searches under a set and its unimodular rescaling."""

    base: RecurrenceWitness | None
    scaled: RecurrenceWitness | None
    base_residual: float
    scaled_residual: float
    budget: int
    enlarged_budget: int
    sampled_products: list[tuple[int, int, int]]

    @property
    def agree(self) -> bool:
        """Whether both searches reached the same verdict."""
        return (self.base is None) == (self.scaled is None)


def _check_product_closure(
    gamma: OperatorSet, phases: IndexSequence, search_limit: int, samples: int
) -> list[tuple[int, int, int]]:
    members = [materialize(op) for _, op in gamma.enumerate(search_limit)]
    sample = range(1, min(samples, len(members)) + 1)
    found = []
    for j, k in itertools.product(sample, repeat=2):
        product = members[j - 1] @ members[k - 1]
        scale = max(1.0, float(np.linalg.norm(product)))
        matches = [
            m
            for m, member in enumerate(members, start=1)
            if np.linalg.norm(member - product) <= PRODUCT_TOL * scale
        ]
        if not matches:
            msg = f"T_{j} T_{k} is not among the first {len(members)} members"
            raise NotProductClosed(msg)
        target = phases(j) * phases(k)
        m = next((m for m in matches if abs(phases(m) - target) <= PRODUCT_TOL), None)
        if m is None:
            msg = f"no index m with T_m = T_{j} T_{k} carries the phase lambda_{j} lambda_{k}"
            raise NotMultiplicative(msg)
        found.append((j, k, m))
    return found


def unimodular_transfer_check(
    gamma: OperatorSet,
    phases: IndexSequence,
    x: Vector,
    eps: float,
    budget: int | EnumerationBudget,
    enlargement: int = 10,
    samples: int = 3,
) -> TransferCheck:
    """Search witnesses at ``x`` under ``gamma`` and under ``{lambda_k T_k}``.

    The rescaled set is searched with ``budget * enlargement`` since its returns
    come from products of members. Closure of ``gamma`` under products and the
    multiplicative law of the phases are checked on the first ``samples``
    indices before searching. This is an experiment, not a decision procedure.

    Raises
    ------
    NotProductClosed
        If a sampled product is not enumerated.
    NotMultiplicative
        If no matching index carries the product phase.
    NotUnimodular
        If a phase leaves the unit circle.
    """
    limit = EnumerationBudget.of(budget).max_index
    enlarged = limit * enlargement
    sampled = _check_product_closure(gamma, phases, gamma.bound(enlarged), samples)
    scaled_set = UnimodularScaled(gamma, phases)
    base = is_eps_recurrent(gamma, x, eps, limit)
    scaled = is_eps_recurrent(scaled_set, x, eps, enlarged)
    base_residual, _ = residual(gamma, x, limit)
    scaled_residual, _ = residual(scaled_set, x, enlarged)
    report = TransferCheck(
        base, scaled, base_residual, scaled_residual, limit, enlarged, sampled
    )
    if not report.agree:
        logger.info("unimodular transfer disagrees within budget %d/%d", limit, enlarged)
    return report
