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

"""Recurrence witnesses, ball-return certificates and the nested-ball construction.

Every search here is budget-relative: a missing witness or certificate means
"none among the first ``budget`` members", never a proof of non-recurrence.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from opdyn.exceptions import (
    BoundViolation,
    DimensionMismatch,
    InvalidParameter,
    Overflow,
    SolverFailure,
    StepFailed,
    ZeroVector,
)
from opdyn.operators import Operator, materialize, safe_norm
from opdyn.sets import EnumerationBudget, OperatorSet
from opdyn.space import INTERIOR_SHRINK, Ball, NormKind, Vector, norm

logger = logging.getLogger(__name__)

ROOT_MAXITER = 200
VERIFY_SLACK = 1e-9
DEFAULT_MARGIN_FRACTION = 1e-6


@dataclass(frozen=True)
class RecurrenceWitness:
    """T_k with ``residual = ||T_k x - x||``; ``point`` is set for ball returns."""

    op_index: int
    residual: float
    point: Vector | None = None


def _check_vector(gamma: OperatorSet, x: Vector) -> None:
    if x.dim != gamma.dim:
        raise DimensionMismatch(gamma.dim, x.dim)
    if x.is_zero():
        msg = "recurrent vectors are nonzero by definition"
        raise ZeroVector(msg)


def _residuals(
    gamma: OperatorSet, x: Vector, budget: int | EnumerationBudget, kind: NormKind
) -> Iterator[tuple[int, float]]:
    with np.errstate(over="ignore", invalid="ignore"):
        for k, image in gamma.images(x.coords, budget):
            value = float(np.linalg.norm(image - x.coords, ord=kind.ord))
            yield k, value if math.isfinite(value) else math.inf


def residual(
    gamma: OperatorSet,
    x: Vector,
    budget: int | EnumerationBudget,
    kind: NormKind = NormKind.TWO,
) -> tuple[float, RecurrenceWitness]:
    """Return ``min_k ||T_k x - x||`` over the budget and the index attaining it.

    Ties go to the smallest index.

    Raises
    ------
    ZeroVector
        For ``x = 0``.

    Examples
    --------
    >>> from opdyn.sets import OnePlusInverse, ScalarFamily
    >>> value, witness = residual(ScalarFamily(1, OnePlusInverse()), Vector([1.0]), 100)
    >>> witness.op_index
    100
    """
    _check_vector(gamma, x)
    best_k, best = 0, math.inf
    for k, value in _residuals(gamma, x, budget, kind):
        if value < best or best_k == 0:
            best_k, best = k, value
            if best == 0.0:
                break
    return best, RecurrenceWitness(best_k, best)


def is_eps_recurrent(
    gamma: OperatorSet,
    x: Vector,
    eps: float,
    budget: int | EnumerationBudget,
    kind: NormKind = NormKind.TWO,
) -> RecurrenceWitness | None:
    """Return the first witness with residual below ``eps``, or ``None`` within budget."""
    if eps <= 0:
        msg = f"eps must be positive, got {eps}"
        raise InvalidParameter(msg)
    _check_vector(gamma, x)
    for k, value in _residuals(gamma, x, budget, kind):
        if value < eps:
            return RecurrenceWitness(k, value)
    logger.info("no residual below %g within budget %s", eps, budget)
    return None


@dataclass(frozen=True)
class GdeltaMembership:
    """One witness per level 1/s (``None`` where the budget ran out)."""

    member: bool
    per_s: list[RecurrenceWitness | None]


def gdelta_membership(
    gamma: OperatorSet,
    x: Vector,
    s_max: int,
    budget: int | EnumerationBudget,
    kind: NormKind = NormKind.TWO,
) -> GdeltaMembership:
    """Check membership in the open sets {x : ||Tx - x|| < 1/s} for s = 1..s_max.

    ``member`` agrees with ``is_eps_recurrent(gamma, x, 1/s_max, budget)``.
    """
    if s_max < 1:
        msg = f"s_max must be positive, got {s_max}"
        raise InvalidParameter(msg)
    _check_vector(gamma, x)
    values = list(_residuals(gamma, x, budget, kind))
    per_s: list[RecurrenceWitness | None] = []
    for s in range(1, s_max + 1):
        level = 1.0 / s
        hit = next(((k, v) for k, v in values if v < level), None)
        per_s.append(None if hit is None else RecurrenceWitness(*hit))
    member = all(w is not None for w in per_s)
    if member != (per_s[-1] is not None):
        msg = "level witnesses are not nested"
        raise BoundViolation(msg)
    return GdeltaMembership(member, per_s)


# Ball returns


@dataclass(frozen=True)
class Feasibility:
    """``value = ||T z - c||`` at a point ``z`` of the closed ball."""

    value: float
    z: Vector


class _Factorization:
    """SVD of a square matrix, reused across every ball tested against it."""

    def __init__(self, matrix: np.ndarray) -> None:
        if not np.isfinite(matrix).all():
            msg = "operator entries overflowed to inf or nan"
            raise Overflow(msg)
        self.matrix = matrix
        self.u, self.s, self.vh = scipy.linalg.svd(matrix)
        self.norm = float(self.s[0]) if self.s.size else 0.0
        self.rank_tol = self.norm * max(matrix.shape) * np.finfo(np.float64).eps

    def solve(self, b: Ball) -> Feasibility:
        c = b.center.coords
        g = self.matrix @ c - c
        if not np.isfinite(g).all():
            return Feasibility(math.inf, b.center)
        if b.radius == 0.0 or not np.any(g):
            return Feasibility(float(np.linalg.norm(g)), b.center)
        beta = self.u.conj().T @ g
        s = self.s
        live = s > self.rank_tol
        y = np.zeros_like(beta)
        y[live] = -beta[live] / s[live]
        if np.linalg.norm(y) > b.radius:
            y = self._boundary(beta, b.radius)
        w = self.vh.conj().T @ y
        length = float(np.linalg.norm(w))
        if length > b.radius * INTERIOR_SHRINK:
            w *= b.radius * INTERIOR_SHRINK / length
        z = c + w
        value = float(np.linalg.norm(self.matrix @ z - c))
        return Feasibility(value, Vector(z))

    def _boundary(self, beta: np.ndarray, radius: float) -> np.ndarray:
        # Dividing s and beta by max(||T||, 1) leaves w unchanged with mu scaled
        # by its square, and keeps s * s finite for large powers.
        scale = max(self.norm, 1.0)
        s = self.s / scale
        beta = beta / scale

        def step(mu: float) -> np.ndarray:
            denom = s * s + mu
            return np.divide(
                -s * beta, denom, out=np.zeros_like(beta), where=denom > 0.0
            )

        def excess(mu: float) -> float:
            return float(np.linalg.norm(step(mu))) - radius

        # ||w(mu)|| <= ||M^H g|| / mu, so the excess is nonpositive at this end.
        hi = float(np.linalg.norm(s * beta)) / radius
        try:
            mu = scipy.optimize.brentq(
                excess, 0.0, hi, xtol=max(hi * 1e-15, 1e-300), maxiter=ROOT_MAXITER
            )
        except (ValueError, RuntimeError) as exc:
            msg = f"secular equation did not bracket a root in [0, {hi:.3e}]"
            raise SolverFailure(msg) from exc
        logger.debug("ball-return multiplier mu=%.6e (singular values scaled by %.3e)", mu, scale)
        return step(mu)


def _square_matrix(t: Operator) -> np.ndarray:
    if not t.is_square:
        raise DimensionMismatch(t.shape[1], t.shape[0], what="operator codomain")
    return materialize(t)


def ball_return_feasibility(t: Operator, b: Ball) -> Feasibility:
    """Minimize ``||T z - c||`` over the closed ball ``||z - c|| <= r``.

    With ``w = z - c`` and ``g = T c - c`` this is a trust-region least-squares
    problem. The SVD ``T = U S V^H`` diagonalizes the shifted normal equations
    ``(T^H T + mu I) w = -T^H g``: when the minimum-norm least-squares step fits
    in the ball it is optimal (mu = 0), otherwise mu > 0 is found by Brent's
    method on the monotone secular equation ``||w(mu)|| = r``. ``T(B)`` meets
    ``B`` exactly when the value is below ``r``.

    Raises
    ------
    SolverFailure
        If the secular equation cannot be bracketed.
    Overflow
        If the entries of ``T`` are not finite.
    DimensionMismatch
        If ``T`` and the ball live in different dimensions.
    """
    if b.dim != t.dim:
        raise DimensionMismatch(t.dim, b.dim)
    return _Factorization(_square_matrix(t)).solve(b)


def projected_gradient_feasibility(
    t: Operator, b: Ball, start: Vector | None = None, iterations: int = 500
) -> Feasibility:
    """Accelerated projected gradient on the ball-return problem.

    Every iterate is projected onto the ball, so the returned value is an upper
    bound on the true minimum. Used as an oracle and as the fallback when
    :func:`ball_return_feasibility` fails.
    """
    if b.dim != t.dim:
        raise DimensionMismatch(t.dim, b.dim)
    m = _square_matrix(t)
    c = b.center.coords
    g = m @ c - c
    radius = b.radius * INTERIOR_SHRINK

    def project(w: np.ndarray) -> np.ndarray:
        length = np.linalg.norm(w)
        return w if length <= radius else w * (radius / length)

    lipschitz = float(scipy.linalg.norm(m, 2)) ** 2
    w = project(np.zeros_like(c) if start is None else start.coords - c)
    if lipschitz == 0.0:
        return Feasibility(float(np.linalg.norm(g)), Vector(c + w))
    best_w, best = w, float(np.linalg.norm(m @ w + g))
    y, t_k = w, 1.0
    for _ in range(iterations):
        w_next = project(y - (m.conj().T @ (m @ y + g)) / lipschitz)
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t_k * t_k)) / 2.0
        y = w_next + ((t_k - 1.0) / t_next) * (w_next - w)
        w, t_k = w_next, t_next
        value = float(np.linalg.norm(m @ w + g))
        if value < best:
            best_w, best = w, value
    return Feasibility(best, Vector(c + best_w))


@dataclass(frozen=True)
class SetRecurrenceCertificate:
    """``T_op_index`` maps ``z`` in ``ball`` to within ``value < radius - margin`` of the center."""

    ball: Ball
    op_index: int
    z: Vector
    value: float
    margin: float


@dataclass(frozen=True)
class BallVerdict:
    """Outcome for one ball: a certificate, or the closest miss within budget."""

    ball: Ball
    certificate: SetRecurrenceCertificate | None
    best_value: float
    best_index: int
    budget: int
    failure: SolverFailure | None = None

    @property
    def budget_relative(self) -> bool:
        """A negative verdict only speaks for the enumerated members."""
        return self.certificate is None


@dataclass
class _BallSearch:
    ball: Ball
    margin: float
    best_value: float = math.inf
    best_index: int = 0
    certificate: SetRecurrenceCertificate | None = None
    failure: SolverFailure | None = None

    @property
    def open(self) -> bool:
        return self.certificate is None and self.failure is None


@contextmanager
def worker_pool(workers: int) -> Iterator[ThreadPoolExecutor | None]:
    """A thread pool for ``workers > 1``; ``None`` runs inline."""
    if workers <= 1:
        yield None
        return
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="opdyn") as pool:
        yield pool


def certify_recurrent_set(
    gamma: OperatorSet,
    balls: Sequence[Ball],
    budget: int | EnumerationBudget,
    margin: float | None = None,
    *,
    workers: int = 1,
    fallback: bool = False,
    margin_fraction: float = DEFAULT_MARGIN_FRACTION,
) -> list[BallVerdict]:
    """Find, for each ball B, the smallest index k with ``T_k(B) ∩ B`` nonempty.

    A ball is certified when the feasibility value is at most ``radius - margin``;
    ``margin`` defaults to ``margin_fraction * radius``. Members are materialized and
    factored once and tested against every ball still open, so the verdicts
    do not depend on ``workers``.

    Parameters
    ----------
    gamma
        The operator set.
    balls
        Balls of positive radius.
    budget
        Largest index enumerated.
    margin
        Strictness margin for the open-ball claim.
    margin_fraction
        Default margin as a fraction of each radius.
    workers
        Threads evaluating balls in parallel.
    fallback
        Replace a failed exact solve by :func:`projected_gradient_feasibility`.
        Its value is an upper bound, so certificates stay sound.

    Returns
    -------
    list[BallVerdict]
        One verdict per ball, in input order. A :class:`SolverFailure` is
        recorded on its ball and does not stop the others.
    """
    limit = gamma.bound(budget)
    searches = []
    for b in balls:
        if b.dim != gamma.dim:
            raise DimensionMismatch(gamma.dim, b.dim)
        if b.radius <= 0.0:
            msg = "set recurrence is certified on balls of positive radius"
            raise InvalidParameter(msg)
        m = margin_fraction * b.radius if margin is None else margin
        if not 0.0 < m < b.radius:
            msg = f"margin {m} must lie in (0, {b.radius})"
            raise InvalidParameter(msg)
        searches.append(_BallSearch(b, m))

    with worker_pool(workers) as pool:
        for k, op in gamma.enumerate(budget):
            pending = [s for s in searches if s.open]
            if not pending:
                break
            try:
                factor = _Factorization(_square_matrix(op))
            except Overflow:
                logger.debug("member %d has non-finite entries; skipped", k)
                continue

            def visit(
                search: _BallSearch,
                k: int = k,
                op: Operator = op,
                factor: _Factorization = factor,
            ) -> None:
                _visit(search, k, op, factor, fallback=fallback)

            if pool is None:
                for search in pending:
                    visit(search)
            else:
                list(pool.map(visit, pending))

    verdicts = []
    for s in searches:
        if s.certificate is None and s.failure is None:
            logger.info(
                "no return on B(r=%g) within budget %d; closest %.3e at index %d",
                s.ball.radius,
                limit,
                s.best_value,
                s.best_index,
            )
        verdicts.append(
            BallVerdict(s.ball, s.certificate, s.best_value, s.best_index, limit, s.failure)
        )
    return verdicts


def _visit(
    search: _BallSearch, k: int, op: Operator, factor: _Factorization, *, fallback: bool
) -> None:
    try:
        result = factor.solve(search.ball)
    except SolverFailure as exc:
        if not fallback:
            search.failure = exc
            return
        logger.warning("exact ball-return solve failed at index %d; using projected gradient", k)
        result = projected_gradient_feasibility(op, search.ball)
    if result.value < search.best_value:
        search.best_value, search.best_index = result.value, k
    if result.value <= search.ball.radius - search.margin:
        search.certificate = SetRecurrenceCertificate(
            search.ball, k, result.z, result.value, search.margin
        )


# Nested balls


@dataclass(frozen=True)
class NestedBallStep:
    """Step k: T_k returns B(x_(k-1), rho) near x_(k-1); the new ball is B(x, r)."""

    op_index: int
    x: Vector
    r: float
    rho: float
    distance: float


@dataclass
class NestedBallTrace:
    """Nested balls B(x_k, r_k), the limit point ``y`` and its post-hoc checks."""

    start: Ball
    steps: list[NestedBallStep] = field(default_factory=list)
    y: Vector | None = None
    certified_bounds: list[float] = field(default_factory=list)
    verified_residuals: list[float] = field(default_factory=list)


def construct_recurrent_vector(
    gamma: OperatorSet,
    b: Ball,
    steps: int,
    theta: float = 0.5,
    budget: int | EnumerationBudget = 100,
) -> NestedBallTrace:
    """Build a vector ``y`` in ``b`` with ``||T_k y - y|| < 2^(1-k)`` for k = 1..steps.

    Step k searches the ball B(x_(k-1), rho_k), rho_k = min((1-theta) r_(k-1),
    2^-(k+1)), for the first member with a return value at most rho_k, takes
    the attaining point as x_k and shrinks to

        r_k = min(2^-(k+1) / (1 + ||T_k||), theta r_(k-1),
                  theta (r_(k-1) - d_k) / max(1, ||T_k||)),

    with d_k = ||T_k x_k - x_(k-1)||. Then B(x_k, r_k) lies in B(x_(k-1),
    r_(k-1)) and so does its image under T_k, so the final point keeps every
    earlier return. The bound of step k is min(2 r_(k-1), ||T_k x_k - x_k|| +
    (1 + ||T_k||) r_k) and is checked against the recomputed residual.

    Raises
    ------
    StepFailed
        When no member within budget returns at some step; the partial trace
        is attached.
    BoundViolation
        If a recomputed residual breaks its bound.
    """
    if not 0.0 < b.radius < 1.0:
        msg = f"starting radius must lie in (0, 1), got {b.radius}"
        raise InvalidParameter(msg)
    if not 0.0 < theta < 1.0:
        msg = f"theta must lie in (0, 1), got {theta}"
        raise InvalidParameter(msg)
    if b.dim != gamma.dim:
        raise DimensionMismatch(gamma.dim, b.dim)
    limit = gamma.bound(budget)
    trace = NestedBallTrace(start=b)
    x_prev, r_prev = b.center, b.radius
    ops: list[Operator] = []
    for k in range(1, steps + 1):
        rho = min((1.0 - theta) * r_prev, 2.0 ** -(k + 1))
        search = Ball(x_prev, rho)
        found = None
        for index, op in gamma.enumerate(budget):
            result = ball_return_feasibility(op, search)
            if result.value <= rho:
                found = (index, op, result)
                break
        if found is None:
            trace.y = x_prev
            raise StepFailed(k, limit, trace)
        index, op, result = found
        x_k = result.z
        op_norm = safe_norm(op)
        image = Vector(op.matvec(x_k.coords))
        d_k = norm(image - x_prev)
        r_k = min(
            2.0 ** -(k + 1) / (1.0 + op_norm),
            theta * r_prev,
            theta * (r_prev - d_k) / max(1.0, op_norm),
        )
        logger.debug("step %d: index %d, d=%.3e, r=%.3e", k, index, d_k, r_k)
        trace.steps.append(NestedBallStep(index, x_k, r_k, rho, d_k))
        trace.certified_bounds.append(
            min(2.0 * r_prev, norm(image - x_k) + (1.0 + op_norm) * r_k)
        )
        ops.append(op)
        x_prev, r_prev = x_k, r_k

    y = x_prev
    trace.y = y
    for k, (op, bound) in enumerate(zip(ops, trace.certified_bounds, strict=True), start=1):
        value = norm(Vector(op.matvec(y.coords)) - y)
        trace.verified_residuals.append(value)
        if value > bound + VERIFY_SLACK:
            msg = f"step {k}: residual {value:.3e} exceeds its bound {bound:.3e}"
            raise BoundViolation(msg)
    return trace


def orbit_covering_ratio(
    gamma: OperatorSet,
    x: Vector,
    probes: Sequence[Vector],
    delta: float,
    budget: int | EnumerationBudget,
) -> float:
    """Fraction of ``probes`` within ``delta`` of some orbit point ``T_k x``.

    Low ratios hint that the orbit is not dense; they prove nothing.
    """
    if delta <= 0:
        msg = f"delta must be positive, got {delta}"
        raise InvalidParameter(msg)
    if not probes:
        return 0.0
    if x.dim != gamma.dim:
        raise DimensionMismatch(gamma.dim, x.dim)
    with np.errstate(over="ignore", invalid="ignore"):
        orbit = np.array([image for _, image in gamma.images(x.coords, budget)])
        targets = np.array([p.coords for p in probes])
        distances = np.linalg.norm(targets[:, None, :] - orbit[None, :, :], axis=2)
    distances = np.nan_to_num(distances, nan=math.inf)
    hits = int(np.count_nonzero(distances.min(axis=1) < delta))
    return hits / len(probes)
