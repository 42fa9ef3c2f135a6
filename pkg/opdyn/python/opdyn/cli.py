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

"""Config-driven entry point.

``opdyn analyze --config run.json --out report.json`` runs every analysis of a
config and writes one JSON report. Exit codes: 0 on completion, 2 when an
analysis hit a solver failure, 3 on a config or build error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from opdyn import __version__, config
from opdyn.exceptions import (
    ConfigError,
    Error,
    InvalidParameter,
    SchemaError,
    StepFailed,
    UnknownKind,
    ZeroVector,
)
from opdyn.recurrence import (
    certify_recurrent_set,
    construct_recurrent_vector,
    gdelta_membership,
    is_eps_recurrent,
    orbit_covering_ratio,
    residual,
)
from opdyn.reggroups import ComplexGrid, group_from_spec, group_recurrence_scan
from opdyn.report import AnalysisResult, Report, config_digest
from opdyn.sets import DirectSumSet, OperatorSet, build_sequence, build_set
from opdyn.settings import get_settings
from opdyn.space import Ball, NormKind, Rng, Vector, grid_points, sample_array
from opdyn.transforms import unimodular_transfer_check

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_SOLVER_FAILURE = 2
EXIT_CONFIG_ERROR = 3

ZERO_VECTOR_NOTE = (
    "the zero vector satisfies ||Tx - x|| = 0 for every T but is excluded from "
    "recurrent vectors by definition"
)


def _schema_error(exc: ValidationError) -> ConfigError:
    err = exc.errors()[0]
    path = config.format_location(tuple(err["loc"]))
    ctx = err.get("ctx") or {}
    if err["type"] == "union_tag_invalid":
        return UnknownKind(path, ctx.get("tag"))
    if err["type"] == "union_tag_not_found":
        return SchemaError(path, "missing 'kind' tag")
    return SchemaError(path, err["msg"])


def _vector_paths(index: int, spec: Any) -> list[tuple[str, list[complex]]]:  # noqa: ANN401
    base = f"analyses[{index}]"
    out = []
    if hasattr(spec, "x"):
        out.append((f"{base}.x", spec.x))
    for j, b in enumerate(getattr(spec, "balls", [])):
        out.append((f"{base}.balls[{j}].center", b.center))
    if getattr(spec, "grid", None) is not None and isinstance(spec.grid, config.BallGridSpec):
        out.append((f"{base}.grid.center", spec.grid.center))
    if getattr(spec, "lattice", None) is not None:
        out.append((f"{base}.lattice.center", spec.lattice.center))
    if getattr(spec, "ball", None) is not None:
        out.append((f"{base}.ball.center", spec.ball.center))
    for j, p in enumerate(getattr(spec, "probes", [])):
        out.append((f"{base}.probes[{j}]", p))
    if getattr(spec, "sample", None) is not None:
        out.append((f"{base}.sample.ball.center", spec.sample.ball.center))
    return out


def parse_config(text: str | bytes) -> config.AnalysisConfig:
    """Parse and validate a JSON config document.

    Raises
    ------
    SchemaError
        With the path of the first offending entry, e.g.
        ``analyses[0].balls[0].radius``.
    UnknownKind
        For an unknown ``kind`` tag.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc.msg} (line {exc.lineno})") from exc
    try:
        cfg = config.AnalysisConfig.model_validate(data)
    except ValidationError as exc:
        raise _schema_error(exc) from exc
    dim = cfg.space.dim
    for i, spec in enumerate(cfg.analyses):
        if cfg.operator_set is None and spec.kind != "group_scan":
            msg = f"required by analysis kind {spec.kind!r}"
            raise SchemaError("operator_set", msg)
        for path, coords in _vector_paths(i, spec):
            if len(coords) != dim:
                raise SchemaError(path, f"expected {dim} coordinates, got {len(coords)}")
    return cfg


def load_config(path: Path) -> config.AnalysisConfig:
    """Read and parse a config file."""
    return parse_config(path.read_text(encoding="utf-8"))


@dataclass(frozen=True)
class _Context:
    cfg: config.AnalysisConfig
    gamma: OperatorSet | None
    norm: NormKind
    workers: int

    @property
    def operator_set(self) -> OperatorSet:
        assert self.gamma is not None
        return self.gamma

    def euclidean(self) -> None:
        if self.norm is not NormKind.TWO:
            msg = "ball returns are computed in the 2-norm only"
            raise InvalidParameter(msg)


Outcome = tuple[str, dict[str, Any]]


def _ball(spec: config.BallSpec) -> Ball:
    return Ball(Vector(spec.center), spec.radius)


def _run_residual(spec: config.ResidualAnalysis, ctx: _Context, _: int, budget: int) -> Outcome:
    value, witness = residual(ctx.operator_set, Vector(spec.x), budget, ctx.norm)
    return "ok", {"min_residual": value, "witness": witness, "budget_relative": False}


def _run_eps(spec: config.EpsRecurrentAnalysis, ctx: _Context, _: int, budget: int) -> Outcome:
    witness = is_eps_recurrent(ctx.operator_set, Vector(spec.x), spec.eps, budget, ctx.norm)
    return "ok", {"eps": spec.eps, "witness": witness, "budget_relative": witness is None}


def _run_eps_lattice(
    spec: config.EpsLatticeAnalysis, ctx: _Context, _: int, budget: int
) -> Outcome:
    lattice = spec.lattice
    points = grid_points(Ball(Vector(lattice.center), lattice.radius), lattice.per_axis)
    zero: list[int] = []
    missing: list[int] = []
    indices: list[int] = []
    for i, x in enumerate(points):
        if x.is_zero():
            zero.append(i)
            continue
        witness = is_eps_recurrent(ctx.operator_set, x, spec.eps, budget, ctx.norm)
        if witness is None:
            missing.append(i)
        else:
            indices.append(witness.op_index)
    return "ok", {
        "eps": spec.eps,
        "points": len(points),
        "zero_points": zero,
        "missing": missing,
        "all_recurrent": not missing,
        "max_op_index": max(indices, default=None),
        "budget_relative": bool(missing),
    }


def _run_gdelta(spec: config.GdeltaAnalysis, ctx: _Context, _: int, budget: int) -> Outcome:
    result = gdelta_membership(ctx.operator_set, Vector(spec.x), spec.s_max, budget, ctx.norm)
    return "ok", {
        "member": result.member,
        "s_max": spec.s_max,
        "per_s": result.per_s,
        "budget_relative": not result.member,
    }


def _verdict_summary(verdicts: list[Any]) -> dict[str, Any]:
    return {
        "verdicts": verdicts,
        "certified": sum(v.certificate is not None for v in verdicts),
        "solver_failure": any(v.failure is not None for v in verdicts),
        "budget_relative": any(v.certificate is None for v in verdicts),
    }


def _run_certify(spec: config.CertifySetAnalysis, ctx: _Context, _: int, budget: int) -> Outcome:
    ctx.euclidean()
    balls = [_ball(b) for b in spec.balls]
    if spec.grid is not None:
        outer = Ball(Vector(spec.grid.center), spec.grid.radius)
        balls += [Ball(p, spec.grid.sub_radius) for p in grid_points(outer, spec.grid.per_axis)]
    if not balls:
        msg = "certify_set needs explicit balls or a ball grid"
        raise InvalidParameter(msg)
    gamma = ctx.operator_set
    verdicts = certify_recurrent_set(
        gamma,
        balls,
        budget,
        spec.margin,
        workers=ctx.workers,
        fallback=spec.fallback,
        margin_fraction=ctx.cfg.tolerances.margin_fraction,
    )
    payload = _verdict_summary(verdicts)
    if isinstance(gamma, DirectSumSet):
        payload["mode"] = gamma.mode
    return "ok", payload


def _run_construct(spec: config.ConstructAnalysis, ctx: _Context, _: int, budget: int) -> Outcome:
    ctx.euclidean()
    try:
        trace = construct_recurrent_vector(
            ctx.operator_set, _ball(spec.ball), spec.steps, spec.theta, budget
        )
    except StepFailed as exc:
        return "failed", {
            "completed": False,
            "failed_step": exc.step,
            "trace": exc.trace,
            "budget_relative": True,
        }
    return "ok", {"completed": True, "trace": trace, "budget_relative": False}


def _run_orbit_ratio(
    spec: config.OrbitRatioAnalysis, ctx: _Context, index: int, budget: int
) -> Outcome:
    probes = [Vector(p) for p in spec.probes]
    if spec.sample is not None:
        rng = Rng(ctx.cfg.seed, stream=index)
        drawn = sample_array(_ball(spec.sample.ball), rng, spec.sample.count)
        probes += [Vector(row) for row in drawn]
    ratio = orbit_covering_ratio(ctx.operator_set, Vector(spec.x), probes, spec.delta, budget)
    return "ok", {
        "ratio": ratio,
        "probes": len(probes),
        "delta": spec.delta,
        "budget_relative": True,
    }


def _run_group_scan(
    spec: config.GroupScanAnalysis, ctx: _Context, _: int, budget: int
) -> Outcome:
    ctx.euclidean()
    group = group_from_spec(spec.group)
    grid = ComplexGrid.from_spec(spec.grid)
    scan = group_recurrence_scan(
        group,
        grid,
        [_ball(b) for b in spec.balls],
        spec.margin,
        min(budget, len(grid.points)),
        workers=ctx.workers,
    )
    payload = _verdict_summary(scan.verdicts)
    payload.update(
        {
            "grid_size": len(grid.points),
            "degenerate": group.degenerate,
            "period_indices": scan.period_indices,
            "period_returns": scan.period_returns,
        }
    )
    return "ok", payload


def _run_transfer(
    spec: config.TransferCheckAnalysis, ctx: _Context, _: int, budget: int
) -> Outcome:
    check = unimodular_transfer_check(
        ctx.operator_set,
        build_sequence(spec.phases),
        Vector(spec.x),
        spec.eps,
        budget,
        spec.enlargement,
    )
    return "ok", {
        "check": check,
        "budget_relative": check.base is None or check.scaled is None,
    }


_RUNNERS: dict[str, Callable[..., Outcome]] = {
    "residual": _run_residual,
    "eps_recurrent": _run_eps,
    "eps_lattice": _run_eps_lattice,
    "gdelta": _run_gdelta,
    "certify_set": _run_certify,
    "construct": _run_construct,
    "orbit_ratio": _run_orbit_ratio,
    "group_scan": _run_group_scan,
    "transfer_check": _run_transfer,
}


def run_analysis(cfg: config.AnalysisConfig, workers: int = 1) -> Report:
    """Run every analysis of ``cfg`` in order.

    Errors of a single analysis are recorded on its result; only errors while
    building the operator set escape.

    Raises
    ------
    Error
        If the operator set cannot be built from the config.
    """
    started = time.perf_counter()
    gamma = None if cfg.operator_set is None else build_set(cfg.operator_set)
    if gamma is not None and gamma.dim != cfg.space.dim:
        msg = f"operator set acts on C^{gamma.dim}, space is C^{cfg.space.dim}"
        raise SchemaError("operator_set", msg)
    ctx = _Context(cfg, gamma, NormKind.parse(cfg.space.norm_p), max(1, workers))
    report = Report(config_digest(cfg.model_dump(mode="json")), __version__, cfg.seed)

    for index, spec in enumerate(cfg.analyses):
        budget = spec.budget or cfg.budget
        t0 = time.perf_counter()
        try:
            status, payload = _RUNNERS[spec.kind](spec, ctx, index, budget)
            error = None
        except Error as exc:
            logger.warning("analysis %d (%s) failed: %s", index, spec.kind, exc)
            status, payload, error = "error", {}, exc
            if isinstance(exc, ZeroVector) and ZERO_VECTOR_NOTE not in report.notes:
                report.notes.append(ZERO_VECTOR_NOTE)
        report.results.append(
            AnalysisResult(
                index, spec.kind, status, budget, payload, error, time.perf_counter() - t0
            )
        )
    report.seconds = time.perf_counter() - started
    return report


def resolve_workers(requested: int | None) -> int:
    """``OPDYN_WORKERS`` wins over the command line."""
    env = get_settings().workers
    if env is not None:
        return env
    return requested or 1


def _read_json_arg(value: str) -> Any:  # noqa: ANN401
    if value.lstrip().startswith(("{", "[")):
        return json.loads(value)
    return json.loads(Path(value).read_text(encoding="utf-8"))


def _write(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")


def _configure_logging(*, verbose: bool) -> None:
    level = logging.DEBUG if verbose else get_settings().log_level.upper()
    logging.basicConfig(
        level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )


def _shortcut_config(args: argparse.Namespace, analysis: dict[str, Any]) -> str:
    center = _read_json_arg(args.center)
    doc = {
        "space": {"dim": len(center), "norm_p": 2},
        "operator_set": _read_json_arg(args.set),
        "analyses": [analysis | {"budget": args.budget}],
        "seed": args.seed or 0,
        "budget": args.budget,
    }
    return json.dumps(doc)


def _execute(text: str, args: argparse.Namespace) -> int:
    try:
        cfg = parse_config(text)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
        report = run_analysis(cfg, resolve_workers(args.workers))
    except Error as exc:
        logger.error("config error: %s", exc)  # noqa: TRY400
        return EXIT_CONFIG_ERROR
    _write(report.dumps(), args.out)
    return EXIT_SOLVER_FAILURE if report.solver_failed else EXIT_OK


def _add_run_options(cmd: argparse.ArgumentParser) -> None:
    cmd.add_argument("--out", type=Path, default=None, help="Report path (stdout if omitted)")
    cmd.add_argument("--seed", type=int, default=None, help="Override the config seed")
    cmd.add_argument("--workers", type=int, default=None, help="Worker threads")
    cmd.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    """The ``opdyn`` argument parser."""
    parser = argparse.ArgumentParser(prog="opdyn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"opdyn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="Run the analyses of a config file")
    analyze.add_argument("--config", type=Path, required=True)
    _add_run_options(analyze)

    examples = sub.add_parser("examples", help="Built-in scenarios")
    examples_sub = examples.add_subparsers(dest="examples_command", required=True)
    examples_sub.add_parser("list", help="List scenario names")
    run = examples_sub.add_parser("run", help="Run a scenario and check its expectations")
    run.add_argument("name")
    run.add_argument("--out", type=Path, default=None, help="Also write the full report")
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--verbose", action="store_true")

    certify = sub.add_parser("certify-set", help="Certify one ball for an operator set")
    construct = sub.add_parser("construct", help="Nested-ball construction from one ball")
    for cmd in (certify, construct):
        cmd.add_argument("--set", required=True, help="Operator set spec (JSON or path)")
        cmd.add_argument("--center", required=True, help="Ball center as [[re, im], ...]")
        cmd.add_argument("--radius", type=float, required=True)
        cmd.add_argument("--budget", type=int, default=100)
        _add_run_options(cmd)
    certify.add_argument("--margin", type=float, default=None)
    construct.add_argument("--steps", type=int, default=8)
    construct.add_argument("--theta", type=float, default=0.5)
    return parser


def _examples(args: argparse.Namespace) -> int:
    from opdyn.examples import list_examples, run_example

    if args.examples_command == "list":
        _write(json.dumps(list_examples(), indent=2) + "\n", None)
        return EXIT_OK
    try:
        outcome = run_example(args.name, resolve_workers(args.workers))
    except Error as exc:
        logger.error("%s", exc)  # noqa: TRY400
        return EXIT_CONFIG_ERROR
    if args.out is not None:
        _write(outcome.report.dumps(), args.out)
    _write(json.dumps(outcome.summary(), indent=2, sort_keys=True) + "\n", None)
    return EXIT_OK if outcome.passed else EXIT_FAILED


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command line; returns the exit code."""
    args = build_parser().parse_args(argv)
    _configure_logging(verbose=getattr(args, "verbose", False))
    if args.command == "examples":
        return _examples(args)
    if args.command == "analyze":
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            logger.error("cannot read config: %s", exc)  # noqa: TRY400
            return EXIT_CONFIG_ERROR
        return _execute(text, args)
    try:
        if args.command == "certify-set":
            analysis = {
                "kind": "certify_set",
                "balls": [{"center": _read_json_arg(args.center), "radius": args.radius}],
                "margin": args.margin,
            }
        else:
            analysis = {
                "kind": "construct",
                "ball": {"center": _read_json_arg(args.center), "radius": args.radius},
                "steps": args.steps,
                "theta": args.theta,
            }
        text = _shortcut_config(args, analysis)
    except (OSError, json.JSONDecodeError) as exc:
        logger.error("cannot read shortcut arguments: %s", exc)  # noqa: TRY400
        return EXIT_CONFIG_ERROR
    return _execute(text, args)


if __name__ == "__main__":
    sys.exit(main())
