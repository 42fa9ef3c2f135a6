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

"""Built-in scenarios with stored expected outcomes.

Each scenario is a JSON document under ``opdyn/scenarios``: a config, an
optional truncation window and a list of expectations on the report, each
tagged with where the expected value comes from.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field

from opdyn import config
from opdyn.cli import parse_config, run_analysis
from opdyn.exceptions import UnknownExample
from opdyn.operators import TruncationWindow, build_operator, check_window
from opdyn.report import Report
from opdyn.space import Vector

logger = logging.getLogger(__name__)

_SCENARIO_DIR = "scenarios"
_PATH_TOKEN = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)|\[(\d+)\]")


class Expectation(BaseModel):
    """One stored outcome to compare against a report."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["witness_exists", "certificate_exists", "residual_equals", "value_equals"]
    analysis: int = Field(ge=0)
    path: str = ""
    ball: int | None = None
    expected: bool | float | None = None
    tol: float = Field(default=0.0, ge=0.0)
    provenance: Literal["PUBLISHED", "TRIVIAL", "DERIVED"]
    note: str = ""


class WindowSpec(BaseModel):
    """A truncation window in a scenario document."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    dim: int
    support_bound: int
    power_bound: int


class ScenarioDocument(BaseModel):
    """The on-disk form of a scenario."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    description: str
    window: WindowSpec | None = None
    config: dict[str, Any]
    expectations: list[Expectation] = Field(min_length=1)


@dataclass(frozen=True)
class Scenario:
    """A parsed scenario."""

    name: str
    description: str
    config: config.AnalysisConfig
    expectations: list[Expectation]
    window: TruncationWindow | None = None


@dataclass(frozen=True)
class CheckResult:
    """An expectation next to the value found."""

    expectation: Expectation
    actual: Any
    passed: bool


@dataclass
class ExampleOutcome:
    """A scenario run and its expectation checks."""

    name: str
    report: Report
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """Whether every expectation held."""
        return all(c.passed for c in self.checks)

    def summary(self) -> dict[str, Any]:
        """JSON summary of the checks."""
        return {
            "name": self.name,
            "passed": self.passed,
            "checks": [
                {
                    "kind": c.expectation.kind,
                    "analysis": c.expectation.analysis,
                    "path": c.expectation.path,
                    "expected": c.expectation.expected,
                    "actual": c.actual,
                    "passed": c.passed,
                    "provenance": c.expectation.provenance,
                }
                for c in self.checks
            ],
        }


def _scenario_files() -> dict[str, Any]:
    root = resources.files("opdyn").joinpath(_SCENARIO_DIR)
    return {
        entry.name.removesuffix(".json"): entry
        for entry in root.iterdir()
        if entry.name.endswith(".json")
    }


def list_examples() -> list[str]:
    """Names of the built-in scenarios, sorted."""
    return sorted(_scenario_files())


def build_example(name: str) -> Scenario:
    """Load a built-in scenario.

    Raises
    ------
    UnknownExample
        If no scenario is called ``name``.
    """
    files = _scenario_files()
    if name not in files:
        msg = f"unknown example {name!r}; available: {', '.join(sorted(files))}"
        raise UnknownExample(msg)
    doc = ScenarioDocument.model_validate_json(files[name].read_text(encoding="utf-8"))
    window = None
    if doc.window is not None:
        window = TruncationWindow(doc.window.dim, doc.window.support_bound, doc.window.power_bound)
    return Scenario(
        doc.name, doc.description, parse_config(json.dumps(doc.config)), doc.expectations, window
    )


def _check_window(scenario: Scenario) -> None:
    window = scenario.window
    spec = scenario.config.operator_set
    if window is None or not isinstance(spec, config.PowersSpec):
        return
    base = build_operator(spec.base)
    for analysis in scenario.config.analyses:
        if hasattr(analysis, "x"):
            budget = analysis.budget or scenario.config.budget
            check_window(window, base, Vector(analysis.x), spec.start_exponent + budget - 1)


def resolve_path(document: Any, path: str) -> Any:  # noqa: ANN401
    """Follow ``a.b[0].c`` into nested dicts and lists."""
    node = document
    for name, index in _PATH_TOKEN.findall(path):
        node = node[int(index)] if index else node[name]
    return node


def _numeric(value: Any) -> float:  # noqa: ANN401
    if isinstance(value, str):
        return float(value)
    if value is None:
        return math.nan
    return float(value)


def _check(expectation: Expectation, result: dict[str, Any]) -> CheckResult:
    match expectation.kind:
        case "witness_exists":
            actual = resolve_path(result, expectation.path or "witness") is not None
            return CheckResult(expectation, actual, actual == expectation.expected)
        case "certificate_exists":
            verdicts = resolve_path(result, expectation.path or "verdicts")
            chosen = verdicts if expectation.ball is None else [verdicts[expectation.ball]]
            actual = [v["certificate"] is not None for v in chosen]
            return CheckResult(
                expectation, actual, all(a == expectation.expected for a in actual)
            )
    actual = resolve_path(result, expectation.path)
    delta = abs(_numeric(actual) - _numeric(expectation.expected))
    return CheckResult(expectation, actual, delta <= expectation.tol)


def run_example(name: str, workers: int = 1) -> ExampleOutcome:
    """Run a built-in scenario and check its stored expectations."""
    scenario = build_example(name)
    _check_window(scenario)
    report = run_analysis(scenario.config, workers)
    results = report.to_json()["results"]
    outcome = ExampleOutcome(name, report)
    for expectation in scenario.expectations:
        result = results[expectation.analysis]["result"]
        try:
            outcome.checks.append(_check(expectation, result))
        except (KeyError, IndexError, TypeError) as exc:
            logger.warning("expectation %s on %s not found: %s", expectation.kind, name, exc)
            outcome.checks.append(CheckResult(expectation, None, passed=False))
    if not outcome.passed:
        logger.info("example %s failed %d checks", name, sum(not c.passed for c in outcome.checks))
    return outcome
