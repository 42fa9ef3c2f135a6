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

"""JSON reports: one document per run, vectors as ``[re, im]`` pairs."""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from pydantic import BaseModel

from opdyn.exceptions import SolverFailure
from opdyn.space import Ball, Vector

TIMING_KEY = "timing"


def to_jsonable(obj: Any) -> Any:  # noqa: ANN401
    """Convert library values to plain JSON values.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
    """
    match obj:
        case None | bool() | str():
            return obj
        case int() | np.integer():
            return int(obj)
        case float() | np.floating():
            value = float(obj)
            if math.isfinite(value):
                return value
            return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
        case complex() | np.complexfloating():
            return [to_jsonable(obj.real), to_jsonable(obj.imag)]
        case Vector():
            return obj.to_pairs()
        case Ball():
            return {"center": obj.center.to_pairs(), "radius": obj.radius}
        case enum.Enum():
            return obj.value
        case BaseException():
            return {"type": type(obj).__name__, "message": str(obj)}
        case BaseModel():
            return to_jsonable(obj.model_dump(mode="python"))
        case np.ndarray():
            return [to_jsonable(v) for v in obj.tolist()]
        case dict():
            return {str(k): to_jsonable(v) for k, v in obj.items()}
        case list() | tuple():
            return [to_jsonable(v) for v in obj]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        for name in ("budget_relative", "agree"):
            if hasattr(type(obj), name):
                out[name] = getattr(obj, name)
        return out
    msg = f"cannot encode {type(obj).__name__} in a report"
    raise TypeError(msg)


def config_digest(payload: dict[str, Any]) -> str:
    """sha256 of the canonical JSON form of a config."""
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class AnalysisResult:
    """Outcome of one analysis of a config."""

    index: int
    kind: str
    status: str
    budget: int
    payload: dict[str, Any] = field(default_factory=dict)
    error: BaseException | None = None
    seconds: float = 0.0

    def to_json(self) -> dict[str, Any]:
        """Plain JSON form; wall-clock time sits under ``timing``."""
        out: dict[str, Any] = {
            "index": self.index,
            "kind": self.kind,
            "status": self.status,
            "budget": self.budget,
            "result": to_jsonable(self.payload),
        }
        if self.error is not None:
            out["error"] = to_jsonable(self.error)
        out[TIMING_KEY] = {"seconds": self.seconds}
        return out


@dataclass
class Report:
    """A full run: digest, version, results and notes."""

    config_digest: str
    library_version: str
    seed: int
    results: list[AnalysisResult] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def solver_failed(self) -> bool:
        """Whether any analysis hit a :class:`~opdyn.exceptions.SolverFailure`."""
        return any(
            r.payload.get("solver_failure") or isinstance(r.error, SolverFailure)
            for r in self.results
        )

    def to_json(self) -> dict[str, Any]:
        """Plain JSON form."""
        return {
            "config_digest": self.config_digest,
            "library_version": self.library_version,
            "seed": self.seed,
            "results": [r.to_json() for r in self.results],
            "notes": list(self.notes),
            TIMING_KEY: {"seconds": self.seconds},
        }

    def dumps(self) -> str:
        """Serialize as an indented JSON document."""
        return json.dumps(self.to_json(), indent=2, allow_nan=False) + "\n"


def strip_timings(document: Any) -> Any:  # noqa: ANN401
    """Drop every ``timing`` entry, leaving the deterministic part of a report."""
    if isinstance(document, dict):
        return {k: strip_timings(v) for k, v in document.items() if k != TIMING_KEY}
    if isinstance(document, list):
        return [strip_timings(v) for v in document]
    return document
