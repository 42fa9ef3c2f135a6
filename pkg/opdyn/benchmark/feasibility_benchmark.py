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

import timeit

import numpy as np
from pydantic_settings import BaseSettings

from opdyn.operators import Dense
from opdyn.recurrence import (
    ball_return_feasibility,
    certify_recurrent_set,
    projected_gradient_feasibility,
)
from opdyn.sets import OnePlusInverse, ScalarFamily
from opdyn.space import Ball, Vector, grid_points


class Config(BaseSettings):
    bench_seed: int = 7
    bench_workers: int = 4
    bench_budget: int = 2000


SETTINGS = Config()

TEST_CASE = [
    {"name": "dim2", "dim": 2},
    {"name": "dim4", "dim": 4},
    {"name": "dim8", "dim": 8},
    {"name": "dim32", "dim": 32},
]


def _instance(dim: int) -> tuple[Dense, Ball]:
    gen = np.random.default_rng(SETTINGS.bench_seed + dim)
    m = gen.standard_normal((dim, dim)) + 1j * gen.standard_normal((dim, dim))
    center = gen.standard_normal(dim) + 1j * gen.standard_normal(dim)
    return Dense(m / np.sqrt(2 * dim)), Ball(Vector(center), 0.25)


INSTANCES = [(case["name"], _instance(case["dim"])) for case in TEST_CASE]


def exact_run():
    for _, (t, b) in INSTANCES:
        ball_return_feasibility(t, b)


def gradient_run():
    for _, (t, b) in INSTANCES:
        projected_gradient_feasibility(t, b)


def _certify(workers: int) -> None:
    gamma = ScalarFamily(2, OnePlusInverse())
    balls = [Ball(c, 0.01) for c in grid_points(Ball(Vector([1.0, 0.0]), 1.0), 3)]
    certify_recurrent_set(gamma, balls, SETTINGS.bench_budget, workers=workers)


def certify_serial_run():
    _certify(1)


def certify_pooled_run():
    _certify(SETTINGS.bench_workers)


def opdyn_benchmark():
    print(f"opdyn exact ball-return solver: {timeit.timeit(exact_run, number=3)}")
    print(f"opdyn projected gradient: {timeit.timeit(gradient_run, number=3)}")
    print(f"opdyn certify, 1 worker: {timeit.timeit(certify_serial_run, number=3)}")
    print(
        f"opdyn certify, {SETTINGS.bench_workers} workers: "
        f"{timeit.timeit(certify_pooled_run, number=3)}"
    )


if __name__ == "__main__":
    opdyn_benchmark()
