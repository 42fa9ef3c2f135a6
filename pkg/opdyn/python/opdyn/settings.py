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

"""Runtime settings read from ``OPDYN_*`` environment variables."""

from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Caps, tolerances and worker count shared by the whole library."""

    model_config = SettingsConfigDict(env_prefix="OPDYN_", frozen=True)

    workers: int | None = Field(default=None, ge=1)
    dense_cap: int = Field(default=512, ge=1)
    grid_cap: int = Field(default=64, ge=1)
    max_grid_points: int = Field(default=1_000_000, ge=1)
    power_budget: int = Field(default=1_000_000, ge=0)
    power_iteration_cap: int = Field(default=10_000, ge=1)
    power_iteration_tol: float = Field(default=1e-10, gt=0)
    power_iteration_seed: int = Field(default=0x5EED, ge=0)
    overflow_guard: float = Field(default=1e100, gt=1)
    log_level: str = "WARNING"


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return the process-wide settings, read once."""
    return Settings()
