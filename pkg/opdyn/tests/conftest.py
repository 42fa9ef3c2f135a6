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

import os

import numpy as np
import pytest
from dotenv import load_dotenv

from opdyn.settings import get_settings
from opdyn.space import Rng

load_dotenv()


def pytest_configure(config):
    # register an additional marker
    config.addinivalue_line(
        "markers",
        "acceptance: long-running scenario checks, run only with OPDYN_ACCEPTANCE=1",
    )


def pytest_collection_modifyitems(config, items):
    if os.environ.get("OPDYN_ACCEPTANCE") == "1":
        return
    skip = pytest.mark.skip(reason="OPDYN_ACCEPTANCE not set")
    for item in items:
        if "acceptance" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def fresh_settings():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return Rng(seed=20240601)


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)
