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

# ruff: noqa: D104

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("opdyn")
except PackageNotFoundError:
    __version__ = "0.0.0"

from opdyn import (  # noqa: E402
    config,
    exceptions,
    operators,
    recurrence,
    reggroups,
    sets,
    space,
    transforms,
)
from opdyn.operators import Operator, build_operator  # noqa: E402
from opdyn.recurrence import (  # noqa: E402
    certify_recurrent_set,
    construct_recurrent_vector,
    residual,
)
from opdyn.sets import OperatorSet, build_set  # noqa: E402
from opdyn.space import Ball, Vector  # noqa: E402

__all__ = [
    "config",
    "exceptions",
    "operators",
    "recurrence",
    "reggroups",
    "sets",
    "space",
    "transforms",
    "Ball",
    "Operator",
    "OperatorSet",
    "Vector",
    "build_operator",
    "build_set",
    "certify_recurrent_set",
    "construct_recurrent_vector",
    "residual",
    "__version__",
]
