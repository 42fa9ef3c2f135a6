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

import inspect

from opdyn import exceptions


def test_every_defined_error_is_exported():
    defined = {
        name
        for name, obj in inspect.getmembers(exceptions, inspect.isclass)
        if obj.__module__ == exceptions.__name__
    }
    assert defined == set(exceptions.__all__)


def test_every_error_shares_the_base():
    for name in exceptions.__all__:
        assert issubclass(getattr(exceptions, name), exceptions.Error)


def test_structured_messages():
    err = exceptions.DimensionMismatch(3, 2)
    assert (err.expected, err.actual) == (3, 2)
    assert "dimension 2, expected 3" in str(err)
    assert exceptions.BudgetExceeded(11, 10).budget == 10
    assert exceptions.NotUnimodular(4, 1.5).index == 4
    schema = exceptions.SchemaError("analyses[0].balls[0].radius", "too small")
    assert str(schema).startswith("analyses[0].balls[0].radius")
    assert isinstance(exceptions.UnknownKind("operator_set", "spiral"), exceptions.ConfigError)


def test_invalid_parameter_is_a_value_error():
    assert issubclass(exceptions.InvalidParameter, ValueError)
