# Copyright 2026 The mpo-sim Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python front end of mpo-sim.

The heavy lifting lives in the native ``_core`` extension; this package only
re-exports it with a few conveniences.
"""

from ._core import (
    ConfigError,
    L0,
    NumericalGuardError,
    derive_seed,
    ladder,
    lemma_rk_check,
    master,
    run,
    sha256_file,
    verify,
    version,
)

__version__ = version()

EXIT_CODES = {"ok": 0, "config": 2, "numerical_guard": 3, "check_failure": 4}


def failed_checks(reports):
    """Names of the failing entries of a verify() report list."""
    return [r["name"] for r in reports if not r["pass"]]


__all__ = [
    "ConfigError",
    "EXIT_CODES",
    "L0",
    "NumericalGuardError",
    "derive_seed",
    "failed_checks",
    "ladder",
    "lemma_rk_check",
    "master",
    "run",
    "sha256_file",
    "verify",
    "version",
]
