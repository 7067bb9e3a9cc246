# Copyright 2026 The tssaudit Authors
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

"""Python access to the tssaudit core."""

import json

from ._core import (  # noqa: F401
    EmbeddingTable,
    Error,
    StageError,
    __version__,
    build_bias_splits,
    choose_reference,
    count_group_violations,
    distance_profiles,
    fit_pca,
    generate,
    load_table,
    otsu_threshold,
    ovo_auroc,
    patient_split,
    run_site_prediction,
    save_table,
    subsample_per_site,
)
from . import _core


def default_params(experiment):
    """Default parameters of a command as a dict."""
    return json.loads(_core.default_params(experiment))


def run_command(experiment, inputs=(), out="", seed=None, params=None):
    """Runs a command like the CLI does and returns its report as a dict."""
    config = {
        "experiment": experiment,
        "inputs": [str(p) for p in inputs],
        "out": str(out),
        "seed": seed,
        "params": params or {},
    }
    return json.loads(_core.run_command(json.dumps(config)))
