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

"""Smoke tests of the Python module, including the EMB1 interface used by
external feature extractors."""

import csv
import json
import struct

import numpy as np
import pytest

import tssaudit


def write_emb1(path, features, rows):
    """Minimal EMB1 writer, as an external extractor would implement it."""
    features = np.ascontiguousarray(features, dtype="<f4")
    n, d = features.shape
    header = b"EMB1" + struct.pack("<IQQB", 1, n, d, 1)
    header += b"\0" * (32 - len(header))
    with open(path, "wb") as f:
        f.write(header)
        f.write(features.tobytes())
    with open(str(path) + ".meta.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["patch_id", "slide_id", "patient_id", "site", "class", "norm_variant"])
        w.writerows(rows)


def test_external_emb1_file_loads(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 4)).astype(np.float32)
    rows = [[f"p{i},\"x\"", f"s{i // 3}", f"pt{i // 3}", i // 3, i % 2, "macenko"] for i in range(6)]
    write_emb1(tmp_path / "ext.emb", x, rows)
    t = tssaudit.load_table(tmp_path / "ext.emb")
    assert t.rows == 6 and t.dim == 4
    np.testing.assert_array_equal(t.features, x)
    assert t.patch_ids[1] == 'p1,"x"'
    assert t.site_labels == [0, 0, 0, 1, 1, 1]
    assert t.class_labels == [0, 1, 0, 1, 0, 1]


def test_corrupt_emb1_is_rejected(tmp_path):
    write_emb1(tmp_path / "bad.emb", np.zeros((2, 3)), [["a", "s", "p", 0, 0, "raw"], ["b", "s", "p", 0, 0, "raw"]])
    data = bytearray((tmp_path / "bad.emb").read_bytes())
    data[0:4] = b"EMB2"
    (tmp_path / "bad.emb").write_bytes(bytes(data))
    with pytest.raises(tssaudit.Error, match="magic"):
        tssaudit.load_table(tmp_path / "bad.emb")


def test_round_trip_and_missing_labels(tmp_path):
    x = np.arange(12, dtype=np.float32).reshape(3, 4)
    t = tssaudit.EmbeddingTable(x, ["a", "b", "c"], ["s0", "s0", "s1"], ["p0", "p0", "p1"],
                                site_labels=[0, 0, None], model_tag="vit")
    tssaudit.save_table(t, tmp_path / "t.emb")
    u = tssaudit.load_table(tmp_path / "t.emb")
    assert u == t
    assert u.model_tag == "vit"
    assert u.site_labels == [0, 0, None]
    assert u.class_labels == [None, None, None]


def test_generate_split_and_site_prediction():
    t = tssaudit.generate(dims=16, n_sites=3, patients_per_site=6, patches_per_slide=40, site_strength=4.0, seed=1)
    assert t.rows == 3 * 6 * 40
    s = tssaudit.patient_split(t, [0.6, 0.1, 0.3], 5)
    assert sorted(s["train"] + s["val"] + s["test"]) == list(range(t.rows))
    assert tssaudit.count_group_violations(t, s["train"], s["val"], s["test"]) == 0
    acc = tssaudit.run_site_prediction(t, 2)
    assert set(acc) == {"ncc", "knn", "lp"}
    assert min(acc.values()) > 0.9


def test_bias_splits():
    t = tssaudit.generate(dims=4, n_sites=2, n_classes=2, patients_per_site=14, patches_per_slide=30, seed=3)
    splits = tssaudit.build_bias_splits(t, 4, patches_per_slide=30)
    assert [b["ratio"] for b in splits] == ["0.5/0.5", "0.67/0.33", "0.83/0.17", "1/0"]
    assert all(b["test"] == splits[0]["test"] for b in splits)


def test_geometry_helpers():
    x = np.random.default_rng(1).normal(size=(50, 5)) * np.arange(1, 6)
    p = tssaudit.fit_pca(x)
    assert p["rank"] == 5
    assert abs(p["evr"].sum() - 1.0) < 1e-12
    np.testing.assert_allclose(p["eigenvalues"], np.sort(np.linalg.eigvalsh(np.cov(x.T)))[::-1], rtol=1e-10)
    assert tssaudit.ovo_auroc([0.1, 0.2, 0.3, 0.4], [0, 0, 1, 1]) == 1.0
    assert tssaudit.ovo_auroc([0.4, 0.3, 0.2, 0.1], [0, 0, 1, 1]) == 1.0
    h = [0] * 256
    h[20] = h[200] = 10
    assert 20 < tssaudit.otsu_threshold(h) <= 200


def test_distance_profiles():
    t = tssaudit.generate(dims=16, n_sites=2, n_classes=2, class_layout="per_patch", patients_per_site=6,
                          patches_per_slide=60, site_strength=4.0, slide_strength=1.0, noise=0.25, seed=5)
    ref = tssaudit.choose_reference(t, 1)
    prof = tssaudit.distance_profiles(t, ref, 2, n_per_group=20)
    assert set(prof) == {"ss", "ossh", "osoh"}
    assert max(prof["ss"]) < min(prof["osoh"])


def test_run_command_matches_cli_report(tmp_path):
    emb = tmp_path / "syn.emb"
    tssaudit.run_command("synth", out=emb, seed=1, params={"dims": 8, "n_sites": 2, "patients_per_site": 4})
    report = tssaudit.run_command("separability", inputs=[emb], out=tmp_path / "sep", seed=2,
                                  params={"n_components": 4})
    assert report["schema_version"] == 1
    assert report["config"]["params"]["n_components"] == 4
    on_disk = json.loads((tmp_path / "sep" / "report.json").read_text())
    assert on_disk["payload"] == report["payload"]
    assert "n_components" in tssaudit.default_params("separability")


def test_command_errors_name_the_stage(tmp_path):
    with pytest.raises(tssaudit.StageError):
        tssaudit.run_command("site-predict", inputs=[tmp_path / "missing.emb"], out=tmp_path / "o", seed=1)
    with pytest.raises(tssaudit.Error):
        tssaudit.generate(dims=2, n_sites=2, n_classes=2)
