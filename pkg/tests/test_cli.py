import json
import subprocess
import sys

import pytest

from collabcache.cli import main

from helpers import cli_outputs, cli_pipeline


def test_pipeline_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    assert cli_pipeline(a) == [0] * 9
    assert cli_pipeline(b) == [0] * 9
    out_a, out_b = cli_outputs(a), cli_outputs(b)
    assert set(out_a) == set(out_b)
    csvs = [p for p in out_a if p.suffix == ".csv"]
    assert len(csvs) >= 10
    for p in out_a:
        if p.name == "manifest.json":
            continue  # manifests echo absolute input paths
        assert out_a[p] == out_b[p], p


def test_manifest_echoes_config(tmp_path):
    main(["experiment", "--seed", "4", "--runs", "2", "--out", str(tmp_path)])
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "experiment"
    assert manifest["config"]["seed"] == 4 and manifest["config"]["runs"] == 2


def test_usage_errors_exit_one(tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        main(["no-such-command"])
    assert err.value.code == 1
    with pytest.raises(SystemExit) as err:
        main(["gen-instance"])  # --out missing
    assert err.value.code == 1
    assert main(["experiment", "--error-model", "gauss", "--out", str(tmp_path)]) == 1


def test_invalid_instance_exits_two(tmp_path):
    bad = tmp_path / "inst.json"
    bad.write_text(json.dumps({"format": "collabcache/instance", "version": 1, "num_stations": 1,
                               "content_sizes": [1], "ua": [[0.5, 2]], "caching_cost": [[1]]}))
    stream = tmp_path / "stream.json"
    stream.write_text(json.dumps({"format": "collabcache/stream", "version": 1, "events": [[0, 0]]}))
    assert main(["run-online", "--instance", str(bad), "--stream", str(stream), "--out", str(tmp_path)]) == 2
    missing = tmp_path / "nope.json"
    missing.write_text(json.dumps({"format": "collabcache/instance", "version": 1, "num_stations": 1}))
    assert main(["run-offline", "--instance", str(missing), "--demands", str(missing), "--out", str(tmp_path)]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "collabcache", "gen-instance", "--seed", "1", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and (tmp_path / "instance.json").exists()
