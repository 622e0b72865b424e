"""Config parsing, manifests, CLI exit codes, reproducibility contract."""

import filecmp
import hashlib
import json
import os

import pytest

from grainbath.cli import cli_main
from grainbath.config import (ConfigError, config_summary, parse_config_text,
                              resolve)
from grainbath.experiments import run_experiment
from grainbath.manifest import (RunManifest, config_hash, derive_seed,
                                file_sha256)


def test_parse_text_basics():
    raw = parse_config_text(
        "# comment\n"
        "alpha = 0.9\n"
        "\n"
        "seed=7   # trailing note\n")
    assert raw == {"alpha": "0.9", "seed": "7"}


def test_parse_text_rejects_duplicates_and_garbage():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("alpha = 0.9\nalpha = 0.8\n")
    with pytest.raises(ConfigError, match="key = value"):
        parse_config_text("alpha 0.9\n")
    with pytest.raises(ConfigError, match="empty key"):
        parse_config_text("= 0.9\n")


def test_resolve_defaults_and_lists():
    cfg = resolve({"experiment": "sweep", "alphas": "0.5,0.7,0.9,0.95"})
    assert cfg.alphas == (0.5, 0.7, 0.9, 0.95)
    assert cfg.u0 == (0.0, 0.0, 0.0)
    assert cfg.seed == 12345
    summary = config_summary(cfg)
    assert "alphas = 0.5,0.7,0.9,0.95" in summary
    assert "experiment = sweep" in summary


def test_resolve_unknown_key_names_valid_ones():
    with pytest.raises(ConfigError, match="unknown keys.*alpha"):
        resolve({"experiment": "simulate", "alhpa": "0.9"})


def test_resolve_range_checks():
    with pytest.raises(ConfigError, match="outside documented range"):
        resolve({"experiment": "simulate", "alpha": "1.5"})
    with pytest.raises(ConfigError, match="outside documented range"):
        resolve({"experiment": "simulate", "n_particles": "10"})
    with pytest.raises(ConfigError, match="cannot parse"):
        resolve({"experiment": "simulate", "dt": "fast"})


def test_resolve_cross_checks():
    with pytest.raises(ConfigError, match="bath frame"):
        resolve({"experiment": "steady", "u0": "1.0,0,0"})
    with pytest.raises(ConfigError, match="dt exceeds t_end"):
        resolve({"experiment": "simulate", "dt": "0.9", "t_end": "0.5"})
    with pytest.raises(ConfigError, match="truncates"):
        resolve({"experiment": "simulate", "r_max": "2.0"})


def test_config_hash_scrubs_run_locations():
    base = resolve({"experiment": "simulate"}).to_dict()
    moved = dict(base, out_dir="elsewhere", cache_dir="/tmp/x", n_workers=4)
    assert config_hash(base) == config_hash(moved)
    assert config_hash(dict(base, alpha=0.9)) != config_hash(base)


def test_derive_seed_stable_and_distinct():
    assert derive_seed(12345, "engine") == derive_seed(12345, "engine")
    assert derive_seed(12345, "engine") != derive_seed(12345, "estimator")
    assert derive_seed(1, "engine") != derive_seed(2, "engine")
    assert 0 <= derive_seed(0, "x") < 2 ** 63


def test_file_sha256(tmp_path):
    p = tmp_path / "blob.txt"
    p.write_bytes(b"granular")
    assert file_sha256(str(p)) == hashlib.sha256(b"granular").hexdigest()


def test_manifest_roundtrip(tmp_path):
    cfg = resolve({"experiment": "simulate", "seed": "99"})
    man = RunManifest.start(cfg.to_dict())
    sub = man.note_sub_seed("engine")
    assert man.sub_seeds["engine"] == sub
    out = tmp_path / "blob.txt"
    out.write_text("payload")
    man.add_output(str(out))
    man.finish(["test_flag"])
    path = man.write(str(tmp_path))
    back = RunManifest.read(path)
    assert back.config_hash == man.config_hash
    assert back.seed == 99
    assert back.sub_seeds == man.sub_seeds
    assert back.outputs["blob.txt"] == file_sha256(str(out))
    assert "test_flag" in back.flags


def _write_config(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return str(p)


def test_cli_validate_config_ok(tmp_path, capsys):
    path = _write_config(tmp_path, "experiment = simulate\nalpha = 0.9\n")
    assert cli_main(["validate-config", path]) == 0
    out = capsys.readouterr().out
    assert "alpha = 0.9" in out


def test_cli_validate_config_error(tmp_path, capsys):
    path = _write_config(tmp_path, "alpha = 3.0\n")
    assert cli_main(["validate-config", path]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_cli_usage_and_help(capsys):
    assert cli_main([]) == 2
    capsys.readouterr()
    assert cli_main(["--help"]) == 0


def test_cli_bad_flag_value(tmp_path, capsys):
    assert cli_main(["simulate", "--alpha", "2.0",
                     "--out-dir", str(tmp_path)]) == 2
    assert "configuration error" in capsys.readouterr().err


_TINY = {"n_particles": "2000", "t_end": "0.2", "dt": "0.01",
         "n_bins": "32", "seed": "77"}


def _run_tiny(out_dir, **extra):
    cfg = resolve({"experiment": "simulate", "out_dir": str(out_dir),
                   **_TINY, **extra})
    return run_experiment(cfg)


def test_simulate_end_to_end(tmp_path):
    code, summary, out = _run_tiny(tmp_path / "run")
    assert code == 0
    for name in ("summary.json", "manifest.json", "trajectory.csv",
                 "histogram.csv", "checkpoint.json"):
        assert os.path.exists(os.path.join(out, name)), name
    with open(os.path.join(out, "summary.json")) as fh:
        stored = json.load(fh)
    assert stored["results"]["final_energy"] == \
        summary["results"]["final_energy"]
    man = RunManifest.read(os.path.join(out, "manifest.json"))
    for name, digest in man.outputs.items():
        assert file_sha256(os.path.join(out, name)) == digest
    assert man.finished_at is not None


def test_rerun_is_byte_identical(tmp_path):
    _, _, a = _run_tiny(tmp_path / "a")
    _, _, b = _run_tiny(tmp_path / "b")
    for name in ("trajectory.csv", "histogram.csv", "checkpoint.json",
                 "summary.json"):
        assert filecmp.cmp(os.path.join(a, name), os.path.join(b, name),
                           shallow=False), name
    ha = RunManifest.read(os.path.join(a, "manifest.json")).config_hash
    hb = RunManifest.read(os.path.join(b, "manifest.json")).config_hash
    assert ha == hb


def test_worker_count_does_not_change_results(tmp_path):
    _, _, a = _run_tiny(tmp_path / "w1")
    _, _, b = _run_tiny(tmp_path / "w3", n_workers="3")
    for name in ("trajectory.csv", "histogram.csv", "checkpoint.json"):
        assert filecmp.cmp(os.path.join(a, name), os.path.join(b, name),
                           shallow=False), name
    ha = RunManifest.read(os.path.join(a, "manifest.json")).config_hash
    hb = RunManifest.read(os.path.join(b, "manifest.json")).config_hash
    assert ha == hb


def test_numerical_failure_exit_code(tmp_path, capsys):
    # cutoff far too small for the far-field gain: dissipativity must fail
    code = cli_main(["spectrum", "--alpha", "1.0", "--grid-n", "32",
                     "--splitting", "true", "--splitting-r", "1.0",
                     "--out-dir", str(tmp_path / "spec")])
    assert code == 3
    with open(tmp_path / "spec" / "summary.json") as fh:
        summary = json.load(fh)
    assert "dissipativity_failed" in summary["flags"]
