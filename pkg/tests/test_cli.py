import csv
import json

import pytest

from gnl import data as gdata
from gnl.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    gdata.generate_synthetic(root / "data", seed=0, n_per_class=6)
    cfg = {"seed": 1, "data": {"manifest": "data/manifest.csv", "normal_class": "normal"},
           "model": {"block_channels": [4, 8, 16], "bottleneck_channels": 8},
           "train": {"epochs": 1, "batch_size": 4},
           "benchmark_configs": {"rd4ad": {"tta": None}, "gnl": {"tta": {"alpha": 0.5}}},
           "suites": [{"name": "noise", "corruption": {"kind": "gaussian_noise", "severity": 3}},
                      {"name": "shift", "manifest": "data/manifest_shift_brightness.csv"}],
           "output_dir": "run"}
    (root / "cfg.json").write_text(json.dumps(cfg))
    assert main(["train", "--config", str(root / "cfg.json")]) == 0
    return root


def test_train_outputs(workspace):
    run = workspace / "run"
    assert (run / "model.gnl").read_bytes()[:4] == b"GNL1"
    assert json.loads((run / "config.json").read_text())["seed"] == 1
    assert (run / "train_log.csv").read_text().startswith("epoch,l_ori")


def test_eval_plain_and_tta(workspace, tmp_path):
    ck, man = str(workspace / "run" / "model.gnl"), str(workspace / "data" / "manifest.csv")
    assert main(["eval", "--checkpoint", ck, "--manifest", man, "--out", str(tmp_path / "s.csv")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert len(rows) == 12 and set(rows[0]) == {"sample_id", "label", "score"}
    assert "auroc" in json.loads((tmp_path / "s.csv.json").read_text())
    assert main(["eval", "--checkpoint", ck, "--manifest", man, "--out", str(tmp_path / "t.csv"),
                 "--style-pool", man, "--tta-alpha", "0.3", "--tta-method", "moment"]) == 0
    assert json.loads((tmp_path / "t.csv.json").read_text())["inference"]["tta"]["alpha"] == 0.3


def test_eval_tta_without_pool_is_usage_error(workspace, tmp_path):
    ck, man = str(workspace / "run" / "model.gnl"), str(workspace / "data" / "manifest.csv")
    assert main(["eval", "--checkpoint", ck, "--manifest", man, "--out", str(tmp_path / "s.csv"),
                 "--tta-method", "exact"]) == 2


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--bogus"])
    assert exc.value.code == 2


def test_data_errors_exit_3(workspace, tmp_path):
    (tmp_path / "junk.gnl").write_bytes(b"nope")
    man = str(workspace / "data" / "manifest.csv")
    assert main(["eval", "--checkpoint", str(tmp_path / "junk.gnl"), "--manifest", man,
                 "--out", str(tmp_path / "s.csv")]) == 3
    (tmp_path / "m.csv").write_text("path,class,split\nmissing.png,a,train\n")
    assert main(["corrupt", "--manifest", str(tmp_path / "m.csv"), "--kind", "contrast",
                 "--out", str(tmp_path / "c")]) == 3


def test_bad_config_exits_2(tmp_path):
    (tmp_path / "c.json").write_text("{not json")
    assert main(["train", "--config", str(tmp_path / "c.json")]) == 2


def test_corrupt_twice_byte_identical(workspace, tmp_path):
    man = str(workspace / "data" / "manifest.csv")
    for out in ("a", "b"):
        assert main(["corrupt", "--manifest", man, "--kind", "gaussian_noise", "--severity", "3",
                     "--seed", "1", "--out", str(tmp_path / out)]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 20
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_benchmark_one_row_per_suite(workspace, tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["benchmark", "--config", str(workspace / "cfg.json"),
                 "--checkpoint", str(workspace / "run" / "model.gnl"), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert [(r["config_name"], r["suite"]) for r in rows] == [
        ("rd4ad", "id"), ("rd4ad", "noise"), ("rd4ad", "shift"), ("gnl", "id"), ("gnl", "noise"), ("gnl", "shift")]
    assert all(r["n_normal"] == "6" and r["n_anomaly"] == "6" for r in rows)
    assert (tmp_path / "bench_scores.csv").exists() and (tmp_path / "bench_config.json").exists()


def test_synth_and_plot_hist(workspace, tmp_path):
    assert main(["synth", "--out", str(tmp_path / "s"), "--n-per-class", "2", "--seed", "3"]) == 0
    assert len(gdata.read_manifest(tmp_path / "s" / "manifest.csv")) == 6
    ck, man = str(workspace / "run" / "model.gnl"), str(workspace / "data" / "manifest.csv")
    main(["eval", "--checkpoint", ck, "--manifest", man, "--out", str(tmp_path / "sc.csv")])
    assert main(["plot-hist", "--scores", str(tmp_path / "sc.csv"), "--bins", "5",
                 "--out", str(tmp_path / "h.csv"), "--svg", str(tmp_path / "h.svg")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "h.csv")))
    assert len(rows) == 5 and sum(int(r["count_normal"]) for r in rows) == 6
    assert (tmp_path / "h.svg").exists()


def test_env_seed_used_when_no_flag(workspace, tmp_path, monkeypatch):
    monkeypatch.setenv("GNL_SEED", "8")
    assert main(["train", "--config", str(workspace / "cfg.json"), "--out", str(tmp_path / "r")]) == 0
    assert json.loads((tmp_path / "r" / "config.json").read_text())["seed"] == 8
