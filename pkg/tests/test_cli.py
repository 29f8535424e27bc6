import json
from pathlib import Path

import pytest

from mdaforge.cli import main
from mdaforge.metrics import RunResult

SYNTH_CFG = dict(classes=3, sources=2, samples_per_class=10, vocab_size=90,
                 shift=[0.0, 0.7], tokens_per_sample=25, signal_strength=0.7, seed=13)

FAST_TRAIN = ["--feature-dim", "64", "--hidden1", "12", "--hidden2", "8",
              "--lr", "2e-3", "--per-domain-batch", "4", "--epochs", "2",
              "--patience", "5"]


@pytest.fixture()
def synth_cfg_file(tmp_path):
    path = tmp_path / "synth.json"
    path.write_text(json.dumps(SYNTH_CFG), encoding="utf-8")
    return path


def _run_train(tmp_path, synth_cfg_file, out_name, *extra):
    out = tmp_path / out_name
    code = main(["train", "--synth", str(synth_cfg_file), "--out", str(out),
                 *FAST_TRAIN, *extra])
    assert code == 0
    return out


def test_synth_writes_project_files_and_provenance(tmp_path, synth_cfg_file, capsys):
    out = tmp_path / "corpus"
    assert main(["synth", "--config", str(synth_cfg_file), "--out", str(out)]) == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == ["provenance.json", "source_00.jsonl", "source_01.jsonl", "target.jsonl"]
    prov = json.loads((out / "provenance.json").read_text())
    assert prov["config"]["shift"] == [0.0, 0.7]
    assert "4 project files" not in capsys.readouterr().out  # 3 projects here


def test_synth_four_domain_config_gives_four_files(tmp_path):
    cfg = dict(SYNTH_CFG, sources=3, shift=[0.0, 0.3, 0.6])
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    out = tmp_path / "corpus"
    assert main(["synth", "--config", str(path), "--out", str(out)]) == 0
    assert len(list(out.glob("*.jsonl"))) == 4


def test_synth_rerun_is_byte_identical(tmp_path, synth_cfg_file):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    main(["synth", "--config", str(synth_cfg_file), "--out", str(out_a)])
    main(["synth", "--config", str(synth_cfg_file), "--out", str(out_b)])
    for name in ("source_00.jsonl", "target.jsonl", "provenance.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_synth_rejects_incomplete_config(tmp_path):
    bad = dict(SYNTH_CFG)
    del bad["vocab_size"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad), encoding="utf-8")
    assert main(["synth", "--config", str(path), "--out", str(tmp_path / "o")]) == 1


def test_train_writes_run_directory(tmp_path, synth_cfg_file, capsys):
    out = _run_train(tmp_path, synth_cfg_file, "run")
    for name in ("config.json", "checkpoint.json", "report.json", "result.json", "run.log"):
        assert (out / name).exists(), name
    assert (out / "corpus" / "target.jsonl").exists()

    result = RunResult.read(out / "result.json")
    assert result.method == "full"
    assert result.target == "target"
    assert set(result.metrics) == {"acc", "mcc", "kappa", "wf1", "wp", "wr"}
    config = json.loads((out / "config.json").read_text())
    assert config["config_hash"] == result.config_hash
    assert "acc=" in capsys.readouterr().out


def test_train_method_field_tracks_flags(tmp_path, synth_cfg_file):
    out = _run_train(tmp_path, synth_cfg_file, "base", "--no-at", "--no-wmmd")
    assert RunResult.read(out / "result.json").method == "source-only"
    out = _run_train(tmp_path, synth_cfg_file, "base2", "--baseline", "source-only")
    assert RunResult.read(out / "result.json").method == "source-only"
    out = _run_train(tmp_path, synth_cfg_file, "noat", "--no-at")
    assert RunResult.read(out / "result.json").method == "no-at"


def test_train_corpus_requires_target(tmp_path, synth_cfg_file):
    corpus_dir = tmp_path / "corpus"
    main(["synth", "--config", str(synth_cfg_file), "--out", str(corpus_dir)])
    with pytest.raises(SystemExit) as exc:
        main(["train", "--corpus", str(corpus_dir), "--out", str(tmp_path / "run")])
    assert exc.value.code == 2


def test_train_from_corpus_directory_matches_synth(tmp_path, synth_cfg_file):
    corpus_dir = tmp_path / "corpus"
    main(["synth", "--config", str(synth_cfg_file), "--out", str(corpus_dir)])
    out_dir = _run_train(tmp_path, synth_cfg_file, "from_synth")
    out_jsonl = tmp_path / "from_jsonl"
    code = main(["train", "--corpus", str(corpus_dir), "--target", "target",
                 "--out", str(out_jsonl), *FAST_TRAIN])
    assert code == 0
    a = RunResult.read(out_dir / "result.json")
    b = RunResult.read(out_jsonl / "result.json")
    assert a.metrics == b.metrics
    assert a.confusion == b.confusion


def test_train_reproducible_bit_for_bit(tmp_path, synth_cfg_file):
    out_a = _run_train(tmp_path, synth_cfg_file, "a", "--seed", "4")
    out_b = _run_train(tmp_path, synth_cfg_file, "b", "--seed", "4")
    for name in ("result.json", "report.json", "checkpoint.json", "config.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_evaluate_reproduces_train_time_result(tmp_path, synth_cfg_file):
    out = _run_train(tmp_path, synth_cfg_file, "run")
    eval_out = tmp_path / "eval.json"
    code = main(["evaluate", "--checkpoint", str(out / "checkpoint.json"),
                 "--corpus", str(out / "corpus"), "--out", str(eval_out)])
    assert code == 0
    assert eval_out.read_bytes() == (out / "result.json").read_bytes()


def test_evaluate_val_split_differs_from_test(tmp_path, synth_cfg_file, capsys):
    out = _run_train(tmp_path, synth_cfg_file, "run")
    args = ["evaluate", "--checkpoint", str(out / "checkpoint.json"),
            "--corpus", str(out / "corpus")]
    capsys.readouterr()  # drop the train summary line
    assert main(args + ["--split", "val"]) == 0
    val_result = json.loads(capsys.readouterr().out)
    assert main(args + ["--split", "test"]) == 0
    test_result = json.loads(capsys.readouterr().out)
    assert val_result["confusion"] != test_result["confusion"]
    assert sum(map(sum, val_result["confusion"])) < sum(map(sum, test_result["confusion"]))


def test_evaluate_refuses_mismatched_corpus(tmp_path, synth_cfg_file):
    out = _run_train(tmp_path, synth_cfg_file, "run")
    other_cfg = dict(SYNTH_CFG, sources=3, shift=[0.0, 0.2, 0.4])
    other_path = tmp_path / "other.json"
    other_path.write_text(json.dumps(other_cfg), encoding="utf-8")
    other_corpus = tmp_path / "other_corpus"
    main(["synth", "--config", str(other_path), "--out", str(other_corpus)])
    code = main(["evaluate", "--checkpoint", str(out / "checkpoint.json"),
                 "--corpus", str(other_corpus)])
    assert code == 1


def test_evaluate_refuses_wrong_target(tmp_path, synth_cfg_file):
    out = _run_train(tmp_path, synth_cfg_file, "run")
    code = main(["evaluate", "--checkpoint", str(out / "checkpoint.json"),
                 "--corpus", str(out / "corpus"), "--target", "source_00"])
    assert code == 1


def _write_result(path, method, seed, acc):
    cm_labels = ("CWE-89", "CWE-78")
    result = RunResult(method=method, target="t", seed=seed,
                       metrics={"acc": acc, "mcc": 0.0, "kappa": 0.0,
                                "wf1": 0.0, "wp": 0.0, "wr": 0.0},
                       per_class={}, confusion=[[1, 0], [0, 1]],
                       labels=list(cm_labels))
    result.write(path)


def test_compare_single_method_rank_one(tmp_path, capsys):
    files = []
    for i, acc in enumerate((0.9, 0.91, 0.92)):
        path = tmp_path / f"r{i}.json"
        _write_result(path, "solo", i, acc)
        files.append(str(path))
    out = tmp_path / "table.json"
    assert main(["compare", *files, "--metric", "acc", "--out", str(out)]) == 0
    table = json.loads(out.read_text())
    assert table["ranks"] == [{"rank": 1, "methods": ["solo"], "mean": pytest.approx(0.91)}]
    assert "solo" in capsys.readouterr().out


def test_compare_separates_disjoint_ranges_and_pools_duplicates(tmp_path, capsys):
    files = []
    for i, acc in enumerate((0.95, 0.96, 0.94)):
        path = tmp_path / f"hi{i}.json"
        _write_result(path, "strong", i, acc)
        files.append(str(path))
    for i, acc in enumerate((0.55, 0.56, 0.54)):
        path = tmp_path / f"lo{i}.json"
        _write_result(path, "weak", i, acc)
        files.append(str(path))
    out = tmp_path / "table.json"
    assert main(["compare", *files, "--metric", "acc", "--out", str(out)]) == 0
    table = json.loads(out.read_text())
    assert [r["methods"] for r in table["ranks"]] == [["strong"], ["weak"]]
    assert table["pairwise_d"][0]["magnitude"] == "L"
    text = capsys.readouterr().out
    assert "strong" in text and "weak" in text and "d =" in text


def test_compare_missing_metric_fails(tmp_path):
    path = tmp_path / "r.json"
    data = {"method": "m", "target": "t", "seed": 0,
            "metrics": {"acc": 0.5, "mcc": 0, "kappa": 0, "wf1": 0, "wp": 0, "wr": 0},
            "per_class": {}, "confusion": [[1]], "labels": ["CWE-89"], "config_hash": ""}
    path.write_text(json.dumps(data), encoding="utf-8")
    assert main(["compare", str(path), str(path), "--metric", "acc"]) == 0
    # wf1 present but drop it to exercise the error path
    del data["metrics"]["wf1"]
    path.write_text(json.dumps(data), encoding="utf-8")
    assert main(["compare", str(path), str(path), "--metric", "wf1"]) == 1


def test_usage_errors_exit_two():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--out", "x"])  # neither --corpus nor --synth
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["compare", "file.json", "--metric", "auc"])  # unsupported metric
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_runtime_errors_exit_one(tmp_path):
    assert main(["synth", "--config", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path / "o")]) == 1
    assert main(["compare", str(tmp_path / "missing_result.json"),
                 "--metric", "acc"]) == 1
