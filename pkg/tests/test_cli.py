import json
from pathlib import Path

import pytest

from clara.cli import main

QUICK_TRAIN = {
    "min_count": 1,
    "editor_epochs": 1,
    "editor_rounds": 1,
    "editor_batch": 16,
    "clf_epochs": 2,
    "phenotype_epochs": 1,
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Synth corpus + trained bundle shared by the CLI tests."""
    base = tmp_path_factory.mktemp("cli")
    corpus = base / "corpus.jsonl"
    assert main(["synth", "--seed", "7", "--n", "80", "--modality", "eeg",
                 "--out", str(corpus)]) == 0
    config = base / "train.json"
    config.write_text(json.dumps(QUICK_TRAIN))
    model_dir = base / "model"
    assert main(["train", "all", "--corpus", str(corpus),
                 "--model-dir", str(model_dir), "--config", str(config),
                 "--seed", "7"]) == 0
    return {"base": base, "corpus": corpus, "model": model_dir, "config": config}


def test_synth_deterministic_per_seed(tmp_path):
    a, b, c = (tmp_path / n for n in ("a.jsonl", "b.jsonl", "c.jsonl"))
    assert main(["synth", "--seed", "42", "--n", "20", "--modality", "eeg",
                 "--out", str(a)]) == 0
    assert main(["synth", "--seed", "42", "--n", "20", "--modality", "eeg",
                 "--out", str(b)]) == 0
    assert main(["synth", "--seed", "43", "--n", "20", "--modality", "eeg",
                 "--out", str(c)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_group_level_seed_equivalent(tmp_path):
    sub = tmp_path / "sub.jsonl"
    grp = tmp_path / "grp.jsonl"
    assert main(["synth", "--seed", "9", "--n", "10", "--out", str(sub)]) == 0
    assert main(["--seed", "9", "synth", "--n", "10", "--out", str(grp)]) == 0
    assert sub.read_bytes() == grp.read_bytes()


def test_index_default_vocab_path(workdir, tmp_path):
    repo = tmp_path / "repo.jsonl"
    assert main(["index", "--corpus", str(workdir["corpus"]),
                 "--out", str(repo)]) == 0
    assert repo.exists()
    assert (tmp_path / "repo.vocab.tsv").exists()


def test_index_explicit_vocab_path(workdir, tmp_path):
    repo = tmp_path / "proto.jsonl"
    vocab = tmp_path / "tokens.tsv"
    assert main(["index", "--corpus", str(workdir["corpus"]), "--out", str(repo),
                 "--vocab-out", str(vocab), "--min-count", "1"]) == 0
    assert vocab.exists()


def test_missing_data_file_is_exit_2(tmp_path):
    assert main(["index", "--corpus", str(tmp_path / "absent.jsonl"),
                 "--out", str(tmp_path / "r.jsonl")]) == 2


def test_usage_errors_are_exit_1(tmp_path):
    assert main(["index"]) == 1  # required option missing
    assert main(["frobnicate"]) == 1  # unknown subcommand
    assert main(["synth", "--n", "x", "--out", str(tmp_path / "o.jsonl")]) == 1
    assert main([]) == 1  # no subcommand


def test_train_writes_bundle_and_figure(workdir):
    model = workdir["model"]
    for name in ("meta.json", "vocab.tsv", "repo.jsonl", "editor.bin",
                 "anchor_clf.bin", "phenotype.bin", "training_loss.png"):
        assert (model / name).exists(), name
    meta = json.loads((model / "meta.json").read_text())
    splits = meta["split_ids"]
    assert set(splits) == {"train", "val", "test"}
    assert not set(splits["train"]) & set(splits["test"])


def test_train_requires_model_dir(workdir, monkeypatch):
    monkeypatch.delenv("CLARA_MODEL_DIR", raising=False)
    assert main(["train", "all", "--corpus", str(workdir["corpus"])]) == 1


def test_model_dir_from_environment(workdir, tmp_path, monkeypatch):
    monkeypatch.setenv("CLARA_MODEL_DIR", str(workdir["model"]))
    out = tmp_path / "gen.jsonl"
    assert main(["generate", "--corpus", str(workdir["corpus"]),
                 "--out", str(out), "--mode", "retrieve_only"]) == 0
    assert out.exists()


def test_generate_writes_eval_rows(workdir, tmp_path):
    out = tmp_path / "candidates.jsonl"
    assert main(["generate", "--corpus", str(workdir["corpus"]),
                 "--model-dir", str(workdir["model"]), "--out", str(out),
                 "--mode", "retrieve_only"]) == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert rows
    meta = json.loads((workdir["model"] / "meta.json").read_text())
    assert len(rows) == len(meta["split_ids"]["test"])
    for row in rows:
        assert set(row) == {"id", "candidate", "references", "gold_anchors"}
        assert isinstance(row["references"], list)


def test_generate_bad_model_dir_is_exit_2(workdir, tmp_path):
    empty = tmp_path / "not_a_model"
    empty.mkdir()
    assert main(["generate", "--corpus", str(workdir["corpus"]),
                 "--model-dir", str(empty),
                 "--out", str(tmp_path / "x.jsonl")]) == 2


def test_eval_requires_exactly_one_source(workdir, tmp_path):
    out = str(tmp_path / "m.json")
    assert main(["eval", "--model-dir", str(workdir["model"]), "--out", out]) == 1
    assert main(["eval", "--model-dir", str(workdir["model"]), "--out", out,
                 "--corpus", str(workdir["corpus"]),
                 "--pairs", str(workdir["corpus"])]) == 1


def test_eval_pairs_identity(workdir, tmp_path):
    pairs = tmp_path / "pairs.jsonl"
    rows = [{"id": f"r{i}", "candidate": "slow wave activity over the left region",
             "references": ["slow wave activity over the left region"]}
            for i in range(3)]
    pairs.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    out = tmp_path / "metrics.json"
    assert main(["eval", "--pairs", str(pairs), "--model-dir", str(workdir["model"]),
                 "--out", str(out)]) == 0
    metrics = json.loads(out.read_text())
    assert metrics["bleu4"] == 1.0
    assert abs(metrics["cider"] - 10.0) < 1e-9
    assert (tmp_path / "metrics.png").exists()


def test_eval_corpus_subset(workdir, tmp_path):
    out = tmp_path / "test_metrics.json"
    assert main(["eval", "--corpus", str(workdir["corpus"]),
                 "--model-dir", str(workdir["model"]), "--out", str(out),
                 "--mode", "retrieve_only"]) == 0
    metrics = json.loads(out.read_text())
    for key in ("bleu1", "bleu4", "cider", "phenotype_accuracy"):
        assert key in metrics
    assert (tmp_path / "test_metrics.png").exists()


def test_eval_detects_patient_overlap(workdir, tmp_path, capsys):
    out = tmp_path / "overlap.json"
    code = main(["eval", "--corpus", str(workdir["corpus"]),
                 "--train-corpus", str(workdir["corpus"]),
                 "--model-dir", str(workdir["model"]), "--out", str(out),
                 "--mode", "retrieve_only"])
    assert code == 2
    assert "share patients" in capsys.readouterr().err


def test_eval_malformed_pairs_is_exit_2(workdir, tmp_path):
    pairs = tmp_path / "broken.jsonl"
    pairs.write_text("{not json\n")
    assert main(["eval", "--pairs", str(pairs), "--model-dir", str(workdir["model"]),
                 "--out", str(tmp_path / "m.json")]) == 2


def test_sweep_outputs(workdir, tmp_path):
    out_dir = tmp_path / "sweep"
    assert main(["sweep", "--corpus", str(workdir["corpus"]),
                 "--model-dir", str(workdir["model"]), "--out-dir", str(out_dir),
                 "--counts", "1,2", "--mode", "retrieve_only", "--seed", "7"]) == 0
    csv_lines = (out_dir / "sweep.csv").read_text().splitlines()
    assert csv_lines[0] == "anchor_count,cider,bleu1,bleu2,bleu3,bleu4"
    assert len(csv_lines) == 3
    assert csv_lines[1].startswith("1,") and csv_lines[2].startswith("2,")
    sidecar = json.loads((out_dir / "sweep.json").read_text())
    assert sidecar["counts"] == [1, 2]
    assert sidecar["seed"] == 7
    assert len(sidecar["config_hash"]) == 12
    assert (out_dir / "sweep.png").exists()


def test_sweep_bad_counts_is_exit_1(workdir, tmp_path):
    assert main(["sweep", "--corpus", str(workdir["corpus"]),
                 "--model-dir", str(workdir["model"]),
                 "--out-dir", str(tmp_path / "s"), "--counts", "a,b"]) == 1
    assert main(["sweep", "--corpus", str(workdir["corpus"]),
                 "--model-dir", str(workdir["model"]),
                 "--out-dir", str(tmp_path / "s"), "--counts", ","]) == 1


def test_config_file_feeds_settings(workdir, tmp_path):
    # a malformed config is a usage-independent data problem: exit 2 via ClaraError
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert main(["synth", "--config", str(bad), "--n", "5",
                 "--out", str(tmp_path / "o.jsonl")]) == 2
