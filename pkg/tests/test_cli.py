import csv
import json

import numpy as np
import pytest

from heco.cli import main
from heco.io import SynthSpec, generate_synthetic_hin, load_embeddings, save_dataset

pytestmark = pytest.mark.filterwarnings("ignore:zero embedding row")


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    spec = SynthSpec(targets_per_class=25, aux_types={"author": 40, "subject": 20}, p_in=0.2, p_out=0.01)
    return save_dataset(generate_synthetic_hin(spec, 0), tmp_path_factory.mktemp("data") / "synth")


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def train_args(bundle, out, *extra):
    return ["train", "--dataset", str(bundle), "--seed", "1", "--epochs", "6", "--dim", "16",
            "--t-pos", "4", "--no-early-stop", "--out", str(out), *extra]


def test_train_is_deterministic(bundle, tmp_path):
    assert main(train_args(bundle, tmp_path / "a")) == 0
    assert main(train_args(bundle, tmp_path / "b")) == 0
    for name in ("checkpoint.zip", "loss.csv", "attention.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = read_csv(tmp_path / "a" / "loss.csv")
    assert list(rows[0]) == ["epoch", "L_cross_sc", "L_cross_mp", "L_intra_sc", "L_intra_mp", "L_semi", "total"]
    assert len(rows) == 6


def test_zero_lambda_hecopp_curve_equals_heco(bundle, tmp_path):
    main(train_args(bundle, tmp_path / "h", "--variant", "heco"))
    main(train_args(bundle, tmp_path / "p", "--variant", "hecopp", "--lambda1", "0", "--lambda2", "0"))
    a = [r["total"] for r in read_csv(tmp_path / "h" / "loss.csv")]
    b = [r["total"] for r in read_csv(tmp_path / "p" / "loss.csv")]
    assert a == b


def test_embed_and_evaluate(bundle, tmp_path, capsys):
    main(train_args(bundle, tmp_path, "--variant", "heco"))
    assert main(["embed", str(tmp_path / "checkpoint.zip"), "--dataset", str(bundle), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "embeddings.tsv").read_text().splitlines()
    assert len(lines) == 1 + 75 and all(len(l.split("\t")) == 17 for l in lines[1:])
    z, meta = load_embeddings(tmp_path / "embeddings.tsv")
    assert meta["variant"] == "heco" and meta["seed"] == "1"
    args = ["evaluate", str(tmp_path / "embeddings.tsv"), "--dataset", str(bundle), "--out", str(tmp_path), "--runs", "2"]
    assert main(args) == 0
    assert "Ma-F1" in capsys.readouterr().out
    report = (tmp_path / "report.csv").read_text()
    rows = read_csv(tmp_path / "report.csv")
    assert list(rows[0]) == ["metric", "split", "mean", "std"]
    assert {(r["metric"], r["split"]) for r in rows} >= {("macro_f1", "20"), ("micro_f1", "20"), ("auc", "20"),
                                                       ("nmi", "all"), ("ari", "all")}
    assert main(args) == 0
    assert (tmp_path / "report.csv").read_text() == report


def test_embed_defaults_to_training_dataset(bundle, tmp_path):
    main(train_args(bundle, tmp_path, "--variant", "heco"))
    assert main(["embed", str(tmp_path / "checkpoint.zip"), "--out", str(tmp_path / "e")]) == 0
    assert main(["embed", str(tmp_path / "checkpoint.zip"), "--dataset", str(bundle), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "e" / "embeddings.tsv").read_bytes() == (tmp_path / "embeddings.tsv").read_bytes()


def test_default_embedding_width_is_64(tmp_path, monkeypatch):
    monkeypatch.setenv("HECO_OUTPUT_DIR", str(tmp_path))
    assert main(["train", "--seed", "0", "--epochs", "2"]) == 0
    assert main(["embed", str(tmp_path / "checkpoint.zip")]) == 0
    lines = (tmp_path / "embeddings.tsv").read_text().splitlines()
    assert len(lines) == 5 and all(len(l.split("\t")) == 65 for l in lines[1:])


def test_gan_telemetry(bundle, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"variant": "heco_gan", "dim": 8, "t_pos": 4,
                               "gan": {"k0": 2, "k_d": 2, "k_g": 2, "i_dg": 1, "k_h": 2, "max_rounds": 1}}))
    assert main(["train", "--dataset", str(bundle), "--seed", "0", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "gan.csv")
    assert list(rows[0]) == ["phase", "epoch", "L_D", "L_G", "L_heco", "D_fake"]
    assert [r["phase"] for r in rows] == ["heco"] * 2 + ["D"] * 2 + ["G"] * 2 + ["heco_aug"] * 2


def test_gen_corpus(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"targets_per_class": 30, "aux_types": {"author": 20, "subject": 9}}))
    assert main(["gen-corpus", str(tmp_path / "b"), "--spec", str(spec), "--seed", "3"]) == 0
    names = {p.name for p in (tmp_path / "b").iterdir()}
    assert {"schema.json", "nodes_paper.tsv", "features_paper.tsv", "edges_pa.tsv", "splits_20.json"} <= names


def test_sweep(bundle, tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"tau": [0.5, 0.8], "epochs": [3]}))
    base = tmp_path / "base.json"
    base.write_text(json.dumps({"dim": 8, "t_pos": 4}))
    args = ["sweep", str(grid), "--config", str(base), "--dataset", str(bundle), "--out", str(tmp_path / "s"),
            "--runs", "1"]
    assert main(args) == 0
    rows = read_csv(tmp_path / "s" / "sweep.csv")
    assert {r["params"] for r in rows} == {"epochs=3 tau=0.5", "epochs=3 tau=0.8"}


def test_errors_exit_nonzero(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--epochs", "2"])
    assert exc.value.code != 0
    with pytest.raises(SystemExit) as exc:
        main(["train", "--seed", "0", "--bogus"])
    assert exc.value.code != 0
    assert main(["train", "--seed", "0", "--dataset", str(tmp_path / "missing"), "--out", str(tmp_path)]) != 0
    assert "error" in capsys.readouterr().err
    assert main(["train", "--seed", "0", "--lr", "0.5", "--out", str(tmp_path)]) != 0
