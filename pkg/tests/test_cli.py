import json
import subprocess
import sys

import numpy as np
import pytest

from unseen_prune import cli, data, selection

FAST = ["--arch", "softmax", "--epochs", "3"]


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"class_count": 4, "dim": 3, "spreads": [0.5, 0.8, 1.0, 1.2],
                                "samples_per_class": 25, "label_noise_rate": 0.1, "seed": 1,
                                "center_seed": 2}))
    return path


@pytest.fixture
def dataset(tmp_path, spec_file):
    out = tmp_path / "train.csv"
    assert cli.main(["gen", str(spec_file), "--out", str(out)]) == 0
    return out


def _manifest(path):
    return json.loads(path.with_name(path.name + ".manifest.json").read_text())


class TestGen:
    def test_writes_dataset_and_manifest(self, dataset):
        ds = data.load_csv(dataset)
        assert len(ds) == 4 * 25
        meta = data.load_meta(dataset)
        assert len(meta["corrupted_indices"]) == 10
        man = _manifest(dataset)
        assert man["command"] == "gen" and str(dataset) in man["outputs"]

    def test_refuses_overwrite(self, dataset, spec_file, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["gen", str(spec_file), "--out", str(dataset)])
        assert exc.value.code == 2
        assert "--force" in capsys.readouterr().err
        assert cli.main(["gen", str(spec_file), "--out", str(dataset), "--force"]) == 0

    def test_invalid_spec(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"class_count": 1, "dim": 2, "spreads": 1.0, "samples_per_class": 5}))
        assert cli.main(["gen", str(bad), "--out", str(tmp_path / "x.csv")]) == 2

    def test_explicit_centers(self, tmp_path):
        spec = tmp_path / "s.json"
        spec.write_text(json.dumps({"centers": [[-1, 0], [1, 0]], "spreads": 0.1,
                                    "samples_per_class": 50, "seed": 3}))
        out = tmp_path / "blobs.csv"
        assert cli.main(["gen", str(spec), "--out", str(out)]) == 0
        assert len(data.load_csv(out)) == 100


class TestScore:
    def test_unseen_contributors(self, tmp_path, dataset):
        out = tmp_path / "u.csv"
        assert cli.main(["score", str(dataset), "--mode", "unseen", "--k", "4", "--seed", "0",
                         "--out", str(out), *FAST]) == 0
        rows = out.read_text().splitlines()[2:]
        assert {r.split(",")[2] for r in rows} == {"3"}

    def test_fitting_contributors(self, tmp_path, dataset):
        out = tmp_path / "f.csv"
        assert cli.main(["score", str(dataset), "--mode", "fitting", "--seed", "0",
                         "--out", str(out), *FAST]) == 0
        assert {r.split(",")[2] for r in out.read_text().splitlines()[2:]} == {"1"}

    def test_k1_usage_error(self, tmp_path, dataset):
        with pytest.raises(SystemExit) as exc:
            cli.main(["score", str(dataset), "--k", "1", "--seed", "0", "--out", str(tmp_path / "s.csv")])
        assert exc.value.code == 2

    def test_seed_required(self, tmp_path, dataset):
        with pytest.raises(SystemExit) as exc:
            cli.main(["score", str(dataset), "--out", str(tmp_path / "s.csv")])
        assert exc.value.code == 2

    def test_missing_dataset(self, tmp_path):
        assert cli.main(["score", str(tmp_path / "nope.csv"), "--seed", "0",
                         "--out", str(tmp_path / "s.csv")]) == 3

    def test_malformed_dataset(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("x0,label\n1.0,0\nfoo,1\n")
        assert cli.main(["score", str(bad), "--seed", "0", "--out", str(tmp_path / "s.csv")]) == 3

    def test_divergence_exit_code(self, tmp_path):
        ds = data.LabeledDataset(np.array([[1e200, -1e200], [-1e200, 1e200]] * 4), [0, 1] * 4, 2)
        path = tmp_path / "huge.csv"
        data.save_csv(ds, path)
        with np.errstate(all="ignore"):
            code = cli.main(["score", str(path), "--mode", "fitting", "--seed", "0", "--arch", "softmax",
                             "--lr", "1", "--batch-size", "2", "--out", str(tmp_path / "s.csv")])
        assert code == 4

    def test_config_precedence(self, tmp_path, dataset):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"architecture": "softmax", "epochs": 2, "learning_rate": 0.2}))
        out = tmp_path / "s.csv"
        assert cli.main(["score", str(dataset), "--mode", "fitting", "--seed", "5", "--config", str(cfg),
                         "--epochs", "4", "--out", str(out)]) == 0
        config = _manifest(out)["config"]
        assert config["epochs"] == 4 and config["learning_rate"] == 0.2
        assert config["architecture"] == "softmax" and config["seed"] == 5
        assert config["batch_size"] == 32


class TestSelect:
    def test_two_stage_matches_plan(self, tmp_path, dataset):
        out = tmp_path / "core.txt"
        assert cli.main(["select", str(dataset), "--end-to-end", "--p", "0.3", "--j", "2",
                         "--m2-frac", "0.1", "--seed", "0", "--out", str(out), *FAST]) == 0
        idx = selection.load_coreset(out)
        assert idx.size == 70 and np.all(np.diff(idx) > 0)
        audit = json.loads(selection.audit_path(out).read_text())
        assert tuple(audit["stage_sizes"]) == selection.plan_stages(100, 0.3, 2, 0.1).sizes

    def test_single_stage_from_table(self, tmp_path, dataset):
        scores = tmp_path / "u.csv"
        cli.main(["score", str(dataset), "--seed", "0", "--out", str(scores), *FAST])
        out = tmp_path / "core.txt"
        assert cli.main(["select", str(dataset), "--scores", str(scores), "--p", "0.5", "--j", "1",
                         "--seed", "0", "--out", str(out), *FAST]) == 0
        audit = json.loads(selection.audit_path(out).read_text())
        assert len(audit["stages"]) == 1 and audit["stage_sizes"] == [50]

    def test_bad_prune_rate(self, tmp_path, dataset):
        assert cli.main(["select", str(dataset), "--end-to-end", "--p", "1.5", "--seed", "0",
                         "--out", str(tmp_path / "c.txt")]) == 2


class TestEvalCompareCost:
    def test_eval_variants(self, tmp_path, dataset):
        core = tmp_path / "core.txt"
        cli.main(["select", str(dataset), "--end-to-end", "--p", "0.3", "--seed", "0",
                  "--out", str(core), *FAST])
        for extra, kind in (([], "full"), (["--coreset", str(core)], "coreset"),
                            (["--random", "0.3"], "random")):
            out = tmp_path / f"{kind}.json"
            assert cli.main(["eval", "--train", str(dataset), "--test", str(dataset), *extra,
                             "--seed", "0", "--out", str(out), *FAST]) == 0
            rep = json.loads(out.read_text())
            assert rep["kind"] == kind and 0 <= rep["test_accuracy"] <= 1
            assert rep["coreset_size"] == (100 if kind == "full" else 70)

    def test_compare_same_table(self, tmp_path, dataset):
        scores = tmp_path / "u.csv"
        cli.main(["score", str(dataset), "--seed", "0", "--out", str(scores), *FAST])
        out = tmp_path / "cmp.json"
        assert cli.main(["compare", str(scores), str(scores), "--out", str(out),
                         "--hist-prefix", str(tmp_path / "h")]) == 0
        assert json.loads(out.read_text())["rank_pcc"] == 1.0
        assert (tmp_path / "h_a.csv").exists()

    def test_compare_mismatched(self, tmp_path, dataset, spec_file):
        a = tmp_path / "a.csv"
        cli.main(["score", str(dataset), "--seed", "0", "--out", str(a), *FAST])
        other = tmp_path / "small.csv"
        spec = json.loads(spec_file.read_text())
        spec["samples_per_class"] = 10
        spec_file.write_text(json.dumps(spec))
        cli.main(["gen", str(spec_file), "--out", str(other)])
        b = tmp_path / "b.csv"
        cli.main(["score", str(other), "--seed", "0", "--out", str(b), *FAST])
        assert cli.main(["compare", str(a), str(b), "--out", str(tmp_path / "c.json")]) == 3

    @pytest.mark.parametrize("p,ratio", [("0.7", 0.153846), ("0.3", 0.352941)])
    def test_cost(self, tmp_path, capsys, p, ratio):
        out = tmp_path / "cost.json"
        assert cli.main(["cost", "--n", "50000", "--p", p, "--b", "128", "--out", str(out)]) == 0
        table = json.loads(out.read_text())
        assert table["is_ratio"] == pytest.approx(ratio, abs=1e-6)
        assert table["unseen_iters"] == table["prev_iters"]
        assert "is_ratio" in capsys.readouterr().out


class TestRepro:
    def test_select_replays_byte_identically(self, tmp_path, dataset):
        out = tmp_path / "core.txt"
        cli.main(["select", str(dataset), "--end-to-end", "--p", "0.5", "--seed", "3",
                  "--out", str(out), *FAST])
        replay = tmp_path / "replay"
        replay.mkdir()
        manifest = out.with_name(out.name + ".manifest.json")
        assert cli.main(["repro", str(manifest), "--out-dir", str(replay), "--check"]) == 0
        assert (replay / "core.txt").read_bytes() == out.read_bytes()

    def test_detects_changed_input(self, tmp_path, dataset):
        out = tmp_path / "s.csv"
        cli.main(["score", str(dataset), "--seed", "0", "--out", str(out), *FAST])
        dataset.write_text(dataset.read_text() + "\n")
        assert cli.main(["repro", str(out.with_name(out.name + ".manifest.json"))]) == 3

    def test_detects_changed_output(self, tmp_path, dataset):
        out = tmp_path / "s.csv"
        cli.main(["score", str(dataset), "--seed", "0", "--out", str(out), *FAST])
        manifest = out.with_name(out.name + ".manifest.json")
        doc = json.loads(manifest.read_text())
        doc["outputs"][str(out)] = "0" * 64
        manifest.write_text(json.dumps(doc))
        assert cli.main(["repro", str(manifest), "--check"]) == 1


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "unseen_prune.cli", "cost", "--n", "1000",
                           "--p", "0.7", "--b", "32"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "is_ratio" in proc.stdout
