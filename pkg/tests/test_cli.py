import json

import pytest

from chunktbl.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A trained pipeline: synthetic corpora, rule model, tree, predictions."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--sentences", "250", "--seed", "3", "--out", str(root / "train.txt")]) == 0
    assert main(["synth", "--sentences", "60", "--seed", "4", "--out", str(root / "test.txt")]) == 0
    assert main([
        "train", "--train", str(root / "train.txt"), "--out", str(root / "model.rules"),
        "--threshold", "2", "--log", str(root / "train.log.json"),
    ]) == 0
    assert main([
        "convert", "--rules", str(root / "model.rules"), "--train", str(root / "train.txt"),
        "--out", str(root / "tree.json"), "--k", "5", "--grow",
    ]) == 0
    assert main([
        "decode", "--model", str(root / "tree.json"), "--input", str(root / "test.txt"),
        "--out", str(root / "test.pred"),
    ]) == 0
    return root


class TestPipeline:
    def test_training_log_format(self, workdir):
        log = json.loads((workdir / "train.log.json").read_text())
        assert set(log) == {"initial_accuracy", "final_accuracy", "iterations"}
        first = log["iterations"][0]
        assert set(first) == {"t", "rule", "score", "cumulative_accuracy"}
        assert first["t"] == 0

    def test_eval_writes_report(self, workdir, capsys):
        out = workdir / "report.json"
        assert main([
            "eval", "--pred", str(workdir / "test.pred"),
            "--gold", str(workdir / "test.txt"), "--out", str(out),
        ]) == 0
        printed = capsys.readouterr().out
        assert printed.startswith("Chunk Type")
        assert "cross entropy" in printed
        report = json.loads(out.read_text())
        assert {"token_accuracy", "overall", "per_type", "cross_entropy_bits", "perplexity"} <= set(report)

    def test_curves(self, workdir):
        for kind in ("batch", "online"):
            out = workdir / f"{kind}.csv"
            assert main(["curves", "--pred", str(workdir / "test.pred"),
                         "--kind", kind, "--out", str(out)]) == 0
            lines = out.read_text().splitlines()
            assert lines[0] == "x,accuracy,kept"
            assert len(lines) > 2

    def test_verify_equivalence_passes_at_k0(self, workdir):
        assert main([
            "convert", "--rules", str(workdir / "model.rules"),
            "--train", str(workdir / "train.txt"),
            "--out", str(workdir / "tree0.json"), "--k", "0", "--no-grow",
            "--verify-equivalence",
        ]) == 0

    def test_verify_equivalence_needs_oracle_mode(self, workdir):
        assert main([
            "convert", "--rules", str(workdir / "model.rules"),
            "--train", str(workdir / "train.txt"),
            "--out", str(workdir / "tree_bad.json"), "--k", "5",
            "--verify-equivalence",
        ]) == 1

    def test_decode_rules_model_and_eval(self, workdir, capsys):
        pred = workdir / "rules.pred"
        assert main(["decode", "--model", str(workdir / "model.rules"),
                     "--input", str(workdir / "test.txt"), "--out", str(pred)]) == 0
        capsys.readouterr()
        assert main(["eval", "--pred", str(pred)]) == 0
        assert "cross entropy" not in capsys.readouterr().out

    def test_curves_reject_distribution_free_predictions(self, workdir):
        pred = workdir / "rules2.pred"
        assert main(["decode", "--model", str(workdir / "model.rules"),
                     "--input", str(workdir / "test.txt"), "--out", str(pred)]) == 0
        assert main(["curves", "--pred", str(pred), "--kind", "batch",
                     "--out", str(workdir / "never.csv")]) == 1

    def test_jsonl_decode(self, workdir):
        out = workdir / "test.jsonl"
        assert main(["decode", "--model", str(workdir / "tree.json"),
                     "--input", str(workdir / "test.txt"), "--out", str(out),
                     "--jsonl"]) == 0
        first = json.loads(out.read_text().splitlines()[0])
        assert "tags" in first

    def test_missing_file_is_exit_2(self, workdir):
        assert main(["train", "--train", str(workdir / "nope.txt"),
                     "--out", str(workdir / "x.rules")]) == 2

    def test_al_smoke(self, workdir):
        out = workdir / "al.csv"
        manifest = workdir / "al.manifest.json"
        assert main([
            "al", "--train", str(workdir / "train.txt"), "--test", str(workdir / "test.txt"),
            "--mode", "both", "--t1", "30", "--t2", "30", "--stop-at", "90",
            "--templates", "compact", "--threshold", "3",
            "--out", str(out), "--manifest", str(manifest),
        ]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "labeled_words,f1,accuracy,mode,round"
        modes = {line.split(",")[3] for line in lines[1:]}
        assert modes == {"entropy", "sequential"}
        config = json.loads(manifest.read_text())
        assert config["t1"] == 30 and config["mode"] == "both"


class TestConfigFile:
    def test_config_supplies_defaults_flags_override(self, tmp_path, workdir):
        config = tmp_path / "run.conf"
        config.write_text("threshold=7\nseed=9\n")
        out = tmp_path / "model.rules"
        assert main(["--config", str(config), "train",
                     "--train", str(workdir / "train.txt"), "--out", str(out)]) == 0
        # threshold 7 learns fewer rules than threshold 2
        few = sum(1 for line in out.read_text().splitlines() if not line.startswith("#"))
        many = sum(1 for line in (workdir / "model.rules").read_text().splitlines()
                   if not line.startswith("#"))
        assert few < many
        # explicit flag beats the config value
        out2 = tmp_path / "model2.rules"
        assert main(["--config", str(config), "train", "--threshold", "2",
                     "--train", str(workdir / "train.txt"), "--out", str(out2)]) == 0
        assert (workdir / "model.rules").read_text() == out2.read_text()


class TestDeterminism:
    def test_byte_identical_outputs_across_runs(self, tmp_path):
        outputs = []
        for name in ("a", "b"):
            d = tmp_path / name
            d.mkdir()
            assert main(["synth", "--sentences", "120", "--seed", "5",
                         "--out", str(d / "train.txt")]) == 0
            assert main(["synth", "--sentences", "40", "--seed", "6",
                         "--out", str(d / "test.txt")]) == 0
            assert main(["train", "--train", str(d / "train.txt"),
                         "--out", str(d / "model.rules"),
                         "--log", str(d / "log.json")]) == 0
            assert main(["convert", "--rules", str(d / "model.rules"),
                         "--train", str(d / "train.txt"),
                         "--out", str(d / "tree.json"), "--k", "5", "--grow"]) == 0
            workers = "1" if name == "a" else "4"
            assert main(["decode", "--model", str(d / "tree.json"),
                         "--input", str(d / "test.txt"), "--out", str(d / "out.pred"),
                         "--workers", workers]) == 0
            assert main(["eval", "--pred", str(d / "out.pred"),
                         "--out", str(d / "report.json")]) == 0
            assert main(["curves", "--pred", str(d / "out.pred"), "--kind", "online",
                         "--out", str(d / "curve.csv")]) == 0
            outputs.append(d)
        a, b = outputs
        for name in ("train.txt", "model.rules", "log.json", "tree.json",
                     "out.pred", "report.json", "curve.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
