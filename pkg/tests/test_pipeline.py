import json
from dataclasses import replace

import pytest

from geccl.cli import main
from geccl.pipeline import ConfigError, RunConfig, compare_runs, run_pipeline

from conftest import BUNDLED, GOLDEN, STRATEGIES


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_report_matches_golden(golden_runs, strategy):
    result, _ = golden_runs[strategy]
    assert (result.run_dir / "report.json").read_bytes() == (GOLDEN / f"report-{strategy}.json").read_bytes()


def test_run_directory_layout(golden_runs):
    run_dir = golden_runs["easy"][0].run_dir
    assert run_dir.name.startswith("easy-")
    for name in ("config.json", "scores.jsonl", "plan.json", "report.json", "report.txt", "sentence_scores.json", "manifest.json"):
        assert (run_dir / name).is_file(), name
    assert len(list((run_dir / "checkpoints").glob("stage*.json"))) == 3
    assert len(list((run_dir / "hypotheses").glob("stage*.txt"))) == 3
    snapshot = RunConfig.from_dict(json.loads((run_dir / "config.json").read_text()), run_dir)
    assert snapshot.curriculum.strategy == "easy"


def test_plain_run_has_one_stage(golden_runs):
    report = golden_runs["plain"][0].report
    assert [s["name"] for s in report["stages"]] == ["All"]
    assert golden_runs["mixed"][0].report["stages"][0]["name"] == "3E+2M+1H"


def test_report_text_lists_every_stage(golden_runs):
    text = (golden_runs["easy"][0].run_dir / "report.txt").read_text()
    for name in ("E", "EM", "EMH"):
        assert f"\n{name} " in text or text.startswith(f"{name} ")


def test_missing_corpus_is_rejected_before_any_output(bundled_config, tmp_path):
    cfg = replace(bundled_config, paths=replace(bundled_config.paths, corpus=str(tmp_path / "nope.tsv")))
    cfg = cfg.override(output_dir=str(tmp_path / "runs"))
    with pytest.raises(ConfigError):
        run_pipeline(cfg)
    assert not (tmp_path / "runs").exists()


def test_unknown_config_key(tmp_path):
    data = json.loads((BUNDLED / "config.json").read_text())
    data["scoring"]["temperature"] = 0
    with pytest.raises(ConfigError, match="temperature"):
        RunConfig.from_dict(data, BUNDLED)


def test_flags_override_config(bundled_config):
    cfg = bundled_config.override(strategy="hard", seed=3, concurrency=4, backend="length", identical_policy="exclude")
    assert (cfg.curriculum.strategy, cfg.curriculum.seed, cfg.scoring.concurrency) == ("hard", 3, 4)
    assert (cfg.scoring.backend, cfg.curriculum.identical_policy) == ("length", "exclude")
    assert bundled_config.override(strategy=None) == bundled_config


def test_compare_with_itself(golden_runs):
    run = golden_runs["easy"][0].run_dir
    cmp = compare_runs(run, run)
    assert cmp.p_value == 1.0
    assert cmp.rows[0][1:] == cmp.rows[1][1:]


def test_compare_easy_hard(golden_runs):
    cmp = compare_runs(golden_runs["easy"][0].run_dir, golden_runs["hard"][0].run_dir)
    assert [row[1] for row in cmp.rows] == ["EMH", "HME"]
    assert 0.0 <= cmp.p_value <= 1.0
    assert "paired t-test" in cmp.render()


def test_compare_rejects_different_gold(golden_runs, tmp_path):
    src = golden_runs["easy"][0].run_dir
    other = tmp_path / "other"
    other.mkdir()
    report = json.loads((src / "report.json").read_text())
    report["gold_test_sha256"] = "0" * 64
    (other / "report.json").write_text(json.dumps(report))
    (other / "sentence_scores.json").write_text((src / "sentence_scores.json").read_text())
    with pytest.raises(ConfigError, match="different gold"):
        compare_runs(src, other)


def test_compare_rejects_incomplete_run(golden_runs, tmp_path):
    with pytest.raises(ConfigError):
        compare_runs(golden_runs["easy"][0].run_dir, tmp_path)


class TestCli:
    def test_pipeline_and_report(self, tmp_path, capsys):
        code = main(["pipeline", "--config", str(BUNDLED / "config.json"), "--strategy", "plain", "--out", str(tmp_path)])
        assert code == 0
        run_dir = capsys.readouterr().out.strip()
        assert (tmp_path / run_dir.split("/")[-1] / "report.json").is_file()
        assert main(["report", run_dir]) == 0
        assert "All" in capsys.readouterr().out
        assert main(["compare", run_dir, run_dir, "--json"]) == 0
        assert json.loads(capsys.readouterr().out)["p_value"] == 1.0

    def test_missing_corpus_exits_one(self, tmp_path, capsys):
        data = json.loads((BUNDLED / "config.json").read_text())
        data["paths"]["corpus"] = "missing.tsv"
        data["paths"]["gold_test"] = str(BUNDLED / "test.m2")
        data["paths"]["labels"] = str(BUNDLED / "labels.jsonl")
        data["paths"]["gold_dev"] = None
        data["paths"]["output_dir"] = str(tmp_path / "runs")
        (tmp_path / "config.json").write_text(json.dumps(data))
        assert main(["pipeline", "--config", str(tmp_path / "config.json")]) == 1
        assert "missing.tsv" in capsys.readouterr().err
        assert not (tmp_path / "runs").exists()

    def test_remote_without_endpoint_exits_one(self, tmp_path, capsys):
        code = main(["pipeline", "--config", str(BUNDLED / "config.json"), "--backend", "remote", "--out", str(tmp_path)])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_pipeline_requires_config(self, capsys):
        assert main(["pipeline"]) == 1

    def test_step_by_step(self, tmp_path, capsys):
        assert main(["gen", "--out", str(tmp_path / "gen"), "--n", "60", "--n-dev", "10", "--n-test", "20"]) == 0
        capsys.readouterr()
        gen = tmp_path / "gen"

        assert main(["parse", str(gen / "train.tsv")]) == 0
        assert json.loads(capsys.readouterr().out)["pairs"] == 60
        assert main(["parse", str(gen / "test.m2"), "--m2"]) == 0
        capsys.readouterr()

        scores = tmp_path / "scores.jsonl"
        assert main(["score", "--corpus", str(gen / "train.tsv"), "--labels", str(gen / "labels.jsonl"),
                     "--backend", "oracle", "--out", str(scores)]) == 0
        assert scores.read_text().count("\n") == 36
        assert json.loads(capsys.readouterr().out)["scored"] == 36

        assert main(["bucket", str(scores)]) == 0
        tiers = json.loads(capsys.readouterr().out)
        assert sum(tiers[t] for t in ("easy", "medium", "hard")) == 36

        plan_path = tmp_path / "plan.json"
        assert main(["plan", "--corpus", str(gen / "train.tsv"), "--scores", str(scores),
                     "--strategy", "easy", "--out", str(plan_path)]) == 0
        assert [s["name"] for s in json.loads(plan_path.read_text())["stages"]] == ["E", "EM", "EMH"]

        ckpts = tmp_path / "ckpt"
        assert main(["train", "--corpus", str(gen / "train.tsv"), "--plan", str(plan_path),
                     "--dev", str(gen / "dev.m2"), "--out", str(ckpts)]) == 0
        final = sorted(ckpts.glob("stage*.json"))[-1]
        capsys.readouterr()

        assert main(["eval", "--gold", str(gen / "test.m2"), "--model", str(final)]) == 0
        assert "F0.5" in capsys.readouterr().out

    def test_bad_plan_file_exits_one(self, tmp_path):
        bad = tmp_path / "plan.json"
        bad.write_text("{not json")
        assert main(["train", "--corpus", str(BUNDLED / "train.tsv"), "--plan", str(bad), "--out", str(tmp_path / "o")]) == 1
