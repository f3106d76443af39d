from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from rdit.cli import main
from rdit.errors import CheckFailure, ConfigError, EmptyCorpusError
from rdit.strikes import SyntheticConfig, generate_synthetic_corpus, midpoints, write_strike_csv


def corpus_file(directory: Path, name: str, **kw) -> Path:
    cfg = SyntheticConfig(n_months=80, cutoff_offset=30, seed=11, start="2009-01", **kw)
    path = directory / name
    write_strike_csv(generate_synthetic_corpus(cfg), path)
    return path


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("data")


@pytest.fixture(scope="module")
def step_csv(data_dir):
    return corpus_file(data_dir, "step.csv", pre_mean=10.0, post_mean=2.0, noise_sd=1.0)


@pytest.fixture(scope="module")
def quiet_step_csv(data_dir):
    return corpus_file(data_dir, "quiet.csv", pre_mean=10.0, post_mean=2.0, noise_sd=0.1)


@pytest.fixture(scope="module")
def null_csv(data_dir):
    return corpus_file(data_dir, "null.csv", pre_mean=6.0, post_mean=6.0, noise_sd=0.0)


def tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def load(path: Path):
    return json.loads(path.read_text())


class TestRuns:
    def test_all_is_byte_identical_across_runs(self, step_csv, tmp_path, capsys):
        argv = ["all", "--data", str(step_csv), "--iterations", "200"]
        codes = [main(argv + ["--out", str(tmp_path / d)]) for d in ("a", "b")]
        a, b = tree(tmp_path / "a"), tree(tmp_path / "b")
        assert codes[0] == codes[1]
        assert a == b
        assert {"tables/summary.csv", "tables/estimates.csv", "tables/simulation.json", "verdicts/bundle.json"} <= set(a)
        assert any(k.startswith("plots/") and k.endswith(".svg") for k in a)
        # rerunning into the same directory leaves it unchanged
        main(argv + ["--out", str(tmp_path / "a")])
        assert tree(tmp_path / "a") == a
        printed = capsys.readouterr().out.split()
        assert str(tmp_path / "a" / "tables" / "summary.csv") in printed

    def test_manual_bandwidth_columns(self, step_csv, tmp_path):
        assert main(["estimate", "--data", str(step_csv), "--bandwidth", "manual:48", "--out", str(tmp_path)]) == 0
        with open(tmp_path / "tables" / "estimates.csv", newline="") as fh:
            header = next(csv.reader(fh))
        assert header[1:] == [
            "civilian_casualties [manual:48]",
            "strike_precision [manual:48]",
            "civ_per_strike [manual:48]",
        ]
        cols = load(tmp_path / "tables" / "estimates.json")["columns"]
        assert all(c["estimate"]["bandwidth"] == 48.0 for c in cols)

    def test_summary_counts_match_corpus(self, step_csv, tmp_path):
        from rdit.strikes import parse_strike_csv

        assert main(["summarize", "--data", str(step_csv), "--out", str(tmp_path)]) == 0
        recs = parse_strike_csv(step_csv)
        pre = sum(midpoints(r).civilian for r in recs if r.month < 2011 * 12 + 6)
        rows = load(tmp_path / "tables" / "summary.json")["cutoffs"][0]["rows"]
        civ = next(r for r in rows if (r["section"], r["stat"]) == ("Civilian Casualties", "Count"))
        assert civ["pre"] == pytest.approx(pre, rel=1e-12)

    def test_validate_recovers_step(self, step_csv, tmp_path):
        main(["validate", "--data", str(step_csv), "--out", str(tmp_path)])
        checks = {c["check"]: c["verdict"] for c in load(tmp_path / "verdicts" / "bundle.json")["checks"]}
        assert checks["structural_break"] == "pass"
        assert checks["rolling_cutoff"] == "pass"
        assert checks["placebo_strike_count"] == "pass"

    def test_validate_passes_on_quiet_step(self, quiet_step_csv, tmp_path):
        assert main(["validate", "--data", str(quiet_step_csv), "--out", str(tmp_path)]) == 0
        assert load(tmp_path / "verdicts" / "bundle.json")["overall"] == "pass"

    def test_null_fixture_has_no_significant_rolling_cutoffs(self, null_csv, tmp_path):
        code = main(["validate", "--data", str(null_csv), "--out", str(tmp_path)])
        assert code == CheckFailure.exit_code
        entries = load(tmp_path / "verdicts" / "rolling_cutoff.json")["statistics"]["entries"]
        assert entries
        assert not any(e["significant_at_05"] for e in entries)
        assert load(tmp_path / "verdicts" / "structural_break.json")["verdict"] == "fail"

    def test_simulate_seed_and_vsl(self, step_csv, tmp_path):
        argv = ["simulate", "--data", str(step_csv), "--iterations", "50", "--seed", "3", "--vsl-low", "1", "--vsl-high", "2"]
        assert main(argv + ["--out", str(tmp_path)]) == 0
        sim = load(tmp_path / "tables" / "simulation.json")
        assert (sim["iterations"], sim["seed"]) == (50, 3)
        assert sim["vsl_high_total_usd"] == pytest.approx(2 * sim["averted_total"])
        assert sum(p["projected"] for p in sim["projection"]) == pytest.approx(sum(s["matched_mean"] for s in sim["strikes"]))


class TestConfiguration:
    def test_flags_override_config_file(self, step_csv, tmp_path):
        conf = tmp_path / "run.toml"
        conf.write_text(f'data = "{step_csv}"\niterations = 10\nseed = 1\n')
        assert main(["simulate", "--config", str(conf), "--iterations", "20", "--out", str(tmp_path / "o")]) == 0
        sim = load(tmp_path / "o" / "tables" / "simulation.json")
        assert (sim["iterations"], sim["seed"]) == (20, 1)

    def test_data_from_environment(self, step_csv, tmp_path, monkeypatch):
        monkeypatch.setenv("RDIT_DATA", str(step_csv))
        assert main(["summarize", "--out", str(tmp_path)]) == 0

    def test_flag_beats_environment(self, step_csv, tmp_path, monkeypatch):
        monkeypatch.setenv("RDIT_DATA", str(tmp_path / "missing.csv"))
        assert main(["summarize", "--data", str(step_csv), "--out", str(tmp_path)]) == 0


class TestExitCodes:
    @pytest.fixture(autouse=True)
    def no_env(self, monkeypatch):
        monkeypatch.delenv("RDIT_DATA", raising=False)

    def test_missing_data(self, tmp_path, capsys):
        assert main(["summarize", "--out", str(tmp_path)]) == ConfigError.exit_code
        assert "rdit: error" in capsys.readouterr().err

    def test_nonexistent_file(self, tmp_path):
        assert main(["summarize", "--data", str(tmp_path / "nope.csv")]) == ConfigError.exit_code

    def test_empty_corpus(self, tmp_path):
        p = tmp_path / "empty.csv"
        write_strike_csv([], p)
        assert main(["summarize", "--data", str(p), "--out", str(tmp_path)]) == EmptyCorpusError.exit_code

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("id,when\n1,2012-01-01\n")
        assert main(["summarize", "--data", str(p), "--out", str(tmp_path)]) == 3

    @pytest.mark.parametrize("flag,value", [("--bandwidth", "manual:x"), ("--bandwidth", "ik"), ("--cutoff", "2011-13"), ("--iterations", "0")])
    def test_bad_settings(self, step_csv, tmp_path, flag, value):
        assert main(["summarize", "--data", str(step_csv), flag, value, "--out", str(tmp_path)]) == ConfigError.exit_code

    def test_bad_toml(self, step_csv, tmp_path):
        conf = tmp_path / "bad.toml"
        conf.write_text("iterations = = 3\n")
        assert main(["summarize", "--config", str(conf), "--data", str(step_csv)]) == ConfigError.exit_code

    def test_unknown_config_key(self, step_csv, tmp_path):
        conf = tmp_path / "odd.toml"
        conf.write_text("bandwith = 'mserd'\n")
        assert main(["summarize", "--config", str(conf), "--data", str(step_csv)]) == ConfigError.exit_code
