from pathlib import Path

import pytest
from click.testing import CliRunner

from canskew.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


def invoke(runner, *args, cwd=None):
    return runner.invoke(main, list(args), catch_exceptions=False)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One end-to-end pipeline run shared by the read-only assertions."""
    out = tmp_path_factory.mktemp("cli")
    runner = CliRunner()
    for scenario in ("demo-fingerprint", "demo-normal", "demo-dos"):
        result = runner.invoke(
            main, ["simulate", "--scenario", scenario, "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
    result = runner.invoke(
        main,
        [
            "fingerprint",
            "--trace", str(out / "demo-fingerprint.trace"),
            "--scenario", "demo-fingerprint",
            "--out", str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    for trace in ("demo-normal", "demo-dos"):
        result = runner.invoke(
            main,
            [
                "detect",
                "--trace", str(out / f"{trace}.trace"),
                "--db", str(out / "demo-fingerprint.db"),
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
    result = runner.invoke(
        main,
        [
            "report",
            str(out / "demo-normal.series.csv"),
            str(out / "demo-dos.series.csv"),
            "--out", str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    return out


class TestPipeline:
    def test_simulate_writes_trace(self, workdir):
        text = (workdir / "demo-normal.trace").read_text()
        assert text.startswith("# canskew trace v1\n")
        assert len(text.splitlines()) > 10_000

    def test_fingerprint_writes_db_and_table(self, workdir):
        db = (workdir / "demo-fingerprint.db").read_text()
        assert db.startswith("# canskew fingerprint db v1\n")
        assert "ecu A " in db and "ecu X " in db

    def test_detect_attack_free_has_no_events(self, workdir):
        assert (workdir / "demo-normal.events").read_text() == ""
        assert "events: 0" in (workdir / "demo-normal.summary.txt").read_text()

    def test_detect_dos_reports_events(self, workdir):
        events = (workdir / "demo-dos.events").read_text()
        assert "class=DoS" in events

    def test_report_consolidates_series(self, workdir):
        manifest = (workdir / "manifest.txt").read_text()
        assert manifest.startswith("canskew report manifest\n")
        assert "demo-normal:" in manifest and "demo-dos:" in manifest
        assert (workdir / "fig_demo-normal.csv").read_text() == (
            workdir / "demo-normal.series.csv"
        ).read_text()

    def test_reruns_are_byte_identical(self, workdir, runner, tmp_path):
        result = invoke(
            runner, "simulate", "--scenario", "demo-normal", "--out", str(tmp_path)
        )
        assert result.exit_code == 0
        assert (tmp_path / "demo-normal.trace").read_bytes() == (
            workdir / "demo-normal.trace"
        ).read_bytes()
        result = invoke(
            runner,
            "detect",
            "--trace", str(workdir / "demo-dos.trace"),
            "--db", str(workdir / "demo-fingerprint.db"),
            "--out", str(tmp_path),
        )
        assert result.exit_code == 0
        for name in ("demo-dos.events", "demo-dos.series.csv", "demo-dos.summary.txt"):
            assert (tmp_path / name).read_bytes() == (workdir / name).read_bytes()

    def test_seed_override_changes_trace(self, workdir, runner, tmp_path):
        result = invoke(
            runner,
            "simulate",
            "--scenario", "demo-normal",
            "--seed", "999",
            "--out", str(tmp_path),
        )
        assert result.exit_code == 0
        assert (tmp_path / "demo-normal.trace").read_bytes() != (
            workdir / "demo-normal.trace"
        ).read_bytes()


class TestScenarios:
    def test_listing(self, runner):
        result = invoke(runner, "scenarios")
        assert result.exit_code == 0
        names = result.output.split()
        assert "demo-normal" in names and "demo-impersonation" in names

    def test_show(self, runner):
        result = invoke(runner, "scenarios", "--show", "demo-dos")
        assert result.exit_code == 0
        assert "kind: dos" in result.output


class TestExitCodes:
    def test_missing_trace_is_3(self, runner, tmp_path):
        result = runner.invoke(
            main,
            [
                "fingerprint",
                "--trace", str(tmp_path / "nope.trace"),
                "--out", str(tmp_path),
            ],
        )
        assert result.exit_code == 3
        assert "not found" in result.output

    def test_unknown_scenario_is_3(self, runner, tmp_path):
        result = runner.invoke(
            main, ["simulate", "--scenario", "no-such", "--out", str(tmp_path)]
        )
        assert result.exit_code == 3

    def test_malformed_scenario_is_2(self, runner, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("ecus: []\nduration_ms: 1000.0\n")
        result = runner.invoke(
            main, ["simulate", "--scenario", str(bad), "--out", str(tmp_path)]
        )
        assert result.exit_code == 2

    def test_malformed_trace_is_2(self, runner, tmp_path):
        bad = tmp_path / "bad.trace"
        bad.write_text("not a trace\n")
        result = runner.invoke(
            main, ["fingerprint", "--trace", str(bad), "--out", str(tmp_path)]
        )
        assert result.exit_code == 2

    def test_detect_without_db_is_3(self, runner, workdir, tmp_path):
        result = runner.invoke(
            main,
            [
                "detect",
                "--trace", str(workdir / "demo-normal.trace"),
                "--db", str(tmp_path / "nope.db"),
                "--out", str(tmp_path),
            ],
        )
        assert result.exit_code == 3
        assert "run `canskew fingerprint` first" in result.output

    def test_report_malformed_csv_is_2(self, runner, tmp_path):
        bad = tmp_path / "bad.series.csv"
        bad.write_text("x,y\n1,2\n")
        result = runner.invoke(main, ["report", str(bad), "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_bad_analysis_knobs_are_2(self, runner, workdir, tmp_path):
        result = runner.invoke(
            main,
            [
                "detect",
                "--trace", str(workdir / "demo-normal.trace"),
                "--db", str(workdir / "demo-fingerprint.db"),
                "--kappa", "9", "--gamma", "5",
                "--out", str(tmp_path),
            ],
        )
        assert result.exit_code == 2
