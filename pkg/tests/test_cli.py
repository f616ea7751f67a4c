"""End-to-end command line tests: subcommands, artifacts, exit codes."""

import json
import sys
from pathlib import Path

import pytest

from mortbench.cli import ADAPTERS_ENV, EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, main
from mortbench.engine import records_from_csv

FIXTURE = str(Path(__file__).parent / "fixtures" / "misbehave.py")


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "hmd")]) == EXIT_OK
    assert main(["ingest", "--hmd-dir", str(root / "hmd"), "--out", str(root / "corpus")]) == EXIT_OK
    registry = [
        {"name": "constant", "command": [sys.executable, "-m", "mortbench.adapters.constant"]}
    ]
    (root / "registry.json").write_text(json.dumps(registry))
    code = main(
        [
            "backtest",
            "--corpus",
            str(root / "corpus" / "corpus.csv"),
            "--methods",
            "LeeCarter,constant",
            "--adapters",
            str(root / "registry.json"),
            "--out",
            str(root / "run"),
        ]
    )
    assert code == EXIT_OK
    return root


def test_synth_writes_tables_and_income_map(workspace):
    names = sorted(p.name for p in (workspace / "hmd").iterdir())
    assert names == [
        "SYA.Mx_1x1.txt",
        "SYB.Mx_1x1.txt",
        "SYC.Mx_1x1.txt",
        "income_map.json",
    ]


def test_ingest_lists_spans(workspace, capsys):
    assert main(["ingest", "--hmd-dir", str(workspace / "hmd"), "--out", str(workspace / "corpus2")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "SYA 1950-2009 (60 years)" in out
    assert (workspace / "corpus2" / "corpus.csv").exists()
    assert (workspace / "corpus2" / "manifest.json").exists()


def test_ingest_empty_dir_exits_2(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    code = main(["ingest", "--hmd-dir", str(tmp_path / "empty"), "--out", str(tmp_path / "o")])
    assert code == EXIT_USAGE
    assert "empty corpus" in capsys.readouterr().err


def test_backtest_records_parse_and_cover_grid(workspace):
    text = (workspace / "run" / "records.csv").read_text()
    assert text.startswith("# manifest=")
    records = records_from_csv(text)
    assert {r.method for r in records} == {"LeeCarter", "constant"}
    assert {r.horizon for r in records} == {5, 10, 20}
    # 2 methods x 3 countries x 111 ages x 3 horizons
    assert len(records) == 2 * 3 * 111 * 3
    assert (workspace / "run" / "manifest.json").exists()


def test_unknown_method_exits_2_listing_names(workspace, capsys):
    code = main(
        [
            "backtest",
            "--corpus",
            str(workspace / "corpus" / "corpus.csv"),
            "--methods",
            "CHRONOSLarge",
            "--out",
            str(workspace / "x"),
        ]
    )
    assert code == EXIT_USAGE
    err = capsys.readouterr().err
    assert "CHRONOSLarge" in err and "LeeCarter" in err and "RandomForest" in err


def test_missing_corpus_path_exits_2(workspace, capsys):
    code = main(
        [
            "backtest",
            "--corpus",
            str(workspace / "nope.csv"),
            "--methods",
            "LeeCarter",
            "--out",
            str(workspace / "x"),
        ]
    )
    assert code == EXIT_USAGE
    assert "does not exist" in capsys.readouterr().err


def test_dying_adapter_exits_3_but_writes_records(workspace, tmp_path, capsys):
    registry = [
        {"name": "die", "command": [sys.executable, FIXTURE, "die"], "timeout": 5.0}
    ]
    path = tmp_path / "registry.json"
    path.write_text(json.dumps(registry))
    code = main(
        [
            "backtest",
            "--corpus",
            str(workspace / "corpus" / "corpus.csv"),
            "--methods",
            "LeeCarter,die",
            "--adapters",
            str(path),
            "--horizons",
            "5",
            "--out",
            str(tmp_path / "run"),
        ]
    )
    assert code == EXIT_PARTIAL
    assert "die" in capsys.readouterr().err
    records = records_from_csv((tmp_path / "run" / "records.csv").read_text())
    assert {r.method for r in records} == {"LeeCarter"}
    assert (tmp_path / "run" / "failures.csv").exists()


def test_adapter_registry_from_env(workspace, tmp_path, monkeypatch):
    monkeypatch.setenv(ADAPTERS_ENV, str(workspace / "registry.json"))
    code = main(
        [
            "backtest",
            "--corpus",
            str(workspace / "corpus" / "corpus.csv"),
            "--methods",
            "constant",
            "--horizons",
            "5",
            "--out",
            str(tmp_path / "run"),
        ]
    )
    assert code == EXIT_OK
    records = records_from_csv((tmp_path / "run" / "records.csv").read_text())
    assert {r.method for r in records} == {"constant"}


def test_future_mode_writes_future_records(workspace, tmp_path):
    code = main(
        [
            "backtest",
            "--corpus",
            str(workspace / "corpus" / "corpus.csv"),
            "--methods",
            "LeeCarter",
            "--horizons",
            "5",
            "--future",
            "--out",
            str(tmp_path / "fut"),
        ]
    )
    assert code == EXIT_OK
    records = records_from_csv((tmp_path / "fut" / "future_records.csv").read_text())
    assert all(r.actual is None for r in records)


def test_report_writes_tables_and_figures(workspace, tmp_path):
    code = main(
        [
            "report",
            "--records",
            str(workspace / "run" / "records.csv"),
            "--corpus",
            str(workspace / "corpus" / "corpus.csv"),
            "--income-map",
            str(workspace / "hmd" / "income_map.json"),
            "--by",
            "method,age,income,length",
            "--significance",
            "--plots",
            "boxplot,heatmap",
            "--deterministic",
            "--out",
            str(tmp_path / "report"),
        ]
    )
    assert code == EXIT_OK
    names = {p.name for p in (tmp_path / "report").iterdir()}
    assert {
        "manifest.json",
        "summary.csv",
        "grouped_age.csv",
        "grouped_income.csv",
        "grouped_length.csv",
        "significance.csv",
        "scores.csv",
        "boxplot_method.svg",
        "heatmap_age.svg",
    } <= names
    # report manifest mirrors the backtest manifest hash
    run_manifest = json.loads((workspace / "run" / "manifest.json").read_text())
    summary = (tmp_path / "report" / "summary.csv").read_text()
    assert summary.splitlines()[0] == f"# manifest={run_manifest['hash']}"


def test_report_reruns_byte_identical(workspace, tmp_path):
    args = [
        "report",
        "--records",
        str(workspace / "run" / "records.csv"),
        "--plots",
        "boxplot",
        "--deterministic",
    ]
    assert main([*args, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main([*args, "--out", str(tmp_path / "b")]) == EXIT_OK
    for path in sorted((tmp_path / "a").iterdir()):
        twin = tmp_path / "b" / path.name
        if path.name == "manifest.json":
            # created timestamps differ; the hash must not
            a = json.loads(path.read_text())
            b = json.loads(twin.read_text())
            assert a["hash"] == b["hash"]
            continue
        assert path.read_bytes() == twin.read_bytes(), path.name


def test_report_income_without_map_exits_2(workspace, tmp_path, capsys):
    code = main(
        [
            "report",
            "--records",
            str(workspace / "run" / "records.csv"),
            "--by",
            "income",
            "--out",
            str(tmp_path / "r"),
        ]
    )
    assert code == EXIT_USAGE
    assert "income map" in capsys.readouterr().err


def test_report_trajectories(workspace, tmp_path):
    code = main(
        [
            "report",
            "--records",
            str(workspace / "run" / "records.csv"),
            "--corpus",
            str(workspace / "corpus" / "corpus.csv"),
            "--plots",
            "trajectories",
            "--country",
            "SYA",
            "--ages",
            "25,50,75",
            "--deterministic",
            "--out",
            str(tmp_path / "r"),
        ]
    )
    assert code == EXIT_OK
    assert (tmp_path / "r" / "trajectory_SYA.svg").exists()
    data = (tmp_path / "r" / "trajectory_SYA.csv").read_text()
    assert "SYA,25,observed" in data and "SYA,75,validation" in data


def test_version_flag():
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
