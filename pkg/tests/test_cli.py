import csv
import subprocess
import sys

import pytest

from ldp_trilemma.cli import EXIT_CONFIG, EXIT_INVARIANT, main, parse_grid
from ldp_trilemma.harness import CSV_COLUMNS, ConfigError

SMALL = ["--d", "16", "--n", "500", "--reps", "2"]


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_writes_csv_and_summary(tmp_path, capsys):
    out = tmp_path / "sub" / "r.csv"
    assert main(["run", "--task", "frequency", "--scheme", "rhr", *SMALL, "--out", str(out)]) == 0
    rows = read_rows(out)
    assert tuple(rows[0]) == tuple(CSV_COLUMNS)
    assert [r["rep"] for r in rows] == ["0", "1", "summary"]
    text = capsys.readouterr().out
    assert "rhr" in text and "l1=" in text


def test_run_from_config_file(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("task=mean\nscheme=sqkr\nd=16\nn=400\neps=2\nb=2\n")
    out = tmp_path / "r.csv"
    assert main(["run", str(cfg), "--out", str(out), "--wire"]) == 0
    rows = read_rows(out)
    assert rows[0]["scheme"] == "sqkr" and rows[0]["eps"] == "2.0"


def test_byte_identical_reruns(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["run", "--task", "distribution", "--scheme", "ss", *SMALL]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_sweep(tmp_path):
    out = tmp_path / "s.csv"
    code = main(["sweep", "--task", "frequency", "--scheme", "rhr", *SMALL, "--reps", "1",
                 "--grid", "n=300,600", "--grid", "eps=1;b=1,2", "--out", str(out)])
    assert code == 0
    rows = read_rows(out)
    assert len(rows) == 2 * 1 * 2 * 2
    assert {(r["n"], r["b"]) for r in rows} == {("300", "1"), ("300", "2"), ("600", "1"), ("600", "2")}


def test_parse_grid():
    assert parse_grid(["d=16,64", "n=1e4;eps=0.5,1"]) == {"d": ["16", "64"], "n": ["1e4"], "eps": ["0.5", "1"]}
    for bad in (["d"], ["d="], ["zzz=1"], ["d=1", "d=2"]):
        with pytest.raises(ConfigError):
            parse_grid(bad)


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--task", "mean", "--scheme", "rhr"],
        ["run", "--eps", "-1"],
        ["run", "/nonexistent/config"],
        ["sweep", "--task", "mean"],
        ["sweep", "--grid", "bogus=1"],
        ["run", "--task", "distribution", "--scheme", "rhr_dist", "--n", "1"],
    ],
)
def test_config_errors_exit_2(argv, capsys):
    assert main(argv) == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_invariant_violation_exit_3(monkeypatch, capsys):
    from ldp_trilemma.harness import runner

    real = runner.expected_shared_bits
    monkeypatch.setattr(runner, "expected_shared_bits", lambda cfg, est: real(cfg, est) + 1)
    assert main(["run", "--task", "frequency", "--scheme", "rhr", *SMALL]) == EXIT_INVARIANT
    assert "invariant violation" in capsys.readouterr().err


def test_console_script_entry(tmp_path):
    out = tmp_path / "r.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "ldp_trilemma.cli", "run", "--task", "heavy_hitter", "--scheme", "heavy_hitter",
         *SMALL, "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert len(read_rows(out)) == 3
