import os
import sys

import pytest

from .. import __main__ as cli
from .. import trellis
from ..__main__ import main, parse_args, validate_args
from ..analysis import QuadratureError
from ..manifest import load_manifest, manifest_path
from ..preferences import load_prefs
from ..utils import read_csv


def run_cli(monkeypatch, *argv):
    monkeypatch.setattr(sys, "argv", ["sttcaf", *argv])
    main()


def trailer(path):
    with open(path) as f:
        return [line[2:] for line in f.read().splitlines() if line.startswith("# ")]


def test_analyze_writes_events(monkeypatch, temp_dir):
    """Test the analyze CSV header, rows and summary trailer."""
    out = os.path.join(temp_dir, "analyze.csv")
    run_cli(
        monkeypatch,
        "analyze",
        "--code",
        "qpsk4_m2_tarokh",
        "-N",
        "1",
        "--max-event-len",
        "3",
        "--es-n0-db",
        "0",
        "10",
        "--out",
        out,
        "--quiet",
    )
    rows = read_csv(out)
    assert rows[0] == [
        "event_id",
        "L",
        "count",
        "multiplicity",
        "lambda_1",
        "lambda_2",
        "rank",
        "craig@0dB",
        "craig@10dB",
        "chernoff@0dB",
        "chernoff@10dB",
    ]
    assert len(rows) > 1
    assert min(int(r[1]) for r in rows[1:]) == 2
    lines = trailer(out)
    assert "criterion=log_eig" in lines
    assert any(line.startswith("union_bound@10dB=") for line in lines)
    assert os.path.exists(manifest_path(out))


def test_analyze_determinant_criterion(monkeypatch, temp_dir):
    """Test the determinant criterion when N >= M."""
    out = os.path.join(temp_dir, "analyze.csv")
    run_cli(monkeypatch, "analyze", "-N", "2", "--max-event-len", "3", "--out", out, "--quiet")
    lines = trailer(out)
    assert "criterion=determinant" in lines
    assert "min_rank=2 diversity=2" in lines


def test_analyze_four_antennas_uses_log_eig(monkeypatch, temp_dir):
    """Test the log-eigenvalue criterion when N < M."""
    out = os.path.join(temp_dir, "analyze.csv")
    run_cli(
        monkeypatch,
        "analyze",
        "--code",
        "qpsk4_m4_paper",
        "-N",
        "2",
        "--max-event-len",
        "3",
        "--es-n0-db",
        "10",
        "--out",
        out,
        "--quiet",
    )
    assert "criterion=log_eig" in trailer(out)
    assert read_csv(out)[0][4:8] == ["lambda_1", "lambda_2", "lambda_3", "lambda_4"]


def test_unknown_code_exits_with_usage_error(monkeypatch, temp_dir, capsys):
    """Test that an unknown code name is a usage error."""
    with pytest.raises(SystemExit) as exc_info:
        run_cli(monkeypatch, "analyze", "--code", "no-such-code", "--out", os.path.join(temp_dir, "a.csv"))
    assert exc_info.value.code == 2
    assert "Unknown code" in capsys.readouterr().err


def test_numerical_failure_exit_code(monkeypatch, temp_dir):
    """Test that a quadrature failure exits with the numerical code."""
    def fail(*args, **kwargs):
        raise QuadratureError("no rule converged")

    monkeypatch.setattr(cli, "score_code", fail)
    with pytest.raises(SystemExit) as exc_info:
        run_cli(
            monkeypatch,
            "analyze",
            "--max-event-len",
            "2",
            "--out",
            os.path.join(temp_dir, "a.csv"),
            "--quiet",
        )
    assert exc_info.value.code == 3


@pytest.mark.parametrize(
    "invalid_opts",
    [
        ["analyze", "-N", "0"],
        ["analyze", "--max-event-len", "1"],
        ["analyze", "--frame-len", "0"],
        ["analyze", "--seed", "-3"],
        ["search", "--budget", "0"],
        ["search", "--top-k", "0"],
        ["search", "--mode", "listed"],
        ["simulate", "--max-frames", "0"],
        ["simulate", "--frame-len", "5"],
        ["simulate", "--noise-model", "colored"],
        ["bogus"],
    ],
)
def test_invalid_options(monkeypatch, temp_dir, invalid_opts):
    """Test invalid option combinations."""
    with pytest.raises(SystemExit) as exc_info:
        run_cli(monkeypatch, *invalid_opts, "--out", os.path.join(temp_dir, "x.csv"))
    assert exc_info.value.code == 2


def test_search_listed(monkeypatch, temp_dir):
    """Test a listed search over the two built-in M=2 codes."""
    out = os.path.join(temp_dir, "search.csv")
    run_cli(
        monkeypatch,
        "search",
        "--mode",
        "listed",
        "--candidates",
        "qpsk4_m2_tarokh",
        "qpsk4_m2_paper",
        "-N",
        "1",
        "--max-event-len",
        "4",
        "--out",
        out,
        "--quiet",
    )
    rows = read_csv(out)
    assert rows[0][:3] == ["rank", "name_or_hash", "min_rank"]
    assert rows[1][1] == "qpsk4_m2_paper"
    catalogs = os.listdir(os.path.join(temp_dir, "search_codes"))
    assert any(name.startswith("001_qpsk4_m2_paper") for name in catalogs)


def test_search_is_reproducible(monkeypatch, temp_dir):
    """Test that the same seed gives byte-identical rankings."""
    outputs = []
    for name in ("a.csv", "b.csv"):
        out = os.path.join(temp_dir, name)
        run_cli(
            monkeypatch,
            "search",
            "--budget",
            "20",
            "--max-event-len",
            "3",
            "-N",
            "2",
            "--seed",
            "5",
            "--top-k",
            "3",
            "--out",
            out,
            "--quiet",
        )
        with open(out, "rb") as f:
            outputs.append(f.read())
    assert outputs[0] == outputs[1]


def test_simulate_noiseless(monkeypatch, temp_dir):
    """Test a noiseless simulation point."""
    out = os.path.join(temp_dir, "sim.csv")
    run_cli(
        monkeypatch,
        "simulate",
        "--code",
        "qpsk4_m2_paper",
        "--noiseless",
        "--frame-len",
        "10",
        "--max-frames",
        "64",
        "--out",
        out,
        "--quiet",
    )
    rows = read_csv(out)
    assert rows[0] == ["snr_db", "frames", "bit_errors", "ber", "ci95_ber", "frame_errors", "fer"]
    assert rows[1][:4] == ["inf", "64", "0", "0"]
    assert trailer(out) == ["slope=unavailable reason=noiseless link"]


def test_replay_reproduces_output(monkeypatch, temp_dir):
    """Test replaying a simulation from its manifest."""
    out = os.path.join(temp_dir, "sim.csv")
    run_cli(
        monkeypatch,
        "simulate",
        "--noiseless",
        "--frame-len",
        "12",
        "--max-frames",
        "40",
        "--seed",
        "9",
        "--out",
        out,
        "--quiet",
    )
    manifest = load_manifest(manifest_path(out))
    assert manifest.command == "simulate"
    assert manifest.seed == 9
    assert manifest.params["frame_len"] == 12

    again = os.path.join(temp_dir, "again.csv")
    run_cli(monkeypatch, "replay", manifest_path(out), "--out", again, "--quiet")
    with open(out, "rb") as a, open(again, "rb") as b:
        assert a.read() == b.read()


def test_replay_rejects_bad_manifest(monkeypatch, temp_dir):
    """Test replay of an incomplete manifest."""
    path = os.path.join(temp_dir, "broken.manifest.json")
    with open(path, "w") as f:
        f.write('{"command": "simulate"}')
    with pytest.raises(SystemExit) as exc_info:
        run_cli(monkeypatch, "replay", path)
    assert exc_info.value.code == 2


def test_list_codes(monkeypatch, capsys):
    """Test listing the built-in codes."""
    run_cli(monkeypatch, "list-codes")
    printed = capsys.readouterr().out
    for name in ("qpsk4_m2_paper", "qpsk4_m2_tarokh", "qpsk4_m4_paper", "qpsk4_m4_tarokh"):
        assert name in printed
    assert "00 , 20 , 02 , 22" in printed


def test_defaults_set_and_show(monkeypatch, capsys):
    """Test storing defaults and their use by later runs."""
    run_cli(monkeypatch, "defaults", "--set", "seed=7", "--set", "max_event_len=5")
    printed = capsys.readouterr().out
    assert "seed = 7" in printed
    assert load_prefs()["max_event_len"] == 5

    args = parse_args(["analyze"])
    validate_args(args)
    assert args.seed == 7
    assert args.max_event_len == 5


def test_defaults_reject_unknown_key(monkeypatch):
    """Test setting an unknown default."""
    with pytest.raises(SystemExit) as exc_info:
        run_cli(monkeypatch, "defaults", "--set", "colour=blue")
    assert exc_info.value.code == 2


def test_default_arguments():
    """Test default argument values."""
    args = parse_args(["analyze"])
    validate_args(args)
    assert args.code == "qpsk4_m2_tarokh"
    assert args.N == 1
    assert args.seed == 0
    assert args.max_event_len == 8
    assert args.dedup == "gram"
    assert args.out == os.path.join(".", "analyze_qpsk4_m2_tarokh_N1.csv")

    wide = parse_args(["analyze", "--code", "qpsk4_m4_paper"])
    validate_args(wide)
    assert wide.max_event_len == 4

    search = parse_args(["search"])
    validate_args(search)
    assert search.mode == "random"
    assert search.max_event_len == 6


def test_default_output_name_for_catalog_file(codes, temp_dir):
    """Test the default output name for a catalog file code."""
    from ..trellis import write_catalog

    path = write_catalog(codes["qpsk4_m4_paper"], os.path.join(temp_dir, "mine.txt"))
    args = parse_args(["simulate", "--code", path, "-N", "2"])
    validate_args(args)
    assert os.path.basename(args.out) == "simulate_mine_N2.csv"


def test_analyze_four_antenna_code_with_defaults(monkeypatch, temp_dir):
    """Test analyze on the designed M=4 code with default flags."""
    out = os.path.join(temp_dir, "analyze.csv")
    run_cli(monkeypatch, "analyze", "--code", "qpsk4_m4_paper", "-N", "2", "--out", out, "--quiet")
    lines = trailer(out)
    assert lines[0] == "code=qpsk4_m4_paper M=4 N=2 max_event_len=4"
    assert "criterion=log_eig" in lines
    assert len(read_csv(out)) > 1


def test_enumeration_limit_exit_code(monkeypatch, temp_dir, capsys):
    """Test that outgrowing the path-pair budget exits with the numerical code."""
    real = trellis.enumerate_error_events

    def small_budget(*args, **kwargs):
        return real(*args, max_paths=1000, **kwargs)

    monkeypatch.setattr(cli, "enumerate_error_events", small_budget)
    with pytest.raises(SystemExit) as exc_info:
        run_cli(
            monkeypatch,
            "analyze",
            "--dedup",
            "none",
            "--max-event-len",
            "8",
            "--out",
            os.path.join(temp_dir, "a.csv"),
            "--quiet",
        )
    assert exc_info.value.code == 3
    assert "live path pairs" in capsys.readouterr().err


def test_search_code_flag_selects_listed_mode(monkeypatch, temp_dir):
    """Test --code on search scoring the named codes."""
    out = os.path.join(temp_dir, "search.csv")
    run_cli(
        monkeypatch,
        "search",
        "--code",
        "qpsk4_m2_tarokh",
        "qpsk4_m2_paper",
        "-N",
        "1",
        "--max-event-len",
        "4",
        "--out",
        out,
        "--quiet",
    )
    assert [row[1] for row in read_csv(out)[1:]] == ["qpsk4_m2_paper", "qpsk4_m2_tarokh"]
    assert load_manifest(manifest_path(out)).params["mode"] == "listed"


def test_defaults_auto_event_length(monkeypatch, capsys):
    """Test resetting the stored event length to the per-code default."""
    run_cli(monkeypatch, "defaults", "--set", "max_event_len=3")
    run_cli(monkeypatch, "defaults", "--set", "max_event_len=auto")
    assert "max_event_len = auto" in capsys.readouterr().out
    args = parse_args(["analyze", "--code", "qpsk4_m4_tarokh"])
    validate_args(args)
    assert args.max_event_len == 4
