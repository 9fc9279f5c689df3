import csv
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from elastograv import artifacts
from elastograv.cli import main, spread
from elastograv.config import load_config

from conftest import DEFAULT_INI

BASE = DEFAULT_INI.read_text()
M_KEYS = ("M11", "M22", "M33", "M12", "M13", "M23")


def _edit(text, section, key, value):
    out, cur, done = [], None, False
    for line in text.splitlines():
        s = line.strip()
        if s.startswith("["):
            if cur == section and not done:
                out.insert(len(out) - (out[-1] == ""), f"{key} = {value}")
                done = True
            cur = s.strip("[]")
        elif cur == section and s.split("=")[0].strip() == key:
            line, done = f"{key} = {value}", True
        out.append(line)
    if not done:
        out.append(f"{key} = {value}")
    return "\n".join(out) + "\n"


def _small(tmp_path, edits=None, name="small.ini"):
    text = _edit(BASE, "domain", "n", "48")
    text = _edit(text, "observation", "n_points", "64")
    for (sec, key), val in (edits or {}).items():
        text = _edit(text, sec, key, val)
    p = tmp_path / name
    p.write_text(text)
    return p


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(l for l in fh if not l.startswith("#")))


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--help"])
    assert e.value.code == 0
    out = capsys.readouterr().out
    for name in ("simulate", "invert", "sweep", "verify"):
        assert name in out


def test_simulate_and_invert_trace(tmp_path):
    cfg = _small(tmp_path)
    out = tmp_path / "out"
    assert main(["simulate", str(cfg), "-o", str(out)]) == 0
    for f in ("diagnostics.csv", "trace.csv", "trace.ini", "snapshot_t1.egv", "snapshot_t0.egv",
              "simulate_summary.txt"):
        assert (out / f).exists(), f
    assert len(_rows(out / "trace.csv")) == len(load_config(cfg).times) * 64
    assert all(r["ok"] == "true" for r in _rows(out / "diagnostics.csv"))

    inv = tmp_path / "inv"
    assert main(["invert", str(cfg), str(out / "trace.csv"), "-o", str(inv)]) == 0
    res = _rows(inv / "result.csv")[0]
    M = np.array([float(res[k]) for k in M_KEYS])
    assert np.linalg.norm(M - [0.8, -0.2, -0.6, 0.6, -0.3, 0.5]) < 0.1
    assert len(_rows(inv / "functionals.csv")) == 12
    assert (inv / "multipole.csv").exists()
    ET.parse(inv / "moment.svg")
    assert "error |M_hat - M|/|M|" in (inv / "invert_summary.txt").read_text()

    snap = tmp_path / "snap"
    assert main(["invert", str(cfg), str(out / "snapshot_t1.egv"), "-o", str(snap)]) == 0
    assert not (snap / "multipole.csv").exists()


def test_simulate_is_byte_identical(tmp_path):
    cfg = _small(tmp_path)
    for d in ("a", "b"):
        assert main(["simulate", str(cfg), "-o", str(tmp_path / d)]) == 0
    for f in ("diagnostics.csv", "trace.csv", "snapshot_t1.egv", "snapshot_t0.egv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_zero_moment_gives_zero_trace_and_no_source(tmp_path):
    cfg = _small(tmp_path, {("source", k): "0.0" for k in M_KEYS})
    out = tmp_path / "zero"
    assert main(["simulate", str(cfg), "-o", str(out)]) == 0
    rows = _rows(out / "trace.csv")
    assert rows and all(float(r[k]) == 0.0 for r in rows for k in ("gSx", "gSy", "gSz"))
    assert main(["invert", str(cfg), str(out / "trace.csv"), "-o", str(out)]) == 0
    assert "no source detected" in (out / "invert_summary.txt").read_text()


def test_invert_without_truth_omits_errors(tmp_path):
    cfg = _small(tmp_path)
    out = tmp_path / "out"
    assert main(["simulate", str(cfg), "-o", str(out)]) == 0
    text = "\n".join(l for l in cfg.read_text().splitlines() if l.split("=")[0].strip() not in M_KEYS + ("P",))
    bare = tmp_path / "bare.ini"
    bare.write_text(text + "\n")
    assert main(["invert", str(bare), str(out / "trace.csv"), "-o", str(tmp_path / "inv")]) == 0
    summary = (tmp_path / "inv" / "invert_summary.txt").read_text()
    assert "M_hat" in summary and "error" not in summary
    assert not (tmp_path / "inv" / "moment.svg").exists()
    # simulate needs a true source
    assert main(["simulate", str(bare), "-o", str(tmp_path / "x")]) == 2


def test_invert_reports_line_number_on_bad_trace(tmp_path, capsys):
    cfg = _small(tmp_path)
    bad = tmp_path / "bad.csv"
    bad.write_text(",".join(artifacts.TRACE) + "\n0.0,1.5,0,0,0,0\n")
    assert main(["invert", str(cfg), str(bad), "-o", str(tmp_path / "o")]) == 2
    assert "bad.csv:2" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    cfg = _small(tmp_path, {("observation", "t0_fraction"): "1.2"})
    assert main(["simulate", str(cfg), "-o", str(tmp_path / "o")]) == 2
    assert "t0 >= tau0" in capsys.readouterr().err


def test_sweep_single_delta(tmp_path):
    cfg = _small(tmp_path, {("sweep", "deltas"): "0.01"})
    out = tmp_path / "sw"
    assert main(["sweep", str(cfg), "-o", str(out)]) == 0
    for kind in ("M", "P"):
        rows = _rows(out / f"sweep_{kind}.csv")
        assert len(rows) == 1
    ET.parse(out / "sweep.svg")
    text = (out / "sweep_summary.txt").read_text()
    c = max(float(_rows(out / f"sweep_{k}.csv")[0]["ratio_truth"]) for k in ("M", "P"))
    assert f"max ratio_truth over all rows) = {c:.6g}" in text


def test_spread():
    rows = [{"ratio_truth": 2.0, "flagged": False}, {"ratio_truth": 4.0, "flagged": False},
            {"ratio_truth": float("nan"), "flagged": True}]
    assert spread(rows) == 2.0
    assert spread([{"ratio_truth": float("nan"), "flagged": True}]) == float("inf")


def test_verify_coarse_lemma_rows_and_schema(tmp_path):
    cfg = DEFAULT_INI.parent / "coarse.ini"
    out = tmp_path / "v"
    code = main(["verify", str(cfg), "-o", str(out)])
    with open(out / "verify.csv") as fh:
        header = fh.readline().strip().split(",")
    assert header == list(artifacts.VERIFY)
    rows = _rows(out / "verify.csv")
    lemma = [r for r in rows if r["name"].startswith("q_moment_")]
    assert len(lemma) == 19 and all(r["pass"] == "true" for r in lemma)
    assert all(r["resolution"] for r in rows)
    assert code == (0 if all(r["pass"] == "true" for r in rows) else 1)


def test_verify_default_all_rows_pass(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", str(DEFAULT_INI), "-o", str(out)]) == 0
    rows = _rows(out / "verify.csv")
    assert len(rows) > 60 and all(r["pass"] == "true" for r in rows)
    assert (out / "verify_summary.txt").read_text().startswith(f"{len(rows)}/{len(rows)}")
