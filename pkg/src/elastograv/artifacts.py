"""On-disk formats: EGV1 wavefield snapshots and the CSV schemas.

Every writer goes through :func:`atomic_write`, and floats are written with
``repr`` so identical runs give identical bytes.
"""
from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .core import DomainSpec, ObservationSpec, sym_to6
from .gravity import GravityTrace
from .solver import WaveState

MAGIC = b"EGV1"
_HEADER = struct.Struct("<4sqddd")


class FormatError(ValueError):
    """Malformed input file; the message names the file and line."""


def atomic_write(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = data.encode() if isinstance(data, str) else bytes(data)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header, rows, comments=()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path, header, rows, comments=()) -> Path:
    return atomic_write(path, csv_text(header, rows, comments))


def read_csv(path, expected_header) -> list[tuple[int, dict]]:
    """Rows as ``(line_number, {column: text})``; comment lines start with ``#``."""
    path = Path(path)
    out = []
    header = None
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            cells = next(csv.reader([line]))
            if header is None:
                header = cells
                if header != list(expected_header):
                    raise FormatError(f"{path}:{lineno}: expected header {','.join(expected_header)}, "
                                      f"got {','.join(header)}")
                continue
            if len(cells) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(cells)}")
            out.append((lineno, dict(zip(header, cells))))
    if header is None:
        raise FormatError(f"{path}:1: empty file, expected header {','.join(expected_header)}")
    return out


def _float(path, lineno, row, key) -> float:
    try:
        return float(row[key])
    except ValueError:
        raise FormatError(f"{path}:{lineno}: column {key!r} = {row[key]!r} is not a number") from None


# ---- snapshots ---------------------------------------------------------------

def snapshot_bytes(state: WaveState) -> bytes:
    dom = state.domain
    head = _HEADER.pack(MAGIC, dom.n, dom.L, dom.R, state.t)
    parts = [head]
    for arr in (state.full_u(), state.full_v()):
        for c in range(3):
            # x fastest
            parts.append(np.asarray(arr[c], dtype="<f8").tobytes(order="F"))
    return b"".join(parts)


def write_snapshot(path, state: WaveState) -> Path:
    return atomic_write(path, snapshot_bytes(state))


def read_snapshot(path) -> WaveState:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, n, L, R, t = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    try:
        dom = DomainSpec(R, L, int(n))
    except ValueError as exc:
        raise FormatError(f"{path}: invalid header ({exc})") from None
    m = (int(n) + 1) ** 3
    need = _HEADER.size + 6 * m * 8
    if len(raw) != need:
        raise FormatError(f"{path}: expected {need} bytes for n = {n}, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(6, m)
    shape = (int(n) + 1,) * 3
    fields = np.stack([data[k].reshape(shape, order="F") for k in range(6)])
    return WaveState(np.array(fields[:3]), np.array(fields[3:]), float(t), dom, (0, 0, 0))


# ---- CSV schemas ------------------------------------------------------------

DIAGNOSTICS = ("t", "max_u", "energy_lhs", "energy_rhs", "ok")
TRACE = ("t", "x", "y", "z", "gSx", "gSy", "gSz")
FUNCTIONALS = ("phi_id", "z", "G")
RESULT = ("M11", "M22", "M33", "M12", "M13", "M23", "P1", "P2", "P3", "sigma_min", "res_moment", "res_loc")
SWEEP = ("delta", "eps", "dM", "dP", "ratio_recon", "ratio_truth")
VERIFY = ("name", "value", "reference", "abs_err", "rel_err", "pass", "resolution")


def write_diagnostics(path, rows) -> Path:
    return write_csv(path, DIAGNOSTICS, [(r["t"], r["max_u"], r["lhs"], r["rhs"], r["ok"]) for r in rows])


def write_trace(path, tr: GravityTrace, config_echo: str | None = None) -> Path:
    obs = tr.observation
    rows = []
    for k, t in enumerate(obs.sample_times):
        for p, g in zip(obs.sample_points, tr.values[k]):
            rows.append((t, *p, *g))
    out = write_csv(path, TRACE, rows)
    if config_echo is not None:
        atomic_write(Path(path).with_suffix(".ini"), config_echo)
    return out


def read_trace(path, center, r0: float) -> GravityTrace:
    """Rebuild a trace; rows must be grouped by time with the same points at every time."""
    rows = read_csv(path, TRACE)
    if not rows:
        raise FormatError(f"{path}:2: trace has no data rows")
    times, blocks = [], []
    for lineno, r in rows:
        vals = [_float(path, lineno, r, k) for k in TRACE]
        if not times or vals[0] != times[-1]:
            if times and vals[0] < times[-1]:
                raise FormatError(f"{path}:{lineno}: times must be non-decreasing")
            times.append(vals[0])
            blocks.append([])
        blocks[-1].append((lineno, vals[1:4], vals[4:7]))
    pts = np.array([p for _, p, _ in blocks[0]])
    for b in blocks[1:]:
        if len(b) != len(pts) or not np.array_equal(np.array([p for _, p, _ in b]), pts):
            raise FormatError(f"{path}:{b[0][0]}: point set differs from the first time block")
    values = np.array([[g for _, _, g in b] for b in blocks])
    try:
        obs = ObservationSpec(center, r0, pts, times)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return GravityTrace(obs, values)


def write_functionals(path, z: dict, G: dict) -> Path:
    return write_csv(path, FUNCTIONALS, [(k, z[k], G[k]) for k in z])


def result_row(res) -> tuple:
    P = res.P_hat if res.P_hat is not None else (float("nan"),) * 3
    return (*sym_to6(res.M_hat), *P, res.sigma_min, res.res_moment, res.res_loc)


def write_result(path, res) -> Path:
    return write_csv(path, RESULT, [result_row(res)], comments=res.notes)


def write_sweep(path, rows) -> Path:
    return write_csv(path, SWEEP, [tuple(r[k] for k in SWEEP) for r in rows])


def write_verify(path, reports) -> Path:
    rows = [(r.name, r.value, r.reference, r.abs_err, r.rel_err, r.passed, r.meta.get("resolution", ""))
            for r in reports]
    return write_csv(path, VERIFY, rows)
