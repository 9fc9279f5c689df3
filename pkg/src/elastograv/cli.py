"""Command-line entry point: ``elastograv {simulate,invert,sweep,verify} CONFIG``.

Numerics live in the config file; flags only pick the subcommand, config,
output directory, input file, resolution tier and thread count. The exit code
is 0 exactly when every run-level check passes.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import artifacts
from .config import ConfigError, RunConfig, config_text, load_config
from .core import SourceModel, sym_to6
from .gravity import surface_samples, trace
from .harmonics import basis_all, boundary_z, multipole_fit
from .inversion import (
    ReconstructionResult,
    default_perturbations,
    functional_closed_form,
    measured_constant,
    reconstruct,
    stability_sweep,
)
from .solver import boundary_band_ratio, cone_report, energy_report, simulate
from .svg import bar_chart, loglog
from .verify import (
    OracleReport,
    duhamel_check,
    functional_oracle,
    lemma_q_report,
    poisson_residual,
    random_bumps,
    z_growth_slope,
    z_volume_oracle,
)

log = logging.getLogger("elastograv")

BAND_TOL = 1e-10
SWEEP_SPREAD = 5.0


def _need_truth(cfg: RunConfig) -> SourceModel:
    if cfg.truth is None:
        raise ConfigError(["[source] must give M11..M23 and P for this command"])
    return cfg.truth


def _summary(path: Path, lines) -> None:
    artifacts.atomic_write(path, "\n".join(lines) + "\n")


# ---- simulate ---------------------------------------------------------------

def run_simulate(cfg: RunConfig, out: Path) -> bool:
    src = _need_truth(cfg)
    times = cfg.times
    traj = simulate(cfg.medium, cfg.domain, src, times, cfg.cfl)
    obs = cfg.observation()
    tr = trace(traj, obs, cfg.medium)
    energy = energy_report(traj, src, cfg.medium)
    band = boundary_band_ratio(traj, 2.0 * cfg.domain.h)

    artifacts.write_diagnostics(out / "diagnostics.csv", energy)
    artifacts.write_trace(out / "trace.csv", tr, config_text(cfg))
    artifacts.write_snapshot(out / "snapshot_t1.egv", traj.at(cfg.t1))
    artifacts.write_snapshot(out / "snapshot_t0.egv", traj.snapshots[-1])

    energy_ok = all(r["ok"] for r in energy)
    band_ok = band <= BAND_TOL
    finite = all(s.is_finite() for s in traj.snapshots)
    _summary(out / "simulate_summary.txt", [
        f"grid n = {cfg.domain.n}, h = {cfg.domain.h!r}, dt = {traj.dt!r}, steps = {len(traj.step_times) - 1}",
        f"t0 = {cfg.t0!r} (tau0 = {cfg.tau0!r}), t1 = {cfg.t1!r}",
        f"trace rows = {tr.values.shape[0] * tr.values.shape[1]}",
        f"energy bound holds at every snapshot: {energy_ok}",
        f"near-boundary ratio = {band:.3e} (limit {BAND_TOL:g}): {band_ok}",
        f"finite fields: {finite}",
    ])
    return energy_ok and band_ok and finite


# ---- invert -----------------------------------------------------------------

def _is_snapshot(path: Path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(4) == artifacts.MAGIC


def invert_file(cfg: RunConfig, path: Path) -> tuple[ReconstructionResult, object]:
    """Reconstruct from an EGV1 snapshot (ideal surface data) or a trace CSV (multipole pipeline)."""
    settings = cfg.settings()
    if _is_snapshot(path):
        state = artifacts.read_snapshot(path)
        settings = dataclasses.replace(settings, t1=state.t)
        return reconstruct(surface_samples(state, cfg.medium, settings.sphere), settings), None
    tr = artifacts.read_trace(path, cfg.center, cfg.r0)
    k = int(np.argmin(np.abs(tr.observation.sample_times - settings.t1)))
    one = dataclasses.replace(tr.observation, sample_times=tr.observation.sample_times[[k]])
    exp = multipole_fit(tr.values[k], one, settings.lmax)
    return reconstruct(tr, settings), exp


def run_invert(cfg: RunConfig, path: Path, out: Path) -> bool:
    res, exp = invert_file(cfg, path)
    artifacts.write_result(out / "result.csv", res)
    artifacts.write_functionals(out / "functionals.csv", res.z, res.G)
    if exp is not None:
        artifacts.atomic_write(out / "multipole.csv", exp.to_csv())
    lines = [f"input: {path.name}", f"t1 = {res.t1!r}"]
    if not res.detected:
        lines.append("no source detected")
    else:
        lines.append("M_hat = " + ", ".join(f"{v:.6g}" for v in sym_to6(res.M_hat)))
        lines.append("P_hat = " + ", ".join(f"{v:.6g}" for v in res.P_hat))
        lines.append(f"sigma_min = {res.sigma_min:.6g}, res_moment = {res.res_moment:.3e}, "
                     f"res_loc = {res.res_loc:.3e}")
    lines.extend(res.notes)
    if cfg.truth is not None and res.detected:
        t = cfg.truth
        em = float(np.linalg.norm(res.M_hat - t.M) / max(t.norm, 1e-300))
        ep = float(np.linalg.norm(res.P_hat - t.position))
        lines.append(f"error |M_hat - M|/|M| = {em:.4e}")
        lines.append(f"error |P_hat - P| / R = {ep / cfg.domain.R:.4e}")
        keys = ["M11", "M22", "M33", "M12", "M13", "M23"]
        svg = bar_chart(keys, {"recovered": list(sym_to6(res.M_hat)), "true": list(t.m6)},
                        "moment tensor components")
        artifacts.atomic_write(out / "moment.svg", svg)
    _summary(out / "invert_summary.txt", lines)
    return (not res.detected) or not res.notes


# ---- sweep ------------------------------------------------------------------

def spread(rows, key: str = "ratio_truth") -> float:
    vals = [r[key] for r in rows if not r["flagged"]]
    if not vals or not all(math.isfinite(v) and v > 0 for v in vals):
        return math.inf
    return max(vals) / min(vals)


def run_sweep(cfg: RunConfig, out: Path) -> bool:
    base = _need_truth(cfg)
    table = stability_sweep(base, default_perturbations(base), cfg.deltas, cfg.medium, cfg.domain,
                            cfg.observation(), cfg.settings(), cfg.cfl, (cfg.m0, cfg.M0))
    lines, ok, series = [], True, {}
    for kind, rows in table.items():
        artifacts.write_sweep(out / f"sweep_{kind}.csv", rows)
        sp = spread(rows)
        ok &= sp <= SWEEP_SPREAD
        lines.append(f"direction {kind}: C_truth = {measured_constant(rows):.6g}, "
                     f"C_recon = {measured_constant(rows, 'ratio_recon'):.6g}, max/min = {sp:.4g}")
        series[f"{kind} perturbation"] = [(r["eps"], r["dM"] + r["dP"]) for r in rows if not r["flagged"]]
    every = [r for rows in table.values() for r in rows]
    lines.append(f"measured C (max ratio_recon over all rows) = {measured_constant(every, 'ratio_recon'):.6g}")
    lines.append(f"measured C (max ratio_truth over all rows) = {measured_constant(every):.6g}")
    lines.append(f"combined max/min = {spread(every):.4g}")
    artifacts.atomic_write(out / "sweep.svg", loglog(series, "eps", "|dM| + |dP|", "empirical Lipschitz sweep"))
    _summary(out / "sweep_summary.txt", lines)
    return ok


# ---- verify -----------------------------------------------------------------

def verify_reports(cfg: RunConfig, seed: int | None = None) -> list[OracleReport]:
    src = _need_truth(cfg)
    med, dom = cfg.medium, cfg.domain
    res = f"n={dom.n}"
    reps = list(lemma_q_report(cfg.d0))

    h_f = cfg.d0 / 40.0
    for phi in basis_all():
        val, _ = functional_oracle(src, phi, h_f)
        ref = functional_closed_form(src.M, src.position, phi)
        reps.append(OracleReport(f"functional:{phi.name}", val, ref, 1e-4, relative=True,
                                 meta={"resolution": "h=d0/40"}))

    traj = simulate(med, dom, src, cfg.times, cfg.cfl)
    st = traj.at(cfg.t1)
    quad = cfg.settings().sphere
    samples = surface_samples(st, med, quad)
    early = [s for s in traj.snapshots if 0.2 * cfg.t1 * (1 - 1e-9) <= s.t <= cfg.t1 * (1 + 1e-9)]
    for phi in basis_all():
        zb = boundary_z(samples, quad, phi)
        zv = z_volume_oracle(st, med, phi)
        reps.append(OracleReport(f"z_convention:{phi.name}", zb, zv, 1e-3, relative=True,
                                 meta={"resolution": f"{res} sphere={quad.size}"}))
    for phi in basis_all():
        reps.append(OracleReport(f"z_growth_slope:{phi.name}", z_growth_slope(early, med, phi), 2.0, 0.05,
                                 meta={"resolution": f"{res} snapshots={len(early)}"}))

    reps.append(duhamel_check(med, dom, src, cfg.t1, cfg.cfl))
    bumps = random_bumps(src, 5, cfg.seed if seed is None else seed)
    pr = poisson_residual(st, med, bumps)
    reps.append(OracleReport(pr.name, pr.value, pr.reference, pr.tol, meta={"resolution": pr.meta["resolution"]}))

    for r in energy_report(traj, src, med):
        reps.append(OracleReport(f"energy_bound:t={r['t']:.6g}", r["lhs"], r["rhs"] * (1 + 1e-6), 0.0,
                                 bound=True, meta={"resolution": res}))
    reps.append(OracleReport("finite_speed_band", boundary_band_ratio(traj, 2.0 * dom.h), 0.0, BAND_TOL,
                             meta={"resolution": f"{res} width=2h"}))
    R = dom.R
    for x0 in ((R, 0.0, 0.0), (0.0, R, 0.0), (0.0, 0.0, R)):
        for gamma in (1.0, 10.0):
            c = cone_report(traj, src, med, x0, cfg.t0, gamma)
            tag = f"x0={x0} gamma={gamma:g}"
            reps.append(OracleReport(f"cone_energy:{tag}", c["lhs"], c["rhs"], c["tol"],
                                     bound=True, meta={"resolution": f"{res} tau=t0"}))
            ratio = c["sup_u_cone"] / c["max_u"] if c["max_u"] > 0 else c["sup_u_cone"]
            reps.append(OracleReport(f"cone_null:{tag}", ratio, 0.0, 1e-10, meta={"resolution": f"{res} tau=t0"}))
    return reps


def run_verify(cfg: RunConfig, out: Path) -> bool:
    reps = verify_reports(cfg)
    artifacts.write_verify(out / "verify.csv", reps)
    bad = [r.name for r in reps if not r.passed]
    _summary(out / "verify_summary.txt", [f"{len(reps) - len(bad)}/{len(reps)} identities pass"] +
             [f"FAIL {b}" for b in bad])
    return not bad


# ---- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="elastograv", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "forward run: snapshots, diagnostics, gravity trace"),
                        ("invert", "recover M and P from a trace CSV or an EGV1 snapshot"),
                        ("sweep", "empirical Lipschitz sweep"),
                        ("verify", "run the oracle identities")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config", type=Path)
        s.add_argument("-o", "--out", type=Path, default=None, help="output directory (overrides [run] output_dir)")
        s.add_argument("--tier", choices=("coarse", "default", "fine"), default=None)
        s.add_argument("--threads", type=int, default=None)
        if name == "invert":
            s.add_argument("input", type=Path, help="trace CSV or EGV1 snapshot")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        import numba

        numba.set_num_threads(max(1, min(args.threads, numba.config.NUMBA_NUM_THREADS)))
    try:
        cfg = load_config(args.config)
        if args.tier:
            cfg = cfg.with_tier(args.tier)
        out = args.out if args.out is not None else Path(cfg.output_dir)
        if args.command == "simulate":
            ok = run_simulate(cfg, out)
        elif args.command == "invert":
            ok = run_invert(cfg, args.input, out)
        elif args.command == "sweep":
            ok = run_sweep(cfg, out)
        else:
            ok = run_verify(cfg, out)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return 2
    except (artifacts.FormatError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{args.command}: {'ok' if ok else 'checks failed'} -> {out}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
