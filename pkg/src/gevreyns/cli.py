"""Command-line entry point: ``gevreyns {simulate, verify-lemmas, picard, study}``.

Every command writes into a fresh timestamped run directory under ``--out``
and finishes with ``manifest.json`` listing each output with its SHA-256.
Exit codes: 0 success, 2 contract violation, 1 operational error.
"""

from __future__ import annotations

import argparse
import contextlib
import datetime as _dt
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import __version__
from . import experiments as ex
from . import io as gio
from . import plotting
from .config import (
    ConfigError,
    RunConfig,
    defaults,
    initial_field,
    load_config,
    parse_param_sets,
    perturbation,
    schema_text,
)
from .integrator import energy_balance_residual, simulate
from .mild import picard_solve
from .norms import INEQUALITIES, default_sweep_params, gevrey_norm, relative_change, run_sweep

log = logging.getLogger("gevreyns")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONTRACT = 2

STUDIES = ("blowup", "decay", "radius", "stability")


class ContractViolation(RuntimeError):
    pass


# -- run directory and manifest ---------------------------------------------------------


@dataclass
class RunDir:
    path: Path
    command: str
    config: RunConfig
    config_text: str
    outputs: list = field(default_factory=list)
    started: float = field(default_factory=time.perf_counter)

    @classmethod
    def create(cls, out: Path, command: str, config: RunConfig, config_text: str) -> "RunDir":
        stamp = _dt.datetime.now().strftime("%Y%m%dT%H%M%S")
        base = Path(out) / f"{stamp}-{command.replace(' ', '-')}"
        path = base
        i = 1
        while path.exists():
            path = Path(f"{base}.{i}")
            i += 1
        path.mkdir(parents=True)
        rd = cls(path, command, config, config_text)
        (path / "config.txt").write_text(config_text)
        rd.add("config.txt")
        return rd

    def file(self, name: str) -> Path:
        return self.path / name

    def add(self, *names) -> None:
        for name in names:
            rel = Path(name).relative_to(self.path) if Path(name).is_absolute() else Path(name)
            self.outputs.append(str(rel))

    def finish(self, status: str, exit_code: int) -> Path:
        outputs = [{"path": p, "sha256": gio.sha256_file(self.path / p)} for p in sorted(set(self.outputs))]
        g = self.config.grid()
        manifest = {
            "command": self.command,
            "config_checksum": gio.sha256_bytes(self.config_text.encode()),
            "code_version": __version__,
            "seed": self.config.seed,
            "grid": g.describe(),
            "wall_time": time.perf_counter() - self.started,
            "status": status,
            "exit_code": exit_code,
            "outputs": outputs,
        }
        gio.write_json(self.path / "manifest.json", manifest)
        return self.path / "manifest.json"


# -- commands -------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, rd: RunDir) -> int:
    u0 = initial_field(cfg)
    snaps = cfg.snapshots
    norms = list(cfg.norms)
    rec = simulate(u0, cfg.integrator(), cfg.diagnostic_times(), norms=norms,
                   gevrey_a=cfg.gevrey_a, radius=cfg.radius, keep_snapshots=snaps)
    gio.write_trajectory_csv(rd.file("trajectory.csv"), rec)
    plotting.plot_trajectory(rec, rd.file("trajectory.png"))
    rd.add("trajectory.csv", "trajectory.png")
    if snaps:
        paths = gio.write_trajectory(rd.file("snapshots"), rec.times, rec.snapshots)
        rd.add(*paths)
    residual = energy_balance_residual(rec)
    e = np.asarray(rec.energy)
    summary = {
        "samples": len(rec.times),
        "final_time": rec.times[-1],
        "energy_balance_residual": residual,
        "energy_non_increasing": bool(np.all(np.diff(e) <= 0)),
        "max_divergence": max(rec.divergence),
        "truncated": rec.truncated or "no",
    }
    gio.write_kv(rd.file("summary.txt"), summary, "simulation summary")
    rd.add("summary.txt")
    if rec.truncated:
        log.error("run truncated: %s", rec.truncated)
        return EXIT_CONTRACT
    return EXIT_OK


def _sweep_plan(cfg: RunConfig, inequality=None, params=None):
    which = inequality or cfg.inequality
    names = INEQUALITIES if which == "all" else (which,)
    plan = []
    for name in names:
        sets = params if params is not None else cfg.params
        if sets is None or which == "all":
            sets = default_sweep_params(name)
        plan.extend((name, p) for p in sets)
    return plan


def cmd_verify_lemmas(cfg: RunConfig, rd: RunDir, inequality=None, params=None) -> int:
    from .spectral import GridSpec

    grid = GridSpec(cfg.sweep_n, cfg.box_period, cfg.dealias_fraction)
    rows = []
    reports = []
    unstable = []
    for idx, (name, p) in enumerate(_sweep_plan(cfg, inequality, params)):
        rep = run_sweep(name, cfg.samples, cfg.seed, p, grid=grid, shell_radius=cfg.shell_radius)
        fname = f"report_{idx:02d}_{name}.txt"
        rd.file(fname).write_text(rep.to_text())
        rd.add(fname)
        reports.append(rep)
        change, stable = math.nan, True
        if cfg.reseed_check:
            rep2 = run_sweep(name, cfg.samples, cfg.seed + 1, p, grid=grid, shell_radius=cfg.shell_radius)
            if name == "interpolation":
                change = abs(rep.max_ratio - rep2.max_ratio)
                stable = change < 1e-12
            else:
                change = relative_change(rep.max_ratio, rep2.max_ratio)
                stable = change < cfg.reseed_tolerance
        if name == "interpolation" and rep.extras["min_gap"] < -1e-12:
            stable = False
        if not (np.isfinite(rep.max_ratio) and stable):
            unstable.append(fname)
        label = ";".join(f"{k}={v!r}" for k, v in p.items())
        rows.append([name, label, rep.num_samples, rep.max_ratio, rep.witness_index, change,
                     stable, gio.sha256_file(rd.file(fname))])
    gio.write_csv(rd.file("sweeps.csv"),
                  ["inequality", "params", "samples", "max_ratio", "witness_index",
                   "reseed_change", "stable", "report_sha256"], rows)
    plotting.plot_sweep(reports, rd.file("sweeps.png"))
    rd.add("sweeps.csv", "sweeps.png")
    if unstable:
        log.error("unstable sweep reports: %s", ", ".join(unstable))
        return EXIT_CONTRACT
    return EXIT_OK


def cmd_picard(cfg: RunConfig, rd: RunDir) -> int:
    u0 = initial_field(cfg)
    a = cfg.picard_a
    traj, report = picard_solve(u0, cfg.picard_T, a, cfg.picard_tol, cfg.picard_max_iter,
                                cfg.picard_steps, cfg.nu, initial=cfg.picard_initial,
                                check_resolution=cfg.check_resolution)
    rd.file("picard_report.txt").write_text(report.to_text())
    n_half = traj.slice_norms(0.5, a)
    n_one = traj.slice_norms(1.0, a)
    gio.write_csv(rd.file("picard_slices.csv"),
                  ["time", gio.norm_column(0.5, a), gio.norm_column(1.0, a)],
                  zip(traj.times, n_half, n_one))
    plotting.plot_picard(report, rd.file("picard.png"))
    rd.add("picard_report.txt", "picard_slices.csv", "picard.png")
    summary = {"converged": report.converged, "iterates": report.iterates,
               "contraction_factor": report.contraction_factor,
               "resolution_flag": report.resolution_flag,
               "initial_norm": gevrey_norm(u0, 0.5, a)}
    if cfg.snapshots:
        rd.add(*gio.write_trajectory(rd.file("snapshots"), traj.times, traj.snapshots()))
    if cfg.compare_integrator:
        from .integrator import IntegratorConfig

        ic = cfg.integrator()
        ic = IntegratorConfig(ic.dt, cfg.picard_T, ic.scheme, ic.nu, ic.cfl_guard, ic.nonlinear)
        rec = simulate(u0, ic, [cfg.picard_T], keep_snapshots=True)
        summary["integrator_distance"] = gevrey_norm(traj.final - rec.final, 0.5, a)
    gio.write_kv(rd.file("summary.txt"), summary, "picard summary")
    rd.add("summary.txt")
    if not report.converged or report.resolution_flag:
        log.error("picard: %s", report.diagnosis)
        return EXIT_CONTRACT
    return EXIT_OK


def _bilinear_constant(cfg: RunConfig, rd: RunDir, a: float, grid) -> tuple[float, dict]:
    if cfg.bilinear_constant is not None:
        return cfg.bilinear_constant, {"bilinear_constant_source": "config"}
    radius = min(cfg.shell_radius, float(grid.cutoff))
    rep = run_sweep("bilinear", cfg.bilinear_samples, cfg.seed, {"a": a}, grid=grid, shell_radius=radius)
    rd.file("bilinear_report.txt").write_text(rep.to_text())
    rd.add("bilinear_report.txt")
    c = cfg.bilinear_safety * rep.max_ratio
    return c, {"bilinear_constant_source": "bilinear_report.txt",
               "bilinear_report_sha256": gio.sha256_file(rd.file("bilinear_report.txt")),
               "bilinear_max_ratio": rep.max_ratio, "bilinear_safety": cfg.bilinear_safety}


def study_blowup(cfg: RunConfig, rd: RunDir) -> int:
    u0 = initial_field(cfg)
    a = cfg.gevrey_a
    c, meta = _bilinear_constant(cfg, rd, a, u0.grid)
    mon, rec = ex.run_blowup_monitor(u0, cfg.integrator(), a, c_emp=c, diag_times=cfg.diagnostic_times())
    gio.write_trajectory_csv(rd.file("trajectory.csv"), rec)
    plotting.plot_blowup(mon, rd.file("blowup.png"))
    rd.add("trajectory.csv", "blowup.png")
    summary = {"verdict": mon.verdict, "initial_norm": mon.initial_norm, "smallness_gate": mon.smallness_gate,
               "bilinear_constant": c, **meta, "dissipation_integral": mon.dissipation_integral,
               "plateau_fraction": mon.plateau_fraction, "apriori_checked": mon.apriori_checked,
               "apriori_min_margin": mon.apriori_min_margin, "apriori_holds": mon.apriori_holds,
               "energy_balance_residual": energy_balance_residual(rec),
               "truncation_note": mon.truncation_note or "none"}
    gio.write_kv(rd.file("summary.txt"), summary, "blow-up monitor")
    rd.add("summary.txt")
    return EXIT_OK if mon.apriori_holds else EXIT_CONTRACT


def study_decay(cfg: RunConfig, rd: RunDir) -> int:
    u0 = initial_field(cfg)
    st = ex.run_decay_study(u0, cfg.integrator(), cfg.decay_s, cfg.gevrey_a,
                            tuple(cfg.decay_window), cfg.decay_samples)
    rows = [[f.s, f.window[0], f.window[1], f.fitted_exponent, f.predicted_exponent, f.residual,
             f.n_samples, f.monotone_excess, f.rate_ok, f.monotone_ok] for f in st.fits]
    gio.write_csv(rd.file("decay_fits.csv"),
                  ["s", "t_lo", "t_hi", "fitted_exponent", "predicted_exponent", "residual",
                   "n_samples", "monotone_excess", "rate_ok", "monotone_ok"], rows)
    rd.add("decay_fits.csv")
    summary = {"window_valid": st.window_valid, "status": st.reason,
               "gap_parameter": cfg.decay_window[1] * cfg.nu * u0.grid.xi_min**2}
    for f in st.fits:
        summary[f"exponent_s{f.s:g}"] = f.fitted_exponent
    if st.record is not None:
        gio.write_trajectory_csv(rd.file("trajectory.csv"), st.record)
        plotting.plot_decay(st, rd.file("decay.png"))
        rd.add("trajectory.csv", "decay.png")
        summary["energy_balance_residual"] = energy_balance_residual(st.record)
        summary["gevrey_ratio_final"] = st.gevrey_ratio_final
    gio.write_kv(rd.file("summary.txt"), summary, "decay study")
    rd.add("summary.txt")
    ok = st.window_valid and all(f.rate_ok and f.monotone_ok for f in st.fits)
    return EXIT_OK if ok else EXIT_CONTRACT


def study_radius(cfg: RunConfig, rd: RunDir) -> int:
    u0 = initial_field(cfg)
    t_lo, t_hi = cfg.radius_window
    rs, rec = ex.run_radius_study(u0, cfg.integrator(), t_lo, t_hi)
    gio.write_csv(rd.file("radius.csv"), ["time", "analyticity_radius"], zip(rs.times, rs.radii))
    plotting.plot_radius(rs, rd.file("radius.png"))
    rd.add("radius.csv", "radius.png")
    ok = rs.growth >= rs.required_growth
    summary = {"t_lo": t_lo, "t_hi": t_hi, "growth": rs.growth, "required_growth": rs.required_growth,
               "growth_ok": ok, "energy_balance_residual": energy_balance_residual(rec)}
    gio.write_kv(rd.file("summary.txt"), summary, "analyticity radius study")
    rd.add("summary.txt")
    return EXIT_OK if ok else EXIT_CONTRACT


def study_stability(cfg: RunConfig, rd: RunDir) -> int:
    u0 = initial_field(cfg)
    v0 = u0 + perturbation(cfg)
    if not v0.is_divergence_free():
        raise ConfigError("perturb_mode and perturb_vec must describe a divergence-free mode")
    a = cfg.gevrey_a
    c, meta = _bilinear_constant(cfg, rd, a, u0.grid)
    led = ex.run_stability_study(u0, v0, cfg.integrator(), a, c_emp=c, diag_times=cfg.diagnostic_times())
    gio.write_csv(rd.file("stability.csv"),
                  ["time", "w_norm_sq", "grad_w_accum", "u_quartic_accum", "gronwall_rhs", "margin"],
                  led.rows())
    plotting.plot_stability(led, rd.file("stability.png"))
    rd.add("stability.csv", "stability.png")
    summary = {"gate_passed": led.gate_passed, "gate_value": led.gate_value,
               "gate_threshold": led.gate_threshold, "bilinear_constant": c, **meta,
               "tail_slack": led.tail_slack, "min_margin": led.margin,
               "infinite_horizon_rhs": led.infinite_horizon_rhs,
               "w_decay_ratio": led.w_norm_sq[-1] / led.w_norm_sq[0] if led.w_norm_sq[0] > 0 else 0.0,
               "truncated": led.truncated or "no"}
    gio.write_kv(rd.file("summary.txt"), summary, "stability ledger")
    rd.add("summary.txt")
    if led.gate_passed and led.margin < 0:
        return EXIT_CONTRACT
    return EXIT_OK


STUDY_COMMANDS = {
    "blowup": study_blowup,
    "decay": study_decay,
    "radius": study_radius,
    "stability": study_stability,
}


# -- argument parsing ---------------------------------------------------------------------


def _common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=d, help="flat key = value config file")
    parser.add_argument("--out", type=Path, default=d if suppress else Path("runs"), help="parent of run directories")
    parser.add_argument("--seed", type=int, default=d, help="override the config seed")
    parser.add_argument("--threads", type=int, default=d if suppress else 1, help="FFT worker threads")
    parser.add_argument("--schema", action="store_true", default=d if suppress else False,
                        help="print the config schema and exit")
    parser.add_argument("-v", "--verbose", action="store_true", default=d if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gevreyns", description=__doc__.splitlines()[0])
    _common(p, suppress=False)
    sub = p.add_subparsers(dest="command")
    s = sub.add_parser("simulate", help="integrate and record diagnostics")
    _common(s, True)
    s = sub.add_parser("verify-lemmas", help="randomized inequality sweeps")
    _common(s, True)
    s.add_argument("--inequality", choices=("all",) + INEQUALITIES)
    s.add_argument("--samples", type=int)
    s.add_argument("--shell-radius", type=float, dest="shell_radius")
    s.add_argument("--params", help="e.g. 's=0.5,t=0.5,a=0.2; s=1,t=1,a=0.2'")
    s = sub.add_parser("picard", help="mild solution by fixed-point iteration")
    _common(s, True)
    s = sub.add_parser("study", help="experiment drivers")
    _common(s, True)
    s.add_argument("study", choices=STUDIES)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.schema:
        sys.stdout.write(schema_text())
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_ERROR
    try:
        if args.config is not None:
            cfg = load_config(args.config)
        else:
            cfg = defaults()
        overrides = {"seed": args.seed}
        if args.command == "verify-lemmas":
            overrides.update(samples=args.samples, shell_radius=args.shell_radius)
            if args.samples is not None and args.samples < 1:
                raise ConfigError("--samples must be positive")
        cfg = cfg.with_overrides(**overrides)
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        params = parse_param_sets(args.params) if getattr(args, "params", None) else None
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    label = args.command if args.command != "study" else f"study-{args.study}"
    try:
        rd = RunDir.create(args.out, label, cfg, cfg.to_text())
    except OSError as exc:
        print(f"error: cannot create run directory: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        with sfft.set_workers(args.threads):
            if args.command == "simulate":
                code = cmd_simulate(cfg, rd)
            elif args.command == "verify-lemmas":
                code = cmd_verify_lemmas(cfg, rd, args.inequality, params)
            elif args.command == "picard":
                code = cmd_picard(cfg, rd)
            else:
                code = STUDY_COMMANDS[args.study](cfg, rd)
        status = "ok" if code == EXIT_OK else "contract-violation"
    except (ConfigError, ValueError, OSError, FloatingPointError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code, status = EXIT_ERROR, f"error: {exc}"
    with contextlib.suppress(OSError):
        manifest = rd.finish(status, code)
        print(manifest.parent)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
