"""Acceptance criteria 1-14.

Each criterion records a PASS/FAIL line that the conftest prints at the end
of the session.  Runs are cached so later criteria (energy balance,
determinism) reuse them; criterion 14 re-executes every run with a different
FFT thread count and compares digests.
"""

import functools
import hashlib
import math
import time

import numpy as np
import pytest
import scipy.fft as sfft

from gevreyns.config import rescale
from gevreyns.experiments import (
    apriori_margins,
    bilinear_constant,
    fit_power_law,
    run_blowup_monitor,
    run_decay_study,
    run_radius_study,
    run_stability_study,
)
from gevreyns.integrator import IntegratorConfig, energy_balance_residual, simulate
from gevreyns.mild import duhamel_integral, heat_propagate, picard_solve
from gevreyns.norms import analyticity_radius, default_sweep_params, gevrey_norm, gevrey_series, run_sweep
from gevreyns.spectral import GridSpec, nonlinear_term, random_field, single_mode, taylor_green

from oracles import duhamel_constant, duhamel_cos, duhamel_linear, gevrey_loop, nonlinear_convolution

RUNS = {}


def acceptance_run(fn):
    RUNS[fn.__name__] = fn
    return functools.cache(fn)


def digest(result: dict) -> str:
    """SHA-256 over every public entry of a run result (keys starting with '_' are skipped)."""
    h = hashlib.sha256()

    def feed(x):
        if isinstance(x, dict):
            for k in sorted(x):
                if not str(k).startswith("_"):
                    h.update(str(k).encode())
                    feed(x[k])
        elif isinstance(x, (list, tuple)):
            for y in x:
                feed(y)
        elif isinstance(x, np.ndarray):
            h.update(np.ascontiguousarray(x).tobytes())
        else:
            h.update(repr(x).encode())

    feed(result)
    return h.hexdigest()


def small_data(n, seed, norm=1e-3, a=0.5, L=2 * math.pi):
    return rescale(random_field(GridSpec(n, box_period=L), seed), norm, a)


# -- runs ------------------------------------------------------------------------------------


@acceptance_run
def run_oracle():
    t0 = time.perf_counter()
    errs, outs = [], []
    for n in (4, 8):
        g = GridSpec(n)
        rng = np.random.default_rng(n)
        for _ in range(50):
            u = random_field(g, rng, shell=(1, n))
            v = random_field(g, rng, shell=(1, n))
            got = nonlinear_term(u, v).coeffs
            ref = nonlinear_convolution(g, u.coeffs, v.coeffs)
            errs.append(np.max(np.abs(got - ref)) / np.max(np.abs(ref)))
            outs.append(got)
    return {"max_rel_error": max(errs), "outputs": outs, "_seconds": time.perf_counter() - t0}


NORM_PARAMS = [(0.5, 0.0), (0.5, 0.5), (1.5, 0.3), (-0.5, 0.2)]


@acceptance_run
def run_norm_oracle():
    g = GridSpec(8)
    rng = np.random.default_rng(2)
    worst = 0.0
    values = []
    for _ in range(100):
        f = random_field(g, rng)
        for s, a in NORM_PARAMS:
            got = gevrey_norm(f, s, a)
            ref = gevrey_loop(g, f.coeffs, s, a)
            worst = max(worst, abs(got - ref) / ref)
            values.append(got)
    return {"max_rel_error": worst, "values": values}


@acceptance_run
def run_series():
    worst = 0.0
    values = []
    for seed, (n, shell) in enumerate([(16, (1, 5)), (32, (1, 10)), (32, (3, 8))]):
        f = random_field(GridSpec(n), seed, shell=shell)
        for a in (0.1, 0.3, 0.5, 1.0):
            series, _ = gevrey_series(f, a)
            direct = gevrey_norm(f, 0.5, a) ** 2
            worst = max(worst, abs(series - direct) / direct)
            values.append(series)
    return {"max_rel_error": worst, "values": values}


@acceptance_run
def run_lemma_sweeps():
    rows = []
    for name in ("product", "bilinear", "interpolation"):
        for p in default_sweep_params(name):
            r1 = run_sweep(name, 100, 42, p)
            r2 = run_sweep(name, 100, 43, p)
            rows.append({
                "inequality": name,
                "params": dict(p),
                "max_ratio": r1.max_ratio,
                "reseed_max_ratio": r2.max_ratio,
                "min_gap": min(r1.extras.get("min_gap", 0.0), r2.extras.get("min_gap", 0.0)),
                "ratios": r1.ratios,
            })
    return {"rows": rows}


@acceptance_run
def run_duhamel():
    g = single_mode(GridSpec(8), (1, 0, 0), (0, 0, 1))
    t, m = 1.0, 128
    s = np.linspace(0, t, m + 1)

    def coeff(field):
        return field.coeffs[2, 1, 0, 0].real

    err_const = abs(coeff(duhamel_integral([g] * (m + 1), t)) - duhamel_constant(1.0, 1.0, t))
    err_lin = abs(coeff(duhamel_integral([x * g for x in s], t)) - duhamel_linear(1.0, 1.0, t))
    errs = []
    for mm in (32, 64, 128, 256):
        ss = np.linspace(0, t, mm + 1)
        got = coeff(duhamel_integral([math.cos(3 * x) * g for x in ss], t))
        errs.append(abs(got - duhamel_cos(1.0, 1.0, 3.0, t)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    return {"err_const": err_const, "err_lin": err_lin, "orders": orders}


@acceptance_run
def run_picard():
    u0 = small_data(32, 6)
    t0 = time.perf_counter()
    traj, rep = picard_solve(u0, 1.0, a=0.5, tol=1e-13, steps=128, check_resolution=True)
    seconds = time.perf_counter() - t0
    rec = simulate(u0, IntegratorConfig(0.01, 1.0), norms=[(0.5, 0.5)], gevrey_a=0.5, keep_snapshots=True)
    dist = gevrey_norm(traj.final - rec.final, 0.5, 0.5)
    return {"iterates": rep.iterates, "contraction": rep.contraction_factor, "converged": rep.converged,
            "distance": dist, "final": traj.final.coeffs, "resolution_flag": rep.resolution_flag,
            "_seconds": seconds, "_record": rec, "energy": rec.energy}


@acceptance_run
def run_exact_orbits():
    g = GridSpec(32)
    u0 = taylor_green(g, 1.0)
    rec = simulate(u0, IntegratorConfig(1e-3, 1.0), np.linspace(0, 1, 11), keep_snapshots=True)
    exact = math.exp(-2.0) * u0.coeffs
    tg_err = np.max(np.abs(rec.final.coeffs - exact)) / np.max(np.abs(exact))
    h0 = rescale(random_field(g, 4), 1.0)
    hrec = simulate(h0, IntegratorConfig(0.01, 1.0, nonlinear=False), [0.25, 0.5, 1.0], keep_snapshots=True)
    heat_err = max(np.max(np.abs(f.coeffs - heat_propagate(h0, t).coeffs)) / np.max(np.abs(h0.coeffs))
                   for t, f in zip(hrec.times, hrec.snapshots))
    return {"tg_error": tg_err, "heat_error": heat_err, "final": rec.final.coeffs,
            "_records": [rec, hrec], "energy": rec.energy + hrec.energy}


@acceptance_run
def run_small_data_monitor():
    u0 = small_data(32, 7)
    c, _ = bilinear_constant(u0.grid, 0.5, samples=20, seed=0)
    mon, rec = run_blowup_monitor(u0, IntegratorConfig(0.05, 2.0), 0.5, c_emp=c, diag_times=np.linspace(0, 2, 41))
    margins = apriori_margins(rec, 0.5, 1e-6)
    return {"verdict": mon.verdict, "margins": margins, "c_emp": c,
            "_record": rec, "energy": rec.energy}


@acceptance_run
def run_gevrey_decay():
    u0 = small_data(64, 10)
    times = sorted(set(np.linspace(0, 8, 41)) | {0.1})
    rec = simulate(u0, IntegratorConfig(0.2, 8.0), times, norms=[(0.5, 0.5)], gevrey_a=0.5)
    return {"times": rec.times, "norms": rec.norm_series(0.5, 0.5), "_record": rec, "energy": rec.energy}


DECAY_S = (0.5, 1.0, 1.5, 2.0)


@acceptance_run
def run_sobolev_rates():
    g = GridSpec(64, box_period=16 * math.pi)
    u0 = rescale(random_field(g, 2, shell=(1, 20), envelope=lambda r: np.exp(-(r**2))), 1e-3, 0.5)
    st = run_decay_study(u0, IntegratorConfig(0.1, 8.0), DECAY_S, 0.5, (1.0, 8.0), n_samples=16)
    t = np.geomspace(1, 8, 16)
    selftest = [fit_power_law(t, 2.0 * t**e)[0] - e for e in (0.0, -0.25, -0.5, -0.75, -1.7)]
    rng = np.random.default_rng(0)
    noisy = [fit_power_law(t, 2.0 * t**e * np.exp(1e-3 * rng.standard_normal(t.size)))[0] - e
             for e in (0.0, -0.25, -0.5, -0.75)]
    return {"window_valid": st.window_valid,
            "fits": [(f.s, f.fitted_exponent, f.predicted_exponent, f.monotone_excess) for f in st.fits],
            "selftest": selftest + noisy, "_record": st.record, "energy": st.record.energy}


@acceptance_run
def run_radius():
    u0 = small_data(32, 12)
    rs, rec = run_radius_study(u0, IntegratorConfig(0.05, 1.0), 0.01, 1.0, n_samples=21)
    closed = []
    for k, L in [((1, 0, 0), 2 * math.pi), ((1, 2, 2), 2 * math.pi), ((3, 0, 0), 8 * math.pi)]:
        f = single_mode(GridSpec(16, box_period=L), k, (0, 0, 1) if k[2] == 0 else (0, 1, -1))
        xi0 = math.sqrt(sum(x * x for x in k)) * 2 * math.pi / L
        closed.append(abs(analyticity_radius(f) - math.log(10) / xi0))
    return {"radii": rs.radii, "growth": rs.growth, "required": rs.required_growth,
            "closed_form_error": max(closed), "_record": rec, "energy": rec.energy}


@acceptance_run
def run_stability():
    u0 = small_data(32, 7)
    c, _ = bilinear_constant(u0.grid, 0.5, samples=20, seed=0)
    out = {}
    for eps in (1e-4, 2e-4):
        v0 = u0 + single_mode(u0.grid, (0, 0, 8), (eps, 0, 0))
        led = run_stability_study(u0, v0, IntegratorConfig(0.05, 2.0), 0.5, c_emp=c,
                                  diag_times=np.linspace(0, 2, 41))
        out[eps] = led
    return {"gate": [out[e].gate_passed for e in out], "margin": [out[e].margin for e in out],
            "w0": [out[e].w_norm_sq[0] for e in out], "lhs0": [float(out[e].lhs[0]) for e in out],
            "series": [out[e].lhs for e in out], "w_end": [out[e].w_norm_sq[-1] for e in out]}


# -- criteria ---------------------------------------------------------------------------------


def test_c01_oracle_equivalence(criterion):
    r = run_oracle()
    ok = r["max_rel_error"] <= 1e-10 and r["_seconds"] < 10
    criterion(1, "nonlinear term vs convolution oracle (4^3, 8^3, 50 pairs)", ok,
              f"max rel err {r['max_rel_error']:.2e} (tol 1e-10), {r['_seconds']:.1f} s (limit 10 s)")
    assert ok


def test_c02_norm_oracle(criterion):
    r = run_norm_oracle()
    ok = r["max_rel_error"] <= 1e-12
    criterion(2, "gevrey_norm vs loop oracle (100 fields, 4 (s,a) pairs)", ok,
              f"max rel err {r['max_rel_error']:.2e} (tol 1e-12)")
    assert ok


def test_c03_series_identity(criterion):
    r = run_series()
    ok = r["max_rel_error"] <= 1e-10
    criterion(3, "series identity for the H^1/2_a norm", ok, f"max rel err {r['max_rel_error']:.2e} (tol 1e-10)")
    assert ok


def test_c04_lemma_sweeps(criterion):
    r = run_lemma_sweeps()
    parts, ok = [], True
    for row in r["rows"]:
        finite = np.isfinite(row["max_ratio"]) and np.isfinite(row["reseed_max_ratio"])
        if row["inequality"] == "interpolation":
            change = abs(row["max_ratio"] - row["reseed_max_ratio"])
            stable = change < 1e-12 and row["min_gap"] >= -1e-12
        else:
            change = abs(row["max_ratio"] - row["reseed_max_ratio"]) / row["max_ratio"]
            stable = change < 0.10
        ok &= bool(finite and stable)
        parts.append(f"{row['inequality']}{tuple(v for k, v in row['params'].items() if k != 'strict')}"
                     f" max {row['max_ratio']:.4g} chg {change:.2g}")
    criterion(4, "lemma sweeps, 100 samples, reseed stability", ok, "; ".join(parts))
    assert ok


def test_c05_duhamel(criterion):
    r = run_duhamel()
    ok = r["err_const"] <= 1e-6 and r["err_lin"] <= 1e-6 and np.all(r["orders"] >= 1.9)
    criterion(5, "Duhamel quadrature closed forms and order", ok,
              f"const err {r['err_const']:.1e}, linear err {r['err_lin']:.1e} (tol 1e-6), "
              f"orders {np.round(r['orders'], 2).tolist()} (min 1.9)")
    assert ok


def test_c06_picard(criterion):
    r = run_picard()
    ok = (r["converged"] and r["iterates"] <= 5 and r["contraction"] < 0.5
          and r["distance"] <= 1e-6 and r["_seconds"] < 300)
    criterion(6, "Picard contraction on 32^3, a = 0.5, T = 1", ok,
              f"{r['iterates']} iterates, contraction {r['contraction']:.1e}, "
              f"distance to integrator {r['distance']:.1e} (tol 1e-6), {r['_seconds']:.0f} s")
    assert ok


def test_c07_exact_orbits(criterion):
    r = run_exact_orbits()
    ok = r["tg_error"] <= 1e-8 and r["heat_error"] <= 1e-13
    criterion(7, "Taylor-Green orbit and exact heat regime", ok,
              f"TG rel err {r['tg_error']:.1e} (tol 1e-8), heat err {r['heat_error']:.1e} (tol 1e-13)")
    assert ok


def _integrator_records():
    recs = {
        "picard-crosscheck": run_picard()["_record"],
        "taylor-green": run_exact_orbits()["_records"][0],
        "heat-only": run_exact_orbits()["_records"][1],
        "small-data": run_small_data_monitor()["_record"],
        "gevrey-decay-64": run_gevrey_decay()["_record"],
        "sobolev-rates-64": run_sobolev_rates()["_record"],
        "radius": run_radius()["_record"],
    }
    return recs


def test_c08_energy_balance(criterion):
    recs = _integrator_records()
    worst = max(energy_balance_residual(r) for r in recs.values())
    monotone = all(np.all(np.diff(r.energy) <= 0) for r in recs.values())
    ok = worst <= 1e-6 and monotone
    criterion(8, "energy balance on all integrator runs", ok,
              f"max residual {worst:.1e} over {len(recs)} runs (tol 1e-6), non-increasing: {monotone}")
    assert ok


def test_c09_apriori_bound(criterion):
    r = run_small_data_monitor()
    slack = float(np.min(r["margins"]))
    ok = r["verdict"] == "global-by-smallness" and slack >= 0
    criterion(9, "small-data a-priori bound", ok, f"verdict {r['verdict']}, min slack {slack:.2e}")
    assert ok


def test_c10_gevrey_decay(criterion):
    r = run_gevrey_decay()
    t, n = np.asarray(r["times"]), r["norms"]
    ratio = n[-1] / n[0]
    late = n[t >= 0.1]
    mono = bool(np.all(np.diff(late) < 0))
    ok = ratio <= 1e-3 and mono
    criterion(10, "Gevrey norm decay on 64^3 by t = 8", ok, f"ratio {ratio:.2e} (limit 1e-3), monotone after 0.1: {mono}")
    assert ok


def test_c11_sobolev_rates(criterion):
    r = run_sobolev_rates()
    rates_ok = all(fit <= pred + 0.15 for _, fit, pred, _ in r["fits"])
    self_ok = max(abs(x) for x in r["selftest"]) <= 0.01
    ok = r["window_valid"] and len(r["fits"]) == len(DECAY_S) and rates_ok and self_ok
    detail = ", ".join(f"s={s:g}: {fit:.3f} <= {pred + 0.15:.3f}" for s, fit, pred, _ in r["fits"])
    criterion(11, "Sobolev decay exponents on L = 16 pi, 64^3", ok,
              f"{detail}; fitter self-test max dev {max(abs(x) for x in r['selftest']):.1e}")
    assert ok


def test_c12_analyticity_radius(criterion):
    r = run_radius()
    ok = r["growth"] >= r["required"] and r["closed_form_error"] <= 1e-6
    criterion(12, "analyticity radius growth and closed form", ok,
              f"growth {r['growth']:.3f} >= {r['required']:.3f}, closed-form err {r['closed_form_error']:.1e}")
    assert ok


def test_c13_stability(criterion):
    r = run_stability()
    scale = r["w0"][1] / r["w0"][0]
    lhs_scale = r["lhs0"][1] / r["lhs0"][0]
    ok = (all(r["gate"]) and min(r["margin"]) >= 0 and abs(scale / 4 - 1) <= 0.01
          and abs(lhs_scale / 4 - 1) <= 0.01)
    criterion(13, "Gronwall ledger for eps = 1e-4 perturbations", ok,
              f"gates {r['gate']}, min margin {min(r['margin']):.2e}, ||w0||^2 ratio {scale:.6f} (target 4)")
    assert ok


@pytest.mark.slow
def test_c14_determinism(criterion):
    mismatched = []
    for name, fn in RUNS.items():
        first = digest(globals()[name]())
        with sfft.set_workers(3):
            again = digest(fn())
        if first != again:
            mismatched.append(name)
    ok = not mismatched
    criterion(14, "run digests identical across repeats and thread counts", ok,
              f"{len(RUNS)} runs compared at 1 vs 3 FFT workers; mismatches: {mismatched or 'none'}")
    assert ok
