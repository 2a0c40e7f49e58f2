"""Experiment drivers: blow-up monitoring, Gevrey decay and Sobolev rates, analyticity radius,
and Gronwall stability of perturbed solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .integrator import (
    CFLViolation,
    IntegratorConfig,
    NonFiniteState,
    TrajectoryRecord,
    _schedule,
    march,
    simulate,
)
from .norms import (
    analyticity_radius,
    log_weights,
    mode_energy,
    run_sweep,
)
from .quadrature import log_mean
from .spectral import GridMismatchError, GridSpec, SpectralField

estimate_analyticity_radius = analyticity_radius

VERDICTS = ("global-by-smallness", "bounded-dissipation", "growing-dissipation")


class InvalidWindow(ValueError):
    """The fit window reaches into the regime dominated by the torus spectral gap."""


def bilinear_constant(grid: GridSpec, a: float, samples: int = 20, seed: int = 0,
                      shell_radius: float | None = None, safety: float = 2.0) -> tuple[float, float]:
    """``(safety * max_ratio, max_ratio)`` from a bilinear-estimate sweep on ``grid``."""
    radius = shell_radius if shell_radius is not None else min(4.0, float(grid.cutoff))
    report = run_sweep("bilinear", samples, seed, {"a": a}, grid=grid, shell_radius=radius)
    return safety * report.max_ratio, report.max_ratio


# -- blow-up monitor -------------------------------------------------------------


@dataclass
class BlowupMonitor:
    smallness_gate: float
    initial_norm: float
    bilinear_constant: float
    times: list
    dissipation_series: list
    verdict: str
    apriori_checked: bool = False
    apriori_min_margin: float = math.nan
    apriori_holds: bool = True
    plateau_fraction: float = math.nan
    truncation_note: str | None = None

    @property
    def dissipation_integral(self) -> float:
        return self.dissipation_series[-1] if self.dissipation_series else 0.0


def apriori_margins(record: TrajectoryRecord, a: float, rel_slack: float = 0.0) -> np.ndarray:
    """``||u0||^2 (1 + slack) - (||u(t)||^2 + nu int ||grad u||^2)`` in ``H^{1/2}_{a,1}`` per sample."""
    n = record.norm_series(0.5, a)
    lhs = n**2 + record.nu * np.asarray(record.dissipation_accum)
    return n[0] ** 2 * (1.0 + rel_slack) - lhs


def run_blowup_monitor(
    u0: SpectralField,
    cfg: IntegratorConfig,
    a: float,
    c_emp: float | None = None,
    diag_times: Sequence[float] | None = None,
    seed: int = 0,
    plateau_tol: float = 1e-2,
) -> tuple[BlowupMonitor, TrajectoryRecord]:
    """Run the solver, accumulate ``int ||u||^2_{H^{3/2}_{a,1}}`` and classify the run.

    Data below the smallness gate ``1 / C`` is classified global by smallness
    and the a-priori bound is checked at every sample.  Otherwise the
    dissipation integral is called bounded when its growth over the last
    quarter of the run is below ``plateau_tol`` of its value; a run truncated
    before its first step is never called bounded.
    """
    if c_emp is None:
        c_emp, _ = bilinear_constant(u0.grid, a, seed=seed)
    gate = 1.0 / c_emp if c_emp > 0 else math.inf
    rec = simulate(u0, cfg, diag_times, norms=[(0.5, a)], gevrey_a=a)
    norm0 = rec.norm_series(0.5, a)[0]
    diss = list(rec.dissipation_accum)
    t = np.asarray(rec.times)
    total = diss[-1]
    if total > 0 and t[-1] > 0:
        i = int(np.searchsorted(t, 0.75 * t[-1]))
        i = min(i, len(t) - 1)
        plateau = (total - diss[i]) / total
    elif rec.truncated and len(t) < 2:
        # nothing was integrated, so boundedness cannot be claimed
        plateau = math.nan
    else:
        plateau = 0.0
    mon = BlowupMonitor(
        smallness_gate=gate,
        initial_norm=norm0,
        bilinear_constant=c_emp,
        times=list(rec.times),
        dissipation_series=diss,
        verdict="",
        plateau_fraction=plateau,
        truncation_note=rec.truncated,
    )
    if norm0 < gate:
        mon.verdict = "global-by-smallness"
        margins = apriori_margins(rec, a, 1e-6)
        mon.apriori_checked = True
        mon.apriori_min_margin = float(margins.min())
        mon.apriori_holds = bool(np.all(margins >= 0))
    elif plateau < plateau_tol:
        mon.verdict = "bounded-dissipation"
    else:
        mon.verdict = "growing-dissipation"
    return mon, rec


# -- decay rates ----------------------------------------------------------------


@dataclass
class DecayFit:
    s: float
    window: tuple
    fitted_exponent: float
    predicted_exponent: float
    residual: float
    n_samples: int
    monotone_excess: float = 0.0

    @property
    def rate_ok(self) -> bool:
        return self.fitted_exponent <= self.predicted_exponent + 0.15

    @property
    def monotone_ok(self) -> bool:
        return self.monotone_excess <= 0.05


def predicted_exponent(s: float) -> float:
    """Exponent of the polynomial rate ``||u(t)||_{H^s} = o(t^{-(s - 1/2)/2})``."""
    return -(s - 0.5) / 2.0


def fit_power_law(times, values) -> tuple[float, float]:
    """Least-squares slope of ``log values`` against ``log times`` and the RMS residual."""
    lt = np.log(np.asarray(times, dtype=float))
    lv = np.log(np.asarray(values, dtype=float))
    A = np.vstack([lt, np.ones_like(lt)]).T
    coef, *_ = np.linalg.lstsq(A, lv, rcond=None)
    resid = lv - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(resid**2)))


def monotone_excess(times, values, s: float) -> float:
    """Largest relative rise of ``t^{(s-1/2)/2} ||u(t)||_{H^s}`` above its running minimum."""
    g = np.asarray(values) * np.asarray(times) ** (-predicted_exponent(s))
    run_min = np.minimum.accumulate(g)
    return float(np.max(g / run_min - 1.0))


def fit_decay(s: float, times, values) -> DecayFit:
    times = np.asarray(times, dtype=float)
    if len(times) < 8:
        raise ValueError("a decay fit needs at least 8 samples")
    slope, rms = fit_power_law(times, values)
    return DecayFit(
        s=s,
        window=(float(times[0]), float(times[-1])),
        fitted_exponent=slope,
        predicted_exponent=predicted_exponent(s),
        residual=rms,
        n_samples=len(times),
        monotone_excess=monotone_excess(times, values, s),
    )


def window_is_valid(grid: GridSpec, nu: float, t_hi: float, limit: float = 0.5) -> bool:
    return t_hi * nu * grid.xi_min**2 <= limit


@dataclass
class DecayStudy:
    fits: list
    window: tuple
    window_valid: bool
    reason: str
    record: TrajectoryRecord | None
    gevrey_ratio_final: float = math.nan


def run_decay_study(
    u0: SpectralField,
    cfg: IntegratorConfig,
    s_list: Sequence[float],
    a: float,
    window: tuple[float, float],
    n_samples: int = 16,
) -> DecayStudy:
    """Fit ``||u(t)||_{H^s}`` to power laws over a log-spaced window.

    The window must end before the spectral gap ``xi_min = 2 pi / L`` dominates
    (``t_hi nu xi_min^2 <= 0.5``); otherwise no fit is produced.
    """
    t_lo, t_hi = window
    if not 0 < t_lo < t_hi:
        raise ValueError(f"invalid window {window}")
    if n_samples < 8:
        raise ValueError("a decay fit needs at least 8 samples")
    if not window_is_valid(u0.grid, cfg.nu, t_hi):
        return DecayStudy([], window, False, "invalid-window: spectral gap regime", None)
    fit_times = np.geomspace(t_lo, t_hi, n_samples)
    t_end = max(cfg.t_end, t_hi)
    cfg = IntegratorConfig(cfg.dt, t_end, cfg.scheme, cfg.nu, cfg.cfl_guard, cfg.nonlinear)
    extra = np.linspace(0.0, t_end, 21)
    norms = [(float(s), 0.0) for s in s_list] + [(0.5, float(a))]
    rec = simulate(u0, cfg, sorted(set(fit_times) | set(extra)), norms=norms, gevrey_a=a)
    times = np.asarray(rec.times)
    sel = np.isin(times, fit_times)
    fits = [fit_decay(float(s), times[sel], rec.norm_series(s, 0.0)[sel]) for s in s_list]
    g = rec.norm_series(0.5, a)
    return DecayStudy(fits, window, True, rec.truncated or "ok", rec, float(g[-1] / g[0]))


# -- analyticity radius -------------------------------------------------------------


@dataclass
class RadiusStudy:
    times: list
    radii: list
    nu: float
    t_lo: float
    t_hi: float

    @property
    def growth(self) -> float:
        return self._at(self.t_hi) - self._at(self.t_lo)

    @property
    def required_growth(self) -> float:
        """``0.5 sqrt(nu t_hi)``: half the analytic gain ``e^{sqrt(t)|D|}`` at the window end."""
        return 0.5 * math.sqrt(self.nu * self.t_hi)

    def _at(self, t: float) -> float:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return self.radii[i]


def run_radius_study(u0: SpectralField, cfg: IntegratorConfig,
                     t_lo: float = 0.01, t_hi: float = 1.0, n_samples: int = 21) -> tuple[RadiusStudy, TrajectoryRecord]:
    times = sorted(set(np.geomspace(t_lo, t_hi, n_samples)) | {0.0})
    cfg = IntegratorConfig(cfg.dt, max(cfg.t_end, t_hi), cfg.scheme, cfg.nu, cfg.cfl_guard, cfg.nonlinear)
    rec = simulate(u0, cfg, times, norms=[(0.5, 0.0)], radius=True)
    study = RadiusStudy(list(rec.times), list(rec.analyticity_radius), cfg.nu, t_lo, t_hi)
    return study, rec


# -- stability ---------------------------------------------------------------------


@dataclass
class StabilityLedger:
    times: list
    w_norm_sq: list
    grad_w_accum: list
    u_quartic_accum: list
    gronwall_rhs: list
    bilinear_constant: float
    tail_slack: float
    gate_value: float
    gate_threshold: float
    truncated: str | None = None

    @property
    def lhs(self) -> np.ndarray:
        return np.asarray(self.w_norm_sq) + np.asarray(self.grad_w_accum)

    @property
    def margin(self) -> float:
        return float(np.min(np.asarray(self.gronwall_rhs) - self.lhs))

    @property
    def gate_passed(self) -> bool:
        return self.gate_value <= self.gate_threshold

    @property
    def infinite_horizon_rhs(self) -> float:
        """``||w0||^2 exp((C/2) int_0^inf ||u||^4_{H^1_{a,1}})`` with the truncated tail bound."""
        return self.w_norm_sq[0] * math.exp(0.5 * self.bilinear_constant * (self.u_quartic_accum[-1] + self.tail_slack))

    def rows(self):
        for i, t in enumerate(self.times):
            lhs = self.w_norm_sq[i] + self.grad_w_accum[i]
            yield (t, self.w_norm_sq[i], self.grad_w_accum[i], self.u_quartic_accum[i],
                   self.gronwall_rhs[i], self.gronwall_rhs[i] - lhs)


def run_stability_study(
    u0: SpectralField,
    v0: SpectralField,
    cfg: IntegratorConfig,
    a: float,
    c_emp: float | None = None,
    diag_times: Sequence[float] | None = None,
    seed: int = 0,
) -> StabilityLedger:
    """Evolve ``u`` and ``v`` side by side and account the Gronwall bound for ``w = v - u``.

    Along the run ``||w(t)||^2 + (nu/8) int_0^t ||grad w||^2`` is compared
    against ``||w0||^2 exp((C/2) int_0^t ||u||^4_{H^1_{a,1}})``; all norms are
    ``H^{1/2}_{a,1}``-based.  The perturbation gate
    ``||w0||^2 <= exp(-(C/2) int_0^inf ||u||^4) / 4`` is evaluated with the
    integral truncated at ``t_end`` plus the tail bound
    ``||u(t_end)||^4_{H^1_{a,1}} / (4 nu xi_min^2)``.
    """
    if u0.grid != v0.grid:
        raise GridMismatchError("stability study needs both initial data on one grid")
    grid = u0.grid
    if c_emp is None:
        c_emp, _ = bilinear_constant(grid, a, seed=seed)
    targets = _schedule(cfg.t_end, cfg.dt, diag_times)
    w32 = np.exp(log_weights(grid, 1.5, a))
    w12 = np.exp(log_weights(grid, 0.5, a))
    w1 = np.exp(log_weights(grid, 1.0, a))

    times, wsq, grad_acc, quart_acc = [], [], [], []
    g_acc = 0.0
    q_acc = 0.0
    e_prev = q_prev = None
    t_prev = 0.0
    truncated = None
    u_last = u0.coeffs
    try:
        for (t, uh, is_t), (_, vh, _) in zip(march(u0, cfg, targets), march(v0, cfg, targets)):
            e_w = mode_energy(vh - uh)
            q = float(np.sum(w1 * mode_energy(uh))) ** 2
            if e_prev is not None:
                h = t - t_prev
                g_acc += h * float(np.sum(w32 * log_mean(e_prev, e_w)))
                q_acc += h * float(log_mean(q_prev, q))
            e_prev, q_prev, t_prev = e_w, q, t
            u_last = uh
            if is_t:
                times.append(t)
                wsq.append(float(np.sum(w12 * e_w)))
                grad_acc.append(cfg.nu / 8.0 * g_acc)
                quart_acc.append(q_acc)
    except (CFLViolation, NonFiniteState) as exc:
        truncated = str(exc)
    rhs = [wsq[0] * math.exp(0.5 * c_emp * q) for q in quart_acc]
    h1_end = math.sqrt(float(np.sum(w1 * mode_energy(u_last))))
    tail = h1_end**4 / (4.0 * cfg.nu * grid.xi_min**2)
    gate_threshold = 0.25 * math.exp(-0.5 * c_emp * (quart_acc[-1] + tail))
    return StabilityLedger(
        times=times,
        w_norm_sq=wsq,
        grad_w_accum=grad_acc,
        u_quartic_accum=quart_acc,
        gronwall_rhs=rhs,
        bilinear_constant=c_emp,
        tail_slack=tail,
        gate_value=wsq[0],
        gate_threshold=gate_threshold,
        truncated=truncated,
    )
