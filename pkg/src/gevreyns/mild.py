"""Heat semigroup, Duhamel integral and the Picard construction of mild solutions.

A mild solution on ``[0, T]`` solves ``u(t) = e^{t nu Delta} u0 + B(u, u)(t)`` with

    B(u, v)(t) = int_0^t e^{(t - s) nu Delta} Q(u, v)(s) ds,   Q(u, v) = -P div(u (x) v).

Trajectories are sampled on the uniform grid ``t_j = j T / M``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .norms import gevrey_norm, log_weights, mode_energy
from .quadrature import exp_trapezoid_weights, log_mean, trapezoid
from .spectral import GridSpec, SpectralField, _nonlinear

log = logging.getLogger(__name__)

QUADRATURES = ("exp_trapezoid", "trapezoid")


def heat_propagate(f: SpectralField, t: float, nu: float = 1.0) -> SpectralField:
    """Apply ``e^{t nu Delta}``: every mode is multiplied by ``exp(-nu t |xi|^2)``."""
    if t < 0:
        raise ValueError(f"heat flow is only defined forward in time, got t = {t}")
    if not nu > 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    return SpectralField(f.grid, f.coeffs * np.exp(-nu * t * f.grid.xi_sq))


def duhamel_integral(
    sources: Sequence[SpectralField],
    t: float,
    nu: float = 1.0,
    quadrature: str = "exp_trapezoid",
) -> SpectralField:
    """Approximate ``int_0^t e^{-nu (t-s)|xi|^2} g_hat(s) ds`` from samples on a uniform grid.

    ``sources[j]`` is ``g`` at ``s_j = j t / (len(sources) - 1)``.  The
    ``"trapezoid"`` rule is the composite trapezoid on the full integrand; the
    default ``"exp_trapezoid"`` interpolates only ``g`` linearly and integrates
    the heat kernel exactly.  Both are second order in the step.
    """
    sources = list(sources)
    if len(sources) < 2:
        raise ValueError("Duhamel quadrature needs at least two source snapshots")
    if quadrature not in QUADRATURES:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    grid = sources[0].grid
    h = t / (len(sources) - 1)
    step = _DuhamelStep(grid, h, nu, quadrature)
    acc = np.zeros_like(sources[0].coeffs)
    for prev, cur in zip(sources[:-1], sources[1:]):
        acc = step(acc, prev.coeffs, cur.coeffs)
    return SpectralField(grid, acc)


class _DuhamelStep:
    """One step of the recursion ``I_j = E I_{j-1} + w_old g_{j-1} + w_new g_j``."""

    def __init__(self, grid: GridSpec, h: float, nu: float, quadrature: str, support=None):
        lam = nu * grid.xi_sq
        if support is not None:
            lam = lam.reshape(-1)[support]
        self.decay = np.exp(-lam * h)
        if quadrature == "exp_trapezoid":
            self.w_old, self.w_new = exp_trapezoid_weights(lam, h)
        else:
            self.w_old, self.w_new = 0.5 * h * self.decay, 0.5 * h * np.ones_like(lam)

    def __call__(self, acc, g_old, g_new):
        return self.decay * acc + self.w_old * g_old + self.w_new * g_new


@dataclass
class MildTrajectory:
    """Time slices of a field restricted to a fixed set of lattice modes."""

    grid: GridSpec
    times: np.ndarray
    support: np.ndarray  # flat indices into the (n, n, n) lattice
    values: np.ndarray  # (len(times), 3, len(support))

    def field(self, j: int) -> SpectralField:
        c = np.zeros((3, self.grid.n**3), dtype=np.complex128)
        c[:, self.support] = self.values[j]
        return SpectralField(self.grid, c.reshape(3, *self.grid.shape))

    @property
    def final(self) -> SpectralField:
        return self.field(len(self.times) - 1)

    def snapshots(self) -> list[SpectralField]:
        return [self.field(j) for j in range(len(self.times))]

    def slice_norms(self, s: float, a: float = 0.0) -> np.ndarray:
        w = np.exp(log_weights(self.grid, s, a).reshape(-1)[self.support])
        return np.sqrt(np.einsum("k,jck->j", w, np.abs(self.values) ** 2))


@dataclass
class PicardReport:
    iterates: int
    residual_history: list
    contraction_factor: float
    converged: bool
    existence_time_used: float
    tolerance: float = 0.0
    mild_residual: float = math.nan
    resolution_flag: bool = False
    resolution_change: float = math.nan
    diagnosis: str = ""

    def to_text(self) -> str:
        lines = [
            "# picard report",
            f"iterates = {self.iterates}",
            f"converged = {str(self.converged).lower()}",
            f"contraction_factor = {self.contraction_factor!r}",
            f"existence_time_used = {self.existence_time_used!r}",
            f"tolerance = {self.tolerance!r}",
            f"mild_residual = {self.mild_residual!r}",
            f"resolution_flag = {str(self.resolution_flag).lower()}",
            f"resolution_change = {self.resolution_change!r}",
            "residual_history = " + ", ".join(repr(float(r)) for r in self.residual_history),
            f"diagnosis = {self.diagnosis}",
        ]
        return "\n".join(lines) + "\n"


def _lp_time_norm(slice_norms: np.ndarray, times: np.ndarray, p: float = 4.0) -> float:
    return trapezoid(slice_norms**p, times) ** (1.0 / p)


class _PicardMap:
    """``u -> e^{t nu Delta} u0 + B(u, u)`` on compressed trajectories."""

    def __init__(self, u0: SpectralField, times: np.ndarray, nu: float, quadrature: str, support):
        self.grid = u0.grid
        self.times = times
        self.support = support
        self.u0 = u0.coeffs.reshape(3, -1)[:, support]
        lam = nu * self.grid.xi_sq.reshape(-1)[support]
        self.heat = np.exp(-np.outer(times, lam))  # (M+1, S)
        h = times[1] - times[0] if len(times) > 1 else 0.0
        self.step = _DuhamelStep(self.grid, h, nu, quadrature, support)

    def expand(self, comp: np.ndarray) -> np.ndarray:
        c = np.zeros((3, self.grid.n**3), dtype=np.complex128)
        c[:, self.support] = comp
        return c.reshape(3, *self.grid.shape)

    def q(self, comp: np.ndarray) -> np.ndarray:
        return _nonlinear(self.grid, self.expand(comp)).reshape(3, -1)[:, self.support]

    def heat_flow(self) -> np.ndarray:
        return self.heat[:, None, :] * self.u0[None]

    def duhamel(self, traj: np.ndarray) -> np.ndarray:
        out = np.zeros_like(traj)
        acc = np.zeros_like(traj[0])
        g_old = self.q(traj[0])
        for j in range(1, len(self.times)):
            g_new = self.q(traj[j])
            acc = self.step(acc, g_old, g_new)
            out[j] = acc
            g_old = g_new
        return out

    def __call__(self, traj: np.ndarray) -> np.ndarray:
        return self.heat_flow() + self.duhamel(traj)


def _support(u0: SpectralField) -> np.ndarray:
    mask = u0.grid.dealias_mask | (mode_energy(u0) > 0)
    return np.flatnonzero(mask.reshape(-1))


def picard_solve(
    u0: SpectralField,
    T: float,
    a: float = 0.0,
    tol: float = 1e-12,
    max_iter: int = 20,
    steps: int = 128,
    nu: float = 1.0,
    quadrature: str = "exp_trapezoid",
    initial: str = "heat",
    check_resolution: bool = False,
) -> tuple[MildTrajectory, PicardReport]:
    """Fixed-point iteration ``u_{n+1} = e^{t nu Delta} u0 + B(u_n, u_n)`` on ``[0, T]``.

    Iterates are compared in the discretized ``L^4_T(H^1_{a,1})`` norm.  A run
    that does not reach ``tol`` within ``max_iter`` is returned with
    ``converged=False`` and a diagnosis instead of raising.
    """
    if not T > 0:
        raise ValueError(f"existence time must be positive, got {T}")
    if initial not in ("heat", "zero"):
        raise ValueError(f"unknown initial iterate {initial!r}")
    times = np.linspace(0.0, T, steps + 1)
    support = _support(u0)
    phi = _PicardMap(u0, times, nu, quadrature, support)
    w1 = np.exp(log_weights(u0.grid, 1.0, a).reshape(-1)[support])

    def l4(diff):
        return _lp_time_norm(np.sqrt(np.einsum("k,jck->j", w1, np.abs(diff) ** 2)), times)

    current = phi.heat_flow() if initial == "heat" else np.zeros((len(times), 3, len(support)), complex)
    history = []
    converged = False
    n = 0
    while n < max_iter:
        nxt = phi(current)
        n += 1
        r = l4(nxt - current)
        history.append(r)
        current = nxt
        log.debug("picard iterate %d residual %.3e", n, r)
        if r <= tol:
            converged = True
            break
        if not np.isfinite(r):
            break
    ratios = [history[i + 1] / history[i] for i in range(len(history) - 1) if history[i] > 0]
    report = PicardReport(
        iterates=n,
        residual_history=history,
        contraction_factor=max(ratios) if ratios else 0.0,
        converged=converged,
        existence_time_used=T,
        tolerance=tol,
    )
    if converged:
        report.mild_residual = l4(phi(current) - current)
        report.diagnosis = "converged"
    elif history and not np.isfinite(history[-1]):
        report.diagnosis = "diverged: residual became non-finite"
    elif len(history) > 1 and history[-1] >= history[-2]:
        report.diagnosis = "no contraction: data too large for this existence time"
    else:
        report.diagnosis = f"slow contraction: tolerance not reached in {max_iter} iterates"

    traj = MildTrajectory(u0.grid, times, support, current)
    if check_resolution and converged:
        fine, _ = picard_solve(u0, T, a, tol, max_iter, 2 * steps, nu, quadrature, initial)
        heat_T = heat_propagate(u0, T, nu)
        coarse_b = gevrey_norm(traj.final - heat_T, 0.5, a)
        fine_b = gevrey_norm(fine.final - heat_T, 0.5, a)
        change = abs(coarse_b - fine_b) / fine_b if fine_b > 0 else 0.0
        report.resolution_change = change
        report.resolution_flag = change > 0.1
    return traj, report


# -- large data: frequency splitting --------------------------------------------------


@dataclass
class FrequencySplit:
    rho: float
    high_tail_norm: float
    local_time_bound: float


def _shell_tails(u0: SpectralField, a: float):
    """Distinct radii carrying energy and the squared tail norms beyond each of them."""
    e = mode_energy(u0)
    nz = e > 0
    nz[0, 0, 0] = False
    r = u0.grid.xi_abs[nz]
    w = np.exp(log_weights(u0.grid, 0.5, a)[nz]) * e[nz]
    radii, inv = np.unique(r, return_inverse=True)
    per_shell = np.bincount(inv, weights=w, minlength=len(radii))
    # tail[i] = energy strictly beyond radii[i]; candidate 0 prepended
    suffix = np.concatenate([np.cumsum(per_shell[::-1])[::-1], [0.0]])
    return np.concatenate([[0.0], radii]), suffix


def local_existence_time(u0: SpectralField, a: float, C0: float) -> FrequencySplit:
    """Smallest shell radius ``rho`` whose ``H^{1/2}_{a,1}`` tail is below ``1 / (8 C0)``.

    The local time is ``(1 / (8 C0 rho^2 ||u0||_{H^{1/2}_{a,1}}))^4``.
    """
    if not C0 > 0:
        raise ValueError("C0 must be positive")
    norm = gevrey_norm(u0, 0.5, a)
    if norm == 0:
        raise ValueError("local existence time is undefined for zero data")
    candidates, tails = _shell_tails(u0, a)
    threshold = 1.0 / (8.0 * C0)
    # tails is nonincreasing in the candidate index: bisect for the first admissible one
    lo, hi = 0, len(candidates) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if math.sqrt(tails[mid]) < threshold:
            hi = mid
        else:
            lo = mid + 1
    rho = float(candidates[lo])
    if rho == 0.0:
        # the whole field already fits under the threshold; keep rho positive
        rho = float(candidates[1])
    t_bound = (1.0 / (8.0 * C0 * rho**2 * norm)) ** 4
    return FrequencySplit(rho=rho, high_tail_norm=math.sqrt(tails[lo]), local_time_bound=t_bound)


def split_by_frequency(u0: SpectralField, rho: float) -> tuple[SpectralField, SpectralField]:
    """``(low, high)`` parts with ``|xi| <= rho`` and ``|xi| > rho``."""
    low = u0.grid.xi_abs <= rho
    return SpectralField(u0.grid, u0.coeffs * low), SpectralField(u0.grid, u0.coeffs * ~low)


# -- estimate checks -----------------------------------------------------------------


def heat_l4_h1_norm(u0: SpectralField, T: float, a: float = 0.0, nu: float = 1.0) -> float:
    """``||e^{t nu Delta} u0||_{L^4_T(H^1_{a,1})}`` by exact integration shell by shell."""
    e = mode_energy(u0)
    nz = e > 0
    nz[0, 0, 0] = False
    if not np.any(nz):
        return 0.0
    lam = u0.grid.xi_sq[nz]
    w = np.exp(log_weights(u0.grid, 1.0, a)[nz]) * e[nz]
    shells, inv = np.unique(lam, return_inverse=True)
    W = np.bincount(inv, weights=w)
    rate = 2.0 * nu * (shells[:, None] + shells[None, :])
    integral = np.sum(np.outer(W, W) * (-np.expm1(-rate * T)) / rate)
    return float(integral) ** 0.25


def smoothing_estimate_check(u0: SpectralField, T: float, a: float = 0.0, nu: float = 1.0) -> float:
    """``||e^{t Delta} u0||_{L^4_T(H^1_{a,1})} / ||u0||_{H^{1/2}_{a,1}}``; at most 1 for ``nu = 1``."""
    den = gevrey_norm(u0, 0.5, a)
    if den == 0:
        return 0.0
    return heat_l4_h1_norm(u0, T, a, nu) / den


def _running_quadratic_integral(traj: MildTrajectory, s: float, a: float) -> np.ndarray:
    """``int_0^{t_j} ||u||^2_{H^s_{a,1}}`` with the per-mode logarithmic-mean rule."""
    w = np.exp(log_weights(traj.grid, s, a).reshape(-1)[traj.support])
    e = np.sum(np.abs(traj.values) ** 2, axis=1)  # (J, S)
    dt = np.diff(traj.times)
    inc = np.array([dt[j] * np.dot(w, log_mean(e[j], e[j + 1])) for j in range(len(dt))])
    return np.concatenate([[0.0], np.cumsum(inc)])


def energy_inequality_margin(traj: MildTrajectory, a: float, c_emp: float, nu: float = 1.0) -> np.ndarray:
    """Per-slice ``RHS - LHS`` of

    ``||u(t)||^2_{1/2} + 2 nu int ||u||^2_{3/2} <= ||u0||^2_{1/2} + C int ||u||_{1/2} ||u||^2_{3/2}``
    (all norms in ``H^s_{a,1}``).
    """
    n12 = traj.slice_norms(0.5, a)
    n32 = traj.slice_norms(1.5, a)
    diss = _running_quadratic_integral(traj, 1.5, a)
    cubic = n12 * n32**2
    dt = np.diff(traj.times)
    cubic_int = np.concatenate([[0.0], np.cumsum(dt * log_mean(cubic[:-1], cubic[1:]))])
    lhs = n12**2 + 2.0 * nu * diss
    rhs = n12[0] ** 2 + c_emp * cubic_int
    return rhs - lhs


def sup_bound_ratio(traj: MildTrajectory, a: float) -> float:
    """``sup-in-time H^{1/2}_{a,1} norm / (sqrt(2) ||u0|| + ||Q(u,u)||_{L^2_T(H^{-1/2}_{a,1})})``."""
    snaps = traj.snapshots()
    from .norms import sup_in_time_norm

    lhs = sup_in_time_norm(snaps, 0.5, a)
    fq = [gevrey_norm(SpectralField(traj.grid, _nonlinear(traj.grid, f.coeffs)), -0.5, a) for f in snaps]
    rhs = math.sqrt(2.0) * gevrey_norm(snaps[0], 0.5, a) + math.sqrt(trapezoid(np.square(fq), traj.times))
    return lhs / rhs if rhs > 0 else 0.0


def differential_residual(traj: MildTrajectory, nu: float = 1.0) -> float:
    """Max over interior slices of ``||d_t u + nu|xi|^2 u - Q(u,u)||`` (central differences, L^2)."""
    grid = traj.grid
    h = traj.times[1] - traj.times[0]
    lam = nu * grid.xi_sq.reshape(-1)[traj.support]
    worst = 0.0
    for j in range(1, len(traj.times) - 1):
        dudt = (traj.values[j + 1] - traj.values[j - 1]) / (2 * h)
        q = _nonlinear(grid, traj.field(j).coeffs).reshape(3, -1)[:, traj.support]
        res = dudt + lam * traj.values[j] - q
        worst = max(worst, float(np.sqrt(np.sum(np.abs(res) ** 2))))
    return worst


def trajectory_distance(a_traj: MildTrajectory, b_traj: MildTrajectory, s: float = 1.0, a: float = 0.0) -> float:
    """Discretized ``L^4_T(H^s_{a,1})`` distance between two trajectories on the same slices."""
    if not np.array_equal(a_traj.support, b_traj.support) or not np.allclose(a_traj.times, b_traj.times):
        raise ValueError("trajectories are sampled differently")
    diff = MildTrajectory(a_traj.grid, a_traj.times, a_traj.support, a_traj.values - b_traj.values)
    return _lp_time_norm(diff.slice_norms(s, a), a_traj.times)
