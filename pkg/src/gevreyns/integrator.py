"""Integrating-factor time stepping of the periodic Navier-Stokes equations.

The heat semigroup is applied exactly and the projected nonlinearity
``Q(u, u) = -P div(u (x) u)`` explicitly.  With ``E(h) = exp(-nu h |xi|^2)`` the
IF-RK4 (Lawson) step reads::

    k1 = N(u)
    k2 = N(E(h/2) (u + h/2 k1))
    k3 = N(E(h/2) u + h/2 k2)
    k4 = N(E(h) u + h E(h/2) k3)
    u+ = E(h) u + h/6 (E(h) k1 + 2 E(h/2) (k2 + k3) + k4)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .norms import analyticity_radius, log_weights, mode_energy, weighted_sum
from .quadrature import log_mean
from .spectral import GridSpec, SpectralField, _nonlinear, divergence_max

SCHEMES = ("IF-RK4", "IF-Euler")


class CFLViolation(RuntimeError):
    """The advective step limit is exceeded; ``admissible_dt`` is the largest allowed step."""

    def __init__(self, dt: float, admissible_dt: float):
        self.dt = dt
        self.admissible_dt = admissible_dt
        super().__init__(f"dt = {dt:.3e} exceeds the advective limit {admissible_dt:.3e}")


class NonFiniteState(FloatingPointError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_end: float
    scheme: str = "IF-RK4"
    nu: float = 1.0
    cfl_guard: float = 0.5
    nonlinear: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not self.nu > 0:
            raise ValueError(f"viscosity must be positive, got {self.nu}")
        if not 0 < self.cfl_guard < 1:
            raise ValueError(f"cfl_guard must lie in (0, 1), got {self.cfl_guard}")


class _Stepper:
    def __init__(self, grid: GridSpec, cfg: IntegratorConfig):
        self.grid = grid
        self.cfg = cfg
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def factors(self, h: float):
        if h not in self._cache:
            lam = self.cfg.nu * self.grid.xi_sq
            self._cache[h] = (np.exp(-lam * h), np.exp(-lam * h / 2))
        return self._cache[h]

    def rhs(self, uh: np.ndarray):
        """``(N(u), max|u|)``; the heat-only regime has ``N = 0``."""
        if not self.cfg.nonlinear:
            return np.zeros_like(uh), math.nan
        return _nonlinear(self.grid, uh, return_speed=True)

    def check_cfl(self, h: float, speed: float) -> None:
        if not self.cfg.nonlinear or not speed > 0:
            return
        limit = self.cfg.cfl_guard * self.grid.spacing / speed
        if h > limit * (1 + 1e-12):
            raise CFLViolation(h, limit)

    def advance(self, uh: np.ndarray, h: float, n1: np.ndarray | None = None) -> np.ndarray:
        E, E2 = self.factors(h)
        if n1 is None:
            n1, speed = self.rhs(uh)
            self.check_cfl(h, speed)
        if not self.cfg.nonlinear:
            return E * uh
        if self.cfg.scheme == "IF-Euler":
            return E * (uh + h * n1)
        n2, _ = self.rhs(E2 * (uh + 0.5 * h * n1))
        n3, _ = self.rhs(E2 * uh + 0.5 * h * n2)
        n4, _ = self.rhs(E * uh + h * (E2 * n3))
        return E * uh + (h / 6.0) * (E * n1 + 2.0 * E2 * (n2 + n3) + n4)


def step(u: SpectralField, cfg: IntegratorConfig) -> SpectralField:
    """Advance ``u`` by one step of size ``cfg.dt``.

    Raises :class:`CFLViolation` (carrying the admissible step) when
    ``dt > cfl_guard * dx / max|u|`` and :class:`NonFiniteState` on NaN/inf.
    """
    out = _Stepper(u.grid, cfg).advance(u.coeffs, cfg.dt)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState("non-finite coefficients after step")
    return SpectralField(u.grid, out)


def _schedule(t_end: float, dt: float, diag_times: Sequence[float] | None) -> list[float]:
    if diag_times is None:
        m = max(1, min(100, int(math.ceil(t_end / dt - 1e-9))))
        diag_times = np.linspace(0.0, t_end, m + 1) if t_end > 0 else [0.0]
    times = sorted({float(t) for t in diag_times if 0.0 <= t <= t_end} | {0.0, float(t_end)})
    return times


def march(u0: SpectralField, cfg: IntegratorConfig, targets: Sequence[float]) -> Iterator[tuple]:
    """Yield ``(t, coeffs, is_target)`` after every step, starting with ``(0, u0, True)``.

    Each interval between consecutive targets is split into equal sub-steps of
    size at most ``cfg.dt`` so that every target time is hit exactly.
    """
    stepper = _Stepper(u0.grid, cfg)
    uh = np.array(u0.coeffs)
    t = 0.0
    yield t, uh, True
    for t_next in targets:
        if t_next <= t:
            continue
        m = int(math.ceil((t_next - t) / cfg.dt * (1 - 1e-12)))
        h = (t_next - t) / m
        t_start = t
        for i in range(1, m + 1):
            uh = stepper.advance(uh, h)
            if not np.all(np.isfinite(uh)):
                raise NonFiniteState(f"non-finite coefficients at t = {t_start + i * h:.6g}")
            t = t_next if i == m else t_start + i * h
            yield t, uh, i == m


@dataclass
class TrajectoryRecord:
    """Scheduled diagnostics of one run.

    ``dissipation_accum`` is ``int_0^t ||u||^2_{H^{3/2}_{a,1}}`` with ``a = gevrey_a``;
    ``l2_dissipation_accum`` is ``int_0^t ||grad u||^2_{L^2}`` and
    ``quartic_h1_accum`` is ``int_0^t ||u||^4_{H^1_{a,1}}``.  All running integrals
    are accumulated every step, not only at the scheduled times.
    """

    grid: GridSpec
    nu: float
    gevrey_a: float
    times: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    hs_norms: dict = field(default_factory=dict)
    dissipation_accum: list = field(default_factory=list)
    l2_dissipation_accum: list = field(default_factory=list)
    quartic_h1_accum: list = field(default_factory=list)
    analyticity_radius: list | None = None
    divergence: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    truncated: str | None = None

    def norm_series(self, s: float, a: float = 0.0) -> np.ndarray:
        return np.asarray(self.hs_norms[(float(s), float(a))])

    @property
    def final(self) -> SpectralField | None:
        return self.snapshots[-1] if self.snapshots else None


class _Accumulator:
    """Running per-step integrals of quadratic functionals via per-mode logarithmic means."""

    def __init__(self, grid: GridSpec, a: float):
        self.w_l2 = grid.xi_sq
        self.w_32 = np.exp(log_weights(grid, 1.5, a))
        self.w_1 = np.exp(log_weights(grid, 1.0, a))
        self.l2 = 0.0
        self.h32 = 0.0
        self.quartic = 0.0
        self._e = None
        self._q = None

    def start(self, uh):
        self._e = mode_energy(uh)
        self._q = float(np.sum(self.w_1 * self._e)) ** 2

    def update(self, uh, h):
        e = mode_energy(uh)
        lm = log_mean(self._e, e)
        self.l2 += h * float(np.sum(self.w_l2 * lm))
        self.h32 += h * float(np.sum(self.w_32 * lm))
        q = float(np.sum(self.w_1 * e)) ** 2
        self.quartic += h * float(log_mean(self._q, q))
        self._e, self._q = e, q


def simulate(
    u0: SpectralField,
    cfg: IntegratorConfig,
    diag_times: Sequence[float] | None = None,
    norms: Sequence[tuple[float, float]] = ((0.5, 0.0),),
    gevrey_a: float = 0.0,
    radius: bool = False,
    keep_snapshots: bool = False,
) -> TrajectoryRecord:
    """Integrate to ``cfg.t_end`` and record diagnostics at the scheduled times.

    A CFL violation or a non-finite state ends the run early; the partial
    record is returned with ``truncated`` set to the reason.
    """
    targets = _schedule(cfg.t_end, cfg.dt, diag_times)
    norms = list(dict.fromkeys((float(s), float(a)) for s, a in norms))
    rec = TrajectoryRecord(u0.grid, cfg.nu, gevrey_a, hs_norms={p: [] for p in norms})
    if radius:
        rec.analyticity_radius = []
    acc = _Accumulator(u0.grid, gevrey_a)
    t_prev = 0.0

    def record(t, uh):
        f = SpectralField(u0.grid, uh)
        e = mode_energy(uh)
        rec.times.append(t)
        rec.energy.append(math.fsum(e.ravel().tolist()))
        for s, a in norms:
            rec.hs_norms[(s, a)].append(math.sqrt(weighted_sum(u0.grid, e, s, a)))
        rec.dissipation_accum.append(acc.h32)
        rec.l2_dissipation_accum.append(acc.l2)
        rec.quartic_h1_accum.append(acc.quartic)
        rec.divergence.append(divergence_max(f))
        if radius:
            rec.analyticity_radius.append(analyticity_radius(f))
        if keep_snapshots:
            rec.snapshots.append(f)

    try:
        for t, uh, is_target in march(u0, cfg, targets):
            if t == 0.0:
                acc.start(uh)
            else:
                acc.update(uh, t - t_prev)
            t_prev = t
            if is_target:
                record(t, uh)
    except CFLViolation as exc:
        rec.truncated = f"cfl: {exc}; admissible dt = {exc.admissible_dt!r}"
    except NonFiniteState as exc:
        rec.truncated = f"non-finite: {exc}"
    return rec


def energy_balance_residual(record: TrajectoryRecord) -> float:
    """``max_i |E(t_{i+1}) - E(t_i) + 2 nu int_{t_i}^{t_{i+1}} ||grad u||^2| / E(0)``."""
    e = np.asarray(record.energy)
    if len(e) < 2 or e[0] == 0:
        return 0.0
    d = np.asarray(record.l2_dissipation_accum)
    res = np.abs(np.diff(e) + 2.0 * record.nu * np.diff(d))
    return float(res.max() / e[0])
