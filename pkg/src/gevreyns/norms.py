"""Sobolev-Gevrey norms on the lattice and ratio checks of the associated functional inequalities.

The norm of ``f`` in ``H^s_{a,1}`` is the lattice sum

    ||f||^2 = sum_{k != 0} |xi|^{2s} exp(2 a |xi|) |f_hat(k)|^2,   xi = (2 pi / L) k.

Inequalities ``LHS <= C * RHS`` are never assumed to hold with a known ``C``;
they are evaluated as ratios and the largest observed ratio is recorded in an
:class:`EmpiricalConstantReport`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .spectral import (
    GridSpec,
    SpectralField,
    nonlinear_term,
    pointwise_product,
    random_field,
)

_LOG_MAX = math.log(np.finfo(float).max)


class GevreyOverflowError(OverflowError):
    """A norm term is not representable in double precision."""

    def __init__(self, mode, log_term):
        self.mode = tuple(int(x) for x in mode)
        self.log_term = float(log_term)
        super().__init__(
            f"norm term at lattice mode {self.mode} overflows (log of term = {self.log_term:.1f})"
        )


class ParameterDomainError(ValueError):
    pass


@dataclass(frozen=True)
class GevreyParams:
    s: float
    a: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.s):
            raise ParameterDomainError(f"Sobolev index must be finite, got {self.s}")
        if not (self.a >= 0 and np.isfinite(self.a)):
            raise ParameterDomainError(f"Gevrey radius must be a finite nonnegative number, got {self.a}")

    def require_banach(self) -> "GevreyParams":
        """Assert ``s < 3/2``, below which the homogeneous spaces are complete."""
        if not self.s < 1.5:
            raise ParameterDomainError(f"s = {self.s} is not below 3/2")
        return self


def _params(s, a) -> GevreyParams:
    if isinstance(s, GevreyParams):
        return s
    return GevreyParams(float(s), float(a))


def log_weights(grid: GridSpec, s: float, a: float) -> np.ndarray:
    """``log(|xi|^{2s} e^{2a|xi|})`` with ``-inf`` at the zero mode."""
    with np.errstate(divide="ignore"):
        lx = np.log(grid.xi_abs)
    out = 2.0 * s * lx + 2.0 * a * grid.xi_abs
    out[0, 0, 0] = -np.inf
    return out


def mode_weights(grid: GridSpec, s: float, a: float = 0.0) -> np.ndarray:
    """Per-mode weight ``|xi|^{2s} e^{2a|xi|}``, zero at ``k = 0``; raises if not representable."""
    lw = log_weights(grid, s, a)
    top = np.max(lw)
    if top > _LOG_MAX:
        idx = np.unravel_index(np.argmax(lw), lw.shape)
        raise GevreyOverflowError(grid.k_int[(slice(None), *idx)], top)
    return np.exp(lw)


def mode_energy(f: SpectralField | np.ndarray) -> np.ndarray:
    c = f.coeffs if isinstance(f, SpectralField) else f
    return np.sum(c.real**2 + c.imag**2, axis=0)


def weighted_sum(grid: GridSpec, energy: np.ndarray, s: float, a: float) -> float:
    """Compensated ``sum_k w_k e_k`` over modes carrying energy, with an overflow diagnostic."""
    nz = energy > 0
    nz[0, 0, 0] = False
    if not np.any(nz):
        return 0.0
    lw = log_weights(grid, s, a)[nz]
    lt = lw + np.log(energy[nz])
    top = np.max(lt)
    if top > _LOG_MAX - 1.0:
        idx = np.argwhere(nz)[np.argmax(lt)]
        raise GevreyOverflowError(grid.k_int[(slice(None), *idx)], top)
    terms = np.exp(lw) * energy[nz]
    return math.fsum(terms.tolist())


def gevrey_norm(f: SpectralField, s, a: float = 0.0) -> float:
    """``||f||_{H^s_{a,1}}``; ``s`` may be a float or a :class:`GevreyParams`."""
    p = _params(s, a)
    return math.sqrt(weighted_sum(f.grid, mode_energy(f), p.s, p.a))


def sobolev_norm(f: SpectralField, s: float) -> float:
    return gevrey_norm(f, s, 0.0)


def sup_in_time_norm(snapshots: Sequence[SpectralField], s: float, a: float = 0.0) -> float:
    """``(sum_k |xi|^{2s} e^{2a|xi|} [max_t |f_hat(t,k)|]^2)^{1/2}`` over stored snapshots."""
    snapshots = list(snapshots)
    if not snapshots:
        raise ValueError("sup-in-time norm of an empty trajectory")
    grid = snapshots[0].grid
    peak = np.zeros(grid.shape)
    for f in snapshots:
        if f.grid != grid:
            raise ValueError("snapshots do not share a grid")
        np.maximum(peak, mode_energy(f), out=peak)
    return math.sqrt(weighted_sum(grid, peak, s, a))


def gevrey_series(f: SpectralField, a: float, rtol: float = 1e-17, max_terms: int = 2000):
    """Evaluate ``sum_k (2a)^k / k! ||f||^2_{H^{(1+k)/2}}`` until terms stop contributing.

    Returns ``(value, n_terms)``.  For band-limited ``f`` this equals
    ``gevrey_norm(f, 1/2, a) ** 2``.
    """
    e = mode_energy(f)
    terms = []
    coef = 1.0
    total = 0.0
    for k in range(max_terms):
        if k:
            coef *= 2.0 * a / k
        t = coef * weighted_sum(f.grid, e, (1 + k) / 2.0, 0.0)
        terms.append(t)
        total = math.fsum(terms)
        # the summand peaks near k ~ 2 a |xi|max and then decays super-geometrically
        if k > 2 * a * float(f.grid.xi_abs.max()) + 2 and t <= rtol * total:
            break
        if a == 0:
            break
    return total, len(terms)


def safe_ratio(num: float, den: float) -> float:
    """``num / den`` with the convention 0/0 = 0."""
    if num == 0.0:
        return 0.0
    if den == 0.0:
        return math.inf
    return num / den


# -- inequality checks ------------------------------------------------------------


def check_product_law(u: SpectralField, v: SpectralField, s: float, t: float, a: float,
                      strict: bool = True) -> float:
    """``||uv||_{H^{s+t-3/2}_{a,1}} / (||u||_{H^s_{a,1}} ||v||_{H^t_{a,1}})``.

    ``uv`` is the component-wise product computed without aliasing.  With
    ``strict=False`` the endpoint ``s = 3/2`` (or ``t``) is accepted; band-limited
    fields keep every norm finite there.
    """
    if strict and not (s < 1.5 and t < 1.5):
        raise ParameterDomainError(f"product law needs s < 3/2 and t < 3/2, got ({s}, {t})")
    if not s + t > 0:
        raise ParameterDomainError(f"product law needs s + t > 0, got {s + t}")
    GevreyParams(s, a)
    uv = pointwise_product(u, v)
    num = gevrey_norm(uv, s + t - 1.5, a)
    den = gevrey_norm(u, s, a) * gevrey_norm(v, t, a)
    return safe_ratio(num, den)


def check_bilinear_estimate(u: SpectralField, v: SpectralField, a: float) -> float:
    """``||Q(u,v)||_{H^{-1/2}_{a,1}} / (||u||_{H^1_{a,1}} ||v||_{H^1_{a,1}})``."""
    GevreyParams(1.0, a)
    num = gevrey_norm(nonlinear_term(u, v), -0.5, a)
    den = gevrey_norm(u, 1.0, a) * gevrey_norm(v, 1.0, a)
    return safe_ratio(num, den)


def interpolation_terms(f: SpectralField, p: float, a: float = 0.0) -> tuple[float, float]:
    """``(LHS, RHS)`` of ``||f||_{1/2+2/p} <= ||f||_{1/2}^{1-2/p} ||f||_{3/2}^{2/p}``."""
    if not p >= 2:
        raise ParameterDomainError(f"interpolation exponent must satisfy p >= 2, got {p}")
    theta = 2.0 / p
    lhs = gevrey_norm(f, 0.5 + theta, a)
    rhs = gevrey_norm(f, 0.5, a) ** (1 - theta) * gevrey_norm(f, 1.5, a) ** theta
    return lhs, rhs


def interpolation_check(f: SpectralField, p: float, a: float = 0.0) -> float:
    """Gap ``RHS - LHS`` of the Hölder interpolation inequality; nonnegative up to rounding."""
    lhs, rhs = interpolation_terms(f, p, a)
    return rhs - lhs


# -- sweeps ------------------------------------------------------------------------


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for sample ``index`` of a sweep; independent of execution order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


@dataclass
class EmpiricalConstantReport:
    """Largest observed ``LHS / RHS`` of an inequality over a randomized sweep.

    For the interpolation inequality, whose sharp constant is 1, ``max_ratio``
    records the worst relative violation ``max(0, (LHS - RHS) / RHS)`` instead;
    the plain ratio maximum is kept in ``extras``.
    """

    inequality_id: str
    num_samples: int
    max_ratio: float
    witness: tuple
    params: dict = field(default_factory=dict)
    seed: int = 0
    witness_index: int = -1
    ratios: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.max_ratio >= 0:
            raise ValueError("max_ratio must be nonnegative")

    def reevaluate(self) -> float:
        """Recompute the tracked quantity on the stored witness."""
        return _EVALUATORS[self.inequality_id](self.witness, self.params)[0]

    def to_text(self) -> str:
        lines = [
            "# empirical constant report",
            f"inequality_id = {self.inequality_id}",
            f"num_samples = {self.num_samples}",
            f"max_ratio = {self.max_ratio!r}",
            f"seed = {self.seed}",
            f"witness_index = {self.witness_index}",
        ]
        for k in sorted(self.params):
            lines.append(f"param.{k} = {self.params[k]!r}")
        for k in sorted(self.extras):
            lines.append(f"extra.{k} = {self.extras[k]!r}")
        return "\n".join(lines) + "\n"


def _eval_product(fields, params):
    u, v = fields
    r = check_product_law(u, v, params["s"], params["t"], params["a"],
                          strict=params.get("strict", True))
    return r, r, None


def _eval_bilinear(fields, params):
    u, v = fields
    r = check_bilinear_estimate(u, v, params["a"])
    return r, r, None


def _eval_interpolation(fields, params):
    (f,) = fields
    lhs, rhs = interpolation_terms(f, params["p"], params["a"])
    violation = max(0.0, (lhs - rhs) / rhs) if rhs > 0 else 0.0
    return violation, safe_ratio(lhs, rhs), rhs - lhs


_EVALUATORS: dict[str, Callable] = {
    "product": _eval_product,
    "bilinear": _eval_bilinear,
    "interpolation": _eval_interpolation,
}

INEQUALITIES = tuple(_EVALUATORS)


def _sample_fields(inequality: str, grid: GridSpec, rng, shell):
    if inequality == "interpolation":
        return (random_field(grid, rng, shell),)
    return (random_field(grid, rng, shell), random_field(grid, rng, shell))


def run_sweep(
    inequality: str,
    samples: int,
    seed: int,
    params: dict,
    grid: GridSpec | None = None,
    shell_radius: float = 4.0,
) -> EmpiricalConstantReport:
    """Evaluate one inequality on ``samples`` random band-limited fields.

    Sample ``i`` is drawn from ``sample_rng(seed, i)`` so the report does not
    depend on how the samples are scheduled.
    """
    if inequality not in _EVALUATORS:
        raise ValueError(f"unknown inequality {inequality!r}; expected one of {INEQUALITIES}")
    if samples < 1:
        raise ValueError("a sweep needs at least one sample")
    grid = grid or GridSpec(16)
    evaluate = _EVALUATORS[inequality]
    tracked, plain, gaps = [], [], []
    best, best_idx, best_fields = -1.0, -1, None
    for i in range(samples):
        fields = _sample_fields(inequality, grid, sample_rng(seed, i), (1.0, shell_radius))
        q, r, gap = evaluate(fields, params)
        if not np.isfinite(q):
            raise FloatingPointError(f"{inequality} sweep produced a non-finite ratio at sample {i}")
        tracked.append(q)
        plain.append(r)
        if gap is not None:
            gaps.append(gap)
        if q > best:
            best, best_idx, best_fields = q, i, fields
    extras = {"max_plain_ratio": max(plain), "min_plain_ratio": min(plain),
              "shell_radius": shell_radius, "grid_n": grid.n, "box_period": grid.box_period}
    if gaps:
        extras["min_gap"] = min(gaps)
    return EmpiricalConstantReport(
        inequality_id=inequality,
        num_samples=samples,
        max_ratio=best,
        witness=best_fields,
        params=dict(params),
        seed=seed,
        witness_index=best_idx,
        ratios=plain if inequality != "interpolation" else tracked,
        extras=extras,
    )


def default_sweep_params(inequality: str) -> list[dict]:
    """Parameter sets swept by default for each inequality."""
    if inequality == "product":
        return [
            {"s": 0.5, "t": 0.5, "a": 0.2},
            {"s": 1.0, "t": 1.0, "a": 0.2},
            {"s": 1.5, "t": 0.5, "a": 0.2, "strict": False},
        ]
    if inequality == "bilinear":
        return [{"a": 0.5}]
    return [{"p": p, "a": 0.0} for p in (3.0, 4.0, 6.0)]


def relative_change(x: float, y: float) -> float:
    return abs(x - y) / max(abs(x), abs(y), np.finfo(float).tiny)


def analyticity_radius(f: SpectralField, cap: float = 10.0, xtol: float = 1e-12) -> float:
    """Largest ``alpha >= 0`` with ``||f||_{H^{1/2}_{alpha,1}} <= cap * ||f||_{H^{1/2}}``.

    The zero field has no finite radius and returns ``math.inf``.  For a field
    supported on the single shell ``|xi| = xi0`` the radius is ``ln(cap) / xi0``.
    """
    from scipy.optimize import brentq
    from scipy.special import logsumexp

    e = mode_energy(f)
    nz = e > 0
    nz[0, 0, 0] = False
    if not np.any(nz):
        return math.inf
    r = f.grid.xi_abs[nz]
    base = np.log(r) + np.log(e[nz])
    target = logsumexp(base) + 2.0 * math.log(cap)

    def excess(alpha):
        return logsumexp(base + 2.0 * alpha * r) - target

    hi = math.log(cap) / float(r.min())
    if excess(hi) <= 0.0:
        return hi
    return float(brentq(excess, 0.0, hi, xtol=xtol, rtol=4 * np.finfo(float).eps))
