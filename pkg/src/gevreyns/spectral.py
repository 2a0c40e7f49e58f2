"""Frequency lattice, spectral velocity fields and the dealiased Navier-Stokes bilinear term.

Fields live on the periodic box ``[0, L)^3`` and are stored as dense complex
coefficient arrays of shape ``(3, n, n, n)`` in FFT ordering, i.e. index ``i``
along an axis carries the integer frequency ``fftfreq(n, 1/n)[i]`` which lies in
``[-n/2, n/2)``.  The physical frequency of lattice point ``k`` is
``xi = (2 pi / L) k``.

Transform normalization::

    u(x) = sum_k u_hat(k) exp(i xi(k) . x)          (to_physical, no prefactor)
    u_hat(k) = n^-3 sum_x u(x) exp(-i xi(k) . x)     (to_spectral)
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import scipy.fft as sfft

AXES = (-3, -2, -1)


class GridMismatchError(ValueError):
    """Two fields (or a field and its storage) disagree on the lattice."""


@dataclass(frozen=True)
class GridSpec:
    """Cubic frequency lattice of ``n`` modes per axis on a box of period ``box_period``.

    A lattice point is retained by the dealiasing filter when every component
    satisfies ``|k_i| < dealias_fraction * n / 2``.  With the default 2/3 this is
    the Orszag rule: products of two retained fields alias only onto discarded
    modes, so pseudo-spectral products are exact truncated convolutions.
    """

    n: int
    box_period: float = 2.0 * np.pi
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4 or self.n % 2:
            raise ValueError(f"n_modes_per_axis must be an even integer >= 4, got {self.n}")
        if not self.box_period > 0 or not np.isfinite(self.box_period):
            raise ValueError(f"box_period must be positive, got {self.box_period}")
        if not 0.0 < self.dealias_fraction <= 1.0:
            raise ValueError(f"dealias_fraction must lie in (0, 1], got {self.dealias_fraction}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def scale(self) -> float:
        """Physical frequency of the unit lattice step, ``2 pi / L``."""
        return 2.0 * np.pi / self.box_period

    @property
    def xi_min(self) -> float:
        return self.scale

    @cached_property
    def k_int(self) -> np.ndarray:
        """Integer lattice frequencies, shape ``(3, n, n, n)``."""
        k1 = np.fft.fftfreq(self.n, 1.0 / self.n).astype(np.int64)
        return np.stack(np.meshgrid(k1, k1, k1, indexing="ij"))

    @cached_property
    def xi(self) -> np.ndarray:
        """Physical frequencies ``(2 pi / L) k``, shape ``(3, n, n, n)``."""
        return self.scale * self.k_int

    @cached_property
    def xi_sq(self) -> np.ndarray:
        return np.sum(self.xi**2, axis=0)

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(self.xi_sq)

    @cached_property
    def cutoff(self) -> int:
        """Largest retained ``|k_i|``."""
        bound = self.dealias_fraction * self.n / 2.0
        c = int(np.ceil(bound)) - 1
        return min(c, self.n // 2 - 1)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        return np.all(np.abs(self.k_int) <= self.cutoff, axis=0)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """Points with some component equal to ``-n/2`` (they have no partner ``-k``)."""
        return np.any(self.k_int == -self.n // 2, axis=0)

    @cached_property
    def _inv_xi_sq(self) -> np.ndarray:
        out = np.zeros(self.shape)
        nz = self.xi_sq > 0
        out[nz] = 1.0 / self.xi_sq[nz]
        return out

    @cached_property
    def spacing(self) -> float:
        return self.box_period / self.n

    def padded(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.n * factor, self.box_period, self.dealias_fraction)

    def describe(self) -> str:
        return f"n={self.n} L={self.box_period!r} dealias={self.dealias_fraction!r}"


def _check_coeffs(grid: GridSpec, coeffs: np.ndarray) -> None:
    if coeffs.shape != (3, *grid.shape):
        raise GridMismatchError(
            f"coefficient storage {coeffs.shape} does not match grid {(3, *grid.shape)}"
        )


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Three-component Fourier coefficients ``u_hat(k)`` of a real periodic velocity field.

    Instances are immutable; arithmetic returns new fields.
    """

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        _check_coeffs(self.grid, c)
        if c is self.coeffs or np.shares_memory(c, self.coeffs):
            c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "SpectralField":
        return cls(grid, np.zeros((3, *grid.shape), dtype=np.complex128))

    @classmethod
    def from_modes(cls, grid: GridSpec, modes: Mapping[Sequence[int], Sequence[complex]]) -> "SpectralField":
        """Build a real field from ``{k: u_hat(k)}``; the conjugate partner ``-k`` is filled in.

        Listing both ``k`` and ``-k`` is allowed when the values are consistent.
        """
        c = np.zeros((3, *grid.shape), dtype=np.complex128)
        n = grid.n
        for k, vec in modes.items():
            kk = tuple(int(x) for x in k)
            if any(not -n // 2 < x < n // 2 for x in kk):
                raise ValueError(f"mode {kk} is outside the conjugate-symmetric lattice")
            idx = tuple(x % n for x in kk)
            nidx = tuple(-x % n for x in kk)
            v = np.asarray(vec, dtype=np.complex128)
            if idx == nidx:
                if np.any(np.abs(v.imag) > 0):
                    raise ValueError("the zero mode of a real field must be real")
                c[(slice(None), *idx)] = v
                continue
            c[(slice(None), *idx)] = v
            c[(slice(None), *nidx)] = np.conj(v)
        return cls(grid, c)

    @property
    def zero_mean(self) -> bool:
        return bool(np.all(self.coeffs[:, 0, 0, 0] == 0))

    def is_divergence_free(self, rtol: float = 1e-12) -> bool:
        return divergence_max(self) <= rtol

    def hermitian_error(self) -> float:
        """Max ``|u_hat(-k) - conj(u_hat(k))|`` over points that have a partner."""
        d = np.abs(self.coeffs - np.conj(flip_k(self.coeffs)))
        d[:, self.grid.nyquist_mask] = 0.0
        return float(d.max())

    def copy_with(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.grid, coeffs)

    def _same_grid(self, other: "SpectralField") -> None:
        if other.grid != self.grid:
            raise GridMismatchError(f"{self.grid.describe()} vs {other.grid.describe()}")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._same_grid(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._same_grid(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, alpha: float) -> "SpectralField":
        return SpectralField(self.grid, alpha * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)


@dataclass(frozen=True, eq=False)
class PhysicalField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape[-3:] != self.grid.shape:
            raise GridMismatchError(f"values {v.shape} do not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("physical field contains non-finite values")
        object.__setattr__(self, "values", v)


def flip_k(a: np.ndarray) -> np.ndarray:
    """Reindex ``a[..., k]`` to ``a[..., -k mod n]`` over the last three axes."""
    return np.roll(np.flip(a, axis=AXES), 1, axis=AXES)


def hermitian_part(coeffs: np.ndarray) -> np.ndarray:
    """Coefficients of the real part of the field; Nyquist planes are cleared."""
    out = 0.5 * (coeffs + np.conj(flip_k(coeffs)))
    n = coeffs.shape[-1]
    k1 = np.fft.fftfreq(n, 1.0 / n)
    nyq = np.where(k1 == -n // 2)[0][0]
    out[..., nyq, :, :] = 0
    out[..., :, nyq, :] = 0
    out[..., nyq] = 0
    return out


# -- transforms ---------------------------------------------------------------


def _half_to_full(grid: GridSpec, half: np.ndarray) -> np.ndarray:
    """Rebuild the dense spectrum from an ``rfftn`` half-spectrum of a real field."""
    n = grid.n
    h = n // 2
    full = np.empty((*half.shape[:-1], n), dtype=np.complex128)
    full[..., : h + 1] = half
    neg = (-np.arange(n)) % n
    mirrored = half[..., neg, :, :][..., :, neg, :]
    full[..., h + 1 :] = np.conj(mirrored[..., h - 1 : 0 : -1])
    return full


def _phys(grid: GridSpec, coeffs: np.ndarray) -> np.ndarray:
    n = grid.n
    half = coeffs[..., : n // 2 + 1]
    return sfft.irfftn(half, s=grid.shape, axes=AXES) * n**3


def _spec(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    half = sfft.rfftn(values, axes=AXES) / grid.n**3
    return _half_to_full(grid, half)


def to_physical(f: SpectralField) -> PhysicalField:
    """Evaluate ``sum_k u_hat(k) exp(i xi.x)`` on the ``n^3`` grid ``x_j = j L / n``."""
    if not np.all(np.isfinite(f.coeffs)):
        raise ValueError("spectral field contains non-finite coefficients")
    return PhysicalField(f.grid, _phys(f.grid, f.coeffs))


def to_spectral(g: PhysicalField) -> SpectralField:
    if not np.all(np.isfinite(g.values)):
        raise ValueError("physical field contains non-finite values")
    return SpectralField(g.grid, _spec(g.grid, g.values))


# -- projection and divergence ------------------------------------------------


def _leray(grid: GridSpec, coeffs: np.ndarray) -> np.ndarray:
    xi = grid.xi
    dot = np.einsum("i...,i...->...", xi, coeffs)
    return coeffs - xi * (dot * grid._inv_xi_sq)


def leray_project(f: SpectralField) -> SpectralField:
    """Project onto divergence-free fields: ``u_hat - k (k . u_hat) / |k|^2``; identity at ``k = 0``."""
    _check_coeffs(f.grid, np.asarray(f.coeffs))
    return SpectralField(f.grid, _leray(f.grid, f.coeffs))


def divergence_max(f: SpectralField) -> float:
    """``max_k |k . u_hat(k)| / max(1, |u_hat(k)|)`` using integer frequencies."""
    dot = np.abs(np.einsum("i...,i...->...", f.grid.k_int, f.coeffs))
    mag = np.sqrt(np.sum(np.abs(f.coeffs) ** 2, axis=0))
    return float(np.max(dot / np.maximum(1.0, mag)))


def dealias(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * f.grid.dealias_mask)


# -- nonlinear term -----------------------------------------------------------


def _nonlinear(grid: GridSpec, uh: np.ndarray, vh: np.ndarray | None = None,
               return_speed: bool = False):
    """Dense coefficients of ``-P div(u (x) v)``, component ``j`` being ``-P sum_m d_m(u_m v_j)``.

    With ``return_speed`` also returns ``max_x |u(x)|`` of the dealiased ``u``.
    """
    n = grid.n
    mask = grid.dealias_mask
    U = _phys(grid, uh * mask)
    V = U if vh is None else _phys(grid, vh * mask)
    hmask = mask[..., : n // 2 + 1]
    xi = grid.xi[..., : n // 2 + 1]
    out = np.zeros((3, n, n, n // 2 + 1), dtype=np.complex128)
    scale = 1.0 / n**3
    if vh is None:
        # u (x) u is symmetric: six distinct products
        for m in range(3):
            for j in range(m, 3):
                prod = sfft.rfftn(U[m] * U[j], axes=AXES)
                out[j] -= 1j * xi[m] * prod
                if j != m:
                    out[m] -= 1j * xi[j] * prod
    else:
        for j in range(3):
            for m in range(3):
                prod = sfft.rfftn(U[m] * V[j], axes=AXES)
                out[j] -= 1j * xi[m] * prod
    out *= scale * hmask
    inv = grid._inv_xi_sq[..., : n // 2 + 1]
    dot = np.einsum("i...,i...->...", xi, out)
    out -= xi * (dot * inv)
    full = _half_to_full(grid, out)
    if return_speed:
        return full, float(np.sqrt(np.max(np.sum(U**2, axis=0))))
    return full


def nonlinear_term(u: SpectralField, v: SpectralField) -> SpectralField:
    """``Q(u, v) = -P div(u (x) v)`` with the 2/3-rule dealiased pseudo-spectral product."""
    if u.grid != v.grid:
        raise GridMismatchError(f"{u.grid.describe()} vs {v.grid.describe()}")
    vh = None if v is u else v.coeffs
    return SpectralField(u.grid, _nonlinear(u.grid, u.coeffs, vh))


def pointwise_product(u: SpectralField, v: SpectralField) -> SpectralField:
    """Component-wise product ``(u_1 v_1, u_2 v_2, u_3 v_3)`` without truncation.

    Both factors are padded onto a lattice twice as fine, so the result is the
    exact convolution of the two spectra, returned on ``u.grid.padded()``.
    """
    if u.grid != v.grid:
        raise GridMismatchError(f"{u.grid.describe()} vs {v.grid.describe()}")
    big = u.grid.padded(2)
    U = _phys(big, pad_coeffs(u.coeffs, big.n))
    V = _phys(big, pad_coeffs(v.coeffs, big.n))
    return SpectralField(big, _spec(big, U * V))


def pad_coeffs(coeffs: np.ndarray, m: int) -> np.ndarray:
    """Embed lattice coefficients into a larger ``m^3`` lattice (Nyquist planes dropped)."""
    n = coeffs.shape[-1]
    k1 = np.fft.fftfreq(n, 1.0 / n).astype(int)
    keep = k1 != -n // 2
    src = np.where(keep)[0]
    dst = k1[keep] % m
    out = np.zeros((*coeffs.shape[:-3], m, m, m), dtype=np.complex128)
    out[(Ellipsis, *np.ix_(dst, dst, dst))] = coeffs[(Ellipsis, *np.ix_(src, src, src))]
    return out


def l2_inner(f: SpectralField, g: SpectralField) -> complex:
    """Coefficient inner product ``sum_k conj(f_hat) . g_hat``."""
    return complex(np.vdot(f.coeffs, g.coeffs))


# -- field recipes -------------------------------------------------------------


def random_field(
    grid: GridSpec,
    seed: int | np.random.Generator,
    shell: tuple[float, float] = (1.0, 4.0),
    envelope=None,
    divergence_free: bool = True,
) -> SpectralField:
    """Band-limited random field.

    Coefficients are i.i.d. complex Gaussians on retained modes with
    ``shell[0] <= |k| <= shell[1]`` (integer-lattice radius), multiplied by
    ``envelope(|xi|)`` when given, made Hermitian, Leray-projected (optional)
    and zero-mean.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    kr = np.sqrt(np.sum(grid.k_int.astype(float) ** 2, axis=0))
    sel = grid.dealias_mask & (kr >= shell[0]) & (kr <= shell[1]) & (kr > 0)
    c = rng.standard_normal((3, *grid.shape)) + 1j * rng.standard_normal((3, *grid.shape))
    c = c * sel
    if envelope is not None:
        c = c * envelope(grid.xi_abs)
    c = hermitian_part(c)
    if divergence_free:
        c = _leray(grid, c)
    c[:, 0, 0, 0] = 0
    return SpectralField(grid, c)


def taylor_green(grid: GridSpec, amplitude: float = 1.0) -> SpectralField:
    """``A (sin kx cos ky, -cos kx sin ky, 0)`` with ``k = 2 pi / L``; nonlinearity is a pure gradient."""
    modes = {}
    for s1 in (1, -1):
        for s2 in (1, -1):
            modes[(s1, s2, 0)] = (amplitude * s1 / 4j, -amplitude * s2 / 4j, 0.0)
    return SpectralField.from_modes(grid, modes)


def single_mode(grid: GridSpec, k: Sequence[int], vec: Sequence[complex]) -> SpectralField:
    return SpectralField.from_modes(grid, {tuple(k): vec})
