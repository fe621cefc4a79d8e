"""Periodic sampled fields on the d-dimensional torus.

Coefficient convention: the coefficient at integer frequency ``xi`` multiplies
``exp(i <xi, x> 2 pi / period)`` and a constant field maps to a single
coefficient equal to that constant.  Coefficient arrays are stored in numpy FFT
order; use :meth:`SpectralField.coefficient` to index by signed frequency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "ParameterError",
    "DataError",
    "GridSpec",
    "GridFunction",
    "SpectralField",
    "forward_transform",
    "inverse_transform",
    "spectral_derivative",
    "circular_convolve",
    "lp_norm",
    "set_threads",
    "get_threads",
]

_WORKERS = 1


class ParameterError(ValueError):
    """An argument is outside the documented domain of an operation."""


class DataError(ValueError):
    """Input data is malformed (non-finite samples, wrong shape, ...)."""


def set_threads(n: int) -> None:
    """Set the worker count used by the FFT backend.

    Results do not depend on the worker count: each 1-D transform is computed
    identically regardless of how lines are distributed.
    """
    global _WORKERS
    if n < 1:
        raise ParameterError("thread count must be >= 1")
    _WORKERS = int(n)


def get_threads() -> int:
    return _WORKERS


@dataclass(frozen=True)
class GridSpec:
    d: int
    n: int
    period: float = 2 * math.pi

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ParameterError(f"d must be a positive integer, got {self.d}")
        if int(self.n) != self.n or self.n < 4 or (self.n & (self.n - 1)):
            raise ParameterError(f"n must be a power of two >= 4, got {self.n}")
        if not self.period > 0:
            raise ParameterError(f"period must be positive, got {self.period}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "period", float(self.period))

    @property
    def h(self) -> float:
        return self.period / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def unit(self) -> float:
        """Angular wavenumber of the integer frequency 1."""
        return 2 * math.pi / self.period

    def frequencies(self) -> list[np.ndarray]:
        """Signed integer frequency per axis, FFT order, broadcastable."""
        xi = np.fft.fftfreq(self.n, d=1.0 / self.n)
        out = []
        for ax in range(self.d):
            sh = [1] * self.d
            sh[ax] = self.n
            out.append(xi.reshape(sh))
        return out

    def wavenumbers(self, zero_nyquist: bool = False) -> list[np.ndarray]:
        """Angular wavenumbers per axis (broadcastable arrays)."""
        ks = [xi * self.unit for xi in self.frequencies()]
        if zero_nyquist:
            ks = [np.where(xi == -self.n // 2, 0.0, k) for xi, k in zip(self.frequencies(), ks)]
        return ks

    def wavenumber_norm(self) -> np.ndarray:
        """|k| on the full frequency grid (FFT order)."""
        k2 = np.zeros(self.shape)
        for k in self.wavenumbers():
            k2 = k2 + k**2
        return np.sqrt(k2)

    def coordinates(self) -> list[np.ndarray]:
        """Sample positions per axis in [0, period), broadcastable."""
        x = np.arange(self.n) * self.h
        out = []
        for ax in range(self.d):
            sh = [1] * self.d
            sh[ax] = self.n
            out.append(x.reshape(sh))
        return out

    def min_image(self) -> list[np.ndarray]:
        """Signed displacement of each grid point from the origin, in [-P/2, P/2)."""
        idx = np.arange(self.n)
        idx = np.where(idx >= self.n // 2, idx - self.n, idx) * self.h
        out = []
        for ax in range(self.d):
            sh = [1] * self.d
            sh[ax] = self.n
            out.append(idx.reshape(sh))
        return out

    def to_dict(self) -> dict:
        return {"d": self.d, "n": self.n, "period": self.period}


def _check_same(a: GridSpec, b: GridSpec):
    if a != b:
        raise ParameterError(f"grid mismatch: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Complex samples of a field on the torus described by ``spec``."""

    spec: GridSpec
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.complex128, copy=True)
        if arr.shape != self.spec.shape:
            raise DataError(f"expected shape {self.spec.shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("samples contain NaN or Inf")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @classmethod
    def zeros(cls, spec: GridSpec) -> "GridFunction":
        return cls(spec, np.zeros(spec.shape))

    @classmethod
    def from_callable(cls, spec: GridSpec, fn) -> "GridFunction":
        """Sample ``fn(*coords)`` on the grid."""
        coords = np.meshgrid(*[np.arange(spec.n) * spec.h] * spec.d, indexing="ij")
        return cls(spec, fn(*coords))

    @property
    def real(self) -> np.ndarray:
        return self.samples.real

    def abs(self) -> "GridFunction":
        return GridFunction(self.spec, np.abs(self.samples))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.samples)))

    def mean(self) -> complex:
        return complex(np.mean(self.samples))

    def _other(self, other):
        if isinstance(other, GridFunction):
            _check_same(self.spec, other.spec)
            return other.samples
        return other

    def __add__(self, other):
        return GridFunction(self.spec, self.samples + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.spec, self.samples - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self.spec, self._other(other) - self.samples)

    def __mul__(self, other):
        return GridFunction(self.spec, self.samples * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridFunction(self.spec, self.samples / self._other(other))

    def __neg__(self):
        return GridFunction(self.spec, -self.samples)

    def allclose(self, other: "GridFunction", rtol=0.0, atol=0.0) -> bool:
        _check_same(self.spec, other.spec)
        return bool(np.allclose(self.samples, other.samples, rtol=rtol, atol=atol))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients in FFT order (see module docstring)."""

    spec: GridSpec
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.coefficients, dtype=np.complex128)
        if arr.shape != self.spec.shape:
            raise DataError(f"expected shape {self.spec.shape}, got {arr.shape}")
        object.__setattr__(self, "coefficients", arr)

    def coefficient(self, xi) -> complex:
        xi = tuple(int(v) for v in xi)
        if len(xi) != self.spec.d:
            raise ParameterError("frequency vector has wrong dimension")
        n = self.spec.n
        if any(v < -n // 2 or v >= n // 2 for v in xi):
            raise ParameterError(f"frequency {xi} outside [-n/2, n/2)")
        return complex(self.coefficients[tuple(v % n for v in xi)])

    @cached_property
    def total(self) -> int:
        return self.spec.n**self.spec.d


def _fftn(a):
    return sfft.fftn(a, workers=_WORKERS)


def _ifftn(a):
    return sfft.ifftn(a, workers=_WORKERS)


def forward_transform(f: GridFunction) -> SpectralField:
    return SpectralField(f.spec, _fftn(f.samples) / f.spec.n**f.spec.d)


def inverse_transform(F: SpectralField) -> GridFunction:
    return GridFunction(F.spec, _ifftn(F.coefficients * F.spec.n**F.spec.d))


def apply_multiplier(f: GridFunction, multiplier: np.ndarray) -> GridFunction:
    """Inverse transform of ``multiplier * forward_transform(f)``."""
    return GridFunction(f.spec, _ifftn(_fftn(f.samples) * multiplier))


def derivative_symbol(spec: GridSpec, axis: int, order: int) -> np.ndarray:
    """Multiplier of the ``order``-th derivative along ``axis``.

    Odd orders zero the Nyquist row so real fields stay real.
    """
    k = spec.wavenumbers(zero_nyquist=order % 2 == 1)[axis]
    return (1j * k) ** order


def spectral_derivative(f: GridFunction, axis: int, order: int = 1) -> GridFunction:
    """Differentiate along ``axis`` (0-based) ``order`` times."""
    d = f.spec.d
    if not 0 <= axis < d:
        raise ParameterError(f"axis {axis} outside [0, {d})")
    if order < 1:
        raise ParameterError("order must be >= 1")
    return apply_multiplier(f, np.broadcast_to(derivative_symbol(f.spec, axis, order), f.spec.shape))


def circular_convolve(f: GridFunction, kernel: GridFunction) -> GridFunction:
    """Periodic convolution ``h^d sum_y kernel(y) f(x - y)``."""
    _check_same(f.spec, kernel.spec)
    hd = f.spec.h**f.spec.d
    return GridFunction(f.spec, _ifftn(_fftn(f.samples) * _fftn(kernel.samples)) * hd)


def lp_norm(f, p: float) -> float:
    """Discrete ``L^p`` norm with the torus measure ``h^d``; ``p = inf`` is the sup norm."""
    a = np.abs(f.samples).ravel()
    if p == math.inf:
        return float(a.max()) if a.size else 0.0
    if not p > 1:
        raise ParameterError(f"p must be > 1, got {p}")
    return _scaled_lp(a, p, f.spec.h**f.spec.d)


def _scaled_lp(a: np.ndarray, p: float, measure: float) -> float:
    # scale by the max so large p neither overflows nor underflows
    top = float(a.max()) if a.size else 0.0
    if top == 0.0:
        return 0.0
    s = np.sum((a / top) ** p)
    return top * float(measure * s) ** (1.0 / p)
