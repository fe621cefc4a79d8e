"""Dyadic annular filter bank on the torus.

The profile ``rho`` is a smooth bump supported in ``(1/2, 2)`` and equal to one
on ``[3/4, 3/2]``.  The band multiplier is ``rho(|k|) / sum_m rho(2^m |k|)``
evaluated at ``2^{-j} k`` where ``k`` is the angular wavenumber, so the bands
sum to one wherever every band touching ``|k|`` is inside the chosen range.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable

import numpy as np

from .grid import (
    GridFunction,
    GridSpec,
    ParameterError,
    _fftn,
    _ifftn,
    derivative_symbol,
    lp_norm,
)

__all__ = [
    "smooth_step",
    "AnnularProfile",
    "build_profile",
    "FilterBank",
    "build_filter_bank",
    "LPDecomposition",
    "project",
    "decompose",
    "reconstruct",
    "MomentFactorization",
    "moment_factorize",
    "BernsteinReport",
    "bernstein_ratio",
    "multi_indices_of_order",
]

# a band whose spectral energy is below this fraction of the input's is roundoff
EMPTY_BAND_RTOL = 1e-13


def smooth_step(u) -> np.ndarray:
    """C-infinity step: 0 for ``u <= 0``, 1 for ``u >= 1``."""
    u = np.asarray(u, dtype=float)
    out = np.where(u >= 1.0, 1.0, 0.0)
    inside = (u > 0.0) & (u < 1.0)
    if np.any(inside):
        ui = u[inside]
        # e^{-1/u} / (e^{-1/u} + e^{-1/(1-u)}) written without underflow
        with np.errstate(over="ignore"):
            out[inside] = 1.0 / (1.0 + np.exp(1.0 / ui - 1.0 / (1.0 - ui)))
    return out


def _rho(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return smooth_step((t - 0.5) / 0.25) * smooth_step((2.0 - t) / 0.5)


@dataclass(frozen=True)
class AnnularProfile:
    """Radial profile with support bounds and plateau."""

    evaluator: Callable[[np.ndarray], np.ndarray] = _rho
    support: tuple[float, float] = (0.5, 2.0)
    plateau: tuple[float, float] = (0.75, 1.5)
    name: str = "paper-footnote-v1"

    def __call__(self, t) -> np.ndarray:
        return self.evaluator(t)

    def dyadic_sum(self, t) -> np.ndarray:
        """``sum_{m in Z} rho(2^m t)`` for ``t > 0`` (0 at ``t = 0``)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0
        if not np.any(pos):
            return out
        tp = t[pos]
        base = np.floor(-np.log2(tp))
        acc = np.zeros_like(tp)
        # only m with 2^m t in (1/2, 2) contribute: at most two of these
        for off in (-2, -1, 0, 1, 2):
            acc += self.evaluator(np.ldexp(tp, (base + off).astype(int)))
        out[pos] = acc
        return out

    def band_symbol(self, x) -> np.ndarray:
        """``Delta-hat(x)`` as a function of the radius ``|x|``."""
        x = np.asarray(x, dtype=float)
        num = self.evaluator(x)
        out = np.zeros_like(x)
        nz = num > 0
        out[nz] = num[nz] / self.dyadic_sum(x[nz])
        return out


def build_profile() -> AnnularProfile:
    return AnnularProfile()


@dataclass(frozen=True, eq=False)
class FilterBank:
    spec: GridSpec
    j_min: int
    j_max: int
    multipliers: dict = field(repr=False)
    profile: AnnularProfile = field(default_factory=AnnularProfile)

    @property
    def bands(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def multiplier(self, j: int) -> np.ndarray:
        if j not in self.multipliers:
            raise ParameterError(f"band {j} outside [{self.j_min}, {self.j_max}]")
        return self.multipliers[j]

    def covered_mask(self) -> np.ndarray:
        """Frequencies at which every contributing band lies in the range.

        That is ``2^{j_min} <= |k| <= 2^{j_max}``; outside this set the finite
        sum of multipliers is less than one by construction.
        """
        k = self.spec.wavenumber_norm()
        return (k >= 2.0**self.j_min) & (k <= 2.0**self.j_max)

    def total(self) -> np.ndarray:
        return sum(self.multipliers[j] for j in self.bands)

    def manifest(self) -> dict:
        return {"j_min": self.j_min, "j_max": self.j_max, "profile": self.profile.name,
                "spec": self.spec.to_dict()}


def default_band_range(spec: GridSpec) -> tuple[int, int]:
    """Lowest band touching the first nonzero wavenumber; highest inside Nyquist."""
    j_min = math.floor(math.log2(spec.unit) + 1e-12)
    j_max = math.floor(math.log2(spec.unit * spec.n / 2) + 1e-12) - 1
    return j_min, j_max


def build_filter_bank(spec: GridSpec, j_min: int | None = None, j_max: int | None = None) -> FilterBank:
    """Band multipliers ``Delta-hat(2^{-j} k)`` for ``j_min <= j <= j_max``.

    Raises
    ------
    ParameterError
        If the range is empty or the top band reaches past Nyquist.
    """
    dmin, dmax = default_band_range(spec)
    j_min = dmin if j_min is None else int(j_min)
    j_max = dmax if j_max is None else int(j_max)
    if j_min > j_max:
        raise ParameterError(f"empty band range [{j_min}, {j_max}]")
    nyq = spec.unit * spec.n / 2
    if 2.0 ** (j_max + 1) > nyq * (1 + 1e-12):
        raise ParameterError(f"band {j_max} reaches past Nyquist |k| = {nyq:g}")
    profile = build_profile()
    knorm = spec.wavenumber_norm()
    mult = {}
    for j in range(j_min, j_max + 1):
        m = profile.band_symbol(np.ldexp(knorm, -j))
        m.flags.writeable = False
        mult[j] = m
    return FilterBank(spec, j_min, j_max, mult, profile)


@dataclass(frozen=True, eq=False)
class LPDecomposition:
    bank: FilterBank
    bands: dict = field(repr=False)
    mean: complex = 0.0
    empty: frozenset = frozenset()

    @property
    def spec(self) -> GridSpec:
        return self.bank.spec

    @property
    def indices(self) -> range:
        return self.bank.bands

    def __getitem__(self, j: int) -> GridFunction:
        return self.bands[j]

    def is_empty(self, j: int) -> bool:
        return j in self.empty

    def nonempty(self) -> list[int]:
        return [j for j in self.indices if j not in self.empty]

    def scaled(self, c: float) -> "LPDecomposition":
        return LPDecomposition(self.bank, {j: b * c for j, b in self.bands.items()},
                               self.mean * c, self.empty)


def _check_bank(bank: FilterBank, f: GridFunction):
    if bank.spec != f.spec:
        raise ParameterError("filter bank and field live on different grids")


def project(bank: FilterBank, f: GridFunction, j: int) -> GridFunction:
    """``Delta_j f``."""
    _check_bank(bank, f)
    m = bank.multiplier(j)
    return GridFunction(f.spec, _ifftn(_fftn(f.samples) * m))


def decompose(bank: FilterBank, f: GridFunction) -> LPDecomposition:
    """All bands of ``f``; the mean is discarded and stored on the result.

    Bands whose spectral energy is at roundoff level relative to ``f`` are set
    to exactly zero so that "empty band" is a well-defined notion.
    """
    _check_bank(bank, f)
    fh = _fftn(f.samples)
    N = f.spec.n**f.spec.d
    mean = complex(fh.flat[0] / N)
    ref = float(np.linalg.norm(fh))
    bands, empty = {}, set()
    for j in bank.bands:
        bh = fh * bank.multipliers[j]
        if float(np.linalg.norm(bh)) <= EMPTY_BAND_RTOL * ref:
            bands[j] = GridFunction.zeros(f.spec)
            empty.add(j)
        else:
            bands[j] = GridFunction(f.spec, _ifftn(bh))
    return LPDecomposition(bank, bands, mean, frozenset(empty))


def reconstruct(decomp: LPDecomposition) -> GridFunction:
    out = np.zeros(decomp.spec.shape, dtype=complex)
    for j in decomp.indices:
        out += decomp.bands[j].samples
    return GridFunction(decomp.spec, out)


def multi_indices_of_order(d: int, a: int) -> list[tuple[int, ...]]:
    """All ``gamma`` in ``N^d`` with ``|gamma| = a``, lexicographically descending."""
    out = [g for g in product(range(a, -1, -1), repeat=d) if sum(g) == a]
    return out


@dataclass(frozen=True, eq=False)
class MomentFactorization:
    """Filters ``Delta^(gamma)_j`` with ``sum_gamma d^gamma Delta^(gamma)_j = Delta_j``."""

    spec: GridSpec
    j: int
    a: int
    symbols: dict = field(repr=False)

    def kernel(self, gamma) -> GridFunction:
        """Spatial kernel ``K`` with ``circular_convolve(f, K)`` equal to the filter."""
        hd = self.spec.h**self.spec.d
        return GridFunction(self.spec, _ifftn(self.symbols[tuple(gamma)]) / hd)

    def kernels(self) -> dict:
        return {g: self.kernel(g) for g in self.symbols}

    def apply(self, f: GridFunction, gamma) -> GridFunction:
        return GridFunction(self.spec, _ifftn(_fftn(f.samples) * self.symbols[tuple(gamma)]))

    def reassembled_symbol(self) -> np.ndarray:
        """``sum_gamma (i k)^gamma * symbol_gamma``, using the grid derivative symbols."""
        out = np.zeros(self.spec.shape, dtype=complex)
        for g, s in self.symbols.items():
            term = s
            for ax, order in enumerate(g):
                if order:
                    term = term * derivative_symbol(self.spec, ax, order)
            out += term
        return out


def moment_factorize(bank: FilterBank, a: int, j: int) -> MomentFactorization:
    """Write the band-``j`` filter as a sum of ``a``-th derivatives of filters.

    Uses ``|k|^{2a} = sum_{|gamma|=a} c_gamma k^{2 gamma}`` with multinomial
    ``c_gamma``, so ``Delta^(gamma)`` has symbol
    ``c_gamma (-i k)^gamma |k|^{-2a} Delta-hat_j``.
    """
    if int(a) != a or a < 1:
        raise ParameterError(f"a must be an integer >= 1, got {a}")
    a = int(a)
    spec = bank.spec
    m = bank.multiplier(j)
    ks = spec.wavenumbers()
    k2 = spec.wavenumber_norm() ** 2
    base = np.zeros(spec.shape)
    nz = m != 0
    base[nz] = m[nz] / k2[nz] ** a
    symbols = {}
    for g in multi_indices_of_order(spec.d, a):
        c = math.factorial(a)
        for gi in g:
            c //= math.factorial(gi)
        s = c * base.astype(complex)
        for ax, order in enumerate(g):
            if order:
                s = s * (-1j * ks[ax]) ** order
        symbols[g] = s
    return MomentFactorization(spec, j, a, symbols)


@dataclass(frozen=True)
class BernsteinReport:
    alpha: float
    p: float
    ratios: dict
    empty_bands: tuple
    critical: bool

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "p": self.p, "critical": self.critical,
                "ratios": {str(j): r for j, r in self.ratios.items()},
                "empty_bands": list(self.empty_bands)}


def bernstein_ratio(bank: FilterBank, decomp: LPDecomposition, alpha: float, p: float) -> BernsteinReport:
    """Per band ``||Delta_j f||_inf / (2^{alpha j} ||Delta_j f||_p)``.

    ``critical`` is False (a warning, not an error) unless ``alpha p = d``.
    Empty bands get ratio 0 and are listed in ``empty_bands``.
    """
    if decomp.bank is not bank:
        raise ParameterError("decomposition was built from a different bank")
    ratios, empty = {}, []
    for j in decomp.indices:
        b = decomp[j]
        num = lp_norm(b, math.inf)
        if num == 0.0:
            ratios[j] = 0.0
            empty.append(j)
            continue
        ratios[j] = num / (2.0 ** (alpha * j) * lp_norm(b, p))
    critical = math.isclose(alpha * p, bank.spec.d, rel_tol=1e-12)
    return BernsteinReport(float(alpha), float(p), ratios, tuple(empty), critical)

