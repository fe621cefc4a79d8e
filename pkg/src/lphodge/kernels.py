"""Polynomial-tail kernel ``T`` and anisotropic exponential kernel ``E``.

Both are evaluated at displacement coordinates and periodized over images of
the torus.  ``T(x) = min(1, |x|^{-(d+1)})``;
``E(x) = exp(-sqrt(1 + |x_sigma|^2))`` where ``x_sigma`` divides the good axes
by ``2^sigma``.
"""
from __future__ import annotations

import math
from functools import lru_cache
from itertools import product

import numpy as np

from .grid import GridSpec, ParameterError

__all__ = [
    "T_IMAGES",
    "E_CUTOFF",
    "T_profile",
    "T_mass",
    "E_profile",
    "axis_scales",
    "periodized_T",
    "periodized_E",
    "periodized_E_power",
]

# T decays polynomially, so its periodization keeps a fixed block of images
T_IMAGES = 2
# images of E with exponent beyond this are dropped (E < e^{-36})
E_CUTOFF = 36.0


def T_profile(r, d: int) -> np.ndarray:
    """``min(1, r^{-(d+1)})`` for radius ``r >= 0``."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(r <= 1.0, 1.0, np.power(np.maximum(r, 1.0), -(d + 1.0)))


def T_mass(d: int) -> float:
    """``int_{R^d} T = |S^{d-1}| (1/d + 1)``."""
    surf = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    return surf * (1.0 / d + 1.0)


def E_profile(q) -> np.ndarray:
    """``exp(-sqrt(1 + q))`` for the scaled squared norm ``q``."""
    return np.exp(-np.sqrt(1.0 + np.asarray(q, dtype=float)))


def axis_scales(d: int, sigma: int, good_dirs) -> np.ndarray:
    s = np.ones(d)
    for a in good_dirs:
        if not 0 <= a < d:
            raise ParameterError(f"good direction {a} outside [0, {d})")
        s[a] = 2.0**sigma
    return s


def _block(d: int, K) -> list[tuple[int, ...]]:
    K = [K] * d if np.isscalar(K) else list(K)
    return list(product(*[range(-k, k + 1) for k in K]))


def periodized_T(spec: GridSpec, j: int, disp, images: int = T_IMAGES) -> np.ndarray:
    """``sum_k 2^{jd} T(2^j (x + P k))`` over ``|k|_inf <= images``.

    ``disp`` is a list of per-axis displacement arrays (broadcastable).
    """
    d, P = spec.d, spec.period
    sc = 2.0**j
    out = 0.0
    for k in _block(d, images):
        r2 = 0.0
        for a in range(d):
            r2 = r2 + ((disp[a] + P * k[a]) * sc) ** 2
        out = out + T_profile(np.sqrt(r2), d)
    return np.asarray(out * sc**d, dtype=float)


def _E_image_counts(spec: GridSpec, j: int, scales) -> list[int]:
    # |2^j (x_a + P k_a)| / s_a <= cutoff with |x_a| <= P/2
    return [int(math.ceil(E_CUTOFF * s * 2.0**-j / spec.period)) + 1 for s in scales]


def _E_power_sum(spec: GridSpec, j: int, scales, disp, p: float) -> np.ndarray:
    d, P = spec.d, spec.period
    counts = _E_image_counts(spec, j, scales)
    shape = np.broadcast_shapes(*[np.shape(x) for x in disp])
    out = np.zeros(shape)
    lim2 = E_CUTOFF**2 - 1.0
    half = P / 2
    for k in _block(d, counts):
        # skip images that cannot reach the cutoff anywhere on the cell
        lo = sum(((max(0.0, P * abs(k[a]) - half)) * 2.0**j / scales[a]) ** 2 for a in range(d))
        if lo > lim2:
            continue
        q = 0.0
        for a in range(d):
            q = q + ((disp[a] + P * k[a]) * (2.0**j / scales[a])) ** 2
        q = np.broadcast_to(q, shape)
        keep = q <= lim2
        if not np.any(keep):
            continue
        out += np.where(keep, np.exp(-p * np.sqrt(1.0 + np.where(keep, q, 0.0))), 0.0)
    return out


def periodized_E(spec: GridSpec, j: int, sigma: int, good_dirs, disp) -> np.ndarray:
    """``sum_k 2^{jd} E_sigma(2^j (x + P k))`` with images below ``e^{-36}`` dropped."""
    scales = axis_scales(spec.d, sigma, good_dirs)
    return _E_power_sum(spec, j, scales, disp, 1.0) * 2.0 ** (j * spec.d)


@lru_cache(maxsize=64)
def _E_power_grid(spec: GridSpec, j: int, sigma: int, good_dirs: tuple, p: float) -> np.ndarray:
    scales = axis_scales(spec.d, sigma, good_dirs)
    out = _E_power_sum(spec, j, scales, spec.min_image(), p)
    out.flags.writeable = False
    return out


def periodized_E_power(spec: GridSpec, j: int, sigma: int, good_dirs, p: float) -> np.ndarray:
    """``sum_k E_sigma(2^j (z + P k))^p`` at every grid displacement ``z`` (cached).

    This is the weight each lattice term receives in the control function;
    note there is no ``2^{jd}`` factor.
    """
    return _E_power_grid(spec, int(j), int(sigma), tuple(int(a) for a in good_dirs), float(p))
