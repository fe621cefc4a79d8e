import math
from functools import lru_cache

import numpy as np
import pytest

from lphodge.grid import GridFunction, GridSpec
from lphodge.littlewood_paley import build_filter_bank


def bandlimited(spec, seed, kmin=1.0, kmax=15.0, real=True, amp=1.0):
    """Random field with i.i.d. normal coefficients on ``kmin <= |k| <= kmax``."""
    rng = np.random.default_rng(seed)
    k = spec.wavenumber_norm()
    c = rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape)
    c[(k < kmin) | (k > kmax)] = 0.0
    a = np.fft.ifftn(c)
    if real:
        a = a.real
    top = float(np.max(np.abs(a)))
    return GridFunction(spec, a * (amp / top))


@lru_cache(maxsize=None)
def spec64():
    return GridSpec(2, 64)


@lru_cache(maxsize=None)
def bank64():
    return build_filter_bank(spec64())


@lru_cache(maxsize=None)
def validation_suite():
    """Eight fixed d = 2, n = 64 inputs of different spectral shapes."""
    s = spec64()
    x = s.min_image()
    bump = np.exp(-(x[0] ** 2 + x[1] ** 2) / (2 * 0.4**2))
    mode = np.exp(1j * (3 * s.coordinates()[0] + 1 * s.coordinates()[1]))
    return (
        bandlimited(s, 0, 1, 15),
        bandlimited(s, 1, 1, 4),
        bandlimited(s, 2, 4, 15),
        bandlimited(s, 3, 2, 8, amp=50.0),
        bandlimited(s, 4, 1, 15, real=False),
        GridFunction(s, bump),
        GridFunction(s, mode),
        bandlimited(s, 5, 1, 2) + bandlimited(s, 6, 8, 12, amp=0.3),
    )


@pytest.fixture(scope="session")
def spec():
    return spec64()


@pytest.fixture(scope="session")
def bank():
    return bank64()


@pytest.fixture(scope="session")
def suite():
    return validation_suite()


TWO_PI = 2 * math.pi
