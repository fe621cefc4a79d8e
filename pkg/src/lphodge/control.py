"""Anisotropic control functions and the damping generators built from them.

For each band ``j`` the control function is

    omega_j(x) = ( sum_y [ (T_j * |Delta_j f|)(y) E_sigma(2^j (x - y)) ]^p )^{1/p}

with ``y`` running over a band lattice of spacing close to ``2^{-j}``.  From
the family ``omega`` we build the cutoffs ``zeta_j``, ``U_j = (1 - zeta_j)
omega_j`` and the residue-class sums ``G_j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridFunction, GridSpec, ParameterError, _ifftn, _scaled_lp, circular_convolve
from .kernels import periodized_E, periodized_E_power, periodized_T
from .littlewood_paley import LPDecomposition, smooth_step
from .norms import TLParams, hl_maximal, tl_norm

__all__ = [
    "ControlParams",
    "ControlFamily",
    "zeta_profile",
    "kernel_E",
    "kernel_T",
    "lattice_step",
    "DominationConstant",
    "domination_constant",
    "build_omega",
    "build_omegas",
    "build_zeta",
    "build_U_G",
    "build_control",
    "control_diagnostics",
    "finite_difference",
]


@dataclass(frozen=True)
class ControlParams:
    """``sigma``, stride ``R``, exponents and the ordered good axes (0-based)."""

    sigma: int
    R: int
    alpha: float
    p: float
    good_dirs: tuple = (0,)

    def __post_init__(self):
        if int(self.sigma) != self.sigma or self.sigma < 1:
            raise ParameterError(f"sigma must be an integer >= 1, got {self.sigma}")
        if int(self.R) != self.R or self.R < 1:
            raise ParameterError(f"R must be an integer >= 1, got {self.R}")
        if not self.alpha * self.R > 1:
            raise ParameterError(f"need alpha * R > 1, got alpha={self.alpha}, R={self.R}")
        if not self.p > 1:
            raise ParameterError("p must be > 1")
        g = tuple(int(a) for a in self.good_dirs)
        if len(set(g)) != len(g):
            raise ParameterError("good directions must be distinct")
        object.__setattr__(self, "good_dirs", g)
        object.__setattr__(self, "sigma", int(self.sigma))
        object.__setattr__(self, "R", int(self.R))

    @property
    def kappa(self) -> int:
        return len(self.good_dirs)

    def validate_for(self, d: int):
        if any(not 0 <= a < d for a in self.good_dirs):
            raise ParameterError(f"good directions {self.good_dirs} outside [0, {d})")
        if self.kappa > max(d - 1, 0):
            raise ParameterError(f"at most d-1 = {d - 1} good directions allowed")

    def with_sigma(self, sigma: int, R: int | None = None) -> "ControlParams":
        return ControlParams(sigma, self.R if R is None else R, self.alpha, self.p, self.good_dirs)


def zeta_profile(t) -> np.ndarray:
    """1 on ``[0, 1/2]``, 0 on ``[1, inf)``, smooth in between."""
    return smooth_step((1.0 - np.asarray(t, dtype=float)) / 0.5)


def kernel_E(spec: GridSpec, sigma: int, kappa: int, j: int, good_dirs=None) -> GridFunction:
    """Periodized ``E_j(x) = 2^{jd} E_sigma(2^j x)``; good axes default to the first ``kappa``."""
    if sigma < 1:
        raise ParameterError("sigma must be >= 1")
    g = tuple(range(kappa)) if good_dirs is None else tuple(good_dirs)
    return GridFunction(spec, periodized_E(spec, j, sigma, g, spec.min_image()))


def kernel_T(spec: GridSpec, j: int) -> GridFunction:
    """Periodized ``T_j(x) = 2^{jd} T(2^j x)``."""
    return GridFunction(spec, periodized_T(spec, j, spec.min_image()))


def lattice_step(spec: GridSpec, j: int) -> int:
    """Grid stride of the band-``j`` lattice: the power of two nearest ``2^{-j}/h``."""
    e = round(math.log2(2.0**-j / spec.h))
    return int(min(max(2**e if e >= 0 else 1, 1), spec.n))


def _cell_offsets(d: int, m: int) -> list[tuple[int, ...]]:
    return [tuple(int(v) for v in idx) for idx in np.ndindex(*(m,) * d)]


@dataclass(frozen=True)
class DominationConstant:
    """``|Delta_j f| <= c_K c_D / e_min * omega_j`` with each factor computed on the grid.

    ``c_K``: max of ``|K_j| / T_j`` for a kernel ``K_j`` reproducing band ``j``;
    ``c_D``: worst ratio ``T_j(w + z) / T_j(w)`` over lattice-cell offsets ``z``;
    ``e_min``: smallest lattice weight ``Kp(z)^{1/p}`` over the same offsets.
    """

    j: int
    step: int
    c_K: float
    c_D: float
    e_min: float

    @property
    def value(self) -> float:
        return self.c_K * self.c_D / self.e_min

    def to_dict(self) -> dict:
        return {"j": self.j, "step": self.step, "c_K": self.c_K, "c_D": self.c_D,
                "e_min": self.e_min, "value": self.value}


def domination_constant(spec: GridSpec, j: int, params: ControlParams) -> DominationConstant:
    m = lattice_step(spec, j)
    T = periodized_T(spec, j, spec.min_image())
    knorm = spec.wavenumber_norm()
    # equals 1 on |k| <= 2^{j+1}, so K_j * Delta_j f = Delta_j f
    Khat = smooth_step((3 * 2.0**j - knorm) / 2.0**j)
    K = np.real(_ifftn(Khat)) / spec.h**spec.d
    c_K = float(np.max(np.abs(K) / T))
    c_D = 1.0
    Kp = periodized_E_power(spec, j, params.sigma, params.good_dirs, params.p)
    e_min = math.inf
    for z in _cell_offsets(spec.d, m):
        shifted = np.roll(T, tuple(-v for v in z), axis=tuple(range(spec.d)))
        c_D = max(c_D, float(np.max(shifted / T)))
        e_min = min(e_min, float(Kp[z]) ** (1.0 / params.p))
    return DominationConstant(j, m, c_K, c_D, e_min)


def _lattice_lp_sum(c_lat: np.ndarray, Kp: np.ndarray, m: int, d: int) -> np.ndarray:
    """``sum_Y c_lat(Y) Kp(x - m Y)`` at every grid point ``x``.

    Splitting ``x = m X + rho`` turns the sum into a dense product of the
    per-offset weight table with circulant shifts of ``c_lat``; all terms are
    nonnegative so the plain BLAS reduction keeps full relative accuracy.
    """
    N = c_lat.shape[0]
    Nd, md = N**d, m**d
    inter = []
    for _ in range(d):
        inter += [N, m]
    Kmat = Kp.reshape(inter).transpose(list(range(0, 2 * d, 2)) + list(range(1, 2 * d, 2))).reshape(Nd, md)
    rows = np.nonzero(np.any(Kmat > 0, axis=1))[0]
    cflat = c_lat.ravel()
    Xs = np.indices((N,) * d).reshape(d, Nd)
    res = np.zeros((md, Nd))
    B = max(1, (1 << 22) // Nd)
    for i in range(0, rows.size, B):
        sel = rows[i:i + B]
        S = np.array(np.unravel_index(sel, (N,) * d))
        diff = (Xs[:, None, :] - S[:, :, None]) % N
        idx = np.ravel_multi_index(tuple(diff), (N,) * d)
        res += Kmat[sel].T @ cflat[idx]
    perm = []
    for a in range(d):
        perm += [d + a, a]
    return res.reshape((m,) * d + (N,) * d).transpose(perm).reshape((N * m,) * d)


def build_omega(decomp: LPDecomposition, params: ControlParams, j: int) -> GridFunction:
    """Control function of band ``j`` (identically zero for an empty band)."""
    spec = decomp.spec
    params.validate_for(spec.d)
    band = decomp[j]
    if decomp.is_empty(j) or not np.any(band.samples):
        return GridFunction.zeros(spec)
    c = circular_convolve(band.abs(), kernel_T(spec, j)).samples.real
    m = lattice_step(spec, j)
    c_lat = c[(slice(None, None, m),) * spec.d]
    top = float(c_lat.max())
    Kp = periodized_E_power(spec, j, params.sigma, params.good_dirs, params.p)
    acc = _lattice_lp_sum((c_lat / top) ** params.p, Kp, m, spec.d)
    return GridFunction(spec, top * acc ** (1.0 / params.p))


def build_omegas(decomp: LPDecomposition, params: ControlParams) -> dict:
    return {j: build_omega(decomp, params, j) for j in decomp.indices}


def _weights(alpha: float, bands) -> dict:
    return {j: 2.0 ** (alpha * j) for j in bands}


def _class_sum(omegas: dict, alpha: float, R: int, j: int) -> np.ndarray | None:
    """``sum_{k < j, k = j mod R} 2^{alpha k} omega_k`` over available bands, or None if empty."""
    acc = None
    for k in sorted(omegas):
        if k < j and (j - k) % R == 0:
            term = 2.0 ** (alpha * k) * omegas[k].samples.real
            acc = term if acc is None else acc + term
    return acc


def build_zeta(omegas: dict, params: ControlParams, j: int) -> GridFunction:
    """``zeta(2^{alpha j} omega_j / sum_{k<j, k=j mod R} 2^{alpha k} omega_k)``, 0 when the sum vanishes."""
    spec = omegas[j].spec
    den = _class_sum(omegas, params.alpha, params.R, j)
    if den is None or not np.any(den > 0):
        return GridFunction.zeros(spec)
    num = 2.0 ** (params.alpha * j) * omegas[j].samples.real
    # den is either identically zero or positive everywhere
    return GridFunction(spec, zeta_profile(num / den))


@dataclass(frozen=True, eq=False)
class ControlFamily:
    params: ControlParams
    omega: dict = field(repr=False)
    zeta: dict = field(repr=False)
    U: dict = field(default_factory=dict, repr=False)
    G: dict = field(default_factory=dict, repr=False)
    domination: dict = field(default_factory=dict, repr=False)

    @property
    def bands(self) -> list[int]:
        return sorted(self.omega)

    @property
    def C_low(self) -> float:
        return max((c.value for c in self.domination.values()), default=1.0)

    def scaled(self, theta: float) -> "ControlFamily":
        """Family for the input scaled by ``theta`` (``omega`` is 1-homogeneous)."""
        om = {j: w * theta for j, w in self.omega.items()}
        fam = ControlFamily(self.params, om, self.zeta, {}, {}, self.domination)
        build_U_G(fam, self.params)
        return fam


def build_U_G(family: ControlFamily, params: ControlParams) -> ControlFamily:
    """Fill ``U_j = (1 - zeta_j) omega_j`` and ``G_j = sum_{t>0, R|t} 2^{-alpha t} omega_{j-t}``."""
    for j in family.bands:
        w = family.omega[j]
        family.U[j] = GridFunction(w.spec, (1.0 - family.zeta[j].samples.real) * w.samples.real)
        acc = np.zeros(w.spec.shape)
        for t in range(params.R, j - family.bands[0] + 1, params.R):
            acc += 2.0 ** (-params.alpha * t) * family.omega[j - t].samples.real
        family.G[j] = GridFunction(w.spec, acc)
    return family


def build_control(decomp: LPDecomposition, params: ControlParams, omegas: dict | None = None) -> ControlFamily:
    spec = decomp.spec
    params.validate_for(spec.d)
    om = build_omegas(decomp, params) if omegas is None else omegas
    zeta = {j: build_zeta(om, params, j) for j in sorted(om)}
    dom = {j: domination_constant(spec, j, params) for j in sorted(om)}
    fam = ControlFamily(params, om, zeta, {}, {}, dom)
    return build_U_G(fam, params)


def finite_difference(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fourth-order centered periodic first derivative."""
    r = lambda s: np.roll(a, -s, axis=axis)  # noqa: E731
    return (-r(2) + 8 * r(1) - 8 * r(-1) + r(-2)) / (12 * h)


def _dominant_sum_check(omegas: dict, alpha: float, R: int) -> tuple[float, bool]:
    bands = sorted(omegas)
    w = _weights(alpha, bands)
    lhs = 0.0
    top = 0.0
    for m in bands:
        a = w[m] * omegas[m].samples.real
        den = _class_sum(omegas, alpha, R, m)
        ind = a > 0.5 * den if den is not None else a > 0
        lhs = lhs + np.where(ind, a, 0.0)
        top = np.maximum(top, a)
    rhs = 3 * R * top
    excess = np.asarray(lhs - rhs * (1 + 1e-12))
    return float(np.max(lhs / np.where(rhs > 0, rhs, 1.0))), bool(np.all(excess <= 0))


def control_diagnostics(family: ControlFamily, decomp: LPDecomposition, params: ControlParams,
                        q: float | None = None) -> dict:
    """Measured ratios for the control-function estimates.

    Keys
    ----
    domination : per band max ``|Delta_j f| / omega_j`` against ``C_low``
    maximal_ratio : per band ``max omega_j / (2^{kappa sigma} M M Delta_j f)``
    derivative : per band good/bad derivative ratios (fourth-order differences)
    sup_ratio : ``||sup_j 2^{alpha j} omega_j||_p / (sigma 2^{kappa sigma / p} ||f||)``
    dominant_sum : pointwise sum of dominant terms over ``3 R sup`` (must be <= 1)
    G_bound : literal check of the geometric bound on ``G_j`` when the smallness regime holds
    """
    spec = decomp.spec
    bands = family.bands
    sig, kap = params.sigma, params.kappa
    C_low = family.C_low
    dom, mx, der = {}, {}, {}
    dom_ok = True
    zero_ok = True
    for j in bands:
        a = np.abs(decomp[j].samples)
        w = family.omega[j].samples.real
        if not np.any(w):
            zero_ok &= not np.any(a)
            continue
        zero_ok &= bool(np.all(w > 0))
        ratio = float(np.max(a / w))
        ok = bool(np.all(a <= C_low * w * (1 + 1e-12)))
        dom_ok &= ok
        dom[j] = {"max_ratio": ratio, "C_low_band": family.domination[j].value, "ok": ok}
        mm = hl_maximal(hl_maximal(decomp[j])).samples.real
        mx[j] = float(np.max(w / (2.0 ** (kap * sig) * mm)))
        per_axis = [float(np.max(np.abs(finite_difference(w, ax, spec.h)) / w)) for ax in range(spec.d)]
        good = max((per_axis[a] for a in params.good_dirs), default=0.0)
        bad_axes = [a for a in range(spec.d) if a not in params.good_dirs]
        bad = max((per_axis[a] for a in bad_axes), default=0.0)
        der[j] = {"good_raw": good, "bad_raw": bad,
                  "good_ratio": good / 2.0 ** (j - sig), "bad_ratio": bad / 2.0**j}
    w8 = _weights(params.alpha, bands)
    sup = np.zeros(spec.shape)
    for j in bands:
        sup = np.maximum(sup, w8[j] * family.omega[j].samples.real)
    tl = tl_norm(decomp, TLParams(params.alpha, params.p, q if q is not None else params.p))
    sup_norm = _scaled_lp(sup.ravel(), params.p, spec.h**spec.d)
    sup_ratio = sup_norm / (sig * 2.0 ** (kap * sig / params.p) * tl) if tl > 0 else None
    dsum, dsum_ok = _dominant_sum_check(family.omega, params.alpha, params.R)

    small = all(np.max(family.omega[j].samples.real, initial=0.0) < 1 and
                np.max(np.abs(decomp[j].samples), initial=0.0) < 1 for j in bands)
    g_ok = None
    if small:
        nonempty = [j for j in bands if np.any(family.omega[j].samples.real)]
        g_ok = True
        if nonempty:
            j0 = max(nonempty)
            q_ = 2.0 ** (-params.alpha * params.R)
            for j in bands:
                b = min(q_, 2.0 ** (-params.alpha * (j - j0))) / (1 - q_)
                g_ok &= bool(np.all(family.G[j].samples.real <= b * (1 + 1e-12)))
    return {
        "C_low": C_low,
        "domination": {str(j): v for j, v in dom.items()},
        "domination_ok": dom_ok,
        "vanishing_ok": zero_ok,
        "maximal_ratio": {str(j): v for j, v in mx.items()},
        "derivative": {str(j): v for j, v in der.items()},
        "sup_ratio": sup_ratio,
        "dominant_sum_ratio": dsum,
        "dominant_sum_ok": dsum_ok,
        "smallness_regime": small,
        "G_bound_ok": g_ok,
    }
