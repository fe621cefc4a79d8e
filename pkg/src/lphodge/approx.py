"""Bounded approximation of critical Triebel-Lizorkin functions.

Given ``f`` with ``alpha p = d`` the construction splits every band into a part
``h_j`` where the band dominates its residue class and a part ``g_j`` where it
does not, then damps each with telescoping products:

    h~ = sum_j h_j prod_{j' > j} (1 - U_j')
    g~ = sum_c sum_{j = c mod R} g_j prod_{j' > j, j' = c mod R} (1 - G_j')

and returns ``F = g~ + h~`` after undoing the internal rescaling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .control import ControlFamily, ControlParams, build_control, build_omegas
from .grid import GridFunction, ParameterError, spectral_derivative
from .littlewood_paley import FilterBank, LPDecomposition, build_filter_bank, decompose
from .norms import TLParams, tl_norm

__all__ = [
    "ApproxParams",
    "select_parameters",
    "sigma_cap",
    "SplitResult",
    "split",
    "partition_identity_eval",
    "build_h_tilde",
    "build_g_tilde",
    "ApproxResult",
    "approximate",
    "approx_diagnostics",
    "direction_errors",
]


def _kappa(p: float, d: int) -> int:
    """Largest integer strictly below ``min(p, d)``."""
    return int(math.ceil(min(p, d))) - 1


def _a_alpha(alpha: float) -> float:
    return 1.0 if alpha >= 1 else min(alpha, alpha / (2 * (1 - alpha)))


def sigma_cap(n: int) -> int:
    """Largest anisotropy the lattice truncation affords on ``n`` points per axis."""
    return max(1, int(math.log2(n / 8)))


@dataclass(frozen=True)
class ApproxParams:
    alpha: float
    p: float
    q: float
    d: int
    delta: float
    kappa: int
    sigma: int
    R: int
    a_alpha: float
    eta_margin: float = 0.5
    good_dirs: tuple = ()
    sigma_target: int | None = None
    sigma_capped: bool = False

    def __post_init__(self):
        if not math.isclose(self.alpha * self.p, self.d, rel_tol=1e-12):
            raise ParameterError(f"need alpha * p = d, got {self.alpha} * {self.p} != {self.d}")
        if not 0 < self.eta_margin < 1:
            raise ParameterError("eta_margin must lie in (0, 1)")
        g = tuple(int(a) for a in self.good_dirs) or tuple(range(self.kappa))
        if len(g) != self.kappa or len(set(g)) != len(g) or any(not 0 <= a < self.d for a in g):
            raise ParameterError(f"need {self.kappa} distinct good directions in [0, {self.d}), got {g}")
        object.__setattr__(self, "good_dirs", g)

    @property
    def tl(self) -> TLParams:
        return TLParams(self.alpha, self.p, self.q)

    def control(self, good_dirs=None) -> ControlParams:
        g = self.good_dirs if good_dirs is None else tuple(good_dirs)
        return ControlParams(self.sigma, self.R, self.alpha, self.p, g)

    def with_good_dirs(self, good_dirs) -> "ApproxParams":
        return replace(self, good_dirs=tuple(good_dirs))

    def with_sigma(self, sigma: int) -> "ApproxParams":
        R = _stride(self.kappa, self.alpha, self.a_alpha, sigma)
        return replace(self, sigma=int(sigma), R=R)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "p": self.p, "q": self.q, "d": self.d, "delta": self.delta,
                "kappa": self.kappa, "sigma": self.sigma, "R": self.R, "a_alpha": self.a_alpha,
                "eta_margin": self.eta_margin, "good_dirs": list(self.good_dirs),
                "sigma_target": self.sigma_target, "sigma_capped": self.sigma_capped}


def _stride(kappa: int, alpha: float, a_alpha: float, sigma: int) -> int:
    return int(math.ceil((kappa + 1) / min(1.0, alpha * a_alpha) * sigma - 1e-12))


def select_parameters(alpha: float, p: float, q: float, d: int, delta: float,
                      sigma_override: int | None = None, n: int | None = None,
                      good_dirs=None, eta_margin: float = 0.5) -> ApproxParams:
    """Choose ``kappa``, ``a_alpha``, ``sigma`` and ``R`` for accuracy dial ``delta``.

    ``sigma`` is the smallest integer with
    ``sigma^3 2^{(-min(1, alpha) + kappa/p) sigma} <= delta/2`` and
    ``sigma 2^{-sigma} <= delta/2``.  When ``n`` is given it is capped at
    ``log2(n/8)`` and ``sigma_capped`` records the cap; an explicit override is
    used as given and flagged the same way if it exceeds the cap.

    Raises
    ------
    ParameterError
        If ``alpha p != d``, ``p`` or ``q`` is outside ``(1, inf)``, ``delta <= 0``,
        or no good direction exists.
    """
    if not math.isclose(alpha * p, d, rel_tol=1e-12):
        raise ParameterError(f"need alpha * p = d, got {alpha} * {p} != {d}")
    TLParams(alpha, p, q)
    if not delta > 0:
        raise ParameterError("delta must be positive")
    kappa = _kappa(p, d)
    if kappa < 1:
        raise ParameterError(f"no good direction: kappa = {kappa} for p = {p}, d = {d}")
    a_alpha = _a_alpha(alpha)
    rate = -min(1.0, alpha) + kappa / p
    target = None
    for s in range(1, 100000):
        if s**3 * 2.0 ** (rate * s) <= delta / 2 and s * 2.0**-s <= delta / 2:
            target = s
            break
    if target is None:
        raise ParameterError(f"no sigma reaches delta = {delta}")
    capped = False
    if sigma_override is not None:
        sigma = int(sigma_override)
        if sigma < 1:
            raise ParameterError("sigma must be >= 1")
        capped = n is not None and sigma > sigma_cap(n)
    else:
        sigma = target
        if n is not None and sigma > sigma_cap(n):
            sigma, capped = sigma_cap(n), True
    R = _stride(kappa, alpha, a_alpha, sigma)
    if not alpha * R > 1:
        raise ParameterError("alpha * R must exceed 1")
    return ApproxParams(float(alpha), float(p), float(q), int(d), float(delta), kappa, sigma, R, a_alpha,
                        float(eta_margin), tuple(good_dirs) if good_dirs is not None else (),
                        target, capped)


@dataclass(frozen=True, eq=False)
class SplitResult:
    h: dict = field(repr=False)
    g: dict = field(repr=False)


def split(decomp: LPDecomposition, control: ControlFamily) -> SplitResult:
    """``h_j = (1 - zeta_j) Delta_j f`` and ``g_j = zeta_j Delta_j f``."""
    h, g = {}, {}
    for j in control.bands:
        b = decomp[j].samples
        z = control.zeta[j].samples.real
        g[j] = GridFunction(decomp.spec, z * b)
        h[j] = GridFunction(decomp.spec, b - g[j].samples)
    return SplitResult(h, g)


def partition_identity_eval(a) -> dict:
    """Both parts of ``1 = sum_k a_k prod_{i<k} (1 - a_i) + prod_k (1 - a_k)``.

    The sequence is indexed from the smallest index upward, so the product in
    the sum runs over entries strictly between the base point and ``k``.
    """
    a = np.asarray(a)
    sum_part = 0.0
    prod = 1.0
    for v in a:
        sum_part = sum_part + v * prod
        prod = prod * (1 - v)
    return {"lhs": 1.0, "sum_part": sum_part, "prod_part": prod}


def _suffix_sweep(terms: dict, damp: dict, bands: list) -> np.ndarray:
    # top band down: acc += term_j * prod_{j' > j} (1 - damp_j')
    acc = None
    prod = None
    for j in sorted(bands, reverse=True):
        t = terms[j].samples if prod is None else terms[j].samples * prod
        acc = t.copy() if acc is None else acc + t
        f = 1.0 - damp[j].samples.real
        prod = f if prod is None else prod * f
    return acc


def build_h_tilde(h: dict, control: ControlFamily) -> GridFunction:
    """``sum_j h_j prod_{j' > j} (1 - U_j')`` in one top-down sweep."""
    bands = control.bands
    spec = control.omega[bands[0]].spec
    return GridFunction(spec, _suffix_sweep(h, control.U, bands))


def build_g_tilde(g: dict, control: ControlFamily) -> GridFunction:
    """Residue-class version of :func:`build_h_tilde` with damping ``G``."""
    bands = control.bands
    R = control.params.R
    spec = control.omega[bands[0]].spec
    out = np.zeros(spec.shape, dtype=complex)
    for c in range(R):
        cls = [j for j in bands if (j - bands[0]) % R == c]
        if cls:
            out += _suffix_sweep(g, control.G, cls)
    return GridFunction(spec, out)


def _prefix_V(terms: dict, damp: dict, bands: list) -> dict:
    # V_j = sum_{j' < j} term_j' prod_{j' < j'' < j} (1 - damp_j'')
    out = {}
    V = None
    for j in sorted(bands):
        spec = terms[j].spec
        out[j] = GridFunction(spec, np.zeros(spec.shape) if V is None else V)
        nxt = terms[j].samples if V is None else V * (1.0 - damp[j].samples.real) + terms[j].samples
        V = nxt
    return out


@dataclass(frozen=True, eq=False)
class ApproxState:
    """Intermediate fields at working scale, kept for diagnostics."""

    decomp: LPDecomposition = field(repr=False)
    control: ControlFamily = field(repr=False)
    split: SplitResult = field(repr=False)
    perm: tuple = ()


@dataclass(frozen=True, eq=False)
class ApproxResult:
    F: GridFunction = field(repr=False)
    h_tilde: GridFunction = field(repr=False)
    g_tilde: GridFunction = field(repr=False)
    scale_used: float
    report: dict
    state: ApproxState | None = field(default=None, repr=False)


def _permute(f: GridFunction, perm: tuple) -> GridFunction:
    if perm == tuple(range(f.spec.d)):
        return f
    return GridFunction(f.spec, np.transpose(f.samples, perm))


def _unpermute(f: GridFunction, perm: tuple) -> GridFunction:
    if perm == tuple(range(f.spec.d)):
        return f
    return GridFunction(f.spec, np.transpose(f.samples, np.argsort(perm)))


def direction_errors(bank: FilterBank, f: GridFunction, F: GridFunction, params: TLParams) -> list[float]:
    """``|| d_i (f - F) ||_{alpha-1, p, q}`` for every axis ``i``."""
    diff = f - F
    lower = params.shifted(-1.0)
    return [tl_norm(decompose(bank, spectral_derivative(diff, ax, 1)), lower) for ax in range(f.spec.d)]


def approximate(f: GridFunction, params: ApproxParams, bank: FilterBank | None = None,
                keep_state: bool = False) -> ApproxResult:
    """Bounded approximant ``F`` of ``f``.

    The input is normalized to unit norm, then scaled by
    ``theta = eta 2^{-kappa sigma} / max(1, s)`` with ``s`` the largest sup norm
    of any band or control function, so every ``omega_j`` and ``Delta_j f`` is
    below one and the norm sits under the ``2^{-kappa sigma}`` threshold at
    which the good-direction error shrinks with ``sigma``.  The construction
    runs at that working scale and ``F`` is scaled back.  Axes are
    internally reordered so the good directions come first, in the order given.
    """
    spec = f.spec
    if spec.d != params.d:
        raise ParameterError(f"params are for d = {params.d}, field has d = {spec.d}")
    bank = bank or build_filter_bank(spec)
    if bank.spec != spec:
        raise ParameterError("filter bank and field live on different grids")
    perm = tuple(params.good_dirs) + tuple(a for a in range(spec.d) if a not in params.good_dirs)
    fc = _permute(f, perm)
    dec = decompose(bank, fc)
    tl = tl_norm(dec, params.tl)
    base = {"params": params.to_dict(), "tl_norm_f": tl}
    if tl == 0.0:
        Z = GridFunction.zeros(spec)
        rep = dict(base, zero_input=True, theta=None, s=None, sup_F=0.0, tl_norm_F=0.0,
                   direction_errors=[0.0] * spec.d, good_error=0.0, all_error=0.0,
                   budgets={"h_ok": True, "g_ok": True}, C_low=None)
        return ApproxResult(Z, Z, Z, 1.0, rep)
    cp = params.control(tuple(range(params.kappa)))
    unit = dec.scaled(1.0 / tl)
    om_unit = build_omegas(unit, cp)
    s = max(max(float(np.max(om_unit[j].samples.real)), unit[j].max_abs()) for j in unit.indices)
    theta = params.eta_margin * 2.0 ** (-params.kappa * params.sigma) / max(1.0, s)
    work = unit.scaled(theta)
    control = build_control(work, cp, {j: w * theta for j, w in om_unit.items()})
    sp = split(work, control)
    ht = build_h_tilde(sp.h, control)
    gt = build_g_tilde(sp.g, control)
    scale = theta / tl
    Fc = (gt + ht) * (tl / theta)
    F = _unpermute(Fc, perm)
    C_low = control.C_low
    h_sup, g_sup = ht.max_abs(), gt.max_abs()
    errs = direction_errors(bank, f, F, params.tl)
    good = math.fsum(errs[a] for a in params.good_dirs)
    rep = dict(
        base,
        zero_input=False,
        theta=theta,
        s=s,
        C_low=C_low,
        sup_F=F.max_abs(),
        tl_norm_F=tl_norm(decompose(bank, F), params.tl),
        mean_f=[dec.mean.real, dec.mean.imag],
        direction_errors=errs,
        good_error=good / tl,
        all_error=math.fsum(errs) / tl,
        budgets={"h_sup": h_sup, "h_bound": C_low, "h_ok": bool(h_sup <= C_low),
                 "g_sup": g_sup, "g_bound": C_low * params.R, "g_ok": bool(g_sup <= C_low * params.R)},
        sup_omega_working=max(float(np.max(w.samples.real)) for w in control.omega.values()),
    )
    state = ApproxState(work, control, sp, perm) if keep_state else None
    return ApproxResult(F, _unpermute(ht, perm), _unpermute(gt, perm), scale, rep, state)


def approx_diagnostics(result: ApproxResult, params: ApproxParams, bank: FilterBank | None = None) -> dict:
    """Identity residuals, pointwise bounds and measured norm ratios at working scale.

    Requires ``approximate(..., keep_state=True)``.  Fields are in the internal
    (good-directions-first) axis order.
    """
    st = result.state
    if st is None:
        if result.report.get("zero_input"):
            return {"zero_input": True}
        raise ParameterError("approximate() was called without keep_state=True")
    ctl, sp, dec = st.control, st.split, st.decomp
    spec = dec.spec
    bands = ctl.bands
    R = ctl.params.R
    C_low = ctl.C_low
    perm = st.perm
    ht = _permute(result.h_tilde, perm).samples
    gt = _permute(result.g_tilde, perm).samples
    h = sum(sp.h[j].samples for j in bands)
    g = sum(sp.g[j].samples for j in bands)
    V = _prefix_V(sp.h, ctl.U, bands)
    H = {}
    for c in range(R):
        cls = [j for j in bands if (j - bands[0]) % R == c]
        H.update(_prefix_V(sp.g, ctl.G, cls))
    uv = sum(ctl.U[j].samples.real * V[j].samples for j in bands)
    gh = sum(ctl.G[j].samples.real * H[j].samples for j in bands)
    mag_h = max(float(np.max(np.abs(h))), 1e-300)
    mag_g = max(float(np.max(np.abs(g))), 1e-300)
    res_h = float(np.max(np.abs(h - ht - uv))) / mag_h
    res_g = float(np.max(np.abs(g - gt - gh))) / mag_g if np.any(g) else float(np.max(np.abs(gt)))
    total = sum(dec[j].samples for j in bands)
    res_split = float(np.max(np.abs(h + g - total))) / max(float(np.max(np.abs(total))), 1e-300)
    maxV = max(float(np.max(np.abs(V[j].samples))) for j in bands)
    maxH = max(float(np.max(np.abs(H[j].samples))) for j in bands)
    hj_ok = all(np.all(np.abs(sp.h[j].samples) <= C_low * ctl.U[j].samples.real * (1 + 1e-12)) for j in bands)
    gj_ok = all(np.all(np.abs(sp.g[j].samples) <= C_low * ctl.G[j].samples.real * (1 + 1e-12) + 1e-300)
                for j in bands)
    bank = bank or build_filter_bank(spec)
    tl = tl_norm(dec, params.tl)
    kap, sig = params.kappa, params.sigma
    lower = params.tl.shifted(-1.0)

    def good_err(field_):
        gf = GridFunction(spec, field_)
        return math.fsum(tl_norm(decompose(bank, spectral_derivative(gf, a, 1)), lower) for a in range(kap))

    h_err = good_err(h - ht)
    g_err = good_err(g - gt)
    h_rate = 2.0 ** ((-min(1.0, params.alpha) + kap / params.p) * sig)
    g_rate = 2.0 ** (-min(1.0, params.alpha * params.a_alpha) * R)
    return {
        "identity_residuals": {"split": res_split, "h": res_h, "g": res_g},
        "max_V": maxV, "max_H": maxH, "C_low": C_low,
        "V_ok": bool(maxV <= C_low * (1 + 1e-12)), "H_ok": bool(maxH <= C_low * (1 + 1e-12)),
        "V_le_1": bool(maxV <= 1 + 1e-12),
        "h_domination_ok": bool(hj_ok), "g_domination_ok": bool(gj_ok),
        "h_error_ratio": h_err / (h_rate * tl) if tl else None,
        "g_error_ratio": g_err / (g_rate * tl) if tl else None,
        "h_error": h_err / tl if tl else None, "g_error": g_err / tl if tl else None,
    }
