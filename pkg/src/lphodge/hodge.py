"""Differential forms on the torus and a bounded solver for ``d psi = d phi``.

Multi-indices are strictly increasing tuples of 0-based axes.  Exterior
derivative and codifferential act in frequency space with the same
Nyquist-zeroed first-derivative symbol as :func:`spectral_derivative`, so
``d d* + d* d`` is exactly the scalar symbol ``|k|^2`` on that grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .approx import ApproxParams, approximate
from .grid import DataError, GridFunction, GridSpec, ParameterError, _fftn, _ifftn
from .littlewood_paley import FilterBank, build_filter_bank, decompose, reconstruct
from .norms import TLParams, tl_norm

__all__ = [
    "CLOSED_RTOL",
    "DegreeError",
    "NotExactError",
    "multi_indices",
    "Form",
    "exterior_derivative",
    "codifferential",
    "min_norm_solve",
    "good_directions_for",
    "form_tl_norm",
    "HodgeReport",
    "bounded_solve",
]


# d(phi) below this fraction of k_max ||phi||_inf counts as exactly zero
CLOSED_RTOL = 1e-13


class DegreeError(ParameterError):
    """Form degree outside the range an operation accepts."""


class NotExactError(DataError):
    """A form that should be exact is not closed."""


def multi_indices(d: int, l: int) -> list[tuple[int, ...]]:
    return list(combinations(range(d), l))


@dataclass(frozen=True, eq=False)
class Form:
    """An ``l``-form: one coefficient field per increasing multi-index."""

    spec: GridSpec
    l: int
    coefficients: dict = field(repr=False)

    def __post_init__(self):
        d = self.spec.d
        if not 0 <= self.l <= d:
            raise DegreeError(f"degree {self.l} outside [0, {d}]")
        want = set(multi_indices(d, self.l))
        got = {tuple(k) for k in self.coefficients}
        if got != want:
            raise DataError(f"coefficients must cover exactly {sorted(want)}")
        coeffs = {}
        for k, v in self.coefficients.items():
            if v.spec != self.spec:
                raise ParameterError("coefficients live on different grids")
            coeffs[tuple(k)] = v
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def zeros(cls, spec: GridSpec, l: int) -> "Form":
        return cls(spec, l, {I: GridFunction.zeros(spec) for I in multi_indices(spec.d, l)})

    @classmethod
    def from_arrays(cls, spec: GridSpec, l: int, arrays: dict) -> "Form":
        return cls(spec, l, {tuple(I): GridFunction(spec, a) for I, a in arrays.items()})

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def indices(self) -> list[tuple[int, ...]]:
        return multi_indices(self.d, self.l)

    def __getitem__(self, I) -> GridFunction:
        return self.coefficients[tuple(I)]

    def _zip(self, other: "Form", op) -> "Form":
        if other.l != self.l or other.spec != self.spec:
            raise ParameterError("forms differ in degree or grid")
        return Form(self.spec, self.l, {I: op(self[I], other[I]) for I in self.indices})

    def __add__(self, other: "Form") -> "Form":
        return self._zip(other, lambda a, b: a + b)

    def __sub__(self, other: "Form") -> "Form":
        return self._zip(other, lambda a, b: a - b)

    def scale(self, c) -> "Form":
        return Form(self.spec, self.l, {I: self[I] * c for I in self.indices})

    def max_abs(self) -> float:
        return max((self[I].max_abs() for I in self.indices), default=0.0)


def _sign(i: int, J: tuple) -> int:
    return -1 if J.index(i) % 2 else 1


def _symbols(spec: GridSpec) -> list[np.ndarray]:
    # i k with the Nyquist row zeroed, as for an odd-order spectral derivative
    return [1j * k for k in spec.wavenumbers(zero_nyquist=True)]


def _hats(form: Form) -> dict:
    return {I: _fftn(form[I].samples) for I in form.indices}


def _d_hat(spec: GridSpec, l: int, hats: dict) -> dict:
    ik = _symbols(spec)
    out = {}
    for J in multi_indices(spec.d, l + 1):
        acc = np.zeros(spec.shape, dtype=complex)
        for i in J:
            rest = tuple(a for a in J if a != i)
            acc = acc + _sign(i, J) * ik[i] * hats[rest]
        out[J] = acc
    return out


def _dstar_hat(spec: GridSpec, l: int, hats: dict) -> dict:
    """Adjoint of ``d``: maps ``l``-form coefficients to ``(l-1)``-form coefficients."""
    ik = _symbols(spec)
    out = {}
    for I in multi_indices(spec.d, l - 1):
        acc = np.zeros(spec.shape, dtype=complex)
        for i in range(spec.d):
            if i in I:
                continue
            J = tuple(sorted(I + (i,)))
            acc = acc + _sign(i, J) * np.conj(ik[i]) * hats[J]
        out[I] = acc
    return out


def _from_hats(spec: GridSpec, l: int, hats: dict) -> Form:
    return Form(spec, l, {I: GridFunction(spec, _ifftn(h)) for I, h in hats.items()})


def exterior_derivative(lam: Form) -> Form:
    """``(d lam)_J = sum_{i in J} (-1)^{pos(i, J)} d_i lam_{J \\ i}``."""
    if lam.l >= lam.d:
        raise DegreeError(f"d of a {lam.l}-form in dimension {lam.d} is not defined")
    return _from_hats(lam.spec, lam.l + 1, _d_hat(lam.spec, lam.l, _hats(lam)))


def codifferential(om: Form) -> Form:
    """Formal adjoint ``d*`` of the exterior derivative."""
    if om.l < 1:
        raise DegreeError("codifferential of a 0-form is not defined")
    return _from_hats(om.spec, om.l - 1, _dstar_hat(om.spec, om.l, _hats(om)))


def min_norm_solve(om: Form, tol: float = 1e-10, scale: float | None = None) -> Form:
    """``lam = d* Delta^{-1} om``, the minimal-norm solution of ``d lam = om``.

    The mean and closedness checks are relative to ``max(||om||_inf, scale)``;
    pass ``scale`` when ``om`` is a small remainder of a larger computation
    whose round-off should not count against it.

    Raises
    ------
    DegreeError
        If ``om`` is a 0-form.
    DataError
        If a coefficient of ``om`` has nonzero mean.
    NotExactError
        If ``d om`` is not zero within ``tol`` (relative to the derivative scale),
        or ``om`` has content where the Nyquist-zeroed symbol vanishes.
    """
    spec = om.spec
    if om.l < 1:
        raise DegreeError("min_norm_solve needs a form of degree >= 1")
    sup = om.max_abs()
    if sup == 0.0:
        return Form.zeros(spec, om.l - 1)
    ref = max(sup, scale or 0.0)
    N = spec.n**spec.d
    hats = _hats(om)
    for I, h in hats.items():
        if abs(h.flat[0]) / N > 1e-12 * ref:
            raise DataError(f"coefficient {I} has nonzero mean {h.flat[0] / N}")
    ik = _symbols(spec)
    k2 = sum(np.abs(s) ** 2 for s in ik)
    if om.l < om.d:
        dom = _d_hat(spec, om.l, hats)
        kmax = max(float(np.max(np.abs(s))) for s in ik)
        worst = max(float(np.max(np.abs(h))) for h in dom.values()) / N
        if worst > tol * kmax * ref:
            raise NotExactError(f"d(omega) is {worst / (kmax * ref):.3e} relative, not closed")
    dead = k2 == 0
    for I, h in hats.items():
        if np.any(np.abs(h[dead]) / N > 1e-12 * ref):
            raise NotExactError(f"coefficient {I} has content at frequencies with zero symbol")
    lam = _dstar_hat(spec, om.l, hats)
    inv = np.zeros(spec.shape)
    inv[~dead] = 1.0 / k2[~dead]
    return _from_hats(spec, om.l - 1, {I: h * inv for I, h in lam.items()})


def good_directions_for(I, kappa: int, d: int, force: bool = False) -> tuple[int, ...]:
    """Axes not in ``I``: the directions in which ``lam_I`` must be approximated well.

    Raises ``DegreeError`` when ``|I| < d - kappa`` unless ``force``.
    """
    I = tuple(I)
    if any(b <= a for a, b in zip(I, I[1:])):
        raise ParameterError(f"multi-index {I} is not strictly increasing")
    if any(not 0 <= a < d for a in I):
        raise ParameterError(f"multi-index {I} outside [0, {d})")
    if len(I) < d - kappa and not force:
        raise DegreeError(f"degree {len(I)} below d - kappa = {d - kappa}")
    return tuple(a for a in range(d) if a not in I)


def form_tl_norm(form: Form, bank: FilterBank, params: TLParams) -> float:
    """``max_I ||form_I||_{alpha, p, q}``."""
    return max((tl_norm(decompose(bank, form[I]), params) for I in form.indices), default=0.0)


@dataclass
class HodgeReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    sigma_history: list = field(default_factory=list)
    bookkeeping_error: float = 0.0
    norm_dphi: float = 0.0
    sup_psi: float = 0.0
    tl_psi: float = 0.0
    converged: bool = False
    iteration_cap: bool = False
    non_contraction: bool = False
    certified: bool = True
    min_norm_residual: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _approx_component(lam_I: GridFunction, params: ApproxParams, bank: FilterBank) -> GridFunction:
    # F approximates the banded part; content outside the band range is passed through unchanged
    F = approximate(lam_I, params, bank).F
    rest = lam_I - reconstruct(decompose(bank, lam_I))
    return F + rest


def bounded_solve(phi: Form, params: ApproxParams, tol: float = 1e-6, max_iter: int = 40,
                  bank: FilterBank | None = None, sigma_escalation: bool = True,
                  escalate_at: float = 0.9, sigma_limit: int | None = None,
                  force: bool = False) -> tuple[Form, HodgeReport]:
    """Iterate minimal-norm solve and bounded approximation until ``d psi = d phi``.

    Step ``i``: ``lam = min_norm_solve(r_i)``; ``beta_I`` approximates
    ``lam_I`` with good directions the complement of ``I``;
    ``r_{i+1} = 2 (r_i - d beta)``; ``psi += 2^{-i} beta``.  The residual
    ``||d phi - d psi||`` (max over components of the ``alpha - 1`` norm) is
    recorded each step.  With ``sigma_escalation`` a step whose residual ratio
    is at least ``escalate_at`` raises ``sigma`` by one for later steps.  Three
    consecutive ratios ``>= 1`` set ``non_contraction``.
    """
    spec = phi.spec
    d, l = spec.d, phi.l
    if params.d != d:
        raise ParameterError(f"params are for d = {params.d}, form has d = {d}")
    if l >= d:
        raise DegreeError(f"degree {l} must be below d = {d}")
    certified = d - params.kappa <= l
    if not certified and not force:
        raise DegreeError(f"degree {l} outside [d - kappa, d - 1] = [{d - params.kappa}, {d - 1}]")
    bank = bank or build_filter_bank(spec)
    lower = params.tl.shifted(-1.0)
    dphi = exterior_derivative(phi)
    rep = HodgeReport(certified=certified)
    psi = Form.zeros(spec, l)
    sup_dphi = dphi.max_abs()
    kmax = max(float(np.max(np.abs(k))) for k in spec.wavenumbers(zero_nyquist=True))
    # closed up to round-off: the derivative of a gradient, say
    if sup_dphi <= CLOSED_RTOL * kmax * phi.max_abs():
        rep.converged = True
        return psi, rep
    ref = form_tl_norm(dphi, bank, lower)
    rep.norm_dphi = ref
    if ref == 0.0:
        rep.converged = True
        return psi, rep
    lam0 = min_norm_solve(dphi)
    rep.min_norm_residual = (exterior_derivative(lam0) - dphi).max_abs() / sup_dphi
    cur = params
    r = dphi
    prev = ref
    above_one = 0
    sigma_top = sigma_limit if sigma_limit is not None else cur.sigma + 4
    for i in range(max_iter):
        lam = lam0 if i == 0 else min_norm_solve(r, scale=sup_dphi * 2.0**i)
        beta = {}
        for I in lam.indices:
            good = good_directions_for(I, params.kappa, d, force=True)
            # approximate() needs exactly kappa good axes: keep the complement first, pad if short
            extra = tuple(a for a in range(d) if a not in good)
            gd = (good + extra)[:cur.kappa]
            beta[I] = _approx_component(lam[I], cur.with_good_dirs(gd), bank)
        beta = Form(spec, l, beta)
        r = (r - exterior_derivative(beta)).scale(2.0)
        psi = psi + beta.scale(2.0**-i)
        res = form_tl_norm(dphi - exterior_derivative(psi), bank, lower)
        book = form_tl_norm(r, bank, lower) * 2.0 ** -(i + 1)
        rep.bookkeeping_error = max(rep.bookkeeping_error, abs(res - book))
        rep.residual_history.append(res)
        rep.sigma_history.append(cur.sigma)
        ratio = res / prev if prev > 0 else 0.0
        rep.ratios.append(ratio)
        prev = res
        rep.iterations = i + 1
        above_one = above_one + 1 if ratio >= 1 else 0
        if above_one >= 3:
            rep.non_contraction = True
            break
        if res <= tol * ref:
            rep.converged = True
            break
        if sigma_escalation and ratio >= escalate_at and cur.sigma < sigma_top:
            cur = cur.with_sigma(cur.sigma + 1)
    else:
        rep.iteration_cap = True
    rep.sup_psi = psi.max_abs()
    rep.tl_psi = form_tl_norm(psi, bank, params.tl)
    return psi, rep
