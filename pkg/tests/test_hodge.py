from itertools import combinations, permutations

import numpy as np
import pytest

from lphodge import hodge
from lphodge.approx import select_parameters
from lphodge.grid import DataError, GridFunction, GridSpec, ParameterError, spectral_derivative
from lphodge.hodge import (
    DegreeError, Form, NotExactError, bounded_solve, codifferential, exterior_derivative, good_directions_for,
    min_norm_solve, multi_indices,
)

from conftest import bandlimited


def random_form(spec, l, seed, kmax=8.0):
    return Form(spec, l, {I: bandlimited(spec, seed + 17 * i, 1, kmax)
                          for i, I in enumerate(multi_indices(spec.d, l))})


def perm_sign(seq):
    s = 1
    seq = list(seq)
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                s = -s
    return s


def d_oracle(form):
    """``d`` from the alternating-sum definition over all orderings of each index set."""
    spec, l = form.spec, form.l
    out = {}
    for J in combinations(range(spec.d), l + 1):
        acc = np.zeros(spec.shape, dtype=complex)
        for i in J:
            rest = tuple(a for a in J if a != i)
            # dx_i ^ dx_rest expressed as sign(i, rest) dx_J
            s = perm_sign((i,) + rest)
            acc += s * spectral_derivative(form[rest], i, 1).samples
        out[J] = acc
    return out


def test_form_validation():
    s = GridSpec(2, 8)
    with pytest.raises(DegreeError):
        Form.zeros(s, 3)
    with pytest.raises(DataError):
        Form(s, 1, {(0,): GridFunction.zeros(s)})
    with pytest.raises(ParameterError):
        Form(s, 1, {(0,): GridFunction.zeros(s), (1,): GridFunction.zeros(GridSpec(2, 16))})
    f = Form.zeros(s, 1)
    with pytest.raises(ParameterError):
        f + Form.zeros(s, 2)
    assert multi_indices(3, 2) == [(0, 1), (0, 2), (1, 2)]


def test_d_of_zero_form_is_gradient():
    s = GridSpec(2, 32)
    f = bandlimited(s, 0, 1, 8)
    g = exterior_derivative(Form(s, 0, {(): f}))
    for a in range(2):
        assert np.max(np.abs(g[(a,)].samples - spectral_derivative(f, a).samples)) <= 1e-12


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_d_matches_alternating_sum_oracle(d):
    s = GridSpec(d, 8)
    for l in range(0, min(d, 4)):
        form = random_form(s, l, 10 * d + l, kmax=3)
        got = exterior_derivative(form)
        ref = d_oracle(form)
        for J in ref:
            assert np.max(np.abs(got[J].samples - ref[J])) <= 1e-12


def test_d_of_one_form_in_the_plane():
    s = GridSpec(2, 32)
    u, v = bandlimited(s, 1, 1, 6), bandlimited(s, 2, 1, 6)
    w = exterior_derivative(Form(s, 1, {(0,): u, (1,): v}))[(0, 1)]
    ref = spectral_derivative(v, 0).samples - spectral_derivative(u, 1).samples
    assert np.max(np.abs(w.samples - ref)) <= 1e-12


@pytest.mark.parametrize("d,l", [(2, 0), (3, 0), (3, 1), (4, 1), (4, 2)])
def test_d_squared_vanishes(d, l):
    s = GridSpec(d, 8 if d == 4 else 16)
    rng = np.random.default_rng(d + l)
    # white noise: the bound is relative to the largest symbol product
    form = Form(s, l, {I: GridFunction(s, rng.standard_normal(s.shape)) for I in multi_indices(d, l)})
    dd = exterior_derivative(exterior_derivative(form))
    kmax = max(float(np.max(np.abs(k))) for k in s.wavenumbers(zero_nyquist=True))
    assert dd.max_abs() <= 1e-13 * kmax**2 * form.max_abs()


def test_d_squared_band_limited_is_absolute():
    s = GridSpec(2, 64)
    dd = exterior_derivative(exterior_derivative(Form(s, 0, {(): bandlimited(s, 3, 1, 15)})))
    assert dd.max_abs() <= 1e-12


def test_codifferential_is_adjoint():
    s = GridSpec(3, 16)
    a, b = random_form(s, 1, 1), random_form(s, 2, 2)
    lhs = sum(np.vdot(exterior_derivative(a)[J].samples, b[J].samples) for J in b.indices)
    rhs = sum(np.vdot(a[I].samples, codifferential(b)[I].samples) for I in a.indices)
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_product_rule_anticommutation():
    # d(f dg) = df ^ dg = -(dg ^ df) = -d(g df)
    s = GridSpec(2, 64)
    f, g = bandlimited(s, 4, 1, 3), bandlimited(s, 5, 1, 3)
    dg = exterior_derivative(Form(s, 0, {(): g}))
    df = exterior_derivative(Form(s, 0, {(): f}))
    a = exterior_derivative(Form(s, 1, {I: f * dg[I] for I in dg.indices}))[(0, 1)]
    b = exterior_derivative(Form(s, 1, {I: g * df[I] for I in df.indices}))[(0, 1)]
    assert np.max(np.abs(a.samples + b.samples)) <= 1e-10


def test_min_norm_solve_zero_and_gradient():
    s = GridSpec(2, 32)
    z = min_norm_solve(Form.zeros(s, 1))
    assert z.l == 0 and z.max_abs() == 0
    f = bandlimited(s, 6, 1, 8)
    lam = min_norm_solve(exterior_derivative(Form(s, 0, {(): f})))
    assert np.max(np.abs(lam[()].samples - (f.samples - f.samples.mean()))) <= 1e-12


def test_min_norm_solve_random_two_form():
    s = GridSpec(2, 32)
    om = exterior_derivative(random_form(s, 1, 3, kmax=12))
    lam = min_norm_solve(om)
    back = exterior_derivative(lam)
    assert (back - om).max_abs() <= 1e-10 * om.max_abs()
    # minimal norm: lam is co-closed
    assert codifferential(lam).max_abs() <= 1e-10 * lam.max_abs() * 16


def test_min_norm_solve_errors():
    s = GridSpec(2, 16)
    with pytest.raises(DegreeError):
        min_norm_solve(Form.zeros(s, 0))
    x = s.coordinates()
    # (sin y) dx is not closed
    with pytest.raises(NotExactError):
        sin_y = GridFunction(s, np.sin(x[1]) * np.ones(s.shape))
        min_norm_solve(Form(s, 1, {(0,): sin_y, (1,): GridFunction.zeros(s)}))
    with pytest.raises(DataError):
        min_norm_solve(Form(s, 1, {(0,): GridFunction(s, np.full(s.shape, 1.0)), (1,): GridFunction.zeros(s)}))
    # a Nyquist mode is closed under the zeroed symbol but cannot be reached by d
    nyq = GridFunction(s, np.cos(8 * x[0]) * np.ones(s.shape))
    with pytest.raises(NotExactError):
        min_norm_solve(Form(s, 1, {(0,): nyq, (1,): GridFunction.zeros(s)}))


def test_good_directions_for():
    assert good_directions_for((1,), 1, 2) == (0,)
    assert good_directions_for((0, 2), 2, 3) == (1,)
    assert good_directions_for((), 3, 3) == (0, 1, 2)
    with pytest.raises(DegreeError):
        good_directions_for((0,), 1, 3)
    assert good_directions_for((0,), 1, 3, force=True) == (1, 2)
    with pytest.raises(ParameterError):
        good_directions_for((1, 0), 2, 3)
    with pytest.raises(ParameterError):
        good_directions_for((3,), 2, 3)


@pytest.fixture(scope="module")
def hparams():
    return select_parameters(1.0, 2.0, 2.0, 2, 0.5, sigma_override=3, n=64)


def one_form(spec, seed):
    return Form(spec, 1, {(0,): bandlimited(spec, seed, 1, 15), (1,): bandlimited(spec, seed + 1, 1, 15)})


def test_bounded_solve_closed_input(bank, spec, hparams):
    f = bandlimited(spec, 7, 1, 15)
    phi = exterior_derivative(Form(spec, 0, {(): f}))
    psi, rep = bounded_solve(phi, hparams, bank=bank)
    assert rep.converged and rep.iterations == 0 and psi.max_abs() == 0.0


def test_bounded_solve_single_mode_one_step(bank, spec, hparams):
    x = spec.coordinates()
    mode = GridFunction(spec, np.exp(1j * x[0]) * np.ones(spec.shape))
    phi = Form(spec, 1, {(0,): GridFunction.zeros(spec), (1,): mode})
    psi, rep = bounded_solve(phi, hparams, bank=bank)
    assert rep.converged and rep.iterations == 1
    assert (exterior_derivative(psi) - exterior_derivative(phi)).max_abs() <= 1e-12


def test_bounded_solve_contracts_and_reaches_tolerance(bank, spec, hparams):
    phi = one_form(spec, 20)
    psi, rep = bounded_solve(phi, hparams, bank=bank)
    assert rep.converged and not rep.iteration_cap and not rep.non_contraction
    assert rep.min_norm_residual <= 1e-10
    h = rep.residual_history
    assert all(b < a for a, b in zip(h, h[1:]))
    assert all(r < 0.9 for r, s in zip(rep.ratios, rep.sigma_history) if s >= 3)
    assert h[-1] <= 1e-6 * rep.norm_dphi
    assert np.isfinite(rep.sup_psi) and rep.sup_psi == psi.max_abs()
    assert rep.bookkeeping_error <= 1e-8 * rep.norm_dphi
    assert set(rep.to_dict()) >= {"iterations", "residual_history", "sup_psi", "certified"}


def test_bounded_solve_is_linear_under_power_of_two_scaling(bank, spec, hparams):
    phi = one_form(spec, 30)
    psi1, r1 = bounded_solve(phi, hparams, bank=bank, max_iter=3)
    psi4, r4 = bounded_solve(phi.scale(4.0), hparams, bank=bank, max_iter=3)
    for I in psi1.indices:
        assert np.array_equal(psi4[I].samples, 4.0 * psi1[I].samples)
    assert r1.ratios == r4.ratios


def test_bounded_solve_iteration_cap(bank, spec, hparams):
    _, rep = bounded_solve(one_form(spec, 40), hparams, bank=bank, max_iter=1)
    assert rep.iteration_cap and not rep.converged and rep.iterations == 1


def test_bounded_solve_flags_non_contraction(bank, spec, hparams, monkeypatch):
    monkeypatch.setattr(hodge, "_approx_component", lambda lam, params, bank: GridFunction.zeros(lam.spec))
    _, rep = bounded_solve(one_form(spec, 50), hparams, bank=bank, sigma_escalation=False)
    assert rep.non_contraction and rep.iterations == 3 and not rep.converged
    assert all(r >= 1 for r in rep.ratios)


def test_bounded_solve_degree_checks(bank, spec, hparams):
    with pytest.raises(DegreeError):
        bounded_solve(Form.zeros(spec, 2), hparams, bank=bank)
    with pytest.raises(DegreeError):
        bounded_solve(Form(spec, 0, {(): bandlimited(spec, 1, 1, 4)}), hparams, bank=bank)
    psi, rep = bounded_solve(Form(spec, 0, {(): bandlimited(spec, 1, 1, 4)}), hparams, bank=bank, force=True,
                             max_iter=2)
    assert not rep.certified
    with pytest.raises(ParameterError):
        bounded_solve(Form.zeros(GridSpec(3, 8), 1), hparams)


def test_wedge_sign_oracle_is_consistent():
    # the oracle's permutation sign agrees with position parity for sorted sets
    for J in combinations(range(5), 3):
        for i in J:
            rest = tuple(a for a in J if a != i)
            assert perm_sign((i,) + rest) == (-1) ** J.index(i)
    assert perm_sign((2, 1, 0)) == -1 and len(list(permutations(range(3)))) == 6
