"""Laplace-domain moment systems: closed-form identities and scaling laws."""

import numpy as np
import pytest

import htc
from htc import figure2_defaults
from htc import moments as M
from htc.moments import _solve_m1_full


def test_moments_vanish_without_drive(policy):
    p = figure2_defaults(lam=0.3, n_molecules=3, eta=0.0)
    sm = M.solve_m1(p, policy)
    assert sm.n_c == 0 and sm.p_m == 0
    assert sm.a_dag_sigma == 0 and sm.cross == 0
    sm2 = M.solve_m2(p, policy)
    assert sm2.n_c == 0 and sm2.p_m == 0


@pytest.mark.parametrize("lam,dc", [(0.0, 0.0), (0.2, 0.0), (0.2, -35.0),
                                    (0.6, 60.0)])
def test_single_molecule_closed_forms(policy, lam, dc):
    p = htc.at_detuning(figure2_defaults(lam=lam, n_molecules=1), dc)
    m1 = M.solve_m1(p, policy)
    m2 = M.solve_m2(p, policy)
    c1 = M.p1_closed_form(p, policy)
    c2 = M.p1_closed_form_2nd(p, policy)
    assert m1.p_m == pytest.approx(c1, rel=1e-10, abs=1e-25)
    assert m2.p_m == pytest.approx(c2, rel=1e-10, abs=1e-25)


def test_closed_form_at_lam0_is_evaluable(policy):
    # the normalization unit used by population sweeps
    p = figure2_defaults(lam=0.0, n_molecules=1)
    c1 = M.p1_closed_form(p, policy)
    fp = 1.0 / 4.0  # (kappa + gamma_perp)^-1, real at resonance
    fm = htc.steady_first_moments(p, policy)
    expected = (p.eta * 25 * fm.a_ss.real * fp
                - p.eta * 5 * 1.0 * (fp * fm.sigma_ss).imag) \
        / (1.0 * 1.0 + 25 * (1.0 + 1.0) * fp)
    assert c1 == pytest.approx(expected, rel=1e-12)
    assert c1 > 0


def test_orders_agree_at_lam0(policy):
    for dc in (0.0, -80.0, 40.0):
        p = htc.at_detuning(figure2_defaults(lam=0.0, n_molecules=6), dc)
        m1 = M.solve_m1(p, policy)
        m2 = M.solve_m2(p, policy)
        assert abs(m1.n_c - m2.n_c) < 1e-9
        assert abs(m1.p_m - m2.p_m) < 1e-9
        assert abs(m1.a_dag_sigma - m2.a_dag_sigma) < 1e-9


def test_eta_squared_scaling(policy):
    p = figure2_defaults(lam=0.4, n_molecules=8, omega_l=-12.0)
    for solver in (lambda q: M.solve_m1(q, policy),
                   lambda q: M.solve_m2(q, policy)):
        lo = solver(p)
        hi = solver(p.replace(eta=2 * p.eta))
        assert hi.n_c == pytest.approx(4 * lo.n_c, rel=1e-10)
        assert hi.p_m == pytest.approx(4 * lo.p_m, rel=1e-10)
        assert hi.a_dag_sigma == pytest.approx(4 * lo.a_dag_sigma, rel=1e-10)


def test_hermiticity_pairing(policy):
    p = figure2_defaults(lam=0.25, n_molecules=4, omega_l=7.0)
    vec, _ = _solve_m1_full(p, policy)
    # <a sigma^+> and <a^+ sigma> rows are conjugate partners
    assert vec[1] == pytest.approx(np.conj(vec[2]), rel=1e-12)
    assert abs(vec[0].imag) < 1e-20  # photon number real
    assert abs(vec[3].imag) < 1e-20  # population real


def test_physicality_warnings_flag_regime_breakdown(policy):
    # strong collective coupling with large displacement drives the
    # first-order closure unphysical; this must be flagged, not hidden
    p = figure2_defaults(lam=0.6, n_molecules=20)
    sm = M.solve_m1(p, policy)
    assert sm.n_c < 0
    assert any("n_c" in w for w in sm.warnings)
    # the benign benchmark point carries no warnings
    assert M.solve_m1(figure2_defaults(lam=0.2, n_molecules=2),
                      policy).warnings == ()


def test_fluctuation_inputs_zero_without_drive_or_coupling(policy):
    p = figure2_defaults(lam=0.2, n_molecules=2, eta=0.0)
    fl = M.fluctuation_inputs(p, policy)
    assert fl.d_sigma_sigma == 0 and fl.d_sigma_cross == 0
    assert fl.d_sigma_a == 0
    p_g0 = figure2_defaults(lam=0.2, n_molecules=2, g=0.0)
    fl0 = M.fluctuation_inputs(p_g0, policy)
    assert fl0.d_sigma_sigma == pytest.approx(0.0, abs=1e-30)
    assert abs(fl0.d_sigma_a) == pytest.approx(0.0, abs=1e-30)


def test_fluctuation_inputs_connected_subtraction(policy):
    p = figure2_defaults(lam=0.2, n_molecules=2)
    sm = M.solve_m1(p, policy)
    fm = htc.steady_first_moments(p, policy)
    fl = M.fluctuation_inputs(p, policy)
    assert fl.d_sigma_sigma \
        == pytest.approx(sm.p_m - abs(fm.sigma_ss) ** 2, rel=1e-12)
    assert fl.d_sigma_a == pytest.approx(
        np.conj(sm.a_dag_sigma) - fm.a_ss * np.conj(fm.sigma_ss), rel=1e-12)
    assert fl.d_sigma_sigma >= -1e-9


def test_total_population(policy):
    p = figure2_defaults(lam=0.2, n_molecules=5)
    sm = M.solve_m1(p, policy)
    assert M.total_population(sm, 5) == pytest.approx(5 * sm.p_m)
    zero = M.SecondMoments(n_c=0.0, a_dag_sigma=0j, p_m=0.0, cross=0j,
                           order="first")
    assert M.total_population(zero, 17) == 0.0


def test_anti_stokes_population_grows_with_n(policy):
    # population feature near delta_c = -nu strengthens with molecule count
    dc = -250.0
    tot = {}
    for n in (2, 20):
        p = htc.at_detuning(figure2_defaults(lam=0.6, n_molecules=n), dc)
        tot[n] = M.total_population(M.solve_m1(p, policy), n)
    assert tot[20] > tot[2] > 0


def test_include_intermolecular_flag(policy):
    p = figure2_defaults(lam=0.6, n_molecules=20)
    on = M.solve_m1(p, policy, include_intermolecular=True)
    off = M.solve_m1(p, policy, include_intermolecular=False)
    assert off.cross == 0
    assert on.cross != 0
    assert on.p_m != off.p_m
    # single molecule: no pair coupling, flag is inert
    p1 = figure2_defaults(lam=0.6, n_molecules=1)
    assert M.solve_m1(p1, policy, True).p_m \
        == pytest.approx(M.solve_m1(p1, policy, False).p_m, rel=1e-12)


def test_population_sweep_series(policy):
    p = figure2_defaults(lam=0.2, n_molecules=2)
    grid = np.linspace(-40, 40, 21)
    series = M.population_sweep(p, policy, grid)
    assert len(series) == 21
    assert np.all(series.flags == 0)
    assert np.all(series.values > 0)
    assert series.meta["kind"] == "population"
