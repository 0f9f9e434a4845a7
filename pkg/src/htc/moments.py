"""Steady second moments from the Laplace-domain linear systems.

Two perturbative closures of the photon-number / dipole-coherence
hierarchy are solved at s -> 0 by dense LU:

* first order: a 5x5 system in (<n_c>, <a sigma^+>, <a^+ sigma>, <P_m>,
  <sigma_n^+ sigma_m>), where the cross-molecule coherence keeps its own
  row;
* second order: a 4x4 system where the cross-molecule row has been
  substituted into the cavity-dipole rows through the dressed
  cross-molecule kernel, and the drive enters through the cascaded
  cavity-dipole kernel.

The drive vector uses the first-order steady amplitudes, so every moment
scales exactly as eta**2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .params import KernelPolicy, ModelParams, at_detuning, derive
from .response import (FLAG_OK, FLAG_POLE, SpectrumSeries,
                       steady_first_moments)

COND_REPORT = 1e8
RESIDUAL_TOL = 1e-10
POSITIVITY_SLACK = 1e-9


class SingularSystemError(Exception):
    """A moment system could not be solved reliably."""

    def __init__(self, label: str, cond: float):
        self.label = label
        self.cond = cond
        super().__init__(f"{label}: system singular or ill-conditioned "
                         f"(cond ~ {cond:.3e})")


@dataclass(frozen=True)
class SecondMoments:
    """Steady second moments of the driven cavity-molecule system.

    ``cross`` (the inter-molecule coherence <sigma_n^+ sigma_m>) exists
    only for the first-order solve.  ``warnings`` flags unphysical values
    (negative photon number, population outside [0, 1]) that signal the
    weak-drive closure breaking down; they never abort the computation.
    """

    n_c: float
    a_dag_sigma: complex
    p_m: float
    cross: complex | None
    order: str
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class FluctuationInputs:
    """Connected steady correlators feeding the emission-spectrum solve."""

    d_sigma_sigma: float
    d_sigma_cross: complex
    d_sigma_a: complex


def _solve_checked(mat: np.ndarray, rhs: np.ndarray,
                   label: str) -> tuple[np.ndarray, float]:
    cond = float(np.linalg.cond(mat))
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularSystemError(label, cond)
    sol = np.linalg.solve(mat, rhs)
    resid = np.linalg.norm(mat @ sol - rhs)
    scale = np.linalg.norm(rhs)
    if scale > 0 and resid > RESIDUAL_TOL * scale:
        raise SingularSystemError(label, cond)
    return sol, cond


def _physicality_warnings(n_c: float, p_m: float, cond: float) -> tuple[str, ...]:
    flags = []
    if n_c < -POSITIVITY_SLACK:
        flags.append(f"n_c negative beyond tolerance: {n_c:.3e}")
    if p_m < -POSITIVITY_SLACK or p_m > 1.0 + POSITIVITY_SLACK:
        flags.append(f"p_m outside [0, 1]: {p_m:.3e}")
    if cond > COND_REPORT:
        flags.append(f"condition number {cond:.3e} above {COND_REPORT:.0e}")
    return tuple(flags)


def _solve_m1_full(params: ModelParams, policy: KernelPolicy,
                   include_intermolecular: bool = True
                   ) -> tuple[np.ndarray, float]:
    """Solve the 5x5 first-order system; returns (vector, condition number).

    Vector ordering: (<n_c>, <a sigma^+>, <a^+ sigma>, <P_m>,
    <sigma^+ sigma cross>).
    """
    d = derive(params)
    n, g, eta = params.n_molecules, params.g, params.eta
    fp = kernels.fbar_m_prime(0.0, params, policy)
    fmn = (kernels.fbar_mn(0.0, params, policy)
           if include_intermolecular else 0.0)
    fm = steady_first_moments(params, policy)
    fpc = np.conj(fp)
    m1 = np.array([
        [-2.0 * d.kappa, 1j * n * g, -1j * n * g, 0.0, 0.0],
        [1j * g * fpc, -1.0, 0.0, -1j * g * fpc, -1j * (n - 1) * g * fpc],
        [-1j * g * fp, 0.0, -1.0, 1j * g * fp, 1j * (n - 1) * g * fp],
        [0.0, -1j * g, 1j * g, -d.gamma_par, 0.0],
        [0.0, -1j * g * fmn, 1j * g * fmn, 0.0, -1.0],
    ], dtype=complex)
    v_in = np.array([
        2.0 * fm.a_ss.real,
        fpc * np.conj(fm.sigma_ss),
        fp * fm.sigma_ss,
        0.0,
        0.0,
    ], dtype=complex)
    return _solve_checked(m1, -eta * v_in, "first-order moments")


def solve_m1(params: ModelParams, policy: KernelPolicy,
             include_intermolecular: bool = True) -> SecondMoments:
    """First-order steady second moments.

    ``include_intermolecular`` zeroes the cross-molecule kernel entries,
    switching off the cavity-induced incoherent coupling between molecules
    while keeping everything else.
    """
    sol, cond = _solve_m1_full(params, policy, include_intermolecular)
    n_c = float(sol[0].real)
    p_m = float(sol[3].real)
    return SecondMoments(
        n_c=n_c,
        a_dag_sigma=complex(sol[2]),
        p_m=p_m,
        cross=complex(sol[4]),
        order="first",
        warnings=_physicality_warnings(n_c, p_m, cond),
    )


def solve_m2(params: ModelParams, policy: KernelPolicy) -> SecondMoments:
    """Second-order steady second moments (4x4 system).

    Vector ordering: (<n_c>, <a^+ sigma>, <a sigma^+>, <P_m>).  The
    conjugate row of the cavity-dipole equation drives with the conjugate
    cascaded kernel, which keeps <n_c> and <P_m> real and reproduces the
    single-molecule closed form exactly.
    """
    d = derive(params)
    n, g, eta = params.n_molecules, params.g, params.eta
    fp = kernels.fbar_m_prime(0.0, params, policy)
    fmn = kernels.fbar_mn_dressed(0.0, params, policy)
    fcm = kernels.fbar_cm_prime(0.0, params, policy)
    fm = steady_first_moments(params, policy)
    fpc, fmnc, fcmc = np.conj(fp), np.conj(fmn), np.conj(fcm)
    gg = (n - 1) * g ** 2
    m2 = np.array([
        [-2.0 * d.kappa, -1j * n * g, 1j * n * g, 0.0],
        [-1j * g * fp, -gg * fmn - 1.0, gg * fmn, 1j * g * fp],
        [1j * g * fpc, gg * fmnc, -gg * fmnc - 1.0, -1j * g * fpc],
        [0.0, 1j * g, -1j * g, -d.gamma_par],
    ], dtype=complex)
    v_in = np.array([
        2.0 * fm.a_ss.real,
        -1j * g * fcm * fm.a_ss,
        1j * g * fcmc * np.conj(fm.a_ss),
        0.0,
    ], dtype=complex)
    sol, cond = _solve_checked(m2, -eta * v_in, "second-order moments")
    n_c = float(sol[0].real)
    p_m = float(sol[3].real)
    return SecondMoments(
        n_c=n_c,
        a_dag_sigma=complex(sol[1]),
        p_m=p_m,
        cross=None,
        order="second",
        warnings=_physicality_warnings(n_c, p_m, cond),
    )


def p1_closed_form(params: ModelParams, policy: KernelPolicy) -> float:
    """Single-molecule excited population, first-order closed form.

    P_1 = (eta g^2 Re<a> Re F' - eta g kappa Im{F' <sigma>})
          / (Gamma kappa + g^2 (Gamma + kappa) Re F')
    with F' the s -> 0 cavity-dressed dipole kernel and the steady
    amplitudes evaluated for a single molecule.
    """
    p1 = params.replace(n_molecules=1)
    d = derive(p1)
    g, eta, gam = p1.g, p1.eta, p1.gamma_electronic
    fp = kernels.fbar_m_prime(0.0, p1, policy)
    fm = steady_first_moments(p1, policy)
    den = gam * d.kappa + g ** 2 * (gam + d.kappa) * fp.real
    if den == 0.0:
        raise ZeroDivisionError("closed-form population denominator is zero")
    num = (eta * g ** 2 * fm.a_ss.real * fp.real
           - eta * g * d.kappa * (fp * fm.sigma_ss).imag)
    return num / den


def p1_closed_form_2nd(params: ModelParams, policy: KernelPolicy) -> float:
    """Single-molecule excited population, second-order closed form.

    P''_1 = eta g^2 (Re<a> Re F' + kappa Re{F'_c <a>})
            / (Gamma kappa + g^2 (Gamma + kappa) Re F').
    """
    p1 = params.replace(n_molecules=1)
    d = derive(p1)
    g, eta, gam = p1.g, p1.eta, p1.gamma_electronic
    fp = kernels.fbar_m_prime(0.0, p1, policy)
    fcm = kernels.fbar_cm_prime(0.0, p1, policy)
    fm = steady_first_moments(p1, policy)
    den = gam * d.kappa + g ** 2 * (gam + d.kappa) * fp.real
    if den == 0.0:
        raise ZeroDivisionError("closed-form population denominator is zero")
    num = eta * g ** 2 * (fm.a_ss.real * fp.real
                          + d.kappa * (fcm * fm.a_ss).real)
    return num / den


def fluctuation_inputs(params: ModelParams, policy: KernelPolicy,
                       include_intermolecular: bool = True
                       ) -> FluctuationInputs:
    """Connected correlators <d sigma^+ d O>_ss from the first-order solve.

    Subtracts products of the steady first moments from the second
    moments.
    """
    sm = solve_m1(params, policy, include_intermolecular)
    fm = steady_first_moments(params, policy)
    sig2 = abs(fm.sigma_ss) ** 2
    return FluctuationInputs(
        d_sigma_sigma=sm.p_m - sig2,
        d_sigma_cross=sm.cross - sig2,
        d_sigma_a=np.conj(sm.a_dag_sigma) - fm.a_ss * np.conj(fm.sigma_ss),
    )


def total_population(moments: SecondMoments, n_molecules: int) -> float:
    """Total excited population N * <P_m> for identical molecules."""
    return n_molecules * moments.p_m


def population_sweep(params: ModelParams, policy: KernelPolicy,
                     grid: np.ndarray, order: str = "first",
                     include_intermolecular: bool = True) -> SpectrumSeries:
    """Total excited population over a cavity-detuning sweep."""
    if order not in ("first", "second"):
        raise ValueError(f"order must be 'first' or 'second', got {order!r}")
    grid = np.asarray(grid, dtype=float)
    values = np.empty(len(grid))
    flags = np.zeros(len(grid), dtype=np.uint8)
    for i, dc in enumerate(grid):
        p = at_detuning(params, dc)
        try:
            if order == "first":
                sm = solve_m1(p, policy, include_intermolecular)
            else:
                sm = solve_m2(p, policy)
            values[i] = total_population(sm, p.n_molecules)
        except (kernels.KernelError, SingularSystemError):
            values[i] = np.nan
            flags[i] = FLAG_POLE
    meta = {
        "kind": "population",
        "axis": "delta_c",
        "order": order,
        "params": params,
        "policy": policy,
        "warnings": params.validity_warnings(),
    }
    return SpectrumSeries(grid=grid, values=values, flags=flags, meta=meta)
