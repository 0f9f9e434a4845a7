"""Steady-state fluorescence spectrum of the collective molecular dipole.

Per emission frequency a 3x3 linear system couples the one-molecule
autocorrelation spectrum, the molecule-pair cross spectrum and the
cavity-molecule cross spectrum.  Its inputs are the connected steady
correlators from the first-order moment solve.  The total spectrum of the
collective dipole is

    S(omega) = N * Re(S_mm) + N * (N - 1) * Re(S_mn),

with Stokes sidebands appearing at negative frequencies (the Fourier
convention carries exp(-i*omega*tau)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .moments import (FluctuationInputs, SingularSystemError,
                      fluctuation_inputs)
from .params import KernelPolicy, ModelParams, derive
from .response import FLAG_OK, FLAG_POLE, SpectrumSeries, default_emission_grid

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class CorrelationSolution:
    """Fourier-domain correlation spectra at one emission frequency."""

    s_mm: complex   # same-molecule dipole spectrum
    s_mn: complex   # molecule-pair cross spectrum
    s_am: complex   # cavity-molecule cross spectrum


def build_ms(omega: float, params: ModelParams,
             policy: KernelPolicy) -> np.ndarray:
    """Coefficient matrix of the correlation system at frequency omega.

    For identical molecules the pair kernel equals the single-molecule
    kernel.
    """
    g, n = params.g, params.n_molecules
    fm = kernels.ftilde_m(omega, params, policy)
    fa = kernels.ftilde_a(omega, params)
    return np.array([
        [-1.0, 0.0, -1j * g * fm],
        [0.0, -1.0, -1j * g * fm],
        [-1j * g * fa, -1j * (n - 1) * g * fa, -1.0],
    ], dtype=complex)


def solve_correlations(omega: float, params: ModelParams,
                       policy: KernelPolicy,
                       inputs: FluctuationInputs) -> CorrelationSolution:
    """Solve the 3x3 correlation system at one frequency."""
    g = params.g
    fm = kernels.ftilde_m(omega, params, policy)
    fa = kernels.ftilde_a(omega, params)
    ms = build_ms(omega, params, policy)
    s_in = np.array([
        fm * inputs.d_sigma_sigma,
        fm * inputs.d_sigma_cross,
        fa * inputs.d_sigma_a,
    ], dtype=complex)
    sol = np.linalg.solve(ms, -s_in)
    resid = np.linalg.norm(ms @ sol + s_in)
    scale = np.linalg.norm(s_in)
    if scale > 0 and resid > RESIDUAL_TOL * scale:
        raise SingularSystemError(f"correlation system at omega={omega}",
                                  float(np.linalg.cond(ms)))
    return CorrelationSolution(s_mm=complex(sol[0]), s_mn=complex(sol[1]),
                               s_am=complex(sol[2]))


def _correlations_on_grid(params: ModelParams, policy: KernelPolicy,
                          inputs: FluctuationInputs, grid: np.ndarray
                          ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched correlation solve; returns (s_mm, s_mn, flags)."""
    d = derive(params)
    g, n = params.g, params.n_molecules
    w = kernels.poisson_weights(params.lam, policy).weights
    k = np.arange(len(w))
    den_m = (1j * (grid[:, None] + d.delta + k[None, :] * params.nu)
             + (d.gamma_perp + k[None, :] * params.gamma_vib))
    den_a = 1j * (d.delta_c + grid) + d.kappa
    bad = (np.abs(den_m) < kernels.POLE_EPS).any(axis=1) \
        | (np.abs(den_a) < kernels.POLE_EPS)
    fm = (w[None, :] / np.where(np.abs(den_m) < kernels.POLE_EPS, 1.0, den_m)
          ).sum(axis=1)
    fa = 1.0 / np.where(bad, 1.0, den_a)
    npts = len(grid)
    ms = np.zeros((npts, 3, 3), dtype=complex)
    ms[:, 0, 0] = ms[:, 1, 1] = ms[:, 2, 2] = -1.0
    ms[:, 0, 2] = -1j * g * fm
    ms[:, 1, 2] = -1j * g * fm
    ms[:, 2, 0] = -1j * g * fa
    ms[:, 2, 1] = -1j * (n - 1) * g * fa
    s_in = np.stack([fm * inputs.d_sigma_sigma,
                     fm * inputs.d_sigma_cross,
                     fa * inputs.d_sigma_a], axis=1)
    sol = np.linalg.solve(ms, -s_in[..., None])[..., 0]
    resid = np.linalg.norm(np.einsum("pij,pj->pi", ms, sol) + s_in, axis=1)
    scale = np.linalg.norm(s_in, axis=1)
    bad |= (scale > 0) & (resid > RESIDUAL_TOL * np.maximum(scale, 1e-300))
    flags = np.where(bad, FLAG_POLE, FLAG_OK).astype(np.uint8)
    return sol[:, 0], sol[:, 1], flags


def fluorescence_spectrum(params: ModelParams, policy: KernelPolicy,
                          grid: np.ndarray | None = None,
                          include_intermolecular: bool = True
                          ) -> SpectrumSeries:
    """Collective-dipole emission spectrum over a frequency grid.

    The connected-correlator inputs are computed once from the first-order
    moment solve and shared across all frequency points.
    """
    if grid is None:
        grid = default_emission_grid(params)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    inputs = fluctuation_inputs(params, policy, include_intermolecular)
    s_mm, s_mn, flags = _correlations_on_grid(params, policy, inputs, grid)
    n = params.n_molecules
    values = n * s_mm.real + n * (n - 1) * s_mn.real
    values = np.where(flags != FLAG_OK, np.nan, values)
    meta = {
        "kind": "fluorescence",
        "axis": "omega",
        "order": "first",
        "params": params,
        "policy": policy,
        "warnings": params.validity_warnings(),
    }
    return SpectrumSeries(grid=grid, values=values, flags=flags, meta=meta)
