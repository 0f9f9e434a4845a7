"""Steady first moments, cavity transmission, and polariton mode extraction.

The transmission follows from the input-output relation: the transmitted
amplitude is 2*sqrt(kappa1*kappa2) * <a>_ss / eta, with the steady cavity
amplitude obtained from the final-value theorem applied to the
Laplace-domain linear response.  The first-order treatment factorizes the
dipole-vibration correlations once; the second-order treatment keeps the
four-time displacement correlator via the six-index kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import kernels
from .params import KernelPolicy, ModelParams, at_detuning, derive

FLAG_OK = 0
FLAG_POLE = 1


@dataclass(frozen=True)
class SpectrumSeries:
    """A frequency grid with per-point values, quality flags and provenance.

    ``flags`` is zero where the point is trustworthy; nonzero entries mark
    points skipped because a series denominator sat on a pole.  ``meta``
    carries the parameter snapshot, kernel policy, perturbative order and
    validity warnings of the run.
    """

    grid: np.ndarray
    values: np.ndarray
    flags: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values)
        flags = np.asarray(self.flags, dtype=np.uint8)
        if grid.ndim != 1 or len(grid) == 0:
            raise ValueError("grid must be a nonempty 1-D array")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if len(values) != len(grid) or len(flags) != len(grid):
            raise ValueError("values/flags length must match grid length")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "flags", flags)

    @property
    def abs_squared(self) -> np.ndarray:
        """|values|^2, the plotted intensity for complex-valued series."""
        return np.abs(self.values) ** 2

    def __len__(self) -> int:
        return len(self.grid)


@dataclass(frozen=True)
class FirstMoments:
    """Steady expectation values of the cavity field and one dipole."""

    a_ss: complex
    sigma_ss: complex
    order: str = "first"


@dataclass(frozen=True)
class PolaritonModes:
    """Hybridized mode frequencies and widths at double resonance."""

    omega_plus: float
    omega_minus: float
    gamma_plus: float
    gamma_minus: float


def default_detuning_grid(params: ModelParams, points: int = 2001) -> np.ndarray:
    """Uniform cavity-detuning grid over [-nu/2, nu/2]."""
    return np.linspace(-0.5 * params.nu, 0.5 * params.nu, points)


def default_emission_grid(params: ModelParams, points: int = 2001) -> np.ndarray:
    """Uniform emission-frequency grid over [-2.5*nu, 1.5*nu]."""
    return np.linspace(-2.5 * params.nu, 1.5 * params.nu, points)


def steady_first_moments(params: ModelParams,
                         policy: KernelPolicy) -> FirstMoments:
    """First-order steady moments via the final-value theorem.

    <a>_ss = eta / (i*delta_c + kappa + N g^2 chi);
    <sigma>_ss = -i g chi <a>_ss.
    """
    d = derive(params)
    x = kernels.chi(params, policy)
    den = 1j * d.delta_c + d.kappa + params.n_molecules * params.g ** 2 * x
    a_ss = params.eta / den
    sigma_ss = -1j * params.g * params.eta * x / den
    return FirstMoments(a_ss=a_ss, sigma_ss=sigma_ss, order="first")


def steady_first_moments_2nd(params: ModelParams,
                             policy: KernelPolicy) -> FirstMoments:
    """Second-order steady moments keeping the four-time correlator.

    Uses the s -> 0 cavity kernel Fc0 = 1/(i*delta_c + kappa), the dipole
    kernel Fm0 = chi and the six-index kernel F2m0.  Collapses exactly to
    the first-order result at lam = 0.
    """
    d = derive(params)
    n, g, eta = params.n_molecules, params.g, params.eta
    fc0 = 1.0 / (1j * d.delta_c + d.kappa)
    fm0 = kernels.chi(params, policy)
    f2m0 = kernels.fbar_2m(0.0, params, policy)
    bracket = f2m0 + (n - 1) * fc0 * fm0 ** 2
    den = -1.0 + n * g ** 4 * fc0 * bracket
    a_ss = eta * fc0 * (-1.0 + n * g ** 2 * fc0 * fm0) / den
    sigma_ss = -1j * eta * g * (g ** 2 * fc0 * bracket - fc0 * fm0) / den
    return FirstMoments(a_ss=a_ss, sigma_ss=sigma_ss, order="second")


def _chi_on_grid(params: ModelParams, policy: KernelPolicy,
                 delta_c_grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized chi over a detuning sweep; returns (values, pole flags)."""
    d0 = derive(params)
    offset = params.omega00 - params.omega_c
    delta = delta_c_grid + offset
    w = kernels.poisson_weights(params.lam, policy).weights
    k = np.arange(len(w))
    den = (1j * (delta[:, None] + k[None, :] * params.nu)
           + (d0.gamma_perp + k[None, :] * params.gamma_vib))
    bad = np.abs(den) < kernels.POLE_EPS
    flags = np.where(bad.any(axis=1), FLAG_POLE, FLAG_OK).astype(np.uint8)
    den = np.where(bad, 1.0, den)
    vals = (w[None, :] / den).sum(axis=1)
    vals = np.where(flags != FLAG_OK, np.nan + 1j * np.nan, vals)
    return vals, flags


def transmission(params: ModelParams, policy: KernelPolicy,
                 grid: np.ndarray | None = None,
                 order: str = "first") -> SpectrumSeries:
    """Complex transmission over a cavity-detuning sweep.

    T(delta_c) = 2*sqrt(kappa1*kappa2) / (i*delta_c + kappa + N g^2 chi)
    at first order; at second order T = 2*sqrt(kappa1*kappa2) * <a>'_ss/eta.
    The probe amplitude cancels; pole-flagged points are marked and the
    sweep continues.
    """
    if order not in ("first", "second"):
        raise ValueError(f"order must be 'first' or 'second', got {order!r}")
    if grid is None:
        grid = default_detuning_grid(params)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    d = derive(params)
    amp = 2.0 * np.sqrt(params.kappa1 * params.kappa2)
    n, g = params.n_molecules, params.g
    if order == "first":
        x, flags = _chi_on_grid(params, policy, grid)
        den = 1j * grid + d.kappa + n * g ** 2 * x
        with np.errstate(invalid="ignore"):
            values = amp / den
    else:
        values = np.empty(len(grid), dtype=complex)
        flags = np.zeros(len(grid), dtype=np.uint8)
        for i, dc in enumerate(grid):
            p = at_detuning(params, dc)
            try:
                values[i] = (amp / params.eta
                             * steady_first_moments_2nd(p, policy).a_ss)
            except kernels.PoleProximityError:
                values[i] = np.nan + 1j * np.nan
                flags[i] = FLAG_POLE
    meta = {
        "kind": "transmission",
        "axis": "delta_c",
        "order": order,
        "params": params,
        "policy": policy,
        "warnings": params.validity_warnings(),
    }
    return SpectrumSeries(grid=grid, values=values, flags=flags, meta=meta)


def polariton_modes(params: ModelParams,
                    policy: KernelPolicy) -> PolaritonModes:
    """Hybridized decay rates and frequencies at delta = delta_c = 0.

    Principal-branch square root (Re >= 0), so gamma_plus carries the
    larger width and omega_minus the red-shifted branch.
    """
    resonant = params.replace(omega_c=params.omega00, omega_l=params.omega00)
    gamma_eff, delta_eff = kernels.effective_rates(resonant, policy)
    d = derive(resonant)
    root = np.sqrt(complex(
        (gamma_eff + 1j * delta_eff - d.kappa) ** 2 / 4.0
        - params.n_molecules * params.g ** 2))
    return PolaritonModes(
        omega_plus=-delta_eff / 2.0 + root.imag,
        omega_minus=-delta_eff / 2.0 - root.imag,
        gamma_plus=(gamma_eff + d.kappa) / 2.0 + root.real,
        gamma_minus=(gamma_eff + d.kappa) / 2.0 - root.real,
    )


def detect_peaks(spectrum: SpectrumSeries) -> list[tuple[float, float]]:
    """Local maxima refined by three-point quadratic interpolation.

    Operates on |values|^2 for complex series and on the raw values for
    real ones.  Flagged points never seed a peak.  Returns (frequency,
    height) pairs sorted by frequency; empty for monotone data.
    """
    if len(spectrum) < 3:
        raise ValueError("need at least 3 grid points to detect peaks")
    x = spectrum.grid
    y = (spectrum.abs_squared if np.iscomplexobj(spectrum.values)
         else np.asarray(spectrum.values, dtype=float))
    ok = spectrum.flags == FLAG_OK
    peaks = []
    for i in range(1, len(x) - 1):
        if not (ok[i - 1] and ok[i] and ok[i + 1]):
            continue
        if not (y[i] > y[i - 1] and y[i] > y[i + 1]):
            continue
        h = x[i + 1] - x[i]
        curv = y[i - 1] - 2.0 * y[i] + y[i + 1]
        shift = 0.5 * (y[i - 1] - y[i + 1]) / curv if curv != 0 else 0.0
        shift = float(np.clip(shift, -0.5, 0.5))
        freq = x[i] + shift * h
        height = y[i] - 0.25 * (y[i - 1] - y[i + 1]) * shift
        peaks.append((float(freq), float(height)))
    return peaks


def estimate_n(omega_minus: float, g: float) -> float:
    """Molecule-number estimate from the lower-mode frequency shift."""
    if g <= 0:
        raise ValueError(f"g must be > 0, got {g}")
    return omega_minus ** 2 / g ** 2
