"""Physical parameters of a probed molecular ensemble in a two-mirror cavity.

All rates and frequencies are expressed in natural units where the
electronic decay rate equals 1.  Detuning sweeps vary the probe frequency
``omega_l`` while ``omega_c`` and ``omega00`` stay fixed, so the cavity and
molecular detunings move together:  delta = delta_c + (omega00 - omega_c).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass


@dataclass(frozen=True)
class ModelParams:
    """Input parameters, defaulting to the canonical benchmark point.

    Attributes
    ----------
    n_molecules : int
        Number N of identical molecules coupled to the cavity mode.
    lam : float
        Dimensionless vibronic displacement (Huang-Rhys factor = lam**2).
    nu : float
        Vibrational frequency of the local mode.
    omega00 : float
        Bare electronic splitting (position of the zero-phonon line).
    omega_c : float
        Cavity resonance frequency.
    omega_l : float
        Probe (drive) frequency.
    g : float
        Single-molecule cavity coupling.
    kappa1, kappa2 : float
        Field loss rates through the input and output mirrors.
    gamma_electronic : float
        Electronic dipole decay rate; 1 by definition of the units.
    gamma_phi : float
        Pure electronic dephasing rate.
    gamma_vib : float
        Vibrational relaxation rate.
    eta : float
        Probe amplitude (weak drive).
    """

    n_molecules: int = 1
    lam: float = 0.0
    nu: float = 250.0
    omega00: float = 0.0
    omega_c: float = 0.0
    omega_l: float = 0.0
    g: float = 5.0
    kappa1: float = 0.5
    kappa2: float = 0.5
    gamma_electronic: float = 1.0
    gamma_phi: float = 1.0
    gamma_vib: float = 50.0
    eta: float = 0.01

    def __post_init__(self):
        if self.n_molecules < 1:
            raise ValueError(f"n_molecules must be >= 1, got {self.n_molecules}")
        for name in ("lam", "nu", "g", "kappa1", "kappa2", "gamma_electronic",
                     "gamma_phi", "gamma_vib", "eta"):
            value = getattr(self, name)
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")

    @property
    def huang_rhys(self) -> float:
        return self.lam ** 2

    def validity_warnings(self) -> tuple[str, ...]:
        """Flags for parameter regimes where the analytic treatment degrades.

        The flags never abort a computation; they travel with results so that
        silently invalid sweeps remain diagnosable.
        """
        kappa = self.kappa1 + self.kappa2
        gamma_perp = self.gamma_electronic + 2.0 * self.gamma_phi
        flags = []
        if self.eta > 0.1 * kappa:
            flags.append("weak-drive: eta exceeds 0.1*(kappa1+kappa2)")
        if self.lam ** 2 > 2.0:
            flags.append("huang-rhys: lam**2 outside the [0, ~2] band")
        if self.gamma_vib < 10.0 * kappa:
            flags.append("adiabatic: gamma_vib below 10*(kappa1+kappa2)")
        if self.gamma_vib < 10.0 * gamma_perp:
            flags.append("adiabatic: gamma_vib below 10*gamma_perp")
        return tuple(flags)

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class DerivedParams:
    """Rates and detunings derived from :class:`ModelParams`."""

    kappa: float        # total cavity loss
    delta: float        # omega00 - omega_l
    delta_c: float      # omega_c - omega_l
    gamma_perp: float   # transverse dipole decay, gamma_electronic + 2*gamma_phi
    gamma_par: float    # longitudinal population decay, 2*gamma_electronic
    omega_e: float      # vertical electronic transition, omega00 + lam**2 * nu


def derive(params: ModelParams) -> DerivedParams:
    """Deterministic, pure mapping from inputs to derived symbols."""
    return DerivedParams(
        kappa=params.kappa1 + params.kappa2,
        delta=params.omega00 - params.omega_l,
        delta_c=params.omega_c - params.omega_l,
        gamma_perp=params.gamma_electronic + 2.0 * params.gamma_phi,
        gamma_par=2.0 * params.gamma_electronic,
        omega_e=params.omega00 + params.lam ** 2 * params.nu,
    )


def figure2_defaults(**overrides) -> ModelParams:
    """Benchmark parameter point: nu=250, gamma_phi=1, kappa1=kappa2=0.5,
    gamma_vib=50, g=5, eta=0.01, cavity resonant with the zero-phonon line.

    Keyword overrides are applied on top, e.g. ``figure2_defaults(lam=0.2,
    n_molecules=2)``.
    """
    return ModelParams(**overrides)


def at_detuning(params: ModelParams, delta_c: float) -> ModelParams:
    """Move the probe so the cavity detuning equals ``delta_c``.

    omega_c and omega00 are untouched, hence delta = delta_c +
    (omega00 - omega_c) follows automatically.
    """
    return params.replace(omega_l=params.omega_c - delta_c)


@dataclass(frozen=True)
class KernelPolicy:
    """Truncation and tolerance controls for all vibronic series kernels.

    Attributes
    ----------
    tail_tol : float
        Poisson tail mass below which a series is truncated.
    k_max_hard : int
        Hard cap on the number of sideband terms per index.
    total_order_cap : int
        Cap on the summed order of the six-index second-order kernel.
    """

    tail_tol: float = 1e-12
    k_max_hard: int = 64
    total_order_cap: int = 24

    def __post_init__(self):
        if not (0.0 < self.tail_tol < 1.0):
            raise ValueError(f"tail_tol must lie in (0, 1), got {self.tail_tol}")
        if self.k_max_hard < 1:
            raise ValueError(f"k_max_hard must be >= 1, got {self.k_max_hard}")
        if self.total_order_cap < 0:
            raise ValueError(
                f"total_order_cap must be >= 0, got {self.total_order_cap}")
