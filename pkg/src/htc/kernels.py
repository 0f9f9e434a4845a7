"""Response kernels of vibrationally dressed molecular dipoles.

Adiabatic elimination of a fast damped vibrational mode turns every
molecular response function into a Poisson-weighted sum of complex
Lorentzians: the weight of sideband k is lam**(2k) exp(-lam**2) / k!, its
pole is shifted by k*nu and broadened by k*gamma_vib.  This module
evaluates those sums in the Laplace domain (argument ``s``) and in the
Fourier domain (argument ``omega``, with s = i*omega), together with the
underlying displacement-operator correlators.

Series are truncated adaptively: the smallest order whose Poisson tail
mass drops below ``KernelPolicy.tail_tol`` is used, capped at
``k_max_hard``.  Denominators that come within ``POLE_EPS`` of zero raise
:class:`PoleProximityError` instead of returning Inf/NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammainc

from .params import KernelPolicy, ModelParams, derive

POLE_EPS = 1e-14


class KernelError(Exception):
    """Base class for kernel evaluation failures."""


class PoleProximityError(KernelError):
    """A series denominator is numerically indistinguishable from a pole."""

    def __init__(self, kernel: str, index, denominator: complex):
        self.kernel = kernel
        self.index = index
        self.denominator = denominator
        super().__init__(
            f"{kernel}: denominator {denominator} within {POLE_EPS} of zero "
            f"at series index {index}")


class CapTooSmallError(KernelError):
    """The six-index series cap leaves more tail mass than tail_tol."""

    def __init__(self, tail_bound: float, cap: int, tail_tol: float):
        self.tail_bound = tail_bound
        self.cap = cap
        super().__init__(
            f"total_order_cap={cap} leaves tail bound {tail_bound:.3e} "
            f"> tail_tol={tail_tol:.3e}")


@dataclass(frozen=True)
class PoissonWeights:
    """Franck-Condon sideband weights lam**(2k) exp(-lam**2) / k!."""

    lam: float
    weights: np.ndarray
    k_max: int


@lru_cache(maxsize=256)
def _poisson_weights_cached(lam: float, tail_tol: float,
                            k_max_hard: int) -> PoissonWeights:
    w = [float(np.exp(-lam * lam))]
    # Truncate once the remaining Poisson mass in rate lam**2 is < tail_tol.
    while 1.0 - sum(w) > tail_tol and len(w) <= k_max_hard:
        k = len(w)
        w.append(w[-1] * lam * lam / k)
    arr = np.asarray(w)
    arr.setflags(write=False)
    return PoissonWeights(lam=lam, weights=arr, k_max=len(w) - 1)


def poisson_weights(lam: float, policy: KernelPolicy) -> PoissonWeights:
    return _poisson_weights_cached(float(lam), policy.tail_tol,
                                   policy.k_max_hard)


def poisson_tail_mass(rate: float, order: int) -> float:
    """Upper tail P(K > order) of a Poisson distribution with given rate."""
    return float(gammainc(order + 1, rate))


def disp_corr_2t(tau, lam: float, nu: float, gamma_vib: float):
    """Two-time displacement correlator of a damped mode at zero temperature.

    exp(-lam**2) * exp(lam**2 * exp(-(gamma_vib + i*nu) * tau)), tau >= 0.
    Accepts scalar or array tau.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be >= 0")
    val = np.exp(-lam * lam) * np.exp(
        lam * lam * np.exp(-(gamma_vib + 1j * nu) * tau))
    return complex(val) if val.ndim == 0 else val


def disp_corr_4t(t: float, t1: float, t2: float, t3: float,
                 lam: float, nu: float, gamma_vib: float) -> complex:
    """Four-time displacement correlator for times t >= t1 >= t2 >= t3 >= 0.

    Product of the six pairwise momentum-correlator exponentials; the pairs
    joining like-sign displacement exponents enter with positive sign, the
    two cross pairs with negative sign.
    """
    if not (t >= t1 >= t2 >= t3 >= 0):
        raise ValueError(
            f"times must satisfy t >= t1 >= t2 >= t3 >= 0, got "
            f"({t}, {t1}, {t2}, {t3})")
    z = gamma_vib + 1j * nu
    ll = lam * lam
    s = (np.exp(-z * (t - t1)) - np.exp(-z * (t - t2)) + np.exp(-z * (t - t3))
         + np.exp(-z * (t1 - t2)) - np.exp(-z * (t1 - t3))
         + np.exp(-z * (t2 - t3)))
    return complex(np.exp(-2.0 * ll) * np.exp(ll * s))


def _checked_inverse_sum(weights: np.ndarray, den: np.ndarray,
                         kernel: str) -> complex:
    bad = np.abs(den) < POLE_EPS
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        index = int(idx[0]) if idx.size == 1 else tuple(int(i) for i in idx)
        raise PoleProximityError(kernel, index, complex(den[tuple(idx)]))
    return complex(np.sum(weights / den))


def fbar_m(s: complex, params: ModelParams, policy: KernelPolicy) -> complex:
    """Laplace-domain dipole response kernel.

    Sum over sidebands k of w_k / (s + i*(delta + k*nu) + gamma_perp +
    k*gamma_vib).
    """
    d = derive(params)
    w = poisson_weights(params.lam, policy).weights
    k = np.arange(len(w))
    den = s + 1j * (d.delta + k * params.nu) + (d.gamma_perp + k * params.gamma_vib)
    return _checked_inverse_sum(w, den, "fbar_m")


def chi(params: ModelParams, policy: KernelPolicy) -> complex:
    """Steady-state (s -> 0) value of the dipole response kernel."""
    return fbar_m(0.0, params, policy)


def effective_rates(params: ModelParams, policy: KernelPolicy) -> tuple[float, float]:
    """Effective dipole decay rate and frequency shift (Re, Im of 1/chi)."""
    inv = 1.0 / chi(params, policy)
    return inv.real, inv.imag


def fbar_m_prime(s: complex, params: ModelParams,
                 policy: KernelPolicy) -> complex:
    """Cavity-dressed dipole kernel: poles shifted by delta - delta_c and
    broadened by kappa + gamma_perp."""
    d = derive(params)
    w = poisson_weights(params.lam, policy).weights
    k = np.arange(len(w))
    den = (s + 1j * ((d.delta - d.delta_c) + k * params.nu)
           + (d.kappa + d.gamma_perp + k * params.gamma_vib))
    return _checked_inverse_sum(w, den, "fbar_m_prime")


def fbar_mn(s: complex, params: ModelParams, policy: KernelPolicy) -> complex:
    """Cross-molecule coherence kernel (double sideband sum).

    Sum over (k_m, k_n) of lam**(2(k_m+k_n)) e^(-2 lam**2) / (k_m! k_n!)
    divided by s + i*(k_m - k_n)*nu + 2*gamma_perp + (k_m + k_n)*gamma_vib.
    """
    d = derive(params)
    w = poisson_weights(params.lam, policy).weights
    k = np.arange(len(w))
    km, kn = np.meshgrid(k, k, indexing="ij")
    den = (s + 1j * (km - kn) * params.nu
           + (2.0 * d.gamma_perp + (km + kn) * params.gamma_vib))
    return _checked_inverse_sum(np.outer(w, w), den, "fbar_mn")


def fbar_mn_dressed(s: complex, params: ModelParams,
                    policy: KernelPolicy) -> complex:
    """Cross-molecule kernel additionally filtered by the cavity-dipole
    response, as enters the second-order drift matrix.

    Each (k_m, k_n) term carries the product denominator
    [s + i*(delta - delta_c + k_m*nu) + kappa + gamma_perp + k_m*gamma_vib]
    * [s + i*(k_m - k_n)*nu + 2*gamma_perp + (k_m + k_n)*gamma_vib].
    """
    d = derive(params)
    w = poisson_weights(params.lam, policy).weights
    k = np.arange(len(w))
    km, kn = np.meshgrid(k, k, indexing="ij")
    den1 = (s + 1j * ((d.delta - d.delta_c) + km * params.nu)
            + (d.kappa + d.gamma_perp + km * params.gamma_vib))
    den2 = (s + 1j * (km - kn) * params.nu
            + (2.0 * d.gamma_perp + (km + kn) * params.gamma_vib))
    for name, den in (("fbar_mn_dressed[cavity]", den1),
                      ("fbar_mn_dressed[cross]", den2)):
        bad = np.abs(den) < POLE_EPS
        if np.any(bad):
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise PoleProximityError(name, idx, complex(den[idx]))
    return complex(np.sum(np.outer(w, w) / (den1 * den2)))


def fbar_cm_prime(s: complex, params: ModelParams,
                  policy: KernelPolicy) -> complex:
    """Cascaded cavity-dipole kernel with the product denominator
    [s + i*(delta - delta_c + k*nu) + kappa + gamma_perp + k*gamma_vib]
    * [s + i*(delta + k*nu) + gamma_perp + k*gamma_vib]."""
    d = derive(params)
    w = poisson_weights(params.lam, policy).weights
    k = np.arange(len(w))
    den1 = (s + 1j * ((d.delta - d.delta_c) + k * params.nu)
            + (d.kappa + d.gamma_perp + k * params.gamma_vib))
    den2 = (s + 1j * (d.delta + k * params.nu)
            + (d.gamma_perp + k * params.gamma_vib))
    for name, den in (("fbar_cm_prime[cavity]", den1),
                      ("fbar_cm_prime[dipole]", den2)):
        bad = np.abs(den) < POLE_EPS
        if np.any(bad):
            i = int(np.argwhere(bad)[0][0])
            raise PoleProximityError(name, i, complex(den[i]))
    return complex(np.sum(w / (den1 * den2)))


# -- six-index second-order kernel -------------------------------------------

# Each of the six pairwise exponential factors of the four-time correlator
# contributes its expansion order to the three time intervals as follows
# (interval memberships A, B, C and the sign of the factor):
_SIX_INDEX_DIRECTIONS = (
    (1, 0, 0, +1.0),   # (t, t1) pair
    (1, 1, 0, -1.0),   # (t, t2) pair
    (1, 1, 1, +1.0),   # (t, t3) pair
    (0, 1, 0, +1.0),   # (t1, t2) pair
    (0, 1, 1, -1.0),   # (t1, t3) pair
    (0, 0, 1, +1.0),   # (t2, t3) pair
)


@lru_cache(maxsize=32)
def _six_index_weights(lam: float, cap: int) -> np.ndarray:
    """Collapse the six-index sum onto per-interval orders (A, B, C).

    Returns W[A, B, C] = e^(-2 lam**2) * sum over six-tuples with total
    order <= cap of (+/-1)^... * lam**(2K) / prod(k_j!), where A, B, C are
    the orders accumulated on the three nested time intervals.  Built by
    convolving one truncated exponential series per index while tracking
    the total order K for the cap.
    """
    n = cap + 1
    table = np.zeros((n, n, n, n))  # axes: K, A, B, C
    table[0, 0, 0, 0] = 1.0
    for da, db, dc, sign in _SIX_INDEX_DIRECTIONS:
        new = np.zeros_like(table)
        coeff = 1.0
        for k in range(n):
            if k:
                coeff *= sign * lam * lam / k
            if coeff == 0.0:
                break
            src = table[:n - k, :n - k * da, :n - k * db, :n - k * dc]
            new[k:, k * da:, k * db:, k * dc:] += coeff * src
        table = new
    out = np.exp(-2.0 * lam * lam) * table.sum(axis=0)
    out.setflags(write=False)
    return out


def fbar_2m_tail_bound(params: ModelParams, policy: KernelPolicy) -> float:
    """Reported truncation indicator for the six-index kernel: the Poisson
    mass in rate 2*lam**2 beyond the total-order cap, times e^(-2 lam**2)."""
    ll = params.lam ** 2
    return float(np.exp(-2.0 * ll)
                 * poisson_tail_mass(2.0 * ll, policy.total_order_cap))


def fbar_2m(s: complex, params: ModelParams, policy: KernelPolicy) -> complex:
    """Second-order self-interaction kernel (six-index sum).

    The expansion of the four-time displacement correlator inside the
    triple time convolution dipole -> cavity -> dipole, truncated at total
    order ``policy.total_order_cap``.  The three denominators carry the
    orders A, B, C accumulated on each interval:

    [s + i*(delta + A*nu) + gamma_perp + A*gamma_vib]
    * [s + i*(delta_c + B*nu) + kappa + B*gamma_vib]
    * [s + i*(delta + C*nu) + gamma_perp + C*gamma_vib]
    """
    bound = fbar_2m_tail_bound(params, policy)
    if bound > policy.tail_tol:
        raise CapTooSmallError(bound, policy.total_order_cap, policy.tail_tol)
    d = derive(params)
    w = _six_index_weights(float(params.lam), policy.total_order_cap)
    k = np.arange(policy.total_order_cap + 1)
    den_dip = (s + 1j * (d.delta + k * params.nu)
               + (d.gamma_perp + k * params.gamma_vib))
    den_cav = (s + 1j * (d.delta_c + k * params.nu)
               + (d.kappa + k * params.gamma_vib))
    for name, den in (("fbar_2m[dipole]", den_dip), ("fbar_2m[cavity]", den_cav)):
        bad = np.abs(den) < POLE_EPS
        if np.any(bad):
            i = int(np.argwhere(bad)[0][0])
            raise PoleProximityError(name, i, complex(den[i]))
    return complex(np.einsum("abc,a,b,c->", w, 1.0 / den_dip,
                             1.0 / den_cav, 1.0 / den_dip))


def ftilde_m(omega: float, params: ModelParams,
             policy: KernelPolicy) -> complex:
    """Fourier-domain dipole kernel, fbar_m evaluated at s = i*omega."""
    return fbar_m(1j * omega, params, policy)


def ftilde_a(omega: float, params: ModelParams) -> complex:
    """Fourier-domain cavity kernel 1 / (i*(delta_c + omega) + kappa)."""
    d = derive(params)
    den = 1j * (d.delta_c + omega) + d.kappa
    if abs(den) < POLE_EPS:
        raise PoleProximityError("ftilde_a", 0, den)
    return 1.0 / den
