"""Shared fixtures and independent numerical oracles for the test suite.

The helpers here deliberately avoid the code paths they are used to
check: series kernels are verified against explicit high-order
reference sums and against panelled Gauss-Legendre quadrature of the
closed-form displacement correlators.
"""

from __future__ import annotations

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

import htc
from htc import derive
from htc.params import KernelPolicy


@pytest.fixture
def policy():
    return KernelPolicy()


@pytest.fixture
def fig2():
    return htc.figure2_defaults()


def reference_fbar_m(s, params, k_terms=200):
    """Direct high-order sideband sum for the dipole kernel."""
    d = derive(params)
    ll = params.lam ** 2
    w = np.exp(-ll)
    total = 0.0 + 0.0j
    for k in range(k_terms):
        den = s + 1j * (d.delta + k * params.nu) \
            + (d.gamma_perp + k * params.gamma_vib)
        total += w / den
        w *= ll / (k + 1)
    return total


def reference_fbar_m_prime(s, params, k_terms=200):
    d = derive(params)
    ll = params.lam ** 2
    w = np.exp(-ll)
    total = 0.0 + 0.0j
    for k in range(k_terms):
        den = s + 1j * ((d.delta - d.delta_c) + k * params.nu) \
            + (d.kappa + d.gamma_perp + k * params.gamma_vib)
        total += w / den
        w *= ll / (k + 1)
    return total


def reference_fbar_mn(s, params, k_terms=60):
    d = derive(params)
    ll = params.lam ** 2
    coef = np.empty(k_terms)
    coef[0] = 1.0
    for k in range(1, k_terms):
        coef[k] = coef[k - 1] * ll / k
    km, kn = np.meshgrid(np.arange(k_terms), np.arange(k_terms),
                         indexing="ij")
    den = (s + 1j * (km - kn) * params.nu
           + (2.0 * d.gamma_perp + (km + kn) * params.gamma_vib))
    return complex(np.exp(-2 * ll)
                   * (np.outer(coef, coef) / den).sum())


def reference_fbar_cm_prime(s, params, k_terms=200):
    d = derive(params)
    ll = params.lam ** 2
    w = np.exp(-ll)
    total = 0.0 + 0.0j
    for k in range(k_terms):
        den1 = s + 1j * ((d.delta - d.delta_c) + k * params.nu) \
            + (d.kappa + d.gamma_perp + k * params.gamma_vib)
        den2 = s + 1j * (d.delta + k * params.nu) \
            + (d.gamma_perp + k * params.gamma_vib)
        total += w / (den1 * den2)
        w *= ll / (k + 1)
    return total


def _gl_panel_nodes(rate, nu, n_gl=10, osc_span=0.3, tail_factor=1.5,
                    tail_decades=22.0):
    """Panelled Gauss-Legendre nodes: half-period panels while the
    vibrational oscillation lives, stretched panels down the exponential
    tail."""
    period = 2.0 * np.pi / nu
    edges = list(np.arange(0.0, osc_span + period / 2, period / 2))
    u = edges[-1]
    u_max = tail_decades / rate
    while u < u_max:
        u = min(u * tail_factor + period, u_max)
        edges.append(u)
    edges = np.asarray(edges)
    xg, wg = leggauss(n_gl)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def quad_fbar_2m(params, s=0.0):
    """Gauss-Legendre quadrature of the triple time convolution of the
    closed-form four-time displacement correlator.

    Independent of the six-index series path.  Assumes a resonant
    configuration (small detunings), where the only oscillatory scale is
    the vibrational frequency.
    """
    d = derive(params)
    if abs(d.delta) > 5.0 or abs(d.delta_c) > 5.0:
        raise ValueError("quadrature oracle assumes a resonant configuration")
    z = params.gamma_vib + 1j * params.nu
    ll = params.lam ** 2
    u1, w1 = _gl_panel_nodes(d.gamma_perp, params.nu)
    u2, w2 = _gl_panel_nodes(d.kappa, params.nu)
    u3, w3 = _gl_panel_nodes(d.gamma_perp, params.nu)
    a = np.exp(-z * u1)
    b = np.exp(-z * u2)
    c = np.exp(-z * u3)
    w1e = w1 * np.exp(-(s + 1j * d.delta + d.gamma_perp) * u1)
    w2e = w2 * np.exp(-(s + 1j * d.delta_c + d.kappa) * u2)
    w3e = w3 * np.exp(-(s + 1j * d.delta + d.gamma_perp) * u3)
    # pairwise exponent: A - AB + ABC + B - BC + C = A(1 - T) + T + C
    # with T = B(1 - C)
    t_jk = b[:, None] * (1.0 - c[None, :])
    base = t_jk + c[None, :]
    total = 0.0 + 0.0j
    block = 48
    for i0 in range(0, len(u1), block):
        a_blk = a[i0:i0 + block, None, None]
        expo = a_blk * (1.0 - t_jk[None, :, :]) + base[None, :, :]
        g = np.exp(-2.0 * ll + ll * expo)
        total += np.einsum("i,ijk,j,k->", w1e[i0:i0 + block], g, w2e, w3e)
    return complex(total)


def reference_disp_corr_4t(t, t1, t2, t3, lam, nu, gamma_vib, k_max=7):
    """Six-index truncated sum form of the four-time correlator."""
    import itertools
    import math
    z = gamma_vib + 1j * nu
    u1, u2, u3 = t - t1, t1 - t2, t2 - t3
    ll = lam ** 2
    fact = [math.factorial(k) for k in range(k_max)]
    total = 0.0 + 0.0j
    for ks in itertools.product(range(k_max), repeat=6):
        k1, k2, k3, k4, k5, k6 = ks
        denom = fact[k1] * fact[k2] * fact[k3] * fact[k4] * fact[k5] * fact[k6]
        coeff = (-1.0) ** (k2 + k5) * ll ** sum(ks) / denom
        total += coeff * np.exp(-z * ((k1 + k2 + k3) * u1
                                      + (k2 + k3 + k4 + k5) * u2
                                      + (k3 + k5 + k6) * u3))
    return np.exp(-2.0 * ll) * total
