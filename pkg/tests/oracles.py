"""Closed-form reference solutions used across the test suite."""

from __future__ import annotations

import numpy as np

from giesekus_hb.core import Loading, ModelParams, SpectralSolution, lve_moduli, derived_groups


def ucm_exact(params: ModelParams, loading: Loading, H: int) -> SpectralSolution:
    """Exact periodic solution of the alpha = 0 system, embedded at truncation ``H``.

    Shear is a single harmonic ``C1 = G g0 w / (2 (i w + 1/lam))``; ``s11`` has
    a mean and a second harmonic driven by ``C1``; ``s22`` vanishes.
    """
    assert params.alpha == 0
    G, lam = params.modulus, params.relaxation_time
    g0, w = loading.strain_amplitude, loading.angular_frequency
    A = np.zeros(H, dtype=complex)
    B = np.zeros(H, dtype=complex)
    C = np.zeros(H, dtype=complex)
    C[0] = G * g0 * w / (2.0 * (1j * w + 1.0 / lam))
    A[0] = 2.0 * lam * g0 * w * C[0].real
    A[1] = g0 * w * C[0] / (2j * w + 1.0 / lam)
    return SpectralSolution(H, A, B, C, loading, params)


def ucm_first_normal(params: ModelParams, loading: Loading, t):
    """Small-amplitude first normal stress difference of a Maxwell fluid.

    ``N1/g0^2 = G'(w) + (G''(w) - G''(2w)/2) sin 2wt + (-G'(w) + G'(2w)/2) cos 2wt``
    """
    De, _ = derived_groups(params, loading)
    gp1, gpp1 = lve_moduli(De)
    gp2, gpp2 = lve_moduli(2.0 * De)
    w = loading.angular_frequency
    G, g0 = params.modulus, loading.strain_amplitude
    return G * g0 ** 2 * (gp1 + (gpp1 - gpp2 / 2.0) * np.sin(2 * w * t) + (-gp1 + gp2 / 2.0) * np.cos(2 * w * t))
