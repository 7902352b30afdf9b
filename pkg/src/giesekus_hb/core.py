"""Giesekus model in homogeneous oscillatory shear: domain types and closed forms.

The state is ``(sigma11, sigma22, sigma12)``. ``sigma33`` relaxes to zero
independently of the other components and is dropped, so ``N1 = s11 - s22``
and ``N2 = s22``.

Coefficient conventions
-----------------------
Stresses are stored as complex Fourier coefficients of nonnegative harmonics,
``x(t) = X_0 + 2 Re sum_{n>0} X_n exp(i n w t)``. Sine/cosine moduli follow

    G'_n = -2 Im C_n / gamma0,    G''_n = 2 Re C_n / gamma0       (n odd)
    P'_n = -2 Im A_n / gamma0**2, P''_n = 2 Re A_n / gamma0**2    (n even, n > 0)
    P''_0 = A_0 / gamma0**2

so that in the linear limit ``G'_1 = G'(w)`` and ``F''_0 = G'(w)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelParams",
    "Loading",
    "SpectralSolution",
    "Waveform",
    "HarmonicSpectrum",
    "MaosIntrinsics",
    "derived_groups",
    "shear_rate",
    "ode_rhs_dimensional",
    "ode_rhs_dimensionless",
    "lve_moduli",
    "maos_shear_intrinsics",
    "maos_initial_guess",
    "step_strain_modulus",
]


@dataclass(frozen=True)
class ModelParams:
    """Single-mode Giesekus constants.

    ``alpha = 0`` (the upper-convected Maxwell limit) is accepted.
    """

    modulus: float = 1.0
    relaxation_time: float = 1.0
    alpha: float = 0.3
    solvent_viscosity: float = 0.0

    def __post_init__(self):
        for name in ("modulus", "relaxation_time", "alpha", "solvent_viscosity"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.modulus <= 0:
            raise ValueError(f"modulus must be > 0, got {self.modulus}")
        if self.relaxation_time <= 0:
            raise ValueError(f"relaxation_time must be > 0, got {self.relaxation_time}")
        if not 0 <= self.alpha < 1:
            raise ValueError(f"alpha must satisfy 0 <= alpha < 1, got {self.alpha}")
        if self.solvent_viscosity != 0:
            raise ValueError("only solvent_viscosity = 0 is supported")


@dataclass(frozen=True)
class Loading:
    """Imposed strain ``gamma(t) = gamma0 sin(omega t)``."""

    strain_amplitude: float
    angular_frequency: float

    def __post_init__(self):
        if not (math.isfinite(self.strain_amplitude) and self.strain_amplitude > 0):
            raise ValueError(f"strain_amplitude must be > 0, got {self.strain_amplitude}")
        if not (math.isfinite(self.angular_frequency) and self.angular_frequency > 0):
            raise ValueError(f"angular_frequency must be > 0, got {self.angular_frequency}")

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.angular_frequency

    def at_amplitude(self, gamma0: float) -> Loading:
        return Loading(gamma0, self.angular_frequency)


def derived_groups(params: ModelParams, loading: Loading) -> tuple[float, float]:
    """Return the Deborah and Weissenberg numbers ``(lambda*w, lambda*gamma0*w)``."""
    De = params.relaxation_time * loading.angular_frequency
    return De, loading.strain_amplitude * De


def shear_rate(loading: Loading, t):
    return loading.strain_amplitude * loading.angular_frequency * np.cos(loading.angular_frequency * t)


def ode_rhs_dimensional(params: ModelParams, state, t, loading: Loading):
    """Time derivatives of ``(s11, s22, s12)`` in physical units.

    ``state`` may carry trailing axes; the three components are taken along
    the first axis.
    """
    s11, s22, s12 = state
    G, lam, a = params.modulus, params.relaxation_time, params.alpha
    gd = shear_rate(loading, t)
    c = a / (lam * G)
    d11 = -s11 / lam - c * (s11 * s11 + s12 * s12) + 2.0 * gd * s12
    d22 = -s22 / lam - c * (s22 * s22 + s12 * s12)
    d12 = -s12 / lam - c * (s11 + s22) * s12 + gd * s22 + G * gd
    return np.array([d11, d22, d12])


def ode_rhs_dimensionless(alpha: float, De: float, Wi: float, state, t):
    """Derivatives of the scaled stresses ``s/(G Wi)`` with respect to ``t/lambda``."""
    s11, s22, s12 = state
    g = np.cos(De * t)
    aw = alpha * Wi
    d11 = -s11 - aw * (s11 * s11 + s12 * s12) + 2.0 * g * s12 * Wi
    d22 = -s22 - aw * (s22 * s22 + s12 * s12)
    d12 = -s12 - aw * (s11 + s22) * s12 + g + g * s22 * Wi
    return np.array([d11, d22, d12])


def lve_moduli(De):
    """Maxwell storage and loss moduli normalized by ``G``."""
    De2 = De * De
    return De2 / (1.0 + De2), De / (1.0 + De2)


@dataclass(frozen=True)
class MaosIntrinsics:
    """Intrinsic shear coefficients, normalized by ``G``.

    ``G31`` corrects the first harmonic at order ``gamma0**3`` and ``G33`` is
    the leading third harmonic.
    """

    G11_storage: float
    G11_loss: float
    G31_storage: float
    G31_loss: float
    G33_storage: float
    G33_loss: float


def maos_shear_intrinsics(alpha: float, De: float) -> MaosIntrinsics:
    a = alpha
    x2 = De * De
    x3 = x2 * De
    x4 = x2 * x2
    x6 = x4 * x2
    d1 = 4.0 * (1.0 + x2) ** 3 * (1.0 + 4.0 * x2)
    d3 = d1 * (1.0 + 9.0 * x2)
    g11p, g11pp = lve_moduli(De)
    g31p = a * x4 * (-21.0 - 41.0 * x2 - 8.0 * x4 + 4.0 * a * (4.0 + 7.0 * x2)) / d1
    g31pp = -a * x3 * (9.0 + 11.0 * x2 - 10.0 * x4 + 2.0 * a * (-3.0 - x2 + 8.0 * x4)) / d1
    # The De**2 in "30 De**2" is required for agreement with the harmonic-balance
    # small-amplitude limit away from De = 1.
    g33p = a * x4 * (-21.0 + 30.0 * x2 + 51.0 * x4 + 4.0 * a * (4.0 - 17.0 * x2 + 3.0 * x4)) / d3
    g33pp = a * x3 * (-3.0 + 48.0 * x2 + 33.0 * x4 - 18.0 * x6 + a * (2.0 - 48.0 * x2 + 46.0 * x4)) / d3
    return MaosIntrinsics(g11p, g11pp, g31p, g31pp, g33p, g33pp)


def step_strain_modulus(params: ModelParams, gamma, t):
    """Nonlinear relaxation modulus ``sigma12(t)/gamma`` after a step strain."""
    G, a = params.modulus, params.alpha
    x = np.asarray(t, dtype=float) / params.relaxation_time
    g2 = np.asarray(gamma, dtype=float) ** 2
    e = np.exp(-x)
    # (1 - cosh x) e^{-x} written without overflow for large x
    one_minus_cosh_e = e - 0.5 - 0.5 * e * e
    return G * e / (1.0 + 2.0 * a * a * g2 * one_minus_cosh_e + a * g2 * (1.0 - e))


class SpectralSolution:
    """Parity-constrained Fourier coefficients at truncation ``H``.

    ``A[k]``, ``B[k]`` hold the ``2k``-th harmonics of ``s11`` and ``s22``;
    ``C[k]`` holds the ``(2k+1)``-th harmonic of ``s12``, for ``k = 0..H-1``.
    Negative harmonics are the conjugates and are never stored.
    """

    def __init__(self, H, A, B, C, loading: Loading, params: ModelParams,
                 iterations: int | None = None, residual_norm: float | None = None):
        H = int(H)
        if H < 1:
            raise ValueError("H must be a positive integer")
        A = np.array(A, dtype=complex)
        B = np.array(B, dtype=complex)
        C = np.array(C, dtype=complex)
        for name, arr in (("A", A), ("B", B), ("C", C)):
            if arr.shape != (H,):
                raise ValueError(f"{name} must have shape ({H},), got {arr.shape}")
        if A[0].imag != 0 or B[0].imag != 0:
            raise ValueError("A_0 and B_0 must be real")
        for arr in (A, B, C):
            arr.setflags(write=False)
        self.H = H
        self.A, self.B, self.C = A, B, C
        self.loading = loading
        self.params = params
        self.iterations = iterations
        self.residual_norm = residual_norm

    @property
    def even_harmonics(self) -> np.ndarray:
        return 2 * np.arange(self.H)

    @property
    def odd_harmonics(self) -> np.ndarray:
        return 2 * np.arange(self.H) + 1

    @property
    def n_unknowns(self) -> int:
        return 6 * self.H - 2

    def padded(self, H: int) -> SpectralSolution:
        """Same coefficients embedded in (or truncated to) a different ``H``."""
        def fit(x):
            out = np.zeros(H, dtype=complex)
            m = min(H, self.H)
            out[:m] = x[:m]
            return out
        return SpectralSolution(H, fit(self.A), fit(self.B), fit(self.C), self.loading, self.params)

    def __repr__(self):
        return (f"SpectralSolution(H={self.H}, gamma0={self.loading.strain_amplitude:g}, "
                f"omega={self.loading.angular_frequency:g}, alpha={self.params.alpha:g})")


def maos_initial_guess(params: ModelParams, loading: Loading, H: int) -> SpectralSolution:
    """Medium-amplitude analytical response used to seed the Newton solve.

    Shear carries the first and third harmonics to order ``gamma0**3``; ``s11``
    carries the order ``gamma0**2`` mean and second harmonic of ``N1``. ``s22``
    is left at zero. Everything above the third harmonic is zero.
    """
    if H < 2:
        raise ValueError("the MAOS guess needs H >= 2 to hold the third harmonic")
    G = params.modulus
    g0 = loading.strain_amplitude
    De, _ = derived_groups(params, loading)
    m = maos_shear_intrinsics(params.alpha, De)
    g1p = m.G11_storage + g0 * g0 * m.G31_storage
    g1pp = m.G11_loss + g0 * g0 * m.G31_loss
    A = np.zeros(H, dtype=complex)
    B = np.zeros(H, dtype=complex)
    C = np.zeros(H, dtype=complex)
    C[0] = G * g0 * (g1pp - 1j * g1p) / 2.0
    C[1] = G * g0 ** 3 * (m.G33_loss - 1j * m.G33_storage) / 2.0
    gp1, gpp1 = lve_moduli(De)
    gp2, gpp2 = lve_moduli(2.0 * De)
    f0 = gp1
    f2p = gpp1 - gpp2 / 2.0
    f2pp = -gp1 + gp2 / 2.0
    A[0] = G * g0 * g0 * f0
    A[1] = G * g0 * g0 * (f2pp - 1j * f2p) / 2.0
    return SpectralSolution(H, A, B, C, loading, params)


class Waveform:
    """One period of the three stresses on the grid ``t_i = i T / N_t``.

    When ``dimensionless`` is true the stresses are ``s/(G Wi)`` and times are
    ``t/lambda``.
    """

    def __init__(self, sigma11, sigma22, sigma12, loading: Loading, params: ModelParams,
                 dimensionless: bool = False):
        s11 = np.asarray(sigma11, dtype=float)
        s22 = np.asarray(sigma22, dtype=float)
        s12 = np.asarray(sigma12, dtype=float)
        if s11.ndim != 1 or s11.shape != s22.shape or s11.shape != s12.shape:
            raise ValueError("stress channels must be 1-D arrays of equal length")
        if s11.size < 1:
            raise ValueError("waveform needs at least one sample")
        self.sigma11, self.sigma22, self.sigma12 = s11, s22, s12
        self.loading = loading
        self.params = params
        self.dimensionless = bool(dimensionless)

    @property
    def sample_count(self) -> int:
        return self.sigma11.size

    @property
    def period(self) -> float:
        if self.dimensionless:
            De, _ = derived_groups(self.params, self.loading)
            return 2.0 * math.pi / De
        return self.loading.period

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.sample_count) * self.period / self.sample_count

    @property
    def phase(self) -> np.ndarray:
        """``omega t`` at the samples."""
        return 2.0 * math.pi * np.arange(self.sample_count) / self.sample_count

    @property
    def N1(self) -> np.ndarray:
        return self.sigma11 - self.sigma22

    @property
    def N2(self) -> np.ndarray:
        return self.sigma22

    def scaled(self, dimensionless: bool) -> Waveform:
        if dimensionless == self.dimensionless:
            return self
        _, Wi = derived_groups(self.params, self.loading)
        f = self.params.modulus * Wi
        f = 1.0 / f if dimensionless else f
        return Waveform(self.sigma11 * f, self.sigma22 * f, self.sigma12 * f,
                        self.loading, self.params, dimensionless)


@dataclass(frozen=True, eq=False)
class HarmonicSpectrum:
    """Sine/cosine coefficients per harmonic, in Pa.

    Shear arrays are indexed by ``odd_harmonics``; normal-stress arrays by
    ``even_harmonics``. ``F`` and ``S`` are derived from ``P`` and ``Q``.
    """

    odd_harmonics: np.ndarray
    even_harmonics: np.ndarray
    G_storage: np.ndarray
    G_loss: np.ndarray
    P_storage: np.ndarray
    P_loss: np.ndarray
    Q_storage: np.ndarray
    Q_loss: np.ndarray

    @property
    def F_storage(self) -> np.ndarray:
        return self.P_storage - self.Q_storage

    @property
    def F_loss(self) -> np.ndarray:
        return self.P_loss - self.Q_loss

    @property
    def S_storage(self) -> np.ndarray:
        return self.Q_storage

    @property
    def S_loss(self) -> np.ndarray:
        return self.Q_loss

    def shear(self, n: int) -> tuple[float, float]:
        i = _harmonic_position(self.odd_harmonics, n)
        return float(self.G_storage[i]), float(self.G_loss[i])

    def first_normal(self, n: int) -> tuple[float, float]:
        i = _harmonic_position(self.even_harmonics, n)
        return float(self.F_storage[i]), float(self.F_loss[i])

    def second_normal(self, n: int) -> tuple[float, float]:
        i = _harmonic_position(self.even_harmonics, n)
        return float(self.S_storage[i]), float(self.S_loss[i])


def _harmonic_position(harmonics: np.ndarray, n: int) -> int:
    hits = np.flatnonzero(harmonics == n)
    if hits.size == 0:
        raise KeyError(f"harmonic {n} is not in this spectrum")
    return int(hits[0])
