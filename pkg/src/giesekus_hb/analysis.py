"""Post-processing shared by the harmonic-balance and time-integration paths."""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (HarmonicSpectrum, Loading, ModelParams, SpectralSolution, Waveform,
                   derived_groups, ode_rhs_dimensionless)
from .hb_solver import SolverOptions, ladder_solve
from .ivp_solver import IntegratorOptions, solve_ivp

CHANNELS = ("shear", "N1", "N2")


def _dense_spectrum(solution: SpectralSolution, N_t: int) -> np.ndarray:
    """rfft-layout coefficients (rows s11, s22, s12) for an ``N_t``-point grid."""
    if N_t < 2 * (2 * solution.H - 1) + 1:
        raise ValueError(f"N_t={N_t} cannot resolve harmonic {2 * solution.H - 1}")
    X = np.zeros((3, N_t // 2 + 1), dtype=complex)
    X[0, solution.even_harmonics] = solution.A
    X[1, solution.even_harmonics] = solution.B
    X[2, solution.odd_harmonics] = solution.C
    return X


def _synthesize(X: np.ndarray, N_t: int) -> np.ndarray:
    return np.fft.irfft(X * N_t, n=N_t, axis=-1)


def evaluate_waveform(solution: SpectralSolution, N_t: int = 1000,
                      dimensionless: bool = False) -> Waveform:
    """Sum the truncated series on ``t_i = i T / N_t``."""
    s = _synthesize(_dense_spectrum(solution, N_t), N_t)
    wave = Waveform(s[0], s[1], s[2], solution.loading, solution.params, dimensionless=False)
    return wave.scaled(True) if dimensionless else wave


def evaluate_derivative(solution: SpectralSolution, N_t: int = 1000,
                        dimensionless: bool = False) -> np.ndarray:
    """Time derivatives of ``(s11, s22, s12)`` on the waveform grid, shape ``(3, N_t)``.

    Dimensionless output is ``d(s/(G Wi))/d(t/lambda)``.
    """
    X = _dense_spectrum(solution, N_t)
    n = np.arange(X.shape[1])
    d = _synthesize(X * (1j * n * solution.loading.angular_frequency), N_t)
    if dimensionless:
        _, Wi = derived_groups(solution.params, solution.loading)
        d *= solution.params.relaxation_time / (solution.params.modulus * Wi)
    return d


@dataclass(frozen=True)
class ResidualReport:
    """``eps_r = ||r||_2 / (3 N_t)`` over the stacked scaled ODE residuals."""

    eps_r: float
    rms: tuple[float, float, float]
    N_t: int
    source: str | None = None

    @property
    def residual_norm(self) -> float:
        return math.sqrt(self.N_t * sum(r * r for r in self.rms))


def residual_error(solution: SpectralSolution, N_t: int = 1000,
                   source: str | None = None) -> ResidualReport:
    """Insert a periodic solution into the scaled ODEs and measure what is left."""
    De, Wi = derived_groups(solution.params, solution.loading)
    s = evaluate_waveform(solution, N_t, dimensionless=True)
    ds = evaluate_derivative(solution, N_t, dimensionless=True)
    state = np.vstack([s.sigma11, s.sigma22, s.sigma12])
    r = ds - ode_rhs_dimensionless(solution.params.alpha, De, Wi, state, s.times)
    eps = float(np.linalg.norm(r.ravel()) / (3 * N_t))
    rms = tuple(float(np.sqrt(np.mean(ch * ch))) for ch in r)
    return ResidualReport(eps, rms, N_t, source)


def moduli_from_coefficients(solution: SpectralSolution) -> HarmonicSpectrum:
    g0 = solution.loading.strain_amplitude

    def storage_loss(X, harmonics, norm):
        storage = -2.0 * X.imag / norm
        loss = 2.0 * X.real / norm
        zero = harmonics == 0
        storage[zero] = 0.0
        loss[zero] = X.real[zero] / norm
        return storage, loss

    Gp, Gpp = storage_loss(solution.C, solution.odd_harmonics, g0)
    Pp, Ppp = storage_loss(solution.A, solution.even_harmonics, g0 * g0)
    Qp, Qpp = storage_loss(solution.B, solution.even_harmonics, g0 * g0)
    return HarmonicSpectrum(solution.odd_harmonics.copy(), solution.even_harmonics.copy(),
                            Gp, Gpp, Pp, Ppp, Qp, Qpp)


def coefficients_from_moduli(spectrum: HarmonicSpectrum, loading: Loading,
                             params: ModelParams) -> SpectralSolution:
    """Inverse of :func:`moduli_from_coefficients`."""
    g0 = loading.strain_amplitude
    H = spectrum.odd_harmonics.size

    def complex_coeffs(storage, loss, harmonics, norm):
        X = norm * (loss - 1j * storage) / 2.0
        zero = harmonics == 0
        X[zero] = norm * loss[zero]
        return X

    C = complex_coeffs(spectrum.G_storage, spectrum.G_loss, spectrum.odd_harmonics, g0)
    A = complex_coeffs(spectrum.P_storage, spectrum.P_loss, spectrum.even_harmonics, g0 * g0)
    B = complex_coeffs(spectrum.Q_storage, spectrum.Q_loss, spectrum.even_harmonics, g0 * g0)
    return SpectralSolution(H, A, B, C, loading, params)


@dataclass(frozen=True, eq=False)
class Intensities:
    """Harmonic intensities and their ratios to the leading harmonic.

    Ratios are NaN when the leading intensity is zero.
    """

    odd_harmonics: np.ndarray
    even_harmonics: np.ndarray
    shear: np.ndarray
    N1: np.ndarray
    N2: np.ndarray

    @staticmethod
    def _ratio(x):
        lead = x[0] if x.size else 0.0
        if lead == 0:
            return np.full_like(x, np.nan)
        return x / lead

    @property
    def shear_ratio(self):
        return self._ratio(self.shear)

    @property
    def N1_ratio(self):
        return self._ratio(self.N1)

    @property
    def N2_ratio(self):
        return self._ratio(self.N2)

    def ratio(self, channel: str, n: int) -> float:
        """``I_n / I_1`` for shear, ``I_n / I_0`` for N1 and N2."""
        if channel == "shear":
            harmonics, ratios = self.odd_harmonics, self.shear_ratio
        elif channel in ("N1", "N2"):
            harmonics = self.even_harmonics
            ratios = self.N1_ratio if channel == "N1" else self.N2_ratio
        else:
            raise ValueError(f"unknown channel {channel!r}")
        hits = np.flatnonzero(harmonics == n)
        if hits.size == 0:
            raise KeyError(f"harmonic {n} not present for {channel}")
        return float(ratios[hits[0]])


def harmonic_intensities(spectrum: HarmonicSpectrum) -> Intensities:
    return Intensities(spectrum.odd_harmonics, spectrum.even_harmonics,
                       np.hypot(spectrum.G_storage, spectrum.G_loss),
                       np.hypot(spectrum.F_storage, spectrum.F_loss),
                       np.hypot(spectrum.S_storage, spectrum.S_loss))


@dataclass(frozen=True, eq=False)
class LissajousCurve:
    strain: np.ndarray  # gamma/gamma0 = sin(wt)
    rate: np.ndarray    # gamma_dot/(gamma0 w) = cos(wt)
    stress: np.ndarray  # normalized by max |stress| over the period


def lissajous_data(waveform: Waveform, channels: Sequence[str] = CHANNELS) -> dict[str, LissajousCurve]:
    """Normalized elastic (vs strain) and viscous (vs rate) curves per channel."""
    phase = waveform.phase
    series = {"shear": waveform.sigma12, "N1": waveform.N1, "N2": waveform.N2}
    out = {}
    for ch in channels:
        x = series[ch]
        peak = np.max(np.abs(x))
        if peak == 0:
            raise ValueError(f"channel {ch} is identically zero; cannot normalize")
        out[ch] = LissajousCurve(np.sin(phase), np.cos(phase), x / peak)
    return out


@dataclass(frozen=True)
class DecayFit:
    """``xi ~ u exp(-m x)`` with ``x = 2H-1`` (shear) or ``2H-2`` (normal).

    ``m_per_H`` is the slope against ``H`` itself, i.e. ``2 m``.
    """

    m: float
    u: float
    r_squared: float
    n_points: int

    @property
    def m_per_H(self) -> float:
        return 2.0 * self.m


@dataclass
class ConvergenceStudy:
    H_values: np.ndarray
    xi_G: np.ndarray
    xi_F: np.ndarray
    xi_S: np.ndarray
    H_ref: int
    stress_scale: dict[str, float]
    tolerance: float = 1e-12
    fits: dict[str, DecayFit] = field(default_factory=dict)

    def xi(self, channel: str) -> np.ndarray:
        return {"shear": self.xi_G, "N1": self.xi_F, "N2": self.xi_S}[channel]

    def abscissa(self, channel: str) -> np.ndarray:
        return 2 * self.H_values - (1 if channel == "shear" else 2)


_GRID = 1000


def convergence_errors(solutions: Sequence[SpectralSolution], reference: SpectralSolution,
                       tolerance: float = 1e-12) -> ConvergenceStudy:
    """Sup-norm distance of each truncation from the reference, per channel."""
    ref = evaluate_waveform(reference, _GRID)
    ref_series = (ref.sigma12, ref.N1, ref.N2)
    rows = []
    for sol in solutions:
        if sol.params != reference.params or sol.loading != reference.loading:
            raise ValueError("all solutions must share the reference's parameters and loading")
        if sol.H >= reference.H and sol is not reference:
            raise ValueError(f"H={sol.H} is not below H_ref={reference.H}")
        w = evaluate_waveform(sol, _GRID)
        rows.append([np.max(np.abs(a - b)) for a, b in zip((w.sigma12, w.N1, w.N2), ref_series)])
    xi = np.array(rows, dtype=float).reshape(-1, 3)
    scale = {ch: float(np.max(np.abs(x))) for ch, x in zip(CHANNELS, ref_series)}
    return ConvergenceStudy(np.array([s.H for s in solutions]), xi[:, 0], xi[:, 1], xi[:, 2],
                            reference.H, scale, tolerance)


def convergence_study(params: ModelParams, loading: Loading, H_values: Sequence[int],
                      H_ref: int = 30, options: SolverOptions | None = None) -> ConvergenceStudy:
    options = options or SolverOptions()
    ref = ladder_solve(params, loading, H_ref, options)
    sols = [ladder_solve(params, loading, H, options) for H in H_values]
    return convergence_errors(sols, ref, options.tolerance)


class InsufficientDataError(ValueError):
    pass


def fit_decay(study: ConvergenceStudy) -> dict[str, DecayFit]:
    """Least-squares line through ``ln xi`` above the solver floor, per channel.

    The floor is ``10 * tolerance * max|stress|`` of the reference.
    """
    fits = {}
    for ch in CHANNELS:
        xi = study.xi(ch)
        x = study.abscissa(ch).astype(float)
        floor = 10.0 * study.tolerance * study.stress_scale[ch]
        keep = xi > floor
        if keep.sum() < 3:
            raise InsufficientDataError(
                f"{ch}: only {int(keep.sum())} points above the floor {floor:.2e}; need 3")
        y = np.log(xi[keep])
        slope, intercept = np.polyfit(x[keep], y, 1)
        pred = slope * x[keep] + intercept
        ss_res = float(np.sum((y - pred) ** 2))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        fits[ch] = DecayFit(-float(slope), float(np.exp(intercept)), r2, int(keep.sum()))
    study.fits = fits
    return fits


LEADING_MODULI = ("G1_storage", "G1_loss", "G3_storage", "G3_loss",
                  "F0_loss", "F2_storage", "F2_loss", "S0_loss", "S2_storage", "S2_loss")


def leading_moduli(spectrum: HarmonicSpectrum) -> dict[str, float]:
    """Shear harmonics 1, 3 and normal-difference harmonics 0, 2."""
    g1 = spectrum.shear(1)
    g3 = spectrum.shear(3) if 3 in spectrum.odd_harmonics else (0.0, 0.0)
    f0, f2 = spectrum.first_normal(0), spectrum.first_normal(2)
    s0, s2 = spectrum.second_normal(0), spectrum.second_normal(2)
    vals = (*g1, *g3, f0[1], *f2, s0[1], *s2)
    return dict(zip(LEADING_MODULI, (float(v) for v in vals)))


class ComparisonError(RuntimeError):
    def __init__(self, path: str, cause: Exception):
        super().__init__(f"{path} path failed: {cause}")
        self.path = path
        self.cause = cause


@dataclass
class Comparison:
    hb: SpectralSolution
    ni: SpectralSolution
    hb_report: ResidualReport
    ni_report: ResidualReport
    hb_time: float
    ni_time: float
    leading_relative_difference: dict[str, float]
    cycles_used: int

    @property
    def speedup(self) -> float:
        return self.ni_time / self.hb_time if self.hb_time > 0 else math.inf

    @property
    def max_relative_difference(self) -> float:
        return max(self.leading_relative_difference.values())


def compare_hb_ni(params: ModelParams, loading: Loading, H: int,
                  solver_options: SolverOptions | None = None,
                  integrator_options: IntegratorOptions | None = None,
                  repeats: int = 3) -> Comparison:
    """Solve one point both ways; times are medians over ``repeats`` runs."""
    hb_times, ni_times = [], []
    try:
        for _ in range(repeats):
            t0 = time.perf_counter()
            hb = ladder_solve(params, loading, H, solver_options)
            hb_times.append(time.perf_counter() - t0)
    except Exception as exc:
        raise ComparisonError("HB", exc) from exc
    try:
        for _ in range(repeats):
            ivp = solve_ivp(params, loading, integrator_options)
            ni_times.append(ivp.wall_time)
    except Exception as exc:
        raise ComparisonError("NI", exc) from exc
    a = leading_moduli(moduli_from_coefficients(hb))
    b = leading_moduli(ivp.analysis.spectrum)
    diff = {k: abs(a[k] - b[k]) / abs(a[k]) if a[k] != 0 else abs(b[k]) for k in a}
    return Comparison(hb, ivp.solution, residual_error(hb, source="HB"),
                      residual_error(ivp.solution, source="NI"),
                      statistics.median(hb_times), statistics.median(ni_times), diff, ivp.cycles_used)
