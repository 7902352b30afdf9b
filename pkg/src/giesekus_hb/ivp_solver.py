"""Reference path: integrate the scaled ODEs to the periodic steady state.

The pipeline is integrate cycle by cycle from rest, wait until successive
shear-stress peaks agree, spline the last period onto a uniform grid and
Fourier-analyse it.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .core import (HarmonicSpectrum, Loading, ModelParams, SpectralSolution, Waveform,
                   derived_groups, ode_rhs_dimensionless)

logger = logging.getLogger(__name__)


class IVPError(RuntimeError):
    pass


class StepSizeUnderflowError(IVPError):
    pass


class NonFiniteStateError(IVPError):
    pass


class AlternanceNotReachedError(IVPError):
    pass


class InsufficientCoverageError(IVPError):
    pass


@dataclass(frozen=True)
class IntegratorOptions:
    relative_tolerance: float = 1e-6
    absolute_tolerance: float = 1e-9
    max_cycles: int = 500
    alternance_threshold: float = 1e-6
    resample_count: int = 1000
    method: str = "Radau"

    def __post_init__(self):
        for name in ("relative_tolerance", "absolute_tolerance", "alternance_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.max_cycles < 1:
            raise ValueError("max_cycles must be >= 1")
        if self.resample_count < 2 or self.resample_count % 2:
            raise ValueError("resample_count must be a positive even integer")
        if self.method not in ("Radau", "BDF", "LSODA"):
            raise ValueError(f"method must be an implicit scipy integrator, got {self.method!r}")


@dataclass
class Trajectory:
    """Accepted steps of the scaled system, plus the per-cycle ``s12`` maxima."""

    times: np.ndarray
    states: np.ndarray  # (3, n)
    period: float
    peaks: list[float] = field(default_factory=list)

    @property
    def completed_cycles(self) -> int:
        return len(self.peaks)


def _jacobian(t, s, alpha, De, Wi):
    s11, s22, s12 = s
    g = math.cos(De * t)
    aw = alpha * Wi
    return np.array([
        [-1.0 - 2.0 * aw * s11, 0.0, -2.0 * aw * s12 + 2.0 * g * Wi],
        [0.0, -1.0 - 2.0 * aw * s22, -2.0 * aw * s12],
        [-aw * s12, -aw * s12 + g * Wi, -1.0 - aw * (s11 + s22)],
    ])


def _rhs(t, s, alpha, De, Wi):
    return ode_rhs_dimensionless(alpha, De, Wi, s, t)


def _cycle_peak(sol) -> float:
    """Maximum of ``s12`` over one cycle: best step, polished on the dense output."""
    t, y = sol.t, sol.y[2]
    i = int(np.argmax(y))
    lo, hi = t[max(i - 1, 0)], t[min(i + 1, t.size - 1)]
    peak = float(y[i])
    if hi > lo:
        res = minimize_scalar(lambda x: -sol.sol(x)[2], bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, abs(hi))})
        peak = max(peak, float(-res.fun))
    return peak


def _alternance_index(peaks, threshold) -> int | None:
    for c in range(1, len(peaks)):
        p, q = peaks[c], peaks[c - 1]
        if p != 0 and abs(p - q) / abs(p) < threshold:
            return c
    return None


def integrate_cycles(params: ModelParams, loading: Loading,
                     options: IntegratorOptions | None = None) -> Trajectory:
    """Integrate from zero stress, one forcing period at a time.

    Stops after the cycle at which alternance is first met, or after
    ``max_cycles`` cycles.
    """
    options = options or IntegratorOptions()
    De, Wi = derived_groups(params, loading)
    T = 2.0 * math.pi / De
    args = (params.alpha, De, Wi)
    y = np.zeros(3)
    times, states, peaks = [np.zeros(1)], [y[:, None]], []
    first_step = None
    for c in range(options.max_cycles):
        sol = integrate.solve_ivp(
            _rhs, (c * T, (c + 1) * T), y, method=options.method,
            rtol=options.relative_tolerance, atol=options.absolute_tolerance,
            jac=_jacobian, args=args, dense_output=True, first_step=first_step)
        if sol.status != 0:
            if "step size" in sol.message.lower():
                raise StepSizeUnderflowError(f"cycle {c}: {sol.message}")
            raise IVPError(f"cycle {c}: {sol.message}")
        if not np.all(np.isfinite(sol.y)):
            raise NonFiniteStateError(f"non-finite state in cycle {c}")
        times.append(sol.t[1:])
        states.append(sol.y[:, 1:])
        peaks.append(_cycle_peak(sol))
        y = sol.y[:, -1]
        first_step = float(sol.t[-1] - sol.t[-2])
        if _alternance_index(peaks[-2:], options.alternance_threshold) is not None:
            break
    logger.debug("integrated %d cycles (De=%g, Wi=%g)", len(peaks), De, Wi)
    return Trajectory(np.concatenate(times), np.concatenate(states, axis=1), T, peaks)


def detect_alternance(trajectory: Trajectory, threshold: float = 1e-6) -> int:
    """First cycle whose ``s12`` peak is within ``threshold`` (relative) of the previous one."""
    if trajectory.completed_cycles < 2:
        raise AlternanceNotReachedError("alternance needs at least two completed cycles")
    c = _alternance_index(trajectory.peaks, threshold)
    if c is None:
        raise AlternanceNotReachedError(
            f"peaks did not settle to {threshold:g} within {trajectory.completed_cycles} cycles")
    return c


def resample_period(trajectory: Trajectory, loading: Loading, params: ModelParams,
                    N_t: int = 1000) -> Waveform:
    """Natural cubic spline of the final period onto ``N_t`` uniform points.

    The spline is fitted over the last two periods when available so the free
    end conditions sit outside the evaluated window.
    """
    T = trajectory.period
    t = trajectory.times
    t_end = t[-1]
    t0 = t_end - T
    if t0 < t[0] - 1e-12 * T:
        raise InsufficientCoverageError("trajectory is shorter than one period")
    start = max(t[0], t_end - 2.0 * T)
    mask = t >= start - 1e-12 * T
    if mask.sum() < 4:
        raise InsufficientCoverageError("too few samples in the final period")
    spline = CubicSpline(t[mask], trajectory.states[:, mask], axis=1, bc_type="natural")
    grid = t0 + np.arange(N_t) * (T / N_t)
    s = spline(grid)
    return Waveform(s[0], s[1], s[2], loading, params, dimensionless=True)


@dataclass
class FourierAnalysis:
    """Discrete Fourier content of a waveform.

    ``coefficients`` are the raw nonnegative-harmonic coefficients in the
    waveform's own units, rows ``(s11, s22, s12)``. ``solution`` holds the
    allowed-parity coefficients up to ``n_max`` in physical units.
    """

    coefficients: np.ndarray
    n_max: int
    leakage: float
    solution: SpectralSolution
    spectrum: HarmonicSpectrum


def _cutoff(intensity: np.ndarray, harmonics: np.ndarray, cap: int) -> int:
    """Highest harmonic above ``1e-12`` of the leading intensity, at most ``cap``.

    Everything beyond the returned harmonic is negligible; interior gaps (a
    harmonic that happens to vanish) do not truncate the series.
    """
    lead = intensity.max() if intensity.size else 0.0
    if lead == 0:
        return -1
    big = np.flatnonzero((intensity >= 1e-12 * lead) & (harmonics <= cap))
    return int(harmonics[big[-1]]) if big.size else -1


def fourier_from_waveform(waveform: Waveform) -> FourierAnalysis:
    from .analysis import moduli_from_coefficients

    N = waveform.sample_count
    X = np.fft.rfft(np.vstack([waveform.sigma11, waveform.sigma22, waveform.sigma12]), axis=1) / N
    X[:, 0] = X[:, 0].real
    cap = N // 2 - 1
    n = np.arange(X.shape[1])
    even, odd = n[0::2], n[1::2]
    mag = np.abs(X)

    def leak(row, allowed, forbidden):
        lead = mag[row, allowed].max()
        return mag[row, forbidden].max() / lead if lead > 0 and forbidden.size else 0.0

    leakage = max(leak(0, even, odd[odd <= cap]), leak(1, even, odd[odd <= cap]),
                  leak(2, odd[odd <= cap], even[even <= cap]))
    n_max = max(_cutoff(mag[0, even], even, cap), _cutoff(mag[1, even], even, cap),
                _cutoff(mag[2, odd], odd, cap), 1)
    H = n_max // 2 + 1
    scale = 1.0
    if waveform.dimensionless:
        _, Wi = derived_groups(waveform.params, waveform.loading)
        scale = waveform.params.modulus * Wi

    def take(row, first):
        idx = first + 2 * np.arange(H)
        out = np.zeros(H, dtype=complex)
        ok = idx <= n_max
        out[ok] = X[row, idx[ok]] * scale
        return out

    sol = SpectralSolution(H, take(0, 0), take(1, 0), take(2, 1), waveform.loading, waveform.params)
    return FourierAnalysis(X[:, :n_max + 1].copy(), n_max, float(leakage), sol,
                           moduli_from_coefficients(sol))


@dataclass
class IVPResult:
    waveform: Waveform
    analysis: FourierAnalysis
    cycles_used: int
    wall_time: float
    trajectory: Trajectory

    @property
    def solution(self) -> SpectralSolution:
        return self.analysis.solution


def solve_ivp(params: ModelParams, loading: Loading,
              options: IntegratorOptions | None = None) -> IVPResult:
    """Integrate, detect alternance, resample and Fourier-analyse; timed end to end."""
    options = options or IntegratorOptions()
    start = time.perf_counter()
    traj = integrate_cycles(params, loading, options)
    cycle = detect_alternance(traj, options.alternance_threshold)
    wave = resample_period(traj, loading, params, options.resample_count)
    analysis = fourier_from_waveform(wave)
    elapsed = time.perf_counter() - start
    return IVPResult(wave, analysis, cycle + 1, elapsed, traj)
