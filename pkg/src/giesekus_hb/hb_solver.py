"""Harmonic-balance equations for the Giesekus model and their Newton solution.

Unknowns are the real and imaginary parts of the nonnegative-harmonic
coefficients, packed as::

    [Re A0, Re A2, Im A2, ..., Re B0, Re B2, Im B2, ..., Re C1, Im C1, ...]

giving ``6H - 2`` reals. Residual rows use the same layout, with ``R11`` and
``R22`` at harmonics ``2k`` and ``R12`` at ``2k + 1``. Equations for negative
harmonics are the conjugates of these and are not assembled.

Internally every channel is expanded to a dense array over harmonics
``-2H..2H`` (both parities, conjugate-symmetric), so products are plain
``np.convolve`` calls and the Jacobian is assembled from Toeplitz matrices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse

from .core import Loading, ModelParams, SpectralSolution, maos_initial_guess

logger = logging.getLogger(__name__)

DEFAULT_RUNGS = (0.1, 1.0, 2.2, 4.6)


class HBSolveError(RuntimeError):
    """Newton failure; carries the best iterate seen and, under the ladder, the rung."""

    def __init__(self, message, best=None, residual_norm=float("nan"), iterations=0):
        super().__init__(message)
        self.best = best
        self.residual_norm = residual_norm
        self.iterations = iterations
        self.rung: float | None = None

    def __str__(self):
        msg = super().__str__()
        if self.rung is not None:
            msg = f"{msg} (ladder rung gamma0={self.rung:g})"
        return msg


class MaxIterationsError(HBSolveError):
    pass


class SingularJacobianError(HBSolveError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    """Newton settings.

    ``tolerance`` applies to the infinity norm of the residual made
    dimensionless by ``G gamma0 omega`` (the forcing amplitude).
    """

    tolerance: float = 1e-12
    max_iterations: int = 200
    backtrack: float = 0.5
    min_step: float = 2.0 ** -20
    ladder_rungs: tuple[float, ...] = DEFAULT_RUNGS

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack must lie in (0, 1)")
        if not 0 < self.min_step <= 1:
            raise ValueError("min_step must lie in (0, 1]")
        rungs = tuple(float(r) for r in self.ladder_rungs)
        if not rungs:
            raise ValueError("ladder_rungs must not be empty")
        if any(r <= 0 for r in rungs) or any(b <= a for a, b in zip(rungs, rungs[1:])):
            raise ValueError("ladder_rungs must be positive and strictly increasing")
        object.__setattr__(self, "ladder_rungs", rungs)


def n_unknowns(H: int) -> int:
    return 6 * H - 2


class _Layout:
    """Index bookkeeping for a given truncation."""

    def __init__(self, H: int):
        if H < 1:
            raise ValueError("H must be >= 1")
        self.H = H
        self.N = N = 2 * H
        self.size = 2 * N + 1
        self.harmonics = np.arange(-N, N + 1)
        k = np.arange(H)
        self.even_rows = N + 2 * k
        self.odd_rows = N + 2 * k + 1

        # v[i] = w[sel[i]], w = concat(Re z, Im z), z = [A_{2k}, B_{2k}, C_{2k+1}]
        sel = []
        for block in range(3):
            for j in range(H):
                i = block * H + j
                sel.append(i)
                if block == 2 or j > 0:
                    sel.append(3 * H + i)
        self.sel = np.array(sel)
        assert self.sel.size == n_unknowns(H)

        # dense channel arrays are E @ v
        nv = n_unknowns(H)
        E = np.zeros((3, self.size, nv), dtype=complex)
        for col, unit in enumerate(np.eye(nv)):
            z = self._z_from_v(unit)
            for ch in range(3):
                E[ch][:, col] = self._place(z[ch * H:(ch + 1) * H], ch)
        self.E = E
        self.E.setflags(write=False)

        # q - p + N lookup for Toeplitz rows: T[p, q] = Y[p - q + N]
        p = np.arange(self.size)
        d = p[:, None] - p[None, :] + N
        self.toeplitz_valid = (d >= 0) & (d < self.size)
        self.toeplitz_index = np.clip(d, 0, self.size - 1)

    def _z_from_v(self, v):
        w = np.zeros(6 * self.H)
        w[self.sel] = v
        return w[:3 * self.H] + 1j * w[3 * self.H:]

    def _place(self, x, channel):
        """Dense conjugate-symmetric array for one channel's stored coefficients."""
        out = np.zeros(self.size, dtype=complex)
        n = 2 * np.arange(self.H) + (1 if channel == 2 else 0)
        out[self.N + n] = x
        out[self.N - n] = np.conj(x)
        return out

    def realify(self, z):
        """Complex rows (A-, B-, C-ordered) to the packed real layout."""
        return np.concatenate([z.real, z.imag])[self.sel]

    def toeplitz(self, y, rows):
        return np.where(self.toeplitz_valid[rows], y[self.toeplitz_index[rows]], 0.0)


@lru_cache(maxsize=64)
def _layout(H: int) -> _Layout:
    return _Layout(H)


def pack(solution: SpectralSolution) -> np.ndarray:
    """Real unknown vector for a solution."""
    lay = _layout(solution.H)
    return lay.realify(np.concatenate([solution.A, solution.B, solution.C]))


def unpack(v, params: ModelParams, loading: Loading, H: int | None = None, **meta) -> SpectralSolution:
    v = np.asarray(v, dtype=float)
    if H is None:
        if (v.size + 2) % 6:
            raise ValueError(f"length {v.size} is not 6H - 2 for any H")
        H = (v.size + 2) // 6
    if v.size != n_unknowns(H):
        raise ValueError(f"expected {n_unknowns(H)} unknowns for H={H}, got {v.size}")
    lay = _layout(H)
    z = lay._z_from_v(v)
    return SpectralSolution(H, z[:H], z[H:2 * H], z[2 * H:], loading, params, **meta)


def full_coefficients(v, H: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense ``(A, B, C)`` arrays over harmonics ``-2H..2H`` (index ``n + 2H``)."""
    lay = _layout(H)
    v = np.asarray(v, dtype=float)
    return lay.E[0] @ v, lay.E[1] @ v, lay.E[2] @ v


def _convolve_dense(x, y, N):
    """Products of two dense series on ``-N..N``, keeping harmonics ``-N..N``."""
    return np.convolve(x, y)[N:3 * N + 1]


def convolve_truncated(x: Mapping[int, complex], y: Mapping[int, complex], keep: int) -> dict[int, complex]:
    """``sum_m x_m y_{k-m}`` for ``|k| <= keep``; missing indices count as zero."""
    if not x or not y:
        return {k: 0j for k in range(-keep, keep + 1)}
    N = max(keep, *(abs(k) for k in x), *(abs(k) for k in y))
    dx = np.zeros(2 * N + 1, dtype=complex)
    dy = np.zeros(2 * N + 1, dtype=complex)
    for k, val in x.items():
        dx[k + N] += val
    for k, val in y.items():
        dy[k + N] += val
    full = np.convolve(dx, dy)  # harmonic -2N at index 0
    return {k: complex(full[k + 2 * N]) for k in range(-keep, keep + 1)}


def _linear_factor(lay: _Layout, params: ModelParams, loading: Loading):
    return 1j * lay.harmonics * loading.angular_frequency + 1.0 / params.relaxation_time


def full_residual(v, params: ModelParams, loading: Loading, H: int):
    """Residuals of all three equations at every harmonic ``-2H..2H``.

    Only the rows at ``even_rows``/``odd_rows`` enter the solve; the rest exist
    for checking conjugate symmetry and parity closure.
    """
    v = np.asarray(v, dtype=float)
    lay = _layout(H)
    if v.size != n_unknowns(H):
        raise ValueError(f"expected {n_unknowns(H)} unknowns for H={H}, got {v.size}")
    N = lay.N
    A, B, C = full_coefficients(v, H)
    c = params.alpha / (params.relaxation_time * params.modulus)
    g0w = loading.strain_amplitude * loading.angular_frequency
    lin = _linear_factor(lay, params, loading)
    CC = _convolve_dense(C, C, N)
    # X[p-1] + X[p+1]; the outermost entries are beyond the ansatz and zero
    def neighbours(X):
        out = np.zeros_like(X)
        out[1:] += X[:-1]
        out[:-1] += X[1:]
        return out
    force = np.where(np.abs(lay.harmonics) == 1, params.modulus * g0w / 2.0, 0.0)
    R11 = c * (_convolve_dense(A, A, N) + CC) + lin * A - g0w * neighbours(C)
    R22 = c * (_convolve_dense(B, B, N) + CC) + lin * B
    R12 = lin * C + c * _convolve_dense(C, A + B, N) - 0.5 * g0w * neighbours(B) - force
    return R11, R22, R12


def residual(v, params: ModelParams, loading: Loading, H: int) -> np.ndarray:
    """Packed real residual vector of length ``6H - 2`` (physical units)."""
    lay = _layout(H)
    R11, R22, R12 = full_residual(v, params, loading, H)
    z = np.concatenate([R11[lay.even_rows], R22[lay.even_rows], R12[lay.odd_rows]])
    return lay.realify(z)


def _quadratic_jacobian(v, H: int) -> np.ndarray:
    """Derivative of the bracketed products (without ``alpha/(lambda G)``)."""
    lay = _layout(H)
    A, B, C = full_coefficients(v, H)
    EA, EB, EC = lay.E
    ev, od = lay.even_rows, lay.odd_rows
    TC_ev = lay.toeplitz(C, ev)
    J11 = 2.0 * (lay.toeplitz(A, ev) @ EA + TC_ev @ EC)
    J22 = 2.0 * (lay.toeplitz(B, ev) @ EB + TC_ev @ EC)
    J12 = lay.toeplitz(C, od) @ (EA + EB) + lay.toeplitz(A + B, od) @ EC
    Jz = np.vstack([J11, J22, J12])
    return np.vstack([Jz.real, Jz.imag])[lay.sel]


def _linear_jacobian(params: ModelParams, loading: Loading, H: int) -> np.ndarray:
    lay = _layout(H)
    EA, EB, EC = lay.E
    g0w = loading.strain_amplitude * loading.angular_frequency
    lin = _linear_factor(lay, params, loading)[:, None]
    ev, od = lay.even_rows, lay.odd_rows
    J11 = lin[ev] * EA[ev] - g0w * (EC[ev - 1] + EC[ev + 1])
    J22 = lin[ev] * EB[ev]
    J12 = lin[od] * EC[od] - 0.5 * g0w * (EB[od - 1] + EB[od + 1])
    Jz = np.vstack([J11, J22, J12])
    return np.vstack([Jz.real, Jz.imag])[lay.sel]


def jacobian(v, params: ModelParams, loading: Loading, H: int) -> np.ndarray:
    """Exact ``dR/dv``; affine in ``v`` because the residual is quadratic."""
    c = params.alpha / (params.relaxation_time * params.modulus)
    J = _linear_jacobian(params, loading, H)
    if c:
        J = J + c * _quadratic_jacobian(np.asarray(v, dtype=float), H)
    return J


@lru_cache(maxsize=16)
def _quadratic_tensor(H: int) -> scipy.sparse.csr_matrix:
    """Sparse ``Q`` with ``_quadratic_jacobian(v) == (Q @ v).reshape(n, n)``."""
    nv = n_unknowns(H)
    cols = [scipy.sparse.csc_matrix(_quadratic_jacobian(e, H).reshape(-1, 1)) for e in np.eye(nv)]
    Q = scipy.sparse.hstack(cols).tocsr()
    Q.eliminate_zeros()
    return Q


class _QuadraticSystem:
    """``R(v) = r0 + L v + c/2 Jq(v) v`` and ``J(v) = L + c Jq(v)``.

    Equal to :func:`residual` / :func:`jacobian` up to rounding; used inside
    Newton because one sparse product yields both.
    """

    def __init__(self, params: ModelParams, loading: Loading, H: int):
        self.n = n_unknowns(H)
        self.c = params.alpha / (params.relaxation_time * params.modulus)
        self.L = _linear_jacobian(params, loading, H)
        self.r0 = residual(np.zeros(self.n), params, loading, H)
        self.Q = _quadratic_tensor(H) if self.c else None

    def residual(self, v):
        if self.Q is None:
            return self.r0 + self.L @ v
        Jq = (self.Q @ v).reshape(self.n, self.n)
        return self.r0 + self.L @ v + 0.5 * self.c * (Jq @ v)

    def jacobian(self, v):
        if self.Q is None:
            return self.L
        return self.L + self.c * (self.Q @ v).reshape(self.n, self.n)


def finite_difference_jacobian(v, params: ModelParams, loading: Loading, H: int,
                               rel_step: float = 1e-6) -> np.ndarray:
    """Central differences, step ``rel_step * max(1, |v_j|)`` per column."""
    v = np.asarray(v, dtype=float)
    J = np.empty((v.size, v.size))
    for j in range(v.size):
        h = rel_step * max(1.0, abs(v[j]))
        vp = v.copy()
        vm = v.copy()
        vp[j] += h
        vm[j] -= h
        J[:, j] = (residual(vp, params, loading, H) - residual(vm, params, loading, H)) / (2 * h)
    return J


def residual_scale(params: ModelParams, loading: Loading) -> float:
    """Factor turning residuals dimensionless: ``1 / (G gamma0 omega)``."""
    return 1.0 / (params.modulus * loading.strain_amplitude * loading.angular_frequency)


class NewtonResult(NamedTuple):
    v: np.ndarray
    iterations: int
    residual_norm: float


def newton_solve(v0, params: ModelParams, loading: Loading, H: int,
                 options: SolverOptions | None = None, jacobian_mode: str = "analytic") -> NewtonResult:
    """Damped Newton iteration on ``R(v) = 0``.

    Each step is backtracked by ``options.backtrack`` until the 2-norm of the
    residual decreases or the step fraction reaches ``options.min_step``.
    ``jacobian_mode`` is ``"analytic"`` or ``"fd"`` (central differences).
    """
    options = options or SolverOptions()
    v = np.array(v0, dtype=float)
    if v.size != n_unknowns(H):
        raise ValueError(f"expected {n_unknowns(H)} unknowns for H={H}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError("initial guess must be finite")
    if jacobian_mode == "analytic":
        system = _QuadraticSystem(params, loading, H)
        res, jac = system.residual, system.jacobian
    elif jacobian_mode == "fd":
        def res(x):
            return residual(x, params, loading, H)

        def jac(x):
            return finite_difference_jacobian(x, params, loading, H)
    else:
        raise ValueError(f"unknown jacobian_mode {jacobian_mode!r}")
    scale = residual_scale(params, loading)

    R = res(v)
    norm2 = np.linalg.norm(R)
    best, best_inf = v.copy(), np.max(np.abs(R)) * scale
    for it in range(options.max_iterations + 1):
        r_inf = np.max(np.abs(R)) * scale
        if r_inf < best_inf:
            best, best_inf = v.copy(), r_inf
        if r_inf < options.tolerance:
            # confirm against the convolution form before accepting
            R_check = residual(v, params, loading, H)
            r_check = np.max(np.abs(R_check)) * scale
            if r_check < options.tolerance:
                return NewtonResult(v, it, r_check)
            R, r_inf = R_check, r_check
        if it == options.max_iterations:
            break
        try:
            lu = scipy.linalg.lu_factor(jac(v), check_finite=True)
            with np.errstate(all="ignore"):
                step = scipy.linalg.lu_solve(lu, -R)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SingularJacobianError(f"Newton linear solve failed: {exc}", best, best_inf, it) from exc
        if not np.all(np.isfinite(step)):
            raise SingularJacobianError("Newton step is not finite (singular Jacobian)", best, best_inf, it)

        t = 1.0
        while True:
            trial = v + t * step
            R_trial = res(trial)
            trial_norm = np.linalg.norm(R_trial)
            finite = np.isfinite(trial_norm)
            if finite and trial_norm < norm2:
                break
            if t * options.backtrack < options.min_step:
                if not finite:
                    raise SingularJacobianError("line search produced a non-finite residual",
                                                best, best_inf, it)
                break
            t *= options.backtrack
        v, R, norm2 = trial, R_trial, trial_norm
        logger.debug("newton it=%d step=%.3g |R|inf=%.3e", it + 1, t, np.max(np.abs(R)) * scale)
    raise MaxIterationsError(
        f"no convergence in {options.max_iterations} iterations (best |R|inf={best_inf:.3e})",
        best, best_inf, options.max_iterations)


def ladder_schedule(gamma0: float, rungs=DEFAULT_RUNGS) -> list[float]:
    """Strain amplitudes solved in turn to reach ``gamma0``.

    Amplitudes at or below the first rung are solved directly.
    """
    rungs = list(rungs)
    if gamma0 <= rungs[0]:
        return [gamma0]
    seq = [r for r in rungs if r < gamma0]
    return seq + [gamma0]


def ladder_solve(params: ModelParams, loading: Loading, H: int,
                 options: SolverOptions | None = None, jacobian_mode: str = "analytic") -> SpectralSolution:
    """HB solution at ``loading`` seeded by the MAOS guess and amplitude continuation.

    ``jacobian_mode`` is passed to :func:`newton_solve` at every rung.
    """
    options = options or SolverOptions()
    if H < 2:
        raise ValueError("ladder_solve needs H >= 2 (the MAOS seed holds the third harmonic)")
    schedule = ladder_schedule(loading.strain_amplitude, options.ladder_rungs)
    v = pack(maos_initial_guess(params, loading.at_amplitude(schedule[0]), H))
    total = 0
    result = None
    for g0 in schedule:
        rung_loading = loading.at_amplitude(g0)
        try:
            result = newton_solve(v, params, rung_loading, H, options, jacobian_mode)
        except HBSolveError as exc:
            exc.rung = g0
            raise
        v = result.v
        total += result.iterations
        logger.debug("ladder rung gamma0=%g converged in %d iterations", g0, result.iterations)
    return unpack(v, params, loading, H, iterations=total, residual_norm=result.residual_norm)
