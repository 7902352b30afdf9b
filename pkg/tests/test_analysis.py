import math

import numpy as np
import pytest

from giesekus_hb import analysis as an
from giesekus_hb.core import HarmonicSpectrum, Loading, ModelParams, SpectralSolution, Waveform
from giesekus_hb.hb_solver import ladder_solve, n_unknowns, unpack

from oracles import ucm_exact


def _solution(H, A=None, B=None, C=None, loading=Loading(1.0, 1.0), params=ModelParams()):
    z = lambda x: np.zeros(H, complex) if x is None else np.asarray(x, complex)  # noqa: E731
    return SpectralSolution(H, z(A), z(B), z(C), loading, params)


class TestWaveform:
    def test_zero(self):
        w = an.evaluate_waveform(_solution(3), 100)
        assert not np.any(w.sigma11) and not np.any(w.sigma12)

    def test_first_harmonic_value(self):
        w = an.evaluate_waveform(_solution(2, C=[(1 - 1j) / 4, 0]), 100)
        assert w.sigma12[0] == pytest.approx(0.5, abs=1e-15)
        np.testing.assert_allclose(w.sigma12, 0.5 * (np.sin(w.phase) + np.cos(w.phase)), atol=1e-15)

    def test_nyquist_guard(self):
        with pytest.raises(ValueError):
            an.evaluate_waveform(_solution(5), 16)

    def test_dimensionless_scaling(self, giesekus):
        s = ladder_solve(giesekus, Loading(2.0, 3.0), 4)
        d, p = an.evaluate_waveform(s, 200, dimensionless=True), an.evaluate_waveform(s, 200)
        np.testing.assert_allclose(d.sigma12 * 1.0 * 6.0, p.sigma12, rtol=1e-14)


class TestDerivative:
    def test_constant_channel(self):
        d = an.evaluate_derivative(_solution(2, A=[3.0, 0]), 64)
        assert np.max(np.abs(d[0])) < 1e-15

    def test_sine(self):
        w = 2.5
        s = _solution(2, C=[-0.5j, 0], loading=Loading(1.0, w))  # sin(w t)
        d = an.evaluate_derivative(s, 128)
        t = an.evaluate_waveform(s, 128).times
        np.testing.assert_allclose(d[2], w * np.cos(w * t), atol=1e-13)

    def test_finite_difference(self, giesekus):
        s = ladder_solve(giesekus, Loading(1.0, 1.0), 5)
        errs = []
        for N in (400, 800):
            w = an.evaluate_waveform(s, N)
            dt = w.period / N
            fd = (np.roll(w.sigma12, -1) - np.roll(w.sigma12, 1)) / (2 * dt)
            errs.append(np.max(np.abs(fd - an.evaluate_derivative(s, N)[2])))
        assert errs[1] < 0.3 * errs[0]  # second order: x4 ideally
        assert errs[1] < 1e-4


class TestResidualError:
    @pytest.mark.parametrize("g0, w", [(0.1, 1.0), (10.0, 1.0), (1.0, 100.0)])
    def test_ucm_exact(self, g0, w, ucm):
        L = Loading(g0, w)
        assert an.residual_error(ucm_exact(ucm, L, 3)).eps_r < 1e-14

    def test_report_consistency_and_determinism(self, giesekus):
        s = ladder_solve(giesekus, Loading(10.0, 1.0), 5)
        a, b = an.residual_error(s, source="HB"), an.residual_error(s, source="HB")
        assert a == b
        assert a.eps_r >= 0 and a.source == "HB"
        assert (a.eps_r * 3 * a.N_t) == pytest.approx(a.residual_norm, rel=1e-12)

    def test_hb_beats_ni_at_small_amplitude(self, giesekus):
        from giesekus_hb.ivp_solver import solve_ivp
        L = Loading(0.01, 1.0)
        hb_eps = an.residual_error(ladder_solve(giesekus, L, 2)).eps_r
        ni_eps = an.residual_error(solve_ivp(giesekus, L).solution).eps_r
        assert hb_eps <= 1e-2 * ni_eps

    def test_decreases_with_H(self, giesekus):
        eps = [an.residual_error(ladder_solve(giesekus, Loading(10.0, 1.0), H)).eps_r for H in (2, 3, 5, 8)]
        assert all(b <= a for a, b in zip(eps, eps[1:]))


class TestModuli:
    def test_ucm_values(self, ucm):
        sp = an.moduli_from_coefficients(ucm_exact(ucm, Loading(0.3, 1.0), 3))
        assert sp.shear(1) == pytest.approx((0.5, 0.5), rel=1e-14)

    def test_real_C1_has_no_storage(self):
        sp = an.moduli_from_coefficients(_solution(2, C=[0.7, 0]))
        assert sp.shear(1)[0] == 0.0

    def test_mean_and_second_harmonic_convention(self):
        g0 = 2.0
        sp = an.moduli_from_coefficients(_solution(2, A=[3.0, 1 - 2j], loading=Loading(g0, 1.0)))
        assert sp.first_normal(0) == (0.0, 3.0 / g0 ** 2)
        assert sp.first_normal(2) == pytest.approx((4.0 / g0 ** 2, 2.0 / g0 ** 2))

    def test_F_S_mapping(self):
        sp = HarmonicSpectrum(np.array([1]), np.array([0, 2]), np.zeros(1), np.zeros(1),
                              np.array([0, 3.0]), np.zeros(2), np.array([0, 1.0]), np.zeros(2))
        assert sp.first_normal(2)[0] == 2.0 and sp.second_normal(2)[0] == 1.0

    @pytest.mark.parametrize("H", [2, 7])
    def test_inverse(self, H, giesekus):
        L = Loading(0.4, 2.0)
        sol = unpack(np.random.default_rng(H).normal(size=n_unknowns(H)), giesekus, L, H)
        sp = an.moduli_from_coefficients(sol)
        back = an.moduli_from_coefficients(an.coefficients_from_moduli(sp, L, giesekus))
        for name in ("G_storage", "G_loss", "P_storage", "P_loss", "Q_storage", "Q_loss"):
            np.testing.assert_allclose(getattr(back, name), getattr(sp, name), rtol=1e-13, atol=1e-13)


class TestIntensities:
    def test_fingerprint(self, giesekus):
        I = an.harmonic_intensities(an.moduli_from_coefficients(ladder_solve(giesekus, Loading(10.0, 1.0), 10)))
        assert I.ratio("shear", 3) == pytest.approx(0.23, abs=0.02)

    def test_single_harmonic(self):
        I = an.harmonic_intensities(an.moduli_from_coefficients(_solution(3, A=[1.0, 0, 0], C=[1j, 0, 0])))
        assert np.all(I.shear_ratio[1:] == 0) and np.all(I.N1_ratio[1:] == 0)

    def test_undefined_ratio(self):
        I = an.harmonic_intensities(an.moduli_from_coefficients(_solution(2, C=[1j, 0])))
        assert math.isnan(I.ratio("N2", 2))
        with pytest.raises(KeyError):
            I.ratio("shear", 2)
        with pytest.raises(ValueError):
            I.ratio("N3", 0)

    def test_maos_scaling(self, giesekus):
        g = np.geomspace(0.01, 0.05, 6)
        r = [an.harmonic_intensities(an.moduli_from_coefficients(ladder_solve(giesekus, Loading(x, 1.0), 4)))
             .ratio("shear", 3) for x in g]
        slope = np.polyfit(np.log(g), np.log(r), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.05)

    def test_hb_and_ni_third_harmonic(self, giesekus):
        from giesekus_hb.ivp_solver import solve_ivp
        L = Loading(10.0, 1.0)
        a = an.harmonic_intensities(an.moduli_from_coefficients(ladder_solve(giesekus, L, 10))).ratio("shear", 3)
        b = an.harmonic_intensities(solve_ivp(giesekus, L).analysis.spectrum).ratio("shear", 3)
        assert b == pytest.approx(a, rel=0.02)


class TestLissajous:
    def _wave(self, s12, N=400):
        L = Loading(1.0, 1.0)
        ph = 2 * np.pi * np.arange(N) / N
        return Waveform(np.ones(N), -np.ones(N), s12(ph), L, ModelParams()), ph

    def test_sine_is_line(self):
        w, ph = self._wave(np.sin)
        c = an.lissajous_data(w, ["shear"])["shear"]
        np.testing.assert_allclose(c.stress, c.strain, atol=1e-15)

    def test_cosine_is_circle(self):
        w, ph = self._wave(lambda p: 2 * np.cos(p))
        c = an.lissajous_data(w, ["shear"])["shear"]
        np.testing.assert_allclose(c.strain ** 2 + c.stress ** 2, 1.0, atol=1e-14)

    def test_zero_channel(self):
        w, _ = self._wave(lambda p: 0 * p)
        with pytest.raises(ValueError):
            an.lissajous_data(w, ["shear"])

    def test_stress_ordering(self, giesekus):
        w = an.evaluate_waveform(ladder_solve(giesekus, Loading(0.1, 1.0), 5))
        assert np.max(np.abs(w.sigma12)) > np.max(np.abs(w.N1)) > np.max(np.abs(w.N2))
        assert np.min(w.N2) < 0
        curves = an.lissajous_data(w)
        assert set(curves) == {"shear", "N1", "N2"}
        assert max(np.max(np.abs(c.stress)) for c in curves.values()) == 1.0


class TestConvergence:
    def test_self_comparison(self, giesekus):
        s = ladder_solve(giesekus, Loading(1.0, 1.0), 6)
        st = an.convergence_errors([s], s)
        assert st.xi_G[0] == st.xi_F[0] == st.xi_S[0] == 0

    def test_mismatched(self, giesekus):
        a = ladder_solve(giesekus, Loading(1.0, 1.0), 3)
        b = ladder_solve(giesekus, Loading(1.0, 2.0), 6)
        with pytest.raises(ValueError):
            an.convergence_errors([a], b)
        with pytest.raises(ValueError):
            an.convergence_errors([b], ladder_solve(giesekus, Loading(1.0, 2.0), 5))

    def test_synthetic_exponential(self):
        H = np.arange(2, 10)
        xi = lambda x: np.exp(-0.5 * x)  # noqa: E731
        st = an.ConvergenceStudy(H, xi(2 * H - 1), xi(2 * H - 2), xi(2 * H - 2), 30,
                                 {"shear": 1.0, "N1": 1.0, "N2": 1.0})
        fits = an.fit_decay(st)
        for f in fits.values():
            assert f.m == pytest.approx(0.5, abs=1e-10)
            assert f.u == pytest.approx(1.0, rel=1e-9)
            assert f.m_per_H == pytest.approx(1.0, abs=1e-10)

    def test_floor_excluded(self):
        H = np.arange(2, 10)
        xi = np.maximum(np.exp(-(2 * H - 1.0)), 1e-13)
        st = an.ConvergenceStudy(H, xi, xi, xi, 30, {"shear": 1.0, "N1": 1.0, "N2": 1.0}, tolerance=1e-12)
        f = an.fit_decay(st)["shear"]
        assert f.n_points == int(np.sum(xi > 1e-11))
        assert f.m == pytest.approx(1.0, abs=1e-10)

    def test_insufficient(self):
        H = np.arange(2, 6)
        xi = np.array([1e-3, 1e-14, 1e-14, 1e-14])
        st = an.ConvergenceStudy(H, xi, xi, xi, 30, {"shear": 1.0, "N1": 1.0, "N2": 1.0})
        with pytest.raises(an.InsufficientDataError):
            an.fit_decay(st)

    def test_decreasing_and_flat_regimes(self, giesekus):
        st = an.convergence_study(giesekus, Loading(10.0, 1.0), range(3, 9))
        assert np.all(np.diff(st.xi_G) < 0)
        hi = an.convergence_study(giesekus, Loading(10.0, 100.0), [3, 4, 5])
        # at De = 100 the shear response is nearly harmonic already at H = 3
        assert hi.xi_G[0] < 1e-6 * hi.stress_scale["shear"]


class TestCompare:
    def test_small_amplitude_agreement(self, giesekus):
        c = an.compare_hb_ni(giesekus, Loading(0.1, 1.0), 10, repeats=1)
        assert c.max_relative_difference < 1e-3
        assert c.hb_report.eps_r < c.ni_report.eps_r
        assert c.speedup > 1

    def test_labels_failing_path(self, giesekus):
        from giesekus_hb.ivp_solver import IntegratorOptions
        with pytest.raises(an.ComparisonError) as info:
            an.compare_hb_ni(giesekus, Loading(10.0, 1.0), 5, integrator_options=IntegratorOptions(max_cycles=1),
                             repeats=1)
        assert info.value.path == "NI"
        with pytest.raises(an.ComparisonError) as info:
            an.compare_hb_ni(giesekus, Loading(10.0, 1.0), 1, repeats=1)
        assert info.value.path == "HB"
