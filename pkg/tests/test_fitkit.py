import numpy as np
import pytest

from jjtune.errors import DomainError, FitError
from jjtune.fitkit import (FitResult, RelaxationSession, compare_models,
                           detect_drop, exclude_drop, fit_exponential_rate,
                           fit_linear, fit_log_growth, fit_poly_time,
                           fit_power_law, fit_simmons, relaxation_parameters,
                           to_ohmic)
from jjtune.trace import ResistanceTrace

V_LOW = np.array([0.75, 0.80, 0.85, 0.90, 0.95])
ALPHA_LD1 = np.array([2.93, 6.42, 12.1, 22.6, 50.3])     # ohm/s


def make_trace(t, r, phase="active"):
    trace = ResistanceTrace()
    for tt, rr in zip(t, r):
        trace.append(float(tt), float(rr), 297.0, phase)
    return trace


class TestLinear:
    def test_exact_line(self):
        x = np.arange(10.0)
        res = fit_linear(x, x)
        assert res.params["slope"] == pytest.approx(1.0, abs=1e-14)
        assert res.params["offset"] == pytest.approx(0.0, abs=1e-12)
        assert res.rmse == pytest.approx(0.0, abs=1e-13)

    def test_noisy_relaxation_line(self):
        x = np.linspace(0.5, 15.0, 40)
        rng = np.random.default_rng(7)
        y = 1.13 * x + 3.29 + 0.05 * rng.standard_normal(x.size)
        res = fit_linear(x, y)
        assert res.params["slope"] == pytest.approx(1.13, abs=0.02)
        assert res.params["offset"] == pytest.approx(3.29, abs=0.1)
        assert res.stderr["slope"] < 0.02

    def test_rank_deficiency(self):
        with pytest.raises(FitError):
            fit_linear([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])


class TestDetectDrop:
    def test_monotone_no_drop(self):
        t = np.arange(30.0)
        trace = make_trace(t, 1000.0 + 5.0 * t)
        segment = detect_drop(trace)
        assert segment.duration == 0.0
        assert segment.excluded_points == 0

    def test_synthetic_dip(self):
        t = np.arange(0.0, 60.0, 1.0)
        r = np.where(t < 5.0, 1000.0 * (1 - 0.001 * t), 995.0 + 2.0 * (t - 5.0))
        segment = detect_drop(make_trace(t, r))
        assert segment.duration == pytest.approx(5.0, abs=1.0)
        assert segment.depth == pytest.approx(0.005, abs=0.002)

    def test_whole_trace_flagged(self):
        t = np.arange(20.0)
        trace = make_trace(t, 1000.0 - 3.0 * t)
        segment = detect_drop(trace)
        assert segment.whole_trace
        with pytest.raises(FitError):
            exclude_drop(trace, segment)

    def test_high_dose_drop_longer(self, ld1_full, hd1):
        import numpy as np

        from jjtune.protocol import (TargetDeltaR, build_single_program,
                                     run_program)
        from jjtune.twin import FailureModel, new_state

        ld1_full.hazard = FailureModel()
        traces = {}
        for variant in (ld1_full, hd1):
            program = build_single_program(TargetDeltaR(0.08), t_relax=0.0)
            state = new_state(variant)
            traces[variant.name] = run_program(state, variant, program,
                                               np.random.default_rng(3))
        seg_low = detect_drop(traces["low_dose_1"])
        seg_high = detect_drop(traces["high_dose_1"])
        assert seg_high.duration > seg_low.duration
        assert seg_high.depth > seg_low.depth


class TestPolyFit:
    ALPHA = 1.02e-3
    BETA = -7.06e-7
    R0 = 11662.0
    T = np.linspace(0.0, 300.0, 104)

    def _trace(self, noise_rng=None):
        r = self.R0 * (1 + self.ALPHA * self.T + self.BETA * self.T ** 2)
        if noise_rng is not None:
            r = r * (1 + 1e-3 * noise_rng.standard_normal(self.T.size))
        return make_trace(self.T, r)

    def test_exact_recovery(self):
        res = fit_poly_time(self._trace(), order=2)
        assert res.params["alpha"] == pytest.approx(self.ALPHA, rel=1e-10)
        assert res.params["beta"] == pytest.approx(self.BETA, rel=1e-10)

    def test_noisy_recovery_monte_carlo(self):
        ok_alpha = ok_beta = 0
        for seed in range(100):
            res = fit_poly_time(self._trace(np.random.default_rng(seed)), 2)
            ok_alpha += abs(res.params["alpha"] / self.ALPHA - 1) < 0.03
            ok_beta += abs(res.params["beta"] / self.BETA - 1) < 0.15
        assert ok_alpha >= 95
        assert ok_beta >= 95

    def test_third_order_marginal_gain(self):
        # on second-order data the cubic improves RMSE by well under
        # 0.05 percentage points
        for seed in range(20):
            trace = self._trace(np.random.default_rng(seed))
            f2 = fit_poly_time(trace, 2)
            f3 = fit_poly_time(trace, 3)
            assert f3.rmse <= f2.rmse + 1e-15
            assert (f2.rmse - f3.rmse) * 100.0 < 0.05

    def test_too_few_points(self):
        with pytest.raises(FitError):
            fit_poly_time(make_trace([0, 1, 2], [1e3, 1e3, 1e3]), 2)


class TestExponentialRate:
    def test_low_dose_1_column(self):
        res = fit_exponential_rate(V_LOW, ALPHA_LD1)
        assert res.params["alpha0"] == pytest.approx(98.2e-6, rel=0.10)
        assert res.params["v0"] == pytest.approx(72.5e-3, rel=0.05)

    def test_two_points_exact(self):
        res = fit_exponential_rate([0.4, 0.6], [1.0, 5.0])
        model = res.params["alpha0"] * np.exp(
            np.array([0.4, 0.6]) / res.params["v0"])
        assert model == pytest.approx([1.0, 5.0], rel=1e-9)
        assert res.rmse == pytest.approx(0.0, abs=1e-9)

    def test_rejects_non_positive_rates(self):
        with pytest.raises(DomainError):
            fit_exponential_rate([0.4, 0.5, 0.6], [1.0, -0.1, 2.0])

    def test_log_and_refined_agree_within_errors(self):
        # the log-space and linear-space estimates of V0 agree within the
        # sum of their reported standard errors on every published column
        columns = [
            (V_LOW, ALPHA_LD1),
            (V_LOW, np.array([0.80, 1.56, 3.920, 8.48, 17.96])),
            (np.array([0.90, 0.95, 1.00, 1.05]),
             np.array([1.99, 3.46, 6.762, 10.449])),
            (np.array([0.80, 0.85, 0.90, 0.925, 0.95, 1.00]),
             np.array([0.0809, 0.159, 0.543, 0.602, 0.78, 2.28])),
            (np.array([0.80, 0.85, 0.90, 0.925, 0.95, 1.00]),
             np.array([0.130, 0.073, 0.255, 0.446, 0.632, 1.70])),
        ]
        for v, alpha in columns:
            res = fit_exponential_rate(v, alpha)
            gap = abs(res.params["v0"] - res.params["v0_refined"])
            allowance = res.stderr["v0"] + res.stderr["v0_refined"]
            assert gap <= allowance


class TestLogGrowth:
    T = np.linspace(0.0, 1800.0, 150)

    def test_noisy_roundtrip(self):
        clean = 1.0 + 0.05 * np.log1p(self.T / 60.0)
        sigma = 0.01 * np.ptp(clean)
        ok = 0
        for seed in range(30):
            rng = np.random.default_rng(seed)
            res = fit_log_growth(self.T,
                                 clean + sigma * rng.standard_normal(self.T.size))
            ok += (abs(res.params["a"] - 1.0) < 0.10
                   and abs(res.params["b"] / 0.05 - 1) < 0.10
                   and abs(res.params["tau"] / 60.0 - 1) < 0.15)
        assert ok >= 27

    def test_constant_data_flagged(self):
        res = fit_log_growth(self.T, np.full(self.T.size, 2.5))
        assert res.params["a"] == pytest.approx(2.5)
        assert res.params["b"] == 0.0
        assert math_isnan(res.params["tau"])
        assert any("unidentifiable" in note for note in res.notes)

    def test_lower_bound_engages(self):
        # data implying a < 1 pins a at the bound, flagged
        y = 0.8 + 0.05 * np.log1p(self.T / 60.0)
        res = fit_log_growth(self.T, y, lower_bound_a=1.0)
        assert res.params["a"] == 1.0
        assert any("lower bound" in note for note in res.notes)


def math_isnan(x):
    return x != x


class TestPowerLaw:
    T = np.linspace(0.0, 1800.0, 150)

    def test_noisy_roundtrip(self):
        clean = 0.5 + 0.02 * np.power(self.T, 0.4)
        sigma = 0.01 * np.ptp(clean)
        ok = 0
        for seed in range(30):
            rng = np.random.default_rng(seed)
            res = fit_power_law(self.T,
                                clean + sigma * rng.standard_normal(self.T.size))
            ok += (abs(res.params["a"] / 0.5 - 1) < 0.10
                   and abs(res.params["c"] / 0.02 - 1) < 0.10
                   and abs(res.params["d"] / 0.4 - 1) < 0.10)
        assert ok >= 27

    def test_linear_limit(self):
        y = 0.3 + 2.0e-4 * self.T
        res = fit_power_law(self.T, y)
        assert res.params["d"] == pytest.approx(1.0, abs=1e-6)
        assert res.params["c"] == pytest.approx(2.0e-4, rel=1e-5)

    def test_log_data_fits_worse_than_log_model(self):
        rng = np.random.default_rng(5)
        y = (0.10 * (1 + 0.0378 * np.log1p(self.T / 60.0))
             + 0.00958 * np.log1p(self.T / 60.0)
             + 2e-4 * rng.standard_normal(self.T.size))
        log_fit = fit_log_growth(self.T, y)
        pow_fit = fit_power_law(self.T, y)
        assert pow_fit.resid_var > log_fit.resid_var


class TestSimmonsFit:
    T = np.linspace(60.0, 297.0, 40)

    def test_noisy_roundtrip(self):
        g_clean = 0.8791 * (1 + (self.T / 779.5) ** 2)
        for seed in range(10):
            rng = np.random.default_rng(seed)
            g = g_clean * (1 + 1e-3 * rng.standard_normal(self.T.size))
            res = fit_simmons(self.T, g)
            assert res.params["g0"] == pytest.approx(0.8791, rel=0.01)
            assert res.params["t0"] == pytest.approx(779.5, rel=0.01)

    def test_single_temperature_rejected(self):
        with pytest.raises(FitError):
            fit_simmons([100.0, 100.0, 100.0], [1.0, 1.0, 1.0])

    def test_constant_conductance_flagged(self):
        res = fit_simmons(self.T, np.full(self.T.size, 0.9))
        assert res.params["t0"] == float("inf")
        assert any("unidentifiable" in note for note in res.notes)


class TestCompareModels:
    @staticmethod
    def result(model, n_params, rmse, converged=True):
        return FitResult(model=model, params={}, stderr={}, rmse=rmse,
                         resid_mean=0.0, resid_var=rmse ** 2, n_points=50,
                         n_params=n_params, converged=converged)

    def test_tie_prefers_fewer_parameters(self):
        cmp = compare_models([self.result("poly2", 2, 0.10),
                              self.result("poly3", 3, 0.10)])
        assert cmp.preferred == "poly2"

    def test_published_rmse_pair(self):
        cmp = compare_models([self.result("poly2", 2, 0.351),
                              self.result("poly3", 3, 0.323)])
        assert cmp.preferred == "poly2"   # 0.028 improvement < 0.05 window

    def test_large_gain_prefers_richer_model(self):
        cmp = compare_models([self.result("poly2", 2, 0.50),
                              self.result("poly3", 3, 0.30)])
        assert cmp.preferred == "poly3"

    def test_non_converged_excluded(self):
        cmp = compare_models([self.result("poly2", 2, 0.10),
                              self.result("poly3", 3, 0.01, converged=False)])
        assert cmp.preferred == "poly2"
        assert any("poly3" in note for note in cmp.notes)

    def test_never_prefers_worse_rmse_with_more_params(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            r2 = float(rng.uniform(0.01, 0.5))
            r3 = float(rng.uniform(0.01, 0.5))
            cmp = compare_models([self.result("poly2", 2, r2),
                                  self.result("poly3", 3, r3)])
            if cmp.preferred == "poly3":
                assert r3 < r2


class TestRelaxationParameters:
    def _sessions(self, slope, offset, noise=0.0, seed=0):
        rng = np.random.default_rng(seed)
        t = np.linspace(0.0, 2400.0, 200)
        slope_law = 1.0 + (slope - 1.0) * np.log1p(t / 60.0) / np.log(31.0)
        offset_law = offset * np.log1p(t / 60.0) / np.log(31.0)
        sessions = []
        for dr in (0.02, 0.05, 0.08, 0.11, 0.14):
            total = slope_law * dr + offset_law
            if noise:
                total = total + noise * rng.standard_normal(t.size)
            sessions.append(RelaxationSession(dr_active=dr, times=t,
                                              dr_total=total))
        return sessions

    def test_recovers_laws_at_thirty_minutes(self):
        # exact up to linear interpolation on the probe grid
        rows = relaxation_parameters(self._sessions(1.13, 0.0329),
                                     [1800.0])["rows"]
        assert rows[0]["slope"] == pytest.approx(1.13, abs=1e-5)
        assert rows[0]["offset"] == pytest.approx(0.0329, abs=1e-5)

    def test_single_session_rejected(self):
        sessions = self._sessions(1.13, 0.0329)[:1]
        with pytest.raises(FitError):
            relaxation_parameters(sessions, [1800.0])

    def test_time_law_refit(self):
        out = relaxation_parameters(self._sessions(1.13, 0.0329),
                                    np.linspace(300.0, 2400.0, 8),
                                    fit_time_laws=True)
        assert out["slope_law"].params["a"] >= 1.0
        assert out["offset_law"].params["b"] > 0.0


class TestOhmic:
    def test_published_conversion(self):
        assert to_ohmic(1.0376e-3, 11662.0) == pytest.approx(12.1, abs=0.01)

    def test_identity(self):
        assert to_ohmic(0.123, 1.0) == 0.123

    def test_roundtrip(self):
        assert to_ohmic(3.3e-4, 9876.0) / 9876.0 == pytest.approx(
            3.3e-4, rel=1e-12)


class TestNoiselessRoundtrips:
    """Every model family recovers its own noiseless data to 1e-8."""

    def test_poly(self):
        t = np.linspace(0.0, 300.0, 60)
        r = 5000.0 * (1 + 2e-4 * t - 1e-7 * t ** 2)
        res = fit_poly_time(make_trace(t, r), 2)
        assert res.params["alpha"] == pytest.approx(2e-4, rel=1e-8)
        assert res.params["beta"] == pytest.approx(-1e-7, rel=1e-8)

    def test_exponential(self):
        alpha = 1e-4 * np.exp(V_LOW / 0.07)
        res = fit_exponential_rate(V_LOW, alpha)
        for key, truth in (("alpha0", 1e-4), ("v0", 0.07),
                           ("alpha0_refined", 1e-4), ("v0_refined", 0.07)):
            assert res.params[key] == pytest.approx(truth, rel=1e-8)

    def test_log_growth(self):
        t = np.linspace(0.0, 1800.0, 120)
        y = 1.0 + 0.05 * np.log1p(t / 60.0)
        res = fit_log_growth(t, y)
        assert res.params["a"] == pytest.approx(1.0, rel=1e-8)
        assert res.params["b"] == pytest.approx(0.05, rel=1e-8)
        assert res.params["tau"] == pytest.approx(60.0, rel=1e-8)

    def test_power_law(self):
        t = np.linspace(0.0, 1800.0, 120)
        y = 0.5 + 0.02 * np.power(t, 0.4)
        res = fit_power_law(t, y)
        assert res.params["a"] == pytest.approx(0.5, rel=1e-8)
        assert res.params["c"] == pytest.approx(0.02, rel=1e-8)
        assert res.params["d"] == pytest.approx(0.4, rel=1e-8)

    def test_simmons(self):
        temps = np.linspace(60.0, 297.0, 40)
        g = 0.8791 * (1 + (temps / 779.5) ** 2)
        res = fit_simmons(temps, g)
        assert res.params["g0"] == pytest.approx(0.8791, rel=1e-8)
        assert res.params["t0"] == pytest.approx(779.5, rel=1e-8)

    def test_determinism(self):
        t = np.linspace(0.0, 1800.0, 120)
        rng = np.random.default_rng(9)
        y = 1.0 + 0.05 * np.log1p(t / 60.0) + 1e-3 * rng.standard_normal(t.size)
        first = fit_log_growth(t, y)
        second = fit_log_growth(t, y)
        assert first.params == second.params
        assert first.stderr == second.stderr
