import math

import numpy as np
import pytest

from spdelab.noise import NoiseStream
from spdelab.reaction import build_callbacks
from spdelab.simulate import (CallbackBundle, SchemeConfig, SimulationError,
                              coupled_pair, default_dt, derivative_flow,
                              diagonal_constant_diffusion, ou_exact,
                              simulate_batch, simulate_path)
from spdelab.spectral import GalerkinState


def zero_callbacks() -> CallbackBundle:
    return CallbackBundle(drift=lambda x: np.zeros_like(x),
                          diffusion_apply=lambda x, w: np.zeros_like(w),
                          drift_jacobian_apply=lambda x, h: np.zeros_like(h),
                          diffusion_jacobian_apply=lambda x, h, w: np.zeros_like(h))


class TestSchemeConfig:
    def test_step_count_rounding(self):
        cfg = SchemeConfig(dt=3e-3, t_end=1.0)
        assert cfg.n_steps == 333
        assert cfg.realized_dt == pytest.approx(1.0 / 333)

    def test_zero_horizon(self):
        assert SchemeConfig(dt=1e-3, t_end=0.0).n_steps == 0

    def test_bad_scheme(self):
        with pytest.raises((ValueError, SimulationError)):
            SchemeConfig(dt=1e-3, t_end=1.0, scheme="milstein")

    def test_default_dt(self):
        lams = np.array([1.0, 400.0])
        assert default_dt(lams, "exponential_euler") == 1e-3
        assert default_dt(lams, "euler_maruyama") == pytest.approx(0.1 / 400.0)


class TestStep:
    def test_pure_decay(self):
        lams = np.array([1.0, 4.0, 9.0])
        cfg = SchemeConfig(dt=1e-2, t_end=0.5)
        noise = NoiseStream(seed=0, width=3)
        x0 = GalerkinState(np.array([1.0, -2.0, 0.5]))
        out = simulate_path(x0, cfg, lams, zero_callbacks(), noise, 0)
        np.testing.assert_allclose(out.coeffs, np.exp(-lams * 0.5) * x0.coeffs, rtol=1e-13)

    def test_exponential_equals_euler_at_lambda_zero(self):
        lams = np.zeros(2)
        noise = NoiseStream(seed=3, width=2)
        cb = diagonal_constant_diffusion(0.7)
        x0 = GalerkinState(np.array([0.3, -0.1]))
        outs = {}
        for scheme in ("exponential_euler", "euler_maruyama"):
            cfg = SchemeConfig(dt=1e-2, t_end=0.2, scheme=scheme)
            outs[scheme] = simulate_path(x0, cfg, lams, cb, noise, 5).coeffs
        np.testing.assert_array_equal(outs["exponential_euler"], outs["euler_maruyama"])

    def test_dimension_mismatch(self):
        noise = NoiseStream(seed=0, width=4)
        cfg = SchemeConfig(dt=1e-2, t_end=0.1)
        with pytest.raises((SimulationError, ValueError)):
            simulate_batch(np.zeros(3), [0], cfg, np.ones(4),
                           diagonal_constant_diffusion(1.0), noise)

    def test_nonfinite_state_names_step(self):
        cb = CallbackBundle(drift=lambda x: np.full_like(x, np.nan),
                            diffusion_apply=lambda x, w: np.zeros_like(w),
                            drift_jacobian_apply=None, diffusion_jacobian_apply=None)
        noise = NoiseStream(seed=0, width=1)
        cfg = SchemeConfig(dt=1e-2, t_end=0.1)
        with pytest.raises(SimulationError, match="step"):
            simulate_batch(np.zeros(1), [0], cfg, np.ones(1), cb, noise)


class TestSimulatePath:
    def test_zero_horizon_returns_x0(self):
        x0 = GalerkinState(np.array([1.0, 2.0]))
        cfg = SchemeConfig(dt=1e-2, t_end=0.0)
        out = simulate_path(x0, cfg, np.ones(2), diagonal_constant_diffusion(1.0),
                            NoiseStream(seed=0, width=2), 0)
        np.testing.assert_array_equal(out.coeffs, x0.coeffs)

    def test_bit_identical_reruns(self, rd16, rd16_callbacks):
        cfg = SchemeConfig(dt=2e-3, t_end=0.05)
        x0 = GalerkinState(np.zeros(16))
        runs = [simulate_path(x0, cfg, rd16.spectrum.lambdas, rd16_callbacks,
                              NoiseStream(seed=11, width=16), 9).coeffs
                for _ in range(2)]
        np.testing.assert_array_equal(runs[0], runs[1])

    def test_ou_moments(self):
        # one slow mode: mean e^{-t} x0, variance (1 - e^{-2})/2
        M, t = 20_000, 1.0
        lams = np.array([1.0])
        cfg = SchemeConfig(dt=1e-3, t_end=t)
        noise = NoiseStream(seed=2024, width=1)
        res = simulate_batch(np.array([1.0]), np.arange(M), cfg, lams,
                             diagonal_constant_diffusion(1.0), noise)
        xs = res["x"][:, 0]
        mean, var = ou_exact(np.array([1.0]), t, lams, 1.0)
        assert abs(xs.mean() - mean[0]) < 4 * xs.std() / math.sqrt(M)
        se_var = xs.var() * math.sqrt(2.0 / M)
        assert abs(xs.var(ddof=1) - var[0]) < 4 * se_var


class TestDerivativeFlow:
    def test_constant_sigma_flow_is_heat_semigroup(self):
        lams = np.array([1.0, 2.0, 5.0])
        cfg = SchemeConfig(dt=1e-3, t_end=0.3)
        v = GalerkinState(np.array([1.0, -1.0, 2.0]))
        _, flow = derivative_flow(GalerkinState(np.zeros(3)), v, cfg, lams,
                                  diagonal_constant_diffusion(1.0),
                                  NoiseStream(seed=5, width=3), 0)
        np.testing.assert_allclose(flow.coeffs, np.exp(-lams * 0.3) * v.coeffs, rtol=1e-12)

    def test_zero_direction_stays_zero(self, rd16, rd16_callbacks):
        cfg = SchemeConfig(dt=2e-3, t_end=0.05)
        _, flow = derivative_flow(GalerkinState(np.zeros(16)), GalerkinState(np.zeros(16)),
                                  cfg, rd16.spectrum.lambdas, rd16_callbacks,
                                  NoiseStream(seed=5, width=16), 0)
        np.testing.assert_array_equal(flow.coeffs, np.zeros(16))

    def test_finite_difference_consistency(self, rd16, rd16_callbacks):
        cfg = SchemeConfig(dt=2e-3, t_end=0.05)
        lams = rd16.spectrum.lambdas
        noise = NoiseStream(seed=41, width=16)
        x0 = GalerkinState(np.zeros(16))
        v = np.zeros(16)
        v[0] = 1.0
        _, flow = derivative_flow(x0, GalerkinState(v), cfg, lams, rd16_callbacks, noise, 0)
        errs = []
        for eps in (1e-2, 5e-3, 2.5e-3):
            a, b = coupled_pair(GalerkinState(eps * v), x0, cfg, lams,
                                rd16_callbacks, noise, 0)
            fd = (a.coeffs - b.coeffs) / eps
            errs.append(np.linalg.norm(fd - flow.coeffs))
        assert errs[0] > errs[1] > errs[2]
        assert errs[1] == pytest.approx(errs[0] / 2, rel=0.25)
        assert errs[2] == pytest.approx(errs[1] / 2, rel=0.25)

    def test_flow_linearity_bitwise(self, rd16, rd16_callbacks):
        # doubling v scales every linear update by an exact power of two
        cfg = SchemeConfig(dt=2e-3, t_end=0.04)
        lams = rd16.spectrum.lambdas
        noise = NoiseStream(seed=13, width=16)
        x0 = GalerkinState(np.zeros(16))
        v = np.zeros(16)
        v[2] = 0.5
        _, f1 = derivative_flow(x0, GalerkinState(v), cfg, lams, rd16_callbacks, noise, 4)
        _, f2 = derivative_flow(x0, GalerkinState(2 * v), cfg, lams, rd16_callbacks, noise, 4)
        np.testing.assert_array_equal(f2.coeffs, 2 * f1.coeffs)

    def test_missing_jacobians(self):
        cb = CallbackBundle(drift=lambda x: np.zeros_like(x),
                            diffusion_apply=lambda x, w: w,
                            drift_jacobian_apply=None, diffusion_jacobian_apply=None)
        assert not cb.has_jacobians
        with pytest.raises((SimulationError, ValueError)):
            derivative_flow(GalerkinState(np.zeros(2)), GalerkinState(np.ones(2)),
                            SchemeConfig(dt=1e-2, t_end=0.1), np.ones(2), cb,
                            NoiseStream(seed=0, width=2), 0)


class TestCoupledPair:
    def test_equal_starts_stay_equal(self, rd16, rd16_callbacks):
        cfg = SchemeConfig(dt=2e-3, t_end=0.05)
        x0 = GalerkinState(np.full(16, 0.1))
        a, b = coupled_pair(x0, x0, cfg, rd16.spectrum.lambdas, rd16_callbacks,
                            NoiseStream(seed=8, width=16), 1)
        np.testing.assert_array_equal(a.coeffs, b.coeffs)

    def test_constant_sigma_difference_deterministic(self):
        lams = np.array([1.0, 3.0])
        cfg = SchemeConfig(dt=1e-3, t_end=0.5)
        x0 = GalerkinState(np.array([1.0, 0.0]))
        y0 = GalerkinState(np.array([0.0, 2.0]))
        a, b = coupled_pair(x0, y0, cfg, lams, diagonal_constant_diffusion(0.8),
                            NoiseStream(seed=17, width=2), 3)
        np.testing.assert_allclose(a.coeffs - b.coeffs,
                                   np.exp(-lams * 0.5) * (x0.coeffs - y0.coeffs),
                                   rtol=1e-12, atol=1e-14)


class TestOuExact:
    def test_time_zero(self):
        mean, var = ou_exact(np.array([2.0, -1.0]), 0.0, np.array([1.0, 3.0]), 1.0)
        np.testing.assert_array_equal(mean, [2.0, -1.0])
        np.testing.assert_array_equal(var, [0.0, 0.0])

    def test_brownian_mode(self):
        _, var = ou_exact(np.zeros(1), 2.5, np.zeros(1), 0.7)
        assert var[0] == pytest.approx(0.7**2 * 2.5, rel=1e-15)

    def test_unit_rate(self):
        _, var = ou_exact(np.zeros(1), 1.0, np.ones(1), 1.0)
        assert var[0] == pytest.approx((1 - math.exp(-2)) / 2, rel=1e-12)
        assert var[0] == pytest.approx(0.432332, abs=1e-6)
