import numpy as np
import pytest

from candleforge.diffusion.sampling import (SamplerConfig, ancestral_step_sigmas,
                                            guided_epsilon, sample, select_timesteps,
                                            sigmas_from_schedule)
from candleforge.diffusion.schedule import make_schedule


class TestGuidedEpsilon:
    def test_unit_scales_telescope_exactly(self):
        rng = np.random.default_rng(0)
        u, i, f = (rng.standard_normal((4, 8, 8)) for _ in range(3))
        assert np.array_equal(guided_epsilon(u, i, f, 1.0, 1.0), f)

    def test_scalar_arithmetic(self):
        got = guided_epsilon(np.array(0.0), np.array(1.0), np.array(2.0), 1.0, 2.0)
        assert got == 3.0

    def test_zero_scales_give_uncond(self):
        rng = np.random.default_rng(1)
        u, i, f = (rng.standard_normal((4, 4, 4)) for _ in range(3))
        assert np.array_equal(guided_epsilon(u, i, f, 0.0, 0.0), u)

    def test_matches_incremental_form(self):
        rng = np.random.default_rng(2)
        u, i, f = (rng.standard_normal(16) for _ in range(3))
        for s_i, s_t in ((1.0, 2.0), (0.5, 1.5), (1.3, 0.0)):
            ref = u + s_i * (i - u) + s_t * (f - i)
            assert np.allclose(guided_epsilon(u, i, f, s_i, s_t), ref, atol=1e-12)


class TestSigmaAlgebra:
    def test_down_up_identity_every_step(self):
        schedule = make_schedule()
        sigmas = sigmas_from_schedule(schedule)
        ts = select_timesteps(schedule.T, 20)
        seq = list(sigmas[ts]) + [0.0]
        for sigma, sigma_next in zip(seq, seq[1:]):
            down, up = ancestral_step_sigmas(sigma, sigma_next)
            target = sigma_next ** 2
            assert abs((down ** 2 + up ** 2) - target) <= 1e-12 * max(target, 1.0)

    def test_sigmas_strictly_increasing_in_t(self):
        schedule = make_schedule()
        sigmas = sigmas_from_schedule(schedule)
        assert (np.diff(sigmas) > 0).all()

    def test_final_step_is_deterministic(self):
        down, up = ancestral_step_sigmas(0.5, 0.0)
        assert down == 0.0 and up == 0.0

    def test_timestep_selection(self):
        ts = select_timesteps(1000, 20)
        assert len(ts) == 20
        assert ts[0] == 999 and ts[-1] == 0
        assert (np.diff(ts) < 0).all()
        with pytest.raises(ValueError):
            select_timesteps(10, 11)


def point_mass_eps_fn(schedule, x0):
    def fn(x_model, t, branch):
        abar = schedule.alphas_cum[t]
        return (x_model - np.sqrt(abar) * x0) / np.sqrt(1 - abar)

    return fn


class TestSample:
    def test_seeded_determinism(self):
        schedule = make_schedule()
        x0 = np.random.default_rng(1).standard_normal((4, 8, 8))
        fn = point_mass_eps_fn(schedule, x0)
        cfg = SamplerConfig(steps=10, seed=3)
        a = sample(fn, x0.shape, cfg, schedule, np.random.default_rng(3))
        b = sample(fn, x0.shape, cfg, schedule, np.random.default_rng(3))
        assert np.array_equal(a, b)

    def test_single_step_equals_one_shot_denoised(self):
        # with one step, sigma_next = 0 so no ancestral noise is added and the
        # result is exactly the denoised estimate
        schedule = make_schedule()
        x0 = np.random.default_rng(2).standard_normal((4, 8, 8))
        fn = point_mass_eps_fn(schedule, x0)
        out = sample(fn, x0.shape, SamplerConfig(steps=1, seed=7), schedule,
                     np.random.default_rng(7))
        assert np.abs(out - x0).max() < 1e-9

    def test_point_mass_oracle_recovers_target(self):
        schedule = make_schedule()
        x0 = np.random.default_rng(4).standard_normal((4, 16, 16))
        fn = point_mass_eps_fn(schedule, x0)
        out = sample(fn, x0.shape, SamplerConfig(steps=20, seed=5), schedule,
                     np.random.default_rng(5))
        assert np.abs(out - x0).mean() < 0.1

    def test_branch_calls_skipped_for_zero_coefficients(self):
        schedule = make_schedule()
        x0 = np.zeros((4, 8, 8))
        calls = []

        def fn(x_model, t, branch):
            calls.append(branch)
            return point_mass_eps_fn(schedule, x0)(x_model, t, branch)

        sample(fn, x0.shape, SamplerConfig(steps=3, text_guidance=1.0,
                                           image_guidance=1.0, seed=1),
               schedule, np.random.default_rng(1))
        assert set(calls) == {"full"}

        calls.clear()
        sample(fn, x0.shape, SamplerConfig(steps=3, text_guidance=2.0,
                                           image_guidance=1.0, seed=1),
               schedule, np.random.default_rng(1))
        assert set(calls) == {"image", "full"}

        calls.clear()
        sample(fn, x0.shape, SamplerConfig(steps=3, text_guidance=0.0,
                                           image_guidance=0.0, seed=1),
               schedule, np.random.default_rng(1))
        assert set(calls) == {"uncond"}

    def test_steps_must_fit_schedule(self):
        with pytest.raises(ValueError):
            sample(lambda *a: None, (4, 8, 8), SamplerConfig(steps=30),
                   make_schedule(T=10), np.random.default_rng(0))

    def test_invalid_sampler_config(self):
        with pytest.raises(ValueError):
            SamplerConfig(steps=0)
        with pytest.raises(ValueError):
            SamplerConfig(text_guidance=float("nan"))
