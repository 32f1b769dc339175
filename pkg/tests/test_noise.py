import math

import numpy as np
import pytest

from spinphoton import noise
from spinphoton.noise import (
    NoiseEnvironment,
    ReadoutModel,
    analytic_contrast,
    apply_init_error,
    detuning_phase,
    init_flip_for_budget,
    jitter_rms_for_contrast,
    poisson_cdf,
    readout_error_rates,
    sample_detuning,
    single_shot_readout,
    split_fidelity,
)
from spinphoton.rng import CounterRng, normal_array


def test_zero_sigma_means_zero_detuning():
    env = NoiseEnvironment(sigma_diffusion=0.0)
    for i in range(10):
        assert sample_detuning(env, CounterRng(seed=1, index=i)) == 0.0


def test_detuning_rms_three_megahertz():
    idx = np.arange(1000000, dtype=np.uint64)
    draws = 3e6 * normal_array(12, 0, idx, 5)
    rms = math.sqrt(float(np.mean(draws**2)))
    assert abs(rms - 3e6) / 3e6 < 0.01


def test_consecutive_draws_uncorrelated():
    env = NoiseEnvironment(sigma_diffusion=1.0)
    xs = []
    for i in range(20000):
        xs.append(sample_detuning(env, CounterRng(seed=3, index=i)))
    xs = np.asarray(xs)
    r = np.corrcoef(xs[:-1], xs[1:])[0, 1]
    assert abs(r) < 0.01


def test_detuning_phase_values():
    assert detuning_phase(0.0, 70e-9) == 0.0
    assert detuning_phase(3e6, 70e-9) == pytest.approx(2 * math.pi * 0.21)
    assert detuning_phase(-1e6, 70e-9) < 0.0


def test_analytic_contrast_closed_form():
    assert analytic_contrast(0.0, 1e-7) == 1.0
    sigma = 1.0 / (2 * math.pi * 70e-9)  # 2 pi sigma tau = 1
    assert analytic_contrast(sigma, 70e-9) == pytest.approx(math.exp(-0.5))


def test_analytic_contrast_matches_sampling_oracle():
    sigma, tau = 2.5e6, 70e-9
    idx = np.arange(1000000, dtype=np.uint64)
    deltas = sigma * normal_array(77, 0, idx, 5)
    mc = float(np.mean(np.cos(2 * np.pi * deltas * tau)))
    se = float(np.std(np.cos(2 * np.pi * deltas * tau))) / math.sqrt(idx.size)
    assert abs(mc - analytic_contrast(sigma, tau)) < 3 * se


def test_analytic_contrast_monotone():
    taus = 70e-9
    vals = [analytic_contrast(s, taus) for s in np.linspace(0, 6e6, 13)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    vals_t = [analytic_contrast(3e6, t) for t in np.linspace(1e-9, 3e-7, 13)]
    assert all(a > b for a, b in zip(vals_t, vals_t[1:]))


def test_jitter_rms_for_contrast_roundtrip():
    for c in (0.97, 0.84, 0.5):
        s = jitter_rms_for_contrast(c)
        assert math.exp(-0.5 * s * s) == pytest.approx(c, rel=1e-12)


def test_single_shot_readout_fidelities():
    model = ReadoutModel(lambda_bright=20.0, lambda_dark=0.5, threshold=3)
    f0, f1 = noise.readout_fidelities(model)
    assert f0 > 0.95 and f1 > 0.95
    n = 20000
    hits0 = sum(
        single_shot_readout(0, model, CounterRng(seed=7, index=i))[1] == 0 for i in range(n)
    )
    hits1 = sum(
        single_shot_readout(1, model, CounterRng(seed=8, index=i))[1] == 1 for i in range(n)
    )
    # empirical confusion matches the Poisson closed form within 3 sigma
    for hits, f in ((hits0, f0), (hits1, f1)):
        se = math.sqrt(f * (1 - f) / n)
        assert abs(hits / n - f) < 3 * se + 1e-9


def test_dark_state_never_misread_at_zero_dark_counts():
    model = ReadoutModel(lambda_bright=5.0, lambda_dark=0.0, threshold=1)
    for i in range(500):
        counts, inferred = single_shot_readout(1, model, CounterRng(seed=9, index=i))
        assert counts == 0 and inferred == 1


def test_poisson_cdf_reference_values():
    # against the closed form sum_{k<=K} e^-lam lam^k / k!
    assert poisson_cdf(2, 20.0) == pytest.approx(math.exp(-20) * (1 + 20 + 200), rel=1e-12)
    assert poisson_cdf(2, 0.5) == pytest.approx(math.exp(-0.5) * (1 + 0.5 + 0.125), rel=1e-12)


def test_split_fidelity_product():
    f_i, f_r = split_fidelity(0.80)
    assert f_i == pytest.approx(math.sqrt(0.80))
    assert f_i * f_r == pytest.approx(0.80, rel=1e-12)
    f_i, f_r = split_fidelity(0.80, ratio=math.log(0.90) / math.log(0.80))
    assert f_i == pytest.approx(0.90, rel=1e-9)
    assert f_r == pytest.approx(0.80 / 0.90, rel=1e-9)


def test_apply_init_error_rates():
    assert apply_init_error(0, 0.0, CounterRng(1)) == 0
    n = 100000
    p = 0.07
    flips = sum(apply_init_error(0, p, CounterRng(seed=10, index=i)) == 1 for i in range(n))
    se = math.sqrt(p * (1 - p) / n)
    assert abs(flips / n - p) < 3 * se


def test_init_flip_for_budget_combined_factor():
    model = ReadoutModel(lambda_bright=8.2, lambda_dark=1.3, threshold=4)
    r0, r1 = readout_error_rates(model)
    eps = init_flip_for_budget(0.80, model)
    assert (1 - 2 * eps) * (1 - r0 - r1) == pytest.approx(0.80, rel=1e-12)
    with pytest.raises(ValueError):
        init_flip_for_budget(0.9999, ReadoutModel(lambda_bright=4.0, lambda_dark=2.0, threshold=3))


def test_crc_rate_factor():
    assert noise.crc_rate_factor(0.0, 3e6) == 1.0
    assert noise.crc_rate_factor(3e6, 3e6) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        noise.crc_rate_factor(1.0, 0.0)


def test_ou_step_stationary_moments():
    rngs = [CounterRng(seed=13, index=i) for i in range(30000)]
    x = 0.0
    xs = []
    r = CounterRng(seed=13)
    for _ in range(30000):
        x = noise.ou_step(x, 1.0, 0.3, r)
        xs.append(x)
    xs = np.asarray(xs[2000:])
    assert abs(xs.std() - 1.0) < 0.05
