"""Stochastic environment: spectral diffusion, charge state, detuning-phase
conversion, the analytic contrast law, and thresholded single-shot readout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .rng import CounterRng, poisson_inv

NV_MINUS, NV_ZERO = 0, 1


@dataclass
class NoiseEnvironment:
    """Per-lane mutable noise context; one execution lane owns one instance."""

    detuning: float = 0.0            # current optical detuning, Hz
    charge_state: int = NV_MINUS
    sigma_diffusion: float = 0.0     # RMS of the detuning distribution, Hz
    p_ionize: float = 0.0            # NV- -> NV0 probability per block

    def __post_init__(self):
        if self.sigma_diffusion < 0.0:
            raise ValueError("sigma_diffusion must be non-negative")
        if not 0.0 <= self.p_ionize <= 1.0:
            raise ValueError("p_ionize outside [0, 1]")


def sample_detuning(env: NoiseEnvironment, rng: CounterRng) -> float:
    """Redraw the optical detuning (recharge/resync event); updates env."""
    env.detuning = env.sigma_diffusion * rng.normal()
    return env.detuning


def detuning_phase(delta_hz: float, arm_delay: float) -> float:
    """Phase 2 pi delta tau acquired by a detuned photon over the arm imbalance."""
    return 2.0 * math.pi * delta_hz * arm_delay


def analytic_contrast(sigma_hz: float, arm_delay: float) -> float:
    """E[cos(2 pi delta tau)] for Gaussian delta: exp(-(2 pi sigma tau)^2 / 2)."""
    if sigma_hz < 0.0:
        raise ValueError("sigma must be non-negative")
    x = 2.0 * math.pi * sigma_hz * arm_delay
    return math.exp(-0.5 * x * x)


def jitter_rms_for_contrast(contrast: float) -> float:
    """Gaussian phase RMS with E[cos] equal to the given contrast factor."""
    if not 0.0 < contrast <= 1.0:
        raise ValueError("contrast factor must be in (0, 1]")
    return math.sqrt(-2.0 * math.log(contrast))


@dataclass
class ReadoutModel:
    """Phonon-sideband photon-counting readout of the electron spin."""

    lambda_bright: float = 20.0      # mean counts for m_s = 0
    lambda_dark: float = 0.5         # mean counts for m_s = -1
    threshold: int = 3               # counts >= threshold inferred as m_s = 0
    combined_init_readout_fidelity: float = 1.0

    def __post_init__(self):
        if not self.lambda_bright > self.lambda_dark >= 0.0:
            raise ValueError("need lambda_bright > lambda_dark >= 0")
        if self.threshold < 1:
            raise ValueError("threshold must be >= 1")
        if not 0.0 < self.combined_init_readout_fidelity <= 1.0:
            raise ValueError("combined fidelity outside (0, 1]")


def single_shot_readout(ms_state: int, model: ReadoutModel, rng: CounterRng) -> tuple[int, int]:
    """Counts ~ Poisson(bright/dark mean); inferred 0 iff counts >= threshold.

    ms_state: 0 for m_s = 0 (bright), 1 for m_s = -1 (dark).
    """
    lam = model.lambda_bright if ms_state == 0 else model.lambda_dark
    counts = poisson_inv(lam, rng.uniform())
    return counts, (0 if counts >= model.threshold else 1)


def poisson_cdf(k: int, lam: float) -> float:
    """P(N <= k) for N ~ Poisson(lam); same accumulation as the samplers."""
    if k < 0:
        return 0.0
    if lam <= 0.0:
        return 1.0
    p = math.exp(-lam)
    cum = p
    for i in range(1, k + 1):
        p *= lam / i
        cum += p
    return min(cum, 1.0)


def readout_error_rates(model: ReadoutModel) -> tuple[float, float]:
    """(P(miss bright), P(miss dark)) for the thresholded Poisson readout."""
    r_bright = poisson_cdf(model.threshold - 1, model.lambda_bright)
    r_dark = 1.0 - poisson_cdf(model.threshold - 1, model.lambda_dark)
    return r_bright, r_dark


def readout_fidelities(model: ReadoutModel) -> tuple[float, float]:
    r0, r1 = readout_error_rates(model)
    return 1.0 - r0, 1.0 - r1


def split_fidelity(combined: float, ratio: float = 0.5) -> tuple[float, float]:
    """Split the combined init+readout figure multiplicatively.

    Returns (f_init, f_readout) with f_init * f_readout == combined; the
    default ratio 0.5 gives the balanced sqrt split.
    """
    if not 0.0 < combined <= 1.0:
        raise ValueError("combined fidelity outside (0, 1]")
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("split ratio outside [0, 1]")
    return combined**ratio, combined ** (1.0 - ratio)


def apply_init_error(prepared_value: int, flip_probability: float, rng: CounterRng) -> int:
    """Imperfect spin preparation: the orthogonal basis state with prob p."""
    if rng.uniform() < flip_probability:
        return 1 - prepared_value
    return prepared_value


def init_flip_for_budget(combined_fidelity: float, model: ReadoutModel) -> float:
    """Preparation-flip probability realizing the combined init/readout factor.

    The combined figure is a multiplicative contrast: the thresholded
    readout contributes 1 - r0 - r1 of it (from the configured count
    statistics), and an imperfect preparation flip carries the remainder,
    contrast factor 1 - 2 eps.  A preparation flip inverts the entangled
    state's phase, so it costs interference contrast without degrading the
    time-bin (ZZ) correlations.
    """
    r0, r1 = readout_error_rates(model)
    readout_factor = 1.0 - r0 - r1
    if readout_factor <= 0.0:
        raise ValueError("readout model has no discrimination power")
    if combined_fidelity > readout_factor + 1e-12:
        raise ValueError(
            f"combined init/readout fidelity {combined_fidelity} exceeds the "
            f"readout contrast {readout_factor:.4f}; lower the threshold errors"
        )
    eps = (1.0 - min(1.0, combined_fidelity / readout_factor)) / 2.0
    return eps


def ou_step(delta: float, sigma: float, dt_over_tau: float, rng: CounterRng) -> float:
    """One Ornstein-Uhlenbeck update of the detuning (optional slow-drift mode)."""
    a = math.exp(-dt_over_tau)
    return delta * a + sigma * math.sqrt(1.0 - a * a) * rng.normal()


def crc_rate_factor(delta_hz: float, linewidth_hz: float) -> float:
    """Power-broadened Lorentzian line factor L(delta) = 1/(1 + (delta/Gamma)^2)."""
    if linewidth_hz <= 0.0:
        raise ValueError("linewidth must be positive")
    x = delta_hz / linewidth_hz
    return 1.0 / (1.0 + x * x)
