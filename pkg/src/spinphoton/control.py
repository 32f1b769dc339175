"""Experiment orchestration: charge-resonance gating, recharge/resync
escalation, heralded conditional readout, and the deterministic
multi-lane shot runner.

Shots are partitioned into a fixed number of lanes (a config value, not
the thread count).  Each lane owns a sequential noise environment whose
draws are keyed by global block index, and every shot's draws are keyed
by its global shot index, so the merged record stream is byte-identical
for any worker count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernel, rng
from .noise import NV_MINUS, NV_ZERO, NoiseEnvironment, crc_rate_factor
from .program import RunSettings, build_program
from .rng import poisson_inv

# per-block draw addresses on STREAM_CRC
_ADDR_IONIZE = 0
_ADDR_BLOCK_DELTA = 1  # consumes (1, 2)
_ADDR_CRC_BASE = 10    # attempt k: counts u at +4k, recharge u at +4k+1, resample at (+4k+2, +4k+3)
_HARD_ATTEMPT_CAP = 1000


@dataclass
class CRCConfig:
    enabled: bool = False
    window: float = 100e-6
    threshold: int = 30
    rate_on_resonance: float = 4.0e5   # counts/s at zero detuning
    linewidth: float = 3.0e6           # power-broadened Lorentzian HWHM, Hz
    block_length: int = 1000
    max_recharge_attempts: int = 10
    recharge_success: float = 0.7      # NV0 -> NV- probability per 575 nm pulse

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")
        if self.block_length < 1:
            raise ValueError("block_length must be >= 1")

    def mean_counts(self, detuning_hz: float) -> float:
        return self.window * self.rate_on_resonance * crc_rate_factor(detuning_hz, self.linewidth)

    def pass_probability(self, detuning_hz: float = 0.0) -> float:
        """Single-check pass probability at the given detuning.

        The default window/rate/threshold are calibrated so this is ~0.95
        on resonance; use it to re-calibrate the threshold for other rates.
        """
        from .noise import poisson_cdf

        return 1.0 - poisson_cdf(self.threshold - 1, self.mean_counts(detuning_hz))


@dataclass
class NoiseSettings:
    sigma_diffusion: float = 0.0
    spectral_mode: str = "physical"    # "physical" (detuning draws) or "scalar" (contrast factor)
    spectral_factor: float = 1.0       # used in scalar mode
    resample: str = "per_block"        # "per_block" or "per_shot"
    drift: str = "none"                # "none" or "ou"
    ou_tau_blocks: float = 10.0
    p_ionize: float = 0.0

    def __post_init__(self):
        if self.spectral_mode not in ("physical", "scalar"):
            raise ValueError(f"unknown spectral mode {self.spectral_mode!r}")
        if self.resample not in ("per_block", "per_shot"):
            raise ValueError(f"unknown resample mode {self.resample!r}")
        if self.drift not in ("none", "ou"):
            raise ValueError(f"unknown drift mode {self.drift!r}")


def crc_check(env: NoiseEnvironment, cfg: CRCConfig, rng_: "rng.CounterRng") -> bool:
    """One charge-resonance check; on fail applies one recharge pulse.

    Counts are Poisson with the Lorentzian line factor for NV-, zero for
    NV0.  A failing check perturbs the charge bath: the detuning is
    resampled and an ionized center recovers with the configured
    probability.
    """
    lam = cfg.mean_counts(env.detuning) if env.charge_state == NV_MINUS else 0.0
    counts = poisson_inv(lam, rng_.uniform())
    if counts >= cfg.threshold:
        return True
    if env.charge_state == NV_ZERO and rng_.uniform() < cfg.recharge_success:
        env.charge_state = NV_MINUS
    env.detuning = env.sigma_diffusion * rng_.normal()
    return False


@dataclass
class ExperimentResult:
    records: dict[str, np.ndarray]
    crc: dict[str, np.ndarray]
    n_shots: int
    settings: RunSettings
    meta: dict = field(default_factory=dict)

    def heralded(self) -> np.ndarray:
        return self.records["herald"] == 1


_RECORD_KEYS = ("herald", "detector", "abin", "accidental", "lost", "spin_true", "counts", "inferred")


def _lane_ranges(n_shots: int, lanes: int, block_len: int) -> list[tuple[int, int]]:
    """Contiguous, block-aligned shot ranges; independent of worker count."""
    n_blocks = (n_shots + block_len - 1) // block_len
    lanes = min(lanes, n_blocks)
    per = n_blocks // lanes
    extra = n_blocks % lanes
    out = []
    start_blk = 0
    for l in range(lanes):
        size = per + (1 if l < extra else 0)
        lo = start_blk * block_len
        hi = min((start_blk + size) * block_len, n_shots)
        out.append((lo, hi))
        start_blk += size
    return out


def _run_lane(
    prog,
    settings: RunSettings,
    noise_cfg: NoiseSettings,
    crc_cfg: CRCConfig,
    seed: int,
    lo: int,
    hi: int,
    records: dict[str, np.ndarray],
    crc_rows: list,
):
    block_len = crc_cfg.block_length
    sigma = noise_cfg.sigma_diffusion if noise_cfg.spectral_mode == "physical" else 0.0
    env = NoiseEnvironment(sigma_diffusion=sigma, p_ionize=noise_cfg.p_ionize)
    have_prev_delta = False

    shot = lo
    while shot < hi:
        n_blk = min(block_len, hi - shot)
        block_idx = shot // block_len  # global, stable under lane partitioning

        if noise_cfg.p_ionize > 0.0:
            if rng.uniform(seed, rng.STREAM_CRC, block_idx, _ADDR_IONIZE) < noise_cfg.p_ionize:
                env.charge_state = NV_ZERO

        if sigma > 0.0:
            if noise_cfg.drift == "ou" and have_prev_delta:
                a = math.exp(-1.0 / noise_cfg.ou_tau_blocks)
                innov = rng.normal(seed, rng.STREAM_CRC, block_idx, _ADDR_BLOCK_DELTA)
                env.detuning = env.detuning * a + sigma * math.sqrt(1.0 - a * a) * innov
            else:
                env.detuning = sigma * rng.normal(seed, rng.STREAM_CRC, block_idx, _ADDR_BLOCK_DELTA)
            have_prev_delta = True

        recharges = 0
        resyncs = 0
        passed = True
        if crc_cfg.enabled:
            passed = False
            attempt = 0
            since_resync = 0
            while attempt < _HARD_ATTEMPT_CAP:
                base = _ADDR_CRC_BASE + 4 * attempt
                lam = crc_cfg.mean_counts(env.detuning) if env.charge_state == NV_MINUS else 0.0
                counts = poisson_inv(lam, rng.uniform(seed, rng.STREAM_CRC, block_idx, base))
                ok = counts >= crc_cfg.threshold
                crc_rows.append((block_idx, attempt, env.detuning, counts, ok, 0))
                if ok:
                    passed = True
                    break
                attempt += 1
                since_resync += 1
                if since_resync > crc_cfg.max_recharge_attempts:
                    # PLE scan and refocus: detuning reset, charge restored
                    env.detuning = 0.0
                    env.charge_state = NV_MINUS
                    resyncs += 1
                    since_resync = 0
                    crc_rows.append((block_idx, attempt, 0.0, -1, False, 1))
                    continue
                if env.charge_state == NV_ZERO:
                    if rng.uniform(seed, rng.STREAM_CRC, block_idx, base + 1) < crc_cfg.recharge_success:
                        env.charge_state = NV_MINUS
                env.detuning = env.sigma_diffusion * rng.normal(
                    seed, rng.STREAM_CRC, block_idx, base + 2
                )
                recharges += 1

        if passed:
            if noise_cfg.resample == "per_shot" and sigma > 0.0:
                idx = np.arange(shot, shot + n_blk, dtype=np.uint64)
                delta = sigma * rng.normal_array(seed, rng.STREAM_SHOT, idx, rng.ADDR_DELTA_N1)
            else:
                dlt = env.detuning if env.charge_state == NV_MINUS else 0.0
                delta = np.full(n_blk, dlt, dtype=np.float64)
            if env.charge_state == NV_ZERO:
                # ionized center: no optical response; photons never emitted
                for key in ("herald", "detector", "abin", "accidental", "lost"):
                    records[key][shot : shot + n_blk] = 0
                records["spin_true"][shot : shot + n_blk] = -1
                records["counts"][shot : shot + n_blk] = -1
                records["inferred"][shot : shot + n_blk] = -1
            else:
                sub = {k: records[k][shot : shot + n_blk] for k in _RECORD_KEYS}
                kernel.run_batch(prog, seed, shot, n_blk, delta, out=sub)
            records["delta"][shot : shot + n_blk] = delta
        else:
            records["delta"][shot : shot + n_blk] = env.detuning
        records["crc_passed"][shot : shot + n_blk] = 1 if passed else 0
        records["recharge_count"][shot : shot + n_blk] = min(recharges, 32767)
        shot += n_blk


def run_experiment(
    settings: RunSettings,
    n_shots: int,
    seed: int,
    noise_cfg: NoiseSettings | None = None,
    crc_cfg: CRCConfig | None = None,
    lanes: int = 8,
    threads: int = 1,
) -> ExperimentResult:
    """Run n_shots of the configured protocol with CRC gating and lanes.

    The scalar spectral mode folds the configured contrast factor into the
    interferometer phase noise; the physical mode draws detunings per
    block (or per shot) and converts them to phase at the analyzer.
    """
    noise_cfg = noise_cfg or NoiseSettings()
    crc_cfg = crc_cfg or CRCConfig(enabled=False)
    if noise_cfg.spectral_mode == "scalar" and noise_cfg.spectral_factor < 1.0:
        from .noise import jitter_rms_for_contrast

        settings = settings.replace(
            scalar_spectral_rms=jitter_rms_for_contrast(noise_cfg.spectral_factor)
        )
    prog = build_program(settings)

    records = kernel.allocate_records(n_shots)
    records["delta"] = np.zeros(n_shots, dtype=np.float64)
    records["crc_passed"] = np.ones(n_shots, dtype=np.uint8)
    records["recharge_count"] = np.zeros(n_shots, dtype=np.int16)

    lanes = max(1, min(lanes, max(1, n_shots)))
    ranges = _lane_ranges(n_shots, lanes, crc_cfg.block_length)
    lane_rows: list[list] = [[] for _ in ranges]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            futs = [
                ex.submit(
                    _run_lane, prog, settings, noise_cfg, crc_cfg, seed, lo, hi, records, lane_rows[i]
                )
                for i, (lo, hi) in enumerate(ranges)
                if hi > lo
            ]
            for f in futs:
                f.result()
    else:
        for i, (lo, hi) in enumerate(ranges):
            if hi > lo:
                _run_lane(prog, settings, noise_cfg, crc_cfg, seed, lo, hi, records, lane_rows[i])

    rows = [r for lane in lane_rows for r in lane]
    crc = {
        "block": np.array([r[0] for r in rows], dtype=np.int64),
        "attempt": np.array([r[1] for r in rows], dtype=np.int32),
        "delta": np.array([r[2] for r in rows], dtype=np.float64),
        "counts": np.array([r[3] for r in rows], dtype=np.int64),
        "passed": np.array([r[4] for r in rows], dtype=np.uint8),
        "resync": np.array([r[5] for r in rows], dtype=np.uint8),
    }
    return ExperimentResult(records=records, crc=crc, n_shots=n_shots, settings=settings,
                            meta={"seed": seed, "lanes": lanes})


# spec-facing name for the gated runner
run_controlled_experiment = run_experiment


def herald_log_rows(result: ExperimentResult):
    """Per-shot herald log entries (the JSONL export schema)."""
    r = result.records
    for i in range(result.n_shots):
        herald = bool(r["herald"][i])
        yield {
            "shot": i,
            "crc_passed": bool(r["crc_passed"][i]),
            "photon_heralded": herald,
            "readout_performed": bool(herald and r["inferred"][i] >= 0),
            "recharge_count": int(r["recharge_count"][i]),
            "detector": int(r["detector"][i]),
            "bin": int(r["abin"][i]),
            "accidental": int(r["accidental"][i]),
            "counts": int(r["counts"][i]),
            "inferred": int(r["inferred"][i]),
        }


def export_herald_log(result: ExperimentResult, path) -> None:
    from pathlib import Path

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in herald_log_rows(result):
            fh.write(json.dumps(row, sort_keys=True) + "\n")
