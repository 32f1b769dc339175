"""Unbalanced Mach-Zehnder photonic qubit analyzer.

Routing stage (electro-optic deflector or passive 50/50 splitter), long-arm
phase, output beam splitter, detectors with dark counts, and arrival-time
binning.  Output splitter convention:

    |short> -> (|D1> + |D2>)/sqrt(2)
    |long>  -> (|D1> - |D2>)/sqrt(2)

with the long-arm phase applied before the splitter, so an input
(|short> + |long>)/sqrt(2) at phase 0 exits entirely at D1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nv import PH_EARLY, PH_LATE, PH_LOST, PH_VAC
from .qstate import PureState
from .rng import CounterRng

ARM_SHORT, ARM_LONG = 0, 1
DET_NONE, DET_D1, DET_D2 = 0, 1, 2


@dataclass
class InterferometerConfig:
    arm_delay: float                  # long - short transit, equals the bin separation
    phase_phi: float = 0.0
    mode_overlap: float = 1.0         # interference-term multiplier
    phase_jitter_rms: float = 0.0     # radians

    def __post_init__(self):
        if self.arm_delay <= 0.0:
            raise ValueError("arm_delay must be positive")
        if not 0.0 <= self.mode_overlap <= 1.0:
            raise ValueError("mode_overlap outside [0, 1]")


@dataclass
class EODConfig:
    enabled: bool = True
    fidelity: float = 1.0             # probability of routing to the driven arm
    switch_period: float = 70e-9
    drive_delay: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.fidelity <= 1.0:
            raise ValueError("eod fidelity outside [0, 1]")

    def aligned(self) -> bool:
        """True when the RF drive is within a quarter period of alignment."""
        t = self.switch_period
        d = math.fmod(math.fmod(self.drive_delay, t) + t, t)
        return min(d, t - d) <= t / 4.0


@dataclass
class DetectorConfig:
    dark_rate: float = 0.0            # counts/s per detector
    detection_window: float = 210e-9
    time_filter: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.dark_rate < 0.0:
            raise ValueError("dark_rate must be non-negative")

    def dark_probability(self) -> float:
        """Probability of at least one dark count over both detectors per shot."""
        mu = 2.0 * self.dark_rate * self.detection_window
        return 1.0 - math.exp(-mu)


@dataclass
class ArrivalRecord:
    detector: int
    arrival_bin: int
    is_dark: bool = False
    shot_index: int = 0


def routing_probs(eod: EODConfig) -> tuple[float, float]:
    """(P(early -> long), P(late -> short)) for the configured routing stage."""
    if not eod.enabled:
        return 0.5, 0.5
    if eod.aligned():
        return eod.fidelity, eod.fidelity
    return 1.0 - eod.fidelity, 1.0 - eod.fidelity


def route(ph_bin: int, eod: EODConfig, rng: CounterRng) -> int:
    """Sample the interferometer arm taken by a photon in a real time bin."""
    if ph_bin not in (PH_EARLY, PH_LATE):
        raise ValueError("route() requires a real photon bin")
    p_el, p_ls = routing_probs(eod)
    u = rng.uniform()
    if ph_bin == PH_EARLY:
        return ARM_LONG if u < p_el else ARM_SHORT
    return ARM_SHORT if u < p_ls else ARM_LONG


def arrival_bin(emission_bin: int, arm: int) -> int:
    """early+short -> 1; early+long and late+short -> 2; late+long -> 3."""
    if emission_bin == PH_EARLY:
        return 1 if arm == ARM_SHORT else 2
    if emission_bin == PH_LATE:
        return 2 if arm == ARM_SHORT else 3
    raise ValueError(f"no arrival bin for photon level {emission_bin}")


def _photon_blocks(state: PureState) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Spin-register amplitude vectors attached to vac/early/late/lost."""
    ax = state.spec.axis("photon")
    t = np.moveaxis(state.amplitudes.reshape(state.spec.dims), ax, -1)
    flat = t.reshape(-1, state.spec.dims[ax])
    return flat[:, PH_VAC].copy(), flat[:, PH_EARLY].copy(), flat[:, PH_LATE].copy(), flat[:, PH_LOST].copy()


def _collapse(state: PureState, spin_amps: np.ndarray) -> PureState:
    """Rebuild the register with the photon destroyed (vac) and spin collapsed."""
    ax = state.spec.axis("photon")
    dims = state.spec.dims
    out = np.zeros((spin_amps.size, dims[ax]), dtype=np.complex128)
    out[:, PH_VAC] = spin_amps
    shape = [d for i, d in enumerate(dims) if i != ax] + [dims[ax]]
    amp = np.moveaxis(out.reshape(shape), -1, ax).reshape(-1)
    return PureState(state.spec, amp, state.weight)


def interfere_and_detect(
    state: PureState,
    icfg: InterferometerConfig,
    det: DetectorConfig,
    eod: EODConfig,
    rng: CounterRng,
    extra_phase_rms: float = 0.0,
) -> tuple[ArrivalRecord | None, PureState]:
    """Route, interfere and detect one shot; returns (record, collapsed state).

    Bin-2 coincidences interfere with effective phase phi + jitter (the
    shot's detuning phase rides on the emitted amplitudes); cross terms are
    suppressed with probability 1 - mode_overlap.  Bin-1/3 events bypass
    interference and split 50/50 over the detectors.  Dark counts land
    uniformly on (detector, bin); a signal click takes precedence.
    """
    c_vac, c_e, c_l, c_lost = _photon_blocks(state)
    w_e = float(np.vdot(c_e, c_e).real)
    w_l = float(np.vdot(c_l, c_l).real)

    u_e, u_l = rng.uniform(), rng.uniform()
    p_el, p_ls = routing_probs(eod)
    arm_e = ARM_LONG if u_e < p_el else ARM_SHORT
    arm_l = ARM_SHORT if u_l < p_ls else ARM_LONG
    bin_e, bin_l = arrival_bin(PH_EARLY, arm_e), arrival_bin(PH_LATE, arm_l)

    sigma = math.hypot(icfg.phase_jitter_rms, extra_phase_rms)
    phase = icfg.phase_phi + sigma * rng.normal()

    matched = rng.uniform() < icfg.mode_overlap
    u = rng.uniform()
    record = None
    post = None
    if bin_e == 2 and bin_l == 2 and matched:
        c_long = c_e * np.exp(1j * phase)
        a1 = (c_l + c_long) / math.sqrt(2.0)
        a2 = (c_l - c_long) / math.sqrt(2.0)
        p1 = float(np.vdot(a1, a1).real)
        p2 = float(np.vdot(a2, a2).real)
        if u < p1:
            record = ArrivalRecord(DET_D1, 2)
            post = _collapse(state, a1 / math.sqrt(p1))
        elif u < p1 + p2:
            record = ArrivalRecord(DET_D2, 2)
            post = _collapse(state, a2 / math.sqrt(p2))
    else:
        segs = [(w_e / 2, DET_D1, bin_e, c_e), (w_e / 2, DET_D2, bin_e, c_e),
                (w_l / 2, DET_D1, bin_l, c_l), (w_l / 2, DET_D2, bin_l, c_l)]
        acc = 0.0
        for w, d, b, vec in segs:
            if u < acc + w:
                record = ArrivalRecord(d, b)
                post = _collapse(state, vec / math.sqrt(float(np.vdot(vec, vec).real)))
                break
            acc += w

    if post is None:
        # no signal click: project onto the no-photon levels (vac and lost
        # stay distinct; only the real-bin amplitudes are removed)
        n2 = float(np.vdot(c_vac, c_vac).real + np.vdot(c_lost, c_lost).real)
        if n2 > 1e-24:
            ax = state.spec.axis("photon")
            t = np.moveaxis(state.amplitudes.reshape(state.spec.dims), ax, -1).copy()
            t[..., PH_EARLY] = 0.0
            t[..., PH_LATE] = 0.0
            amp = np.moveaxis(t, -1, ax).reshape(-1) / math.sqrt(n2)
            post = PureState(state.spec, amp, state.weight)
        else:
            post = state

    if record is None and det.dark_probability() > 0.0:
        if rng.uniform() < det.dark_probability():
            cell = int(rng.uniform() * 6.0)
            record = ArrivalRecord(DET_D1 + cell % 2, 1 + cell // 2, is_dark=True)

    return record, post


def histogram(records) -> dict:
    """Tally per (detector, bin); reports the central-bin fraction."""
    counts: dict[tuple[int, int], int] = {}
    total = 0
    for r in records:
        if r is None:
            continue
        key = (r.detector, r.arrival_bin)
        counts[key] = counts.get(key, 0) + 1
        total += 1
    if total == 0:
        raise ValueError("histogram() needs at least one record")
    central = sum(v for (d, b), v in counts.items() if b == 2) / total
    return {"counts": counts, "total": total, "central_fraction": central}


def histogram_csv(hist: dict) -> str:
    lines = ["detector,bin,count,fraction"]
    total = hist["total"]
    for (d, b) in sorted(hist["counts"]):
        c = hist["counts"][(d, b)]
        lines.append(f"{d},{b},{c},{c / total!r}")
    return "\n".join(lines) + "\n"
