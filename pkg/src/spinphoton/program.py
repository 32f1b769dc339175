"""Compile a protocol + configuration into a flat shot program.

A shot program is a small instruction table over a fixed register
(electron [, nuclear], photon) with dense precomputed matrices.  Both
kernel lanes (compiled and pure Python) execute the same tables with the
same counter-addressed draws, so their outputs are bit-identical.

Register layout: row-major (electron, [nuclear,] photon); the photon is
the last, stride-1 subsystem with levels (vac, early, late, lost).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nv, rng
from .interferometer import DetectorConfig, EODConfig, InterferometerConfig, routing_probs
from .noise import ReadoutModel
from .nv import (
    E_MINUS,
    E_ZERO,
    N_MINUS,
    N_ZERO,
    PH_EARLY,
    PH_LATE,
    EmitterParams,
    MemoryParams,
)

OP_UNITARY = 0
OP_FLIP = 1
OP_EMIT = 2
OP_DETECT = 3
OP_READOUT = 4

NF = 8  # float parameter columns per instruction
NI = 4  # int parameter columns per instruction


@dataclass
class ShotProgram:
    dim: int
    spin_dim: int
    with_nuclear: bool
    opcodes: np.ndarray
    addrs: np.ndarray
    matidx: np.ndarray
    fparams: np.ndarray
    iparams: np.ndarray
    mats: np.ndarray
    emit_src: np.ndarray
    emit_dst: np.ndarray
    proj_idx: np.ndarray
    init_state: np.ndarray
    meta: dict = field(default_factory=dict)


class _Builder:
    def __init__(self, with_nuclear: bool):
        self.with_nuclear = with_nuclear
        self.spin_dim = 9 if with_nuclear else 3
        self.dim = self.spin_dim * 4
        self.ops: list[tuple] = []
        self.mats: list[np.ndarray] = []
        self.emit_src: list[int] = []
        self.emit_dst: list[int] = []
        self.flip_count = 0
        self.bins_used: set[int] = set()

    def _full(self, spin_mat: np.ndarray) -> np.ndarray:
        return np.kron(spin_mat, np.eye(4, dtype=np.complex128))

    def _add_mat(self, m: np.ndarray) -> int:
        self.mats.append(np.ascontiguousarray(m, dtype=np.complex128))
        return len(self.mats) - 1

    def unitary(self, spin_mat: np.ndarray):
        self.ops.append((OP_UNITARY, 0, self._add_mat(self._full(spin_mat)), [0.0] * NF, [0] * NI))

    def flip(self, p: float, spin_mat: np.ndarray):
        if p <= 0.0:
            return
        addr = rng.ADDR_FLIP_BASE + self.flip_count
        self.flip_count += 1
        self.ops.append((OP_FLIP, addr, self._add_mat(self._full(spin_mat)), [p] + [0.0] * (NF - 1), [0] * NI))

    def emit(self, ph_bin: int, eta: float, s_amp: float, tau_bin: float):
        if ph_bin in self.bins_used:
            raise ValueError(f"photon bin {ph_bin} used more than once in the script")
        self.bins_used.add(ph_bin)
        off = len(self.emit_src)
        for s in self._ms0_spin_indices():
            self.emit_src.append(s * 4 + 0)
            self.emit_dst.append(s * 4 + ph_bin)
        addr = rng.ADDR_EMIT_EARLY if ph_bin == PH_EARLY else rng.ADDR_EMIT_LATE
        f = [eta, s_amp, tau_bin] + [0.0] * (NF - 3)
        i = [off, len(self.emit_src) - off, ph_bin, 0]
        self.ops.append((OP_EMIT, addr, -1, f, i))

    def _ms0_spin_indices(self) -> list[int]:
        if not self.with_nuclear:
            return [E_ZERO]
        return [E_ZERO * 3 + n for n in range(3)]

    def detect(self, p_el, p_ls, overlap, p_dark, phi, sigma_phase, p_leak):
        f = [p_el, p_ls, overlap, p_dark, phi, sigma_phase, p_leak, 0.0]
        self.ops.append((OP_DETECT, 0, -1, f, [0] * NI))

    def readout(self, model: ReadoutModel, bright_spin_indices: list[int]):
        off = 0  # proj indices live in their own pool, single readout per program
        proj = []
        for s in bright_spin_indices:
            for ph in range(4):
                proj.append(s * 4 + ph)
        self.proj = np.asarray(proj, dtype=np.int32)
        f = [model.lambda_bright, model.lambda_dark] + [0.0] * (NF - 2)
        i = [model.threshold, off, len(proj), 0]
        self.ops.append((OP_READOUT, 0, -1, f, i))

    def build(self, init_idx: int, meta: dict) -> ShotProgram:
        n = len(self.ops)
        opcodes = np.zeros(n, dtype=np.int32)
        addrs = np.zeros(n, dtype=np.int32)
        matidx = np.zeros(n, dtype=np.int32)
        fparams = np.zeros((n, NF), dtype=np.float64)
        iparams = np.zeros((n, NI), dtype=np.int32)
        for k, (op, addr, mi, f, i) in enumerate(self.ops):
            opcodes[k], addrs[k], matidx[k] = op, addr, mi
            fparams[k, :] = f
            iparams[k, :] = i
        mats = (
            np.stack(self.mats)
            if self.mats
            else np.zeros((0, self.dim, self.dim), dtype=np.complex128)
        )
        init = np.zeros(self.dim, dtype=np.complex128)
        init[init_idx] = 1.0
        return ShotProgram(
            dim=self.dim,
            spin_dim=self.spin_dim,
            with_nuclear=self.with_nuclear,
            opcodes=opcodes,
            addrs=addrs,
            matidx=matidx,
            fparams=fparams,
            iparams=iparams,
            mats=np.ascontiguousarray(mats),
            emit_src=np.asarray(self.emit_src, dtype=np.int32),
            emit_dst=np.asarray(self.emit_dst, dtype=np.int32),
            proj_idx=getattr(self, "proj", np.zeros(0, dtype=np.int32)),
            init_state=init,
            meta=meta,
        )


def _pair_x(pair=(E_ZERO, E_MINUS)) -> np.ndarray:
    m = np.eye(3, dtype=np.complex128)
    i, j = pair
    m[i, i] = m[j, j] = 0.0
    m[i, j] = m[j, i] = 1.0
    return m


def _pair_z(pair=(E_ZERO, E_MINUS)) -> np.ndarray:
    m = np.eye(3, dtype=np.complex128)
    m[pair[1], pair[1]] = -1.0
    return m


def _nuclear_op_9(m3: np.ndarray) -> np.ndarray:
    return np.kron(np.eye(3, dtype=np.complex128), m3)


def _electron_op_9(m3: np.ndarray) -> np.ndarray:
    return np.kron(m3, np.eye(3, dtype=np.complex128))


READOUT_PULSE_PHASE = math.pi / 2.0  # pi/2 pulse phase reproducing the detection law

# instruction names allowed in a protocol script
_SCRIPT_OPS = {
    "init_e", "init_n_sequence", "mw", "rf", "cnot", "optical_pi", "wait", "crc", "readout",
}


def validate_script(script: list[tuple]) -> None:
    """Check a protocol script's structural invariants.

    Each entry is (op, args...).  Photon bins may be used at most once,
    `readout` must be terminal, and `crc` markers (the per-block gating is
    owned by the control loop) may only lead the sequence.
    """
    bins_seen = set()
    for i, entry in enumerate(script):
        op = entry[0]
        if op not in _SCRIPT_OPS:
            raise ValueError(f"unknown script instruction {op!r}")
        if op == "optical_pi":
            b = entry[1]
            if b in bins_seen:
                raise ValueError(f"photon bin {b!r} used more than once")
            bins_seen.add(b)
        if op == "readout" and i != len(script) - 1:
            raise ValueError("readout must be the terminal instruction")
        if op == "crc" and i != 0:
            raise ValueError("crc marker only allowed at the start of a script")
    if script and script[-1][0] != "readout":
        raise ValueError("script must end with a readout")


def electron_script(basis: str = "X") -> list[tuple]:
    """The electron spin-photon sequence (superposition, two conditional emissions)."""
    steps = [
        ("init_e",),
        ("mw", math.pi / 2, math.pi / 2, "0,-1"),
        ("optical_pi", "early"),
        ("mw", math.pi, 0.0, "0,-1"),
        ("optical_pi", "late"),
    ]
    if basis.upper() == "X":
        steps.append(("mw", math.pi / 2, READOUT_PULSE_PHASE, "0,-1"))
    steps.append(("readout", basis.upper()))
    validate_script(steps)
    return steps


def nuclear_script(basis: str = "X", store_time: float = 0.0) -> list[tuple]:
    """The nuclear memory sequence: entangle spins, emit, disentangle, map back."""
    steps = [
        ("init_n_sequence",),
        ("rf", math.pi / 2, math.pi / 2, "memory", 0),
        ("cnot", 0, "0,-1"),
        ("optical_pi", "early"),
        ("mw", math.pi, 0.0, "0,-1"),
        ("optical_pi", "late"),
        ("cnot", 0, "0,-1"),
    ]
    if store_time > 0.0:
        steps.append(("wait", store_time))
    if basis.upper() == "X":
        steps.append(("rf", math.pi / 2, READOUT_PULSE_PHASE, "memory", -1))
    steps.append(("cnot", 0, "0,-1"))
    steps.append(("readout", basis.upper()))
    validate_script(steps)
    return steps


@dataclass
class RunSettings:
    """Everything one simulated run needs, independent of shot count/seed."""

    protocol: str = "electron"
    basis: str = "X"
    phi: float = 0.0
    emitter: EmitterParams = field(default_factory=EmitterParams)
    icfg: InterferometerConfig = field(default_factory=lambda: InterferometerConfig(arm_delay=70e-9))
    eod: EODConfig = field(default_factory=EODConfig)
    det: DetectorConfig = field(default_factory=DetectorConfig)
    readout: ReadoutModel = field(default_factory=ReadoutModel)
    init_flip: float = 0.0
    electron_dephase: float = 0.0
    nuclear_flip: float = 0.0
    nuclear_dephase: float = 0.0
    scalar_spectral_rms: float = 0.0
    store_time: float = 0.0
    memory: MemoryParams | None = None
    mw_pi_error: float = 0.0

    def replace(self, **kw) -> "RunSettings":
        import dataclasses

        return dataclasses.replace(self, **kw)


def build_program(settings: RunSettings) -> ShotProgram:
    """Compile one (protocol, readout basis, interferometer phase) run.

    `basis` "X" appends the pi/2 analysis pulse before readout; "Z" reads
    populations directly (the caller is responsible for anti-aligning the
    EOD so arrival bins 1/3 carry the time-bin information).
    """
    protocol, basis, phi = settings.protocol, settings.basis, settings.phi
    emitter, icfg, eod = settings.emitter, settings.icfg, settings.eod
    det, readout = settings.det, settings.readout
    init_flip = settings.init_flip
    electron_dephase = settings.electron_dephase
    nuclear_flip = settings.nuclear_flip
    nuclear_dephase = settings.nuclear_dephase
    store_time, memory = settings.store_time, settings.memory
    mw_pi_error = settings.mw_pi_error
    if protocol not in ("electron", "nuclear"):
        raise ValueError(f"unknown protocol {protocol!r}")
    if basis not in ("Z", "X"):
        raise ValueError(f"basis must be 'Z' or 'X', got {basis!r}")
    with_nuclear = protocol == "nuclear"
    b = _Builder(with_nuclear)
    eta = emitter.eta_effective()
    if emitter.window_acceptance() < 1e-12:
        raise ValueError("time filter excludes the emission for both bins")
    s_amp = emitter.emission_amplitude()
    p_el, p_ls = routing_probs(eod)
    sigma_phase = math.hypot(icfg.phase_jitter_rms, settings.scalar_spectral_rms)
    p_leak = 1.0 - math.exp(-2.0 * emitter.leakage_mean())

    if not with_nuclear:
        b.flip(init_flip, _pair_x())
        b.unitary(nv._embed_pair(3, (E_ZERO, E_MINUS), nv.su2(math.pi / 2, math.pi / 2)))
        b.emit(PH_EARLY, eta, s_amp, 0.0)
        b.unitary(nv._embed_pair(3, (E_ZERO, E_MINUS), nv.su2(math.pi * (1 - mw_pi_error), 0.0)))
        b.emit(PH_LATE, eta, s_amp, icfg.arm_delay)
        b.flip(electron_dephase, _pair_z())
        if store_time > 0.0 and memory is not None:
            f = nv.memory_decay_factor(store_time, memory)
            b.flip((1.0 - f) / 2.0, _pair_z())
        b.detect(p_el, p_ls, icfg.mode_overlap, det.dark_probability(), phi, sigma_phase, p_leak)
        if basis == "X":
            b.unitary(nv._embed_pair(3, (E_ZERO, E_MINUS), nv.su2(math.pi / 2, READOUT_PULSE_PHASE)))
        b.readout(readout, [E_ZERO])
        init_idx = (E_ZERO * 4) + 0
    else:
        rf_half = nv.rf_gate(math.pi / 2, math.pi / 2, (N_ZERO, N_MINUS), E_ZERO).unitary
        cnot = nv.cnot_gate(control_nuclear=0).unitary
        b.flip(init_flip, _electron_op_9(_pair_x()))
        b.unitary(rf_half)
        b.unitary(cnot)
        b.emit(PH_EARLY, eta, s_amp, 0.0)
        b.unitary(_electron_op_9(nv._embed_pair(3, (E_ZERO, E_MINUS), nv.su2(math.pi * (1 - mw_pi_error), 0.0))))
        b.emit(PH_LATE, eta, s_amp, icfg.arm_delay)
        b.unitary(cnot)  # disentangle: electron parks in |1>
        b.flip(nuclear_flip, _nuclear_op_9(_pair_x((N_ZERO, N_MINUS))))
        b.flip(nuclear_dephase, _nuclear_op_9(_pair_z((N_ZERO, N_MINUS))))
        if store_time > 0.0 and memory is not None:
            f = nv.memory_decay_factor(store_time, memory)
            b.flip((1.0 - f) / 2.0, _nuclear_op_9(_pair_z((N_ZERO, N_MINUS))))
        b.detect(p_el, p_ls, icfg.mode_overlap, det.dark_probability(), phi, sigma_phase, p_leak)
        if basis == "X":
            b.unitary(nv.rf_gate(math.pi / 2, READOUT_PULSE_PHASE, (N_ZERO, N_MINUS), E_MINUS).unitary)
        b.unitary(cnot)  # map nuclear value onto the electron for readout
        b.readout(readout, [E_ZERO * 3 + n for n in range(3)])
        init_idx = ((E_ZERO * 3 + N_ZERO) * 4) + 0

    meta = {
        "protocol": protocol,
        "basis": basis,
        "phi": phi,
        "eta": eta,
        "p_early_long": p_el,
        "p_late_short": p_ls,
    }
    return b.build(init_idx, meta)
