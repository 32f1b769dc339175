"""Exact expectation pipeline: the density-matrix route through a run.

Independent of the trajectory kernel: evolves a DensityOracle through the
pulse sequence with exact channel superoperators, then computes detection
and readout statistics in closed form (routing cases enumerated, Gaussian
phase noise averaged analytically, Poisson readout confusion applied as a
2x2 stochastic map).  Used to verify trajectory statistics and to
calibrate presets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nv, qstate
from .interferometer import routing_probs
from .noise import analytic_contrast, readout_error_rates
from .program import READOUT_PULSE_PHASE, RunSettings
from .qstate import DensityOracle, GateOp


def _flip_channel(dim_labels, p: float, mat: np.ndarray) -> GateOp:
    k0 = math.sqrt(1.0 - p) * np.eye(mat.shape[0], dtype=np.complex128)
    k1 = math.sqrt(p) * mat
    return GateOp(targets=dim_labels, kraus=(k0, k1))


def _pair_x3(pair) -> np.ndarray:
    m = np.eye(3, dtype=np.complex128)
    i, j = pair
    m[i, i] = m[j, j] = 0.0
    m[i, j] = m[j, i] = 1.0
    return m


def _pair_z3(pair) -> np.ndarray:
    m = np.eye(3, dtype=np.complex128)
    m[pair[1], pair[1]] = -1.0
    return m


def final_oracle(settings: RunSettings) -> DensityOracle:
    """Exact state after the pulse sequence, before the analyzer.

    Spectral detuning enters the analyzer stage as an analytic coherence
    factor (see detection_cells); the sequence itself is evolved at zero
    detuning, which is exact because the detuning only rotates the
    early/late relative phase.
    """
    s = settings
    with_nuclear = s.protocol == "nuclear"
    spec = nv.protocol_register(with_nuclear)
    if with_nuclear:
        state = qstate.basis_state(spec, (nv.E_ZERO, nv.N_ZERO, nv.PH_VAC))
    else:
        state = qstate.basis_state(spec, (nv.E_ZERO, nv.PH_VAC))
    rho = DensityOracle.from_pure(state)

    eta = s.emitter.eta_effective()
    amp = s.emitter.emission_amplitude()
    emit = lambda b: nv.emission_gate(b, eta, amp, 0.0)  # noqa: E731
    mw_half = nv.mw_gate(math.pi / 2.0, math.pi / 2.0)
    mw_pi = nv.mw_gate(math.pi * (1.0 - s.mw_pi_error), 0.0)

    if not with_nuclear:
        if s.init_flip > 0.0:
            rho = qstate.oracle_evolve(
                rho, _flip_channel(("electron",), s.init_flip, _pair_x3(nv.ELECTRON_QUBIT))
            )
        for g in (mw_half, emit(nv.PH_EARLY), mw_pi, emit(nv.PH_LATE)):
            rho = qstate.oracle_evolve(rho, g)
        if s.electron_dephase > 0.0:
            rho = qstate.oracle_evolve(
                rho, _flip_channel(("electron",), s.electron_dephase, _pair_z3(nv.ELECTRON_QUBIT))
            )
        if s.store_time > 0.0 and s.memory is not None:
            f = nv.memory_decay_factor(s.store_time, s.memory)
            rho = qstate.oracle_evolve(
                rho, _flip_channel(("electron",), (1.0 - f) / 2.0, _pair_z3(nv.ELECTRON_QUBIT))
            )
    else:
        if s.init_flip > 0.0:
            rho = qstate.oracle_evolve(
                rho, _flip_channel(("electron",), s.init_flip, _pair_x3(nv.ELECTRON_QUBIT))
            )
        seq = [
            nv.rf_gate(math.pi / 2.0, math.pi / 2.0, (nv.N_ZERO, nv.N_MINUS), nv.E_ZERO),
            nv.cnot_gate(control_nuclear=0),
            emit(nv.PH_EARLY),
            mw_pi,
            emit(nv.PH_LATE),
            nv.cnot_gate(control_nuclear=0),
        ]
        for g in seq:
            rho = qstate.oracle_evolve(rho, g)
        if s.nuclear_flip > 0.0:
            rho = qstate.oracle_evolve(
                rho, _flip_channel(("nuclear",), s.nuclear_flip, _pair_x3(nv.NUCLEAR_QUBIT))
            )
        if s.nuclear_dephase > 0.0:
            rho = qstate.oracle_evolve(
                rho, _flip_channel(("nuclear",), s.nuclear_dephase, _pair_z3(nv.NUCLEAR_QUBIT))
            )
        if s.store_time > 0.0 and s.memory is not None:
            f = nv.memory_decay_factor(s.store_time, s.memory)
            rho = qstate.oracle_evolve(
                rho, _flip_channel(("nuclear",), (1.0 - f) / 2.0, _pair_z3(nv.NUCLEAR_QUBIT))
            )
    return rho


def _photon_blocks(rho: DensityOracle) -> dict:
    """Spin-space blocks <.., ph_i | rho | .., ph_j>."""
    spec = rho.spec
    ax = spec.axis("photon")
    dims = spec.dims
    n = len(dims)
    sdim = spec.dim // 4
    t = rho.matrix.reshape(dims + dims)
    t = np.moveaxis(np.moveaxis(t, ax, n - 1), n + ax, 2 * n - 1)
    t = t.reshape(sdim, 4, sdim, 4)
    return {(i, j): np.ascontiguousarray(t[:, i, :, j]) for i in range(4) for j in range(4)}


@dataclass
class DetectionResult:
    cells: dict            # (spin_bit, outcome_bit) -> probability (normalized over usable)
    usable_rate: float     # usable heralds per shot
    herald_rate: float     # any herald per shot
    accidental_fraction: float  # accidental share of usable heralds
    detector_joint: dict   # (detector, bin) -> per-shot probability


def detection_cells(settings: RunSettings, sigma_detuning: float = 0.0) -> DetectionResult:
    """Exact joint (spin readout, photonic outcome) cell probabilities.

    For basis "X" the usable heralds are central-bin clicks and the
    photonic bit is the detector (D1 -> 0, D2 -> 1).  For basis "Z" the
    usable heralds are bins 1/3 and the photonic bit is the time bin
    (early -> 0, late -> 1).
    """
    s = settings
    rho = final_oracle(s)
    blocks = _photon_blocks(rho)
    sdim = rho.spec.dim // 4
    with_nuclear = s.protocol == "nuclear"

    b_ee = blocks[(nv.PH_EARLY, nv.PH_EARLY)]
    b_ll = blocks[(nv.PH_LATE, nv.PH_LATE)]
    x_el = blocks[(nv.PH_EARLY, nv.PH_LATE)]  # early-row, late-column coherence
    b_nc = blocks[(nv.PH_VAC, nv.PH_VAC)] + blocks[(nv.PH_LOST, nv.PH_LOST)]

    gamma = analytic_contrast(sigma_detuning, s.icfg.arm_delay)
    if s.icfg.phase_jitter_rms > 0.0:
        gamma *= math.exp(-0.5 * s.icfg.phase_jitter_rms**2)
    if s.scalar_spectral_rms > 0.0:
        gamma *= math.exp(-0.5 * s.scalar_spectral_rms**2)
    mu = s.icfg.mode_overlap
    phi = s.phi

    p_el, p_ls = routing_probs(s.eod)
    cases = {
        ("L", "S"): p_el * p_ls,
        ("L", "L"): p_el * (1.0 - p_ls),
        ("S", "S"): (1.0 - p_el) * p_ls,
        ("S", "L"): (1.0 - p_el) * (1.0 - p_ls),
    }

    # unnormalized spin density per (detector, bin); traces are joint probabilities
    contrib: dict[tuple[int, int], np.ndarray] = {}

    def add(det, abin, mat):
        key = (det, abin)
        contrib[key] = contrib.get(key, np.zeros((sdim, sdim), dtype=np.complex128)) + mat

    for (arm_e, arm_l), pc in cases.items():
        if pc == 0.0:
            continue
        bin_e = 2 if arm_e == "L" else 1
        bin_l = 2 if arm_l == "S" else 3
        if bin_e == 2 and bin_l == 2:
            # interference: a_D1 = (c_L + e^{i phi} c_E)/sqrt(2)
            cross = np.exp(1j * phi) * gamma * mu * x_el
            base = 0.5 * (b_ee + b_ll)
            add(1, 2, pc * (base + 0.5 * (cross + cross.conj().T)))
            add(2, 2, pc * (base - 0.5 * (cross + cross.conj().T)))
        else:
            add(1, bin_e, pc * 0.5 * b_ee)
            add(2, bin_e, pc * 0.5 * b_ee)
            add(1, bin_l, pc * 0.5 * b_ll)
            add(2, bin_l, pc * 0.5 * b_ll)

    p_noclick = float(np.trace(b_nc).real)
    herald_rate = 1.0 - p_noclick

    # accidentals attach the no-click spin state
    p_leak = 1.0 - math.exp(-2.0 * s.emitter.leakage_mean())
    acc: dict[tuple[int, int], np.ndarray] = {}
    if p_leak > 0.0:
        for pulse, (pfwd, bins) in {
            "early": (p_el, (2, 1)),
            "late": (p_ls, (2, 3)),
        }.items():
            for det in (1, 2):
                m = 0.5 * 0.5 * p_leak * (pfwd * b_nc)
                key = (det, bins[0])
                acc[key] = acc.get(key, np.zeros_like(b_nc)) + m
                m = 0.5 * 0.5 * p_leak * ((1.0 - pfwd) * b_nc)
                key = (det, bins[1])
                acc[key] = acc.get(key, np.zeros_like(b_nc)) + m
    p_dark = s.det.dark_probability()
    if p_dark > 0.0:
        remain = (1.0 - p_leak) * p_dark / 6.0
        for det in (1, 2):
            for abin in (1, 2, 3):
                key = (det, abin)
                acc[key] = acc.get(key, np.zeros_like(b_nc)) + remain * b_nc

    detector_joint = {k: float(np.trace(v).real) for k, v in contrib.items()}
    for k, v in acc.items():
        detector_joint[k] = detector_joint.get(k, 0.0) + float(np.trace(v).real)

    # readout chain: optional analysis pulse, nuclear->electron map, threshold confusion
    if s.basis == "X":
        if with_nuclear:
            u = nv.rf_gate(math.pi / 2.0, READOUT_PULSE_PHASE, (nv.N_ZERO, nv.N_MINUS), nv.E_MINUS).unitary
        else:
            u = nv._embed_pair(3, nv.ELECTRON_QUBIT, nv.su2(math.pi / 2.0, READOUT_PULSE_PHASE))
    else:
        u = np.eye(sdim, dtype=np.complex128)
    if with_nuclear:
        u = nv.cnot_gate(control_nuclear=0).unitary @ u

    bright = np.zeros(sdim, dtype=np.float64)
    if with_nuclear:
        for n_idx in range(3):
            bright[nv.E_ZERO * 3 + n_idx] = 1.0
    else:
        bright[nv.E_ZERO] = 1.0
    r0, r1 = readout_error_rates(s.readout)

    def spin_infer_probs(mat) -> tuple[float, float]:
        m = u @ mat @ u.conj().T
        w = float(np.trace(m).real)
        if w <= 0.0:
            return 0.0, 0.0
        p_b = float(np.real(np.diag(m)) @ bright)
        p_infer0 = p_b * (1.0 - r0) + (w - p_b) * r1
        return p_infer0, w - p_infer0

    cells = {(i, j): 0.0 for i in (0, 1) for j in (0, 1)}
    usable_rate = 0.0
    acc_usable = 0.0
    for source, is_acc in ((contrib, False), (acc, True)):
        for (det, abin), mat in source.items():
            if s.basis == "X":
                if abin != 2:
                    continue
                outcome_bit = det - 1
            else:
                if abin == 2:
                    continue
                outcome_bit = 0 if abin == 1 else 1
            p0, p1 = spin_infer_probs(mat)
            cells[(0, outcome_bit)] += p0
            cells[(1, outcome_bit)] += p1
            usable_rate += p0 + p1
            if is_acc:
                acc_usable += p0 + p1

    if usable_rate > 0.0:
        cells = {k: v / usable_rate for k, v in cells.items()}
    total_herald = herald_rate + sum(float(np.trace(v).real) for v in acc.values())
    return DetectionResult(
        cells=cells,
        usable_rate=usable_rate,
        herald_rate=total_herald,
        accidental_fraction=(acc_usable / usable_rate) if usable_rate > 0 else 0.0,
        detector_joint=detector_joint,
    )


def sweep_curve(settings: RunSettings, phis, sigma_detuning: float = 0.0):
    """Exact per-phase cell probabilities for the four (spin, detector) outcomes."""
    out = []
    for phi in phis:
        res = detection_cells(settings.replace(phi=float(phi), basis="X"), sigma_detuning)
        out.append(res.cells)
    return out


def zz_xx_aggregates(settings: RunSettings, sigma_detuning: float = 0.0, phi0: float = math.pi):
    """Exact (ZZ aggregate, XX aggregate) as the correlation analysis defines them.

    The ZZ leg runs with the deflector drive anti-aligned so arrival bins
    1/3 carry the time-bin outcome; phi0 is the fitted extremal phase
    (pi for the ideal pulse conventions used here).
    """
    from dataclasses import replace as _rep

    zz_eod = _rep(settings.eod, drive_delay=settings.eod.drive_delay + settings.eod.switch_period / 2.0)
    zz = detection_cells(settings.replace(basis="Z", eod=zz_eod), sigma_detuning).cells
    xx_a = detection_cells(settings.replace(basis="X", phi=phi0), sigma_detuning).cells
    xx_b = detection_cells(settings.replace(basis="X", phi=phi0 + math.pi), sigma_detuning).cells
    zz_agg = zz[(1, 0)] + zz[(0, 1)]
    xx_cells = {k: 0.5 * (xx_a[k] + xx_b[(k[0], 1 - k[1])]) for k in xx_a}
    xx_agg = xx_cells[(0, 0)] + xx_cells[(1, 1)] - xx_cells[(0, 1)] - xx_cells[(1, 0)]
    return zz_agg, xx_agg
