"""NV-center physics: level structure, pulse gates, conditional emission,
nuclear initialization, and memory decay.

Conventions fixed here and used package-wide:

* electron S=1 ground state, basis order (m_s=+1, m_s=0, m_s=-1);
  qubit |0> = m_s=0, |1> = m_s=-1.
* nitrogen nuclear spin I=1, basis order (m_I=+1, m_I=0, m_I=-1);
  memory qubit |0> = m_I=0, |1> = m_I=-1 (a fixed convention; RF drives
  address whichever hyperfine pair the hardware exposes).
* photon register (vac, early, late, lost): the fourth level is a loss
  sentinel so that collection loss stays inside the Hilbert space and the
  trajectory sampler and density oracle follow identical branch algebra.
* pulse rotations are R(theta, phi) = exp(-i theta/2 (cos phi sx + sin phi sy))
  on the addressed 2-level branch; CNOT gates are bare controlled-X
  (involutive, no conditioned -i).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qstate
from .qstate import GateOp, PureState, RegisterSpec

# electron basis indices
E_PLUS, E_ZERO, E_MINUS = 0, 1, 2
# nuclear basis indices
N_PLUS, N_ZERO, N_MINUS = 0, 1, 2
# photon register levels
PH_VAC, PH_EARLY, PH_LATE, PH_LOST = 0, 1, 2, 3

ELECTRON_QUBIT = (E_ZERO, E_MINUS)   # |0>, |1>
NUCLEAR_QUBIT = (N_ZERO, N_MINUS)    # |0>, |1>

BRANCHES = {"0,-1": (E_ZERO, E_MINUS), "0,+1": (E_ZERO, E_PLUS)}


def electron_spec() -> RegisterSpec:
    return RegisterSpec((("electron", 3),))


def nuclear_spec() -> RegisterSpec:
    return RegisterSpec((("nuclear", 3),))


def photon_spec(levels: int = 4) -> RegisterSpec:
    return RegisterSpec((("photon", levels),))


@dataclass
class EmitterParams:
    """Spin-conditional zero-phonon-line emission into one time bin."""

    eta_collect: float = 1.0
    eta_detect: float = 1.0
    excited_lifetime: float = 12e-9
    leakage_rate: float = 0.0       # accepted laser-breakthrough counts/s at pulse peak
    leakage_decay: float = 10e-9    # exponential tail of the leakage profile
    time_filter: tuple[float, float] = (0.0, 0.0)  # (start, end) after pulse; end<=start disables
    excitation_error: float = 0.0   # optical-pi area error; emission amp sin(pi(1-err)/2)

    def __post_init__(self):
        for name in ("eta_collect", "eta_detect"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")
        if self.leakage_rate < 0.0:
            raise ValueError("leakage_rate must be non-negative")

    def window_acceptance(self) -> float:
        """Fraction of the mono-exponential decay inside the time filter."""
        start, end = self.time_filter
        if end <= start:
            return 1.0
        t = self.excited_lifetime
        return math.exp(-max(start, 0.0) / t) - math.exp(-end / t)

    def eta_effective(self) -> float:
        return self.eta_collect * self.eta_detect * self.window_acceptance()

    def emission_amplitude(self) -> float:
        """sin(theta/2) of the optical pulse; 1.0 for an ideal pi pulse."""
        return math.sin(math.pi * (1.0 - self.excitation_error) / 2.0)

    def leakage_mean(self) -> float:
        """Expected accepted leakage counts per optical pulse."""
        if self.leakage_rate <= 0.0:
            return 0.0
        start, end = self.time_filter
        tau = self.leakage_decay
        if end <= start:
            return self.leakage_rate * tau
        return self.leakage_rate * tau * (
            math.exp(-max(start, 0.0) / tau) - math.exp(-end / tau)
        )


@dataclass
class MemoryParams:
    t2_hahn: float = 0.1
    decay_exponent: float = 1.0

    def __post_init__(self):
        if self.t2_hahn <= 0.0:
            raise ValueError("t2_hahn must be positive")
        if self.decay_exponent < 1.0:
            raise ValueError("decay_exponent must be >= 1")


def su2(theta: float, phase: float) -> np.ndarray:
    c = math.cos(theta / 2.0)
    s = math.sin(theta / 2.0)
    return np.array(
        [
            [c, -1j * s * np.exp(-1j * phase)],
            [-1j * s * np.exp(1j * phase), c],
        ],
        dtype=np.complex128,
    )


def _embed_pair(dim: int, pair: tuple[int, int], m2: np.ndarray) -> np.ndarray:
    out = np.eye(dim, dtype=np.complex128)
    i, j = pair
    out[i, i], out[i, j] = m2[0, 0], m2[0, 1]
    out[j, i], out[j, j] = m2[1, 0], m2[1, 1]
    return out


def mw_gate(theta: float, phase: float, branch: str = "0,-1") -> GateOp:
    """Microwave rotation on one electron 2-level branch; third level untouched."""
    pair = BRANCHES[branch]
    return GateOp.from_unitary(("electron",), _embed_pair(3, pair, su2(theta, phase)))


def rf_gate(
    theta: float,
    phase: float,
    nuclear_pair: tuple[int, int] = NUCLEAR_QUBIT,
    conditioned_on_ms: int = E_ZERO,
) -> GateOp:
    """RF rotation of a nuclear pair inside one electron projection block."""
    u9 = np.eye(9, dtype=np.complex128)
    m2 = su2(theta, phase)
    i, j = nuclear_pair
    b = 3 * conditioned_on_ms
    u9[b + i, b + i], u9[b + i, b + j] = m2[0, 0], m2[0, 1]
    u9[b + j, b + i], u9[b + j, b + j] = m2[1, 0], m2[1, 1]
    return GateOp.from_unitary(("electron", "nuclear"), _reorder_en(u9))


def _reorder_en(u_en: np.ndarray) -> np.ndarray:
    """Map a matrix built in (electron*3 + nuclear) ordering to itself.

    Register order is (electron, nuclear), row-major, which is exactly
    electron*3 + nuclear, so this is the identity reshaping; kept as a
    seam in case the register layout ever changes.
    """
    return u_en


def cnot_gate(control_nuclear: int, branch: str = "0,-1") -> GateOp:
    """Controlled-X: flip the electron branch iff the nuclear qubit equals control.

    control_nuclear is the logical memory-qubit value (0 -> m_I=0, 1 -> m_I=-1).
    Bare X on the branch, so the gate is an involution.
    """
    n_level = NUCLEAR_QUBIT[control_nuclear]
    i, j = BRANCHES[branch]
    u9 = np.eye(9, dtype=np.complex128)
    a, b = 3 * i + n_level, 3 * j + n_level
    u9[a, a] = u9[b, b] = 0.0
    u9[a, b] = u9[b, a] = 1.0
    return GateOp.from_unitary(("electron", "nuclear"), u9)


def mw_rotation(state: PureState, theta, phase, branch="0,-1") -> PureState:
    return qstate.apply_gate(state, mw_gate(theta, phase, branch))


def rf_rotation(state, theta, phase, nuclear_pair=NUCLEAR_QUBIT, conditioned_on_ms=E_ZERO):
    return qstate.apply_gate(state, rf_gate(theta, phase, nuclear_pair, conditioned_on_ms))


def apply_cnot(state, control_nuclear: int, branch="0,-1"):
    return qstate.apply_gate(state, cnot_gate(control_nuclear, branch))


# ---------------------------------------------------------------------------
# conditional emission
# ---------------------------------------------------------------------------


def emission_gate(
    ph_bin: int,
    eta: float,
    emission_amp: float = 1.0,
    phase: float = 0.0,
) -> GateOp:
    """Optical pi pulse + decay collapsed into one conditional-emission channel.

    Acts on (electron, photon[4]).  Amplitude on (m_s=0, vac) splits into a
    kept photon in `ph_bin` (weight eta), a lost photon (weight 1-eta, sent
    to the loss sentinel level), and an unexcited remainder when the pulse
    area is imperfect.  Requires no prior amplitude in (m_s=0, ph_bin): the
    Kraus completeness check in apply_gate/oracle_evolve fails otherwise,
    which is the "photon slot already occupied" error path.
    """
    if ph_bin not in (PH_EARLY, PH_LATE):
        raise ValueError(f"emission bin must be early or late, got {ph_bin}")
    s = emission_amp
    c = math.sqrt(max(0.0, 1.0 - s * s))
    ph = np.exp(1j * phase)
    dim = 12  # electron(3) x photon(4)
    src = 4 * E_ZERO + PH_VAC
    dst = 4 * E_ZERO + ph_bin
    lost = 4 * E_ZERO + PH_LOST

    keep = np.eye(dim, dtype=np.complex128)
    keep[src, src] = c
    keep[dst, src] = s * math.sqrt(eta) * ph
    keep[dst, dst] = 0.0  # occupied-slot amplitude is annihilated, not preserved

    lose = np.zeros((dim, dim), dtype=np.complex128)
    lose[lost, src] = s * math.sqrt(1.0 - eta) * ph

    return GateOp(targets=("electron", "photon"), kraus=(keep, lose))


def optical_pi_emit(
    state: PureState,
    ph_bin: int,
    params: EmitterParams,
    detuning_hz: float = 0.0,
    tau_bin: float = 0.0,
    rng=None,
):
    """Apply the conditional-emission channel.

    The emitted component carries phase exp(i 2 pi delta tau_bin) where
    tau_bin is the bin's emission time offset.  With an rng the loss branch
    is sampled (trajectory mode); without, both weighted branches return.
    """
    gate = emission_gate(
        ph_bin,
        params.eta_effective(),
        params.emission_amplitude(),
        2.0 * math.pi * detuning_hz * tau_bin,
    )
    if rng is None:
        return qstate.apply_gate(state, gate)
    return qstate.sample_gate(state, gate, rng)


# ---------------------------------------------------------------------------
# protocols (engine path; the compiled kernel mirrors these sequences)
# ---------------------------------------------------------------------------


def protocol_register(with_nuclear: bool = False) -> RegisterSpec:
    subs = [("electron", 3)]
    if with_nuclear:
        subs.append(("nuclear", 3))
    subs.append(("photon", 4))
    return RegisterSpec(tuple(subs))


def spin_photon_bell(spec: RegisterSpec) -> PureState:
    """(|1, early> + |0, late>)/sqrt(2) over (electron, photon)."""
    amp = np.zeros(spec.dim, dtype=np.complex128)
    amp[spec.index((E_MINUS, PH_EARLY))] = 1.0 / math.sqrt(2.0)
    amp[spec.index((E_ZERO, PH_LATE))] = 1.0 / math.sqrt(2.0)
    return PureState(spec, amp)


def nuclear_photon_bell(spec: RegisterSpec, electron_level: int = E_MINUS) -> PureState:
    """|electron_level> x (|1_n, early> + |0_n, late>)/sqrt(2)."""
    amp = np.zeros(spec.dim, dtype=np.complex128)
    amp[spec.index((electron_level, N_MINUS, PH_EARLY))] = 1.0 / math.sqrt(2.0)
    amp[spec.index((electron_level, N_ZERO, PH_LATE))] = 1.0 / math.sqrt(2.0)
    return PureState(spec, amp)


def run_entanglement_protocol(
    params: EmitterParams,
    detuning_hz: float = 0.0,
    bin_separation: float = 0.0,
    rng=None,
    mw_pi_error: float = 0.0,
):
    """Electron sequence: init |0>, MW pi/2, optical pi (early), MW pi, optical pi (late).

    Returns the final PureState (trajectory mode, rng given) or the list of
    weighted branches (rng None).  With ideal parameters the kept branch is
    the spin-photon Bell state.
    """
    spec = protocol_register()
    state = qstate.basis_state(spec, (E_ZERO, PH_VAC))
    state = qstate.apply_gate(state, mw_gate(math.pi / 2.0, math.pi / 2.0))
    out = optical_pi_emit(state, PH_EARLY, params, detuning_hz, 0.0, rng)
    branches = [out] if isinstance(out, PureState) else out
    swap = mw_gate(math.pi * (1.0 - mw_pi_error), 0.0)
    done = []
    for b in branches:
        b = qstate.apply_gate(b, swap)
        o = optical_pi_emit(b, PH_LATE, params, detuning_hz, bin_separation, rng)
        done.extend([o] if isinstance(o, PureState) else o)
    if rng is not None:
        return done[0]
    return done


def run_nuclear_protocol(
    params: EmitterParams,
    detuning_hz: float = 0.0,
    bin_separation: float = 0.0,
    rng=None,
    disentangle: bool = True,
):
    """Nuclear sequence: RF pi/2, CNOT, photon entanglement, disentangling CNOT.

    Assumes nuclear and electron already initialized to |0, 0>.
    """
    spec = protocol_register(with_nuclear=True)
    state = qstate.basis_state(spec, (E_ZERO, N_ZERO, PH_VAC))
    state = qstate.apply_gate(state, rf_gate(math.pi / 2.0, math.pi / 2.0))
    state = qstate.apply_gate(state, cnot_gate(control_nuclear=0))
    out = optical_pi_emit(state, PH_EARLY, params, detuning_hz, 0.0, rng)
    branches = [out] if isinstance(out, PureState) else out
    swap = mw_gate(math.pi, 0.0)
    done = []
    for b in branches:
        b = qstate.apply_gate(b, swap)
        o = optical_pi_emit(b, PH_LATE, params, detuning_hz, bin_separation, rng)
        for fin in [o] if isinstance(o, PureState) else o:
            if disentangle:
                # same CNOT as the entangling step; parks the electron in |1>
                fin = qstate.apply_gate(fin, cnot_gate(control_nuclear=0))
            done.append(fin)
    if rng is not None:
        return done[0]
    return done


# ---------------------------------------------------------------------------
# nuclear initialization (six-step pumping sequence)
# ---------------------------------------------------------------------------


def e12_pump_gate(residual_error: float = 0.0) -> GateOp:
    """E_{1,2} optical pumping: m_s = +/-1 -> 0, nuclear-spin preserving.

    residual_error is the probability that a +/-1 population survives the
    pump (stays where it was, dephased).
    """
    e = residual_error
    k_stay = np.zeros((3, 3), dtype=np.complex128)
    k_stay[E_ZERO, E_ZERO] = 1.0
    k_plus = np.zeros((3, 3), dtype=np.complex128)
    k_plus[E_ZERO, E_PLUS] = math.sqrt(1.0 - e)
    k_minus = np.zeros((3, 3), dtype=np.complex128)
    k_minus[E_ZERO, E_MINUS] = math.sqrt(1.0 - e)
    kraus = [k_stay, k_plus, k_minus]
    if e > 0.0:
        r_plus = np.zeros((3, 3), dtype=np.complex128)
        r_plus[E_PLUS, E_PLUS] = math.sqrt(e)
        r_minus = np.zeros((3, 3), dtype=np.complex128)
        r_minus[E_MINUS, E_MINUS] = math.sqrt(e)
        kraus.extend([r_plus, r_minus])
    return GateOp.from_kraus(("electron",), kraus)


def nuclear_init_gates(rf_area_error: float = 0.0, pump_error: float = 0.0) -> list[GateOp]:
    """The six-step sequence driving an arbitrary nuclear state to m_I = 0."""
    th = math.pi * (1.0 - rf_area_error)
    return [
        e12_pump_gate(pump_error),                                   # 1: electron -> m_s=0
        cnot_gate(control_nuclear=0, branch="0,+1"),                 # 2: shelve m_I=0 to m_s=+1
        rf_gate(th, 0.0, (N_PLUS, N_ZERO), E_ZERO),                  # 3: m_I +1 -> 0
        cnot_gate(control_nuclear=0, branch="0,-1"),                 # 4: shelve m_I=0 to m_s=-1
        rf_gate(th, 0.0, (N_MINUS, N_ZERO), E_ZERO),                 # 5: m_I -1 -> 0
        e12_pump_gate(pump_error),                                   # 6: electron -> m_s=0
    ]


def nuclear_init_sequence(oracle: qstate.DensityOracle, rf_area_error=0.0, pump_error=0.0):
    for g in nuclear_init_gates(rf_area_error, pump_error):
        oracle = qstate.oracle_evolve(oracle, g)
    return oracle


# ---------------------------------------------------------------------------
# memory decay
# ---------------------------------------------------------------------------


def memory_decay_factor(t: float, params: MemoryParams) -> float:
    """Hahn-echo coherence multiplier exp(-(t/T2)^n)."""
    if t < 0.0:
        raise ValueError("decay time must be non-negative")
    if t == 0.0:
        return 1.0
    return math.exp(-((t / params.t2_hahn) ** params.decay_exponent))


def memory_dephase_gate(target: str, pair: tuple[int, int], factor: float, dim: int = 3) -> GateOp:
    """Dephasing channel scaling the pair's coherence by `factor`.

    Populations are unchanged; coherences between the pair's levels pick up
    the factor exactly ((1-p) I + p Z unraveling with factor = 1 - 2p).
    """
    p = (1.0 - factor) / 2.0
    z = np.eye(dim, dtype=np.complex128)
    z[pair[1], pair[1]] = -1.0
    k0 = math.sqrt(1.0 - p) * np.eye(dim, dtype=np.complex128)
    k1 = math.sqrt(p) * z
    return GateOp.from_kraus((target,), (k0, k1))


def memory_decay(oracle: qstate.DensityOracle, t: float, params: MemoryParams,
                 target: str = "nuclear", pair: tuple[int, int] = NUCLEAR_QUBIT):
    f = memory_decay_factor(t, params)
    dim = oracle.spec.dim_of(target)
    return qstate.oracle_evolve(oracle, memory_dephase_gate(target, pair, f, dim))
