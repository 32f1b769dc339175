"""Minimal composite-qudit state engine.

Two backends over the same labeled register model: pure-state trajectories
(`PureState`, with weighted branching at non-unitary channels) for the
shot sampler, and an exact density matrix (`DensityOracle`) used as the
verification oracle.  Dense complex vectors throughout; the largest
register in this package is a few tens of dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import CounterRng

NORM_TOL = 1e-12
OP_TOL = 1e-10
MAX_DIM = 4096


class RegisterError(ValueError):
    pass


class GateError(ValueError):
    pass


class MeasurementError(RuntimeError):
    """Raised on a numerically empty projection; never silently renormalized."""


@dataclass(frozen=True)
class RegisterSpec:
    """Ordered list of labeled subsystems, row-major index convention."""

    subsystems: tuple[tuple[str, int], ...]

    def __post_init__(self):
        labels = [s[0] for s in self.subsystems]
        if len(labels) != len(set(labels)):
            raise RegisterError(f"duplicate subsystem labels in {labels}")
        for label, d in self.subsystems:
            if d < 2:
                raise RegisterError(f"subsystem {label!r} has dimension {d} < 2")
        if self.dim > MAX_DIM:
            raise RegisterError(f"total dimension {self.dim} exceeds {MAX_DIM}")

    @property
    def dim(self) -> int:
        n = 1
        for _, d in self.subsystems:
            n *= d
        return n

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s[0] for s in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s[1] for s in self.subsystems)

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise RegisterError(f"unknown subsystem {label!r}") from None

    def dim_of(self, label: str) -> int:
        return self.dims[self.axis(label)]

    def index(self, basis_labels) -> int:
        """Flat index of a product basis state given per-subsystem indices."""
        if len(basis_labels) != len(self.subsystems):
            raise RegisterError(
                f"expected {len(self.subsystems)} basis indices, got {len(basis_labels)}"
            )
        idx = 0
        for (label, d), k in zip(self.subsystems, basis_labels):
            if not 0 <= int(k) < d:
                raise RegisterError(f"basis index {k} out of range for {label!r} (dim {d})")
            idx = idx * d + int(k)
        return idx


def merge_specs(specs) -> RegisterSpec:
    subs: list[tuple[str, int]] = []
    for s in specs:
        subs.extend(s.subsystems)
    return RegisterSpec(tuple(subs))


@dataclass
class PureState:
    spec: RegisterSpec
    amplitudes: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=np.complex128)
        if amp.shape != (self.spec.dim,):
            raise RegisterError(f"amplitude vector has shape {amp.shape}, want ({self.spec.dim},)")
        n2 = float(np.vdot(amp, amp).real)
        if abs(n2 - 1.0) > 1e-9:
            raise RegisterError(f"state norm^2 = {n2} is not 1")
        if not 0.0 <= self.weight <= 1.0 + 1e-12:
            raise RegisterError(f"branch weight {self.weight} outside [0, 1]")
        self.amplitudes = amp

    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self, label: str) -> np.ndarray:
        """Marginal outcome probabilities of one subsystem."""
        ax = self.spec.axis(label)
        t = self.amplitudes.reshape(self.spec.dims)
        p = np.abs(t) ** 2
        axes = tuple(i for i in range(len(self.spec.dims)) if i != ax)
        return p.sum(axis=axes)

    def overlap(self, other: "PureState") -> complex:
        return complex(np.vdot(other.amplitudes, self.amplitudes))

    def fidelity_to(self, other: "PureState") -> float:
        return abs(self.overlap(other)) ** 2


def compose(specs, initial_basis_labels) -> PureState:
    """Product basis state |k1, k2, ...> with weight 1 over merged registers."""
    specs = list(specs)
    if not specs:
        raise RegisterError("compose() needs at least one register spec")
    merged = merge_specs(specs)
    flat_labels = []
    for s, labels in zip(specs, initial_basis_labels):
        if isinstance(labels, (int, np.integer)):
            labels = (labels,)
        flat_labels.extend(labels)
    amp = np.zeros(merged.dim, dtype=np.complex128)
    amp[merged.index(flat_labels)] = 1.0
    return PureState(merged, amp)


def basis_state(spec: RegisterSpec, basis_labels) -> PureState:
    amp = np.zeros(spec.dim, dtype=np.complex128)
    amp[spec.index(basis_labels)] = 1.0
    return PureState(spec, amp)


@dataclass
class GateOp:
    """Unitary or Kraus-set operation on a subset of subsystems."""

    targets: tuple[str, ...]
    unitary: np.ndarray | None = None
    kraus: tuple[np.ndarray, ...] = field(default_factory=tuple)

    @classmethod
    def from_unitary(cls, targets, U, tol: float = OP_TOL) -> "GateOp":
        U = np.asarray(U, dtype=np.complex128)
        d = U.shape[0]
        if U.shape != (d, d):
            raise GateError(f"unitary must be square, got {U.shape}")
        err = np.max(np.abs(U.conj().T @ U - np.eye(d)))
        if err > tol:
            raise GateError(f"matrix is not unitary (deviation {err:.3e} > {tol:.0e})")
        return cls(tuple(targets), unitary=U)

    @classmethod
    def from_kraus(cls, targets, kraus_ops, tol: float = OP_TOL) -> "GateOp":
        ops = tuple(np.asarray(K, dtype=np.complex128) for K in kraus_ops)
        d = ops[0].shape[0]
        acc = np.zeros((d, d), dtype=np.complex128)
        for K in ops:
            if K.shape != (d, d):
                raise GateError("Kraus operators must share one square shape")
            acc += K.conj().T @ K
        err = np.max(np.abs(acc - np.eye(d)))
        if err > tol:
            raise GateError(f"Kraus set not complete (deviation {err:.3e} > {tol:.0e})")
        return cls(tuple(targets), kraus=ops)

    @property
    def is_unitary(self) -> bool:
        return self.unitary is not None


def _embed_axes(spec: RegisterSpec, targets) -> tuple[int, ...]:
    return tuple(spec.axis(t) for t in targets)


def _apply_matrix(spec: RegisterSpec, amp: np.ndarray, M: np.ndarray, targets) -> np.ndarray:
    """Apply M on the tensor factors named by targets (in listed order)."""
    axes = _embed_axes(spec, targets)
    dims = spec.dims
    block = 1
    for ax in axes:
        block *= dims[ax]
    if M.shape != (block, block):
        raise GateError(f"operator dim {M.shape[0]} != target subspace dim {block}")
    t = amp.reshape(dims)
    rest = [i for i in range(len(dims)) if i not in axes]
    perm = list(axes) + rest
    t = np.transpose(t, perm).reshape(block, -1)
    t = M @ t
    t = t.reshape([dims[a] for a in axes] + [dims[r] for r in rest])
    inv = np.argsort(perm)
    return np.transpose(t, inv).reshape(-1)


def apply_gate(state: PureState, gate: GateOp):
    """Unitary -> new PureState; Kraus -> list of renormalized weighted branches."""
    if gate.is_unitary:
        amp = _apply_matrix(state.spec, state.amplitudes, gate.unitary, gate.targets)
        return PureState(state.spec, amp, state.weight)

    branches = []
    total = 0.0
    for K in gate.kraus:
        amp = _apply_matrix(state.spec, state.amplitudes, K, gate.targets)
        w = float(np.vdot(amp, amp).real)
        total += w
        if w > 1e-30:
            branches.append(PureState(state.spec, amp / np.sqrt(w), state.weight * w))
    if abs(total - 1.0) > OP_TOL:
        raise GateError(f"Kraus branch weights sum to {total}, expected 1")
    return branches


def sample_gate(state: PureState, gate: GateOp, rng: CounterRng) -> PureState:
    """Trajectory unraveling: sample one Kraus branch by its Born weight."""
    if gate.is_unitary:
        return apply_gate(state, gate)
    branches = apply_gate(state, gate)
    u = rng.uniform()
    acc = 0.0
    for b in branches:
        acc += b.weight / state.weight
        if u < acc:
            return PureState(b.spec, b.amplitudes, state.weight)
    return PureState(branches[-1].spec, branches[-1].amplitudes, state.weight)


def measure(state: PureState, label: str, rng: CounterRng) -> tuple[int, PureState]:
    """Born-rule projective measurement of one subsystem with collapse."""
    probs = state.probabilities(label)
    u = rng.uniform()
    outcome = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    outcome = min(outcome, len(probs) - 1)
    ax = state.spec.axis(label)
    t = state.amplitudes.reshape(state.spec.dims).copy()
    sel = [slice(None)] * len(state.spec.dims)
    for k in range(state.spec.dims[ax]):
        if k != outcome:
            sel[ax] = k
            t[tuple(sel)] = 0.0
    amp = t.reshape(-1)
    n2 = float(np.vdot(amp, amp).real)
    if n2 < 1e-24:
        raise MeasurementError(
            f"projection of {label!r} onto outcome {outcome} has zero norm"
        )
    return outcome, PureState(state.spec, amp / np.sqrt(n2), state.weight)


# ---------------------------------------------------------------------------
# density-matrix oracle
# ---------------------------------------------------------------------------


@dataclass
class DensityOracle:
    spec: RegisterSpec
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        d = self.spec.dim
        if m.shape != (d, d):
            raise RegisterError(f"density matrix shape {m.shape}, want ({d}, {d})")
        if np.max(np.abs(m - m.conj().T)) > 1e-9:
            raise RegisterError("density matrix is not Hermitian")
        tr = float(np.trace(m).real)
        if abs(tr - 1.0) > 1e-9:
            raise RegisterError(f"density matrix trace {tr} != 1")
        self.matrix = m

    @classmethod
    def from_pure(cls, state: PureState) -> "DensityOracle":
        amp = state.amplitudes
        return cls(state.spec, np.outer(amp, amp.conj()))

    @classmethod
    def mixed(cls, spec: RegisterSpec, weighted_states) -> "DensityOracle":
        m = np.zeros((spec.dim, spec.dim), dtype=np.complex128)
        for w, amp in weighted_states:
            m += w * np.outer(amp, amp.conj())
        return cls(spec, m)

    def check_physical(self, tol: float = 1e-10):
        ev = np.linalg.eigvalsh(self.matrix)
        if ev.min() < -tol:
            raise RegisterError(f"density matrix has eigenvalue {ev.min():.3e} < 0")

    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()


def oracle_evolve(oracle: DensityOracle, gate: GateOp) -> DensityOracle:
    """rho -> U rho U^dag, or sum_k K rho K^dag; trace preserved."""
    spec = oracle.spec
    if gate.is_unitary:
        ops = (gate.unitary,)
    else:
        ops = gate.kraus
    out = np.zeros_like(oracle.matrix)
    for K in ops:
        # apply K on columns of rho (as a batch of state vectors), then on rows
        cols = np.stack(
            [_apply_matrix(spec, oracle.matrix[:, j], K, gate.targets) for j in range(spec.dim)],
            axis=1,
        )
        rows = np.stack(
            [_apply_matrix(spec, cols[i, :].conj(), K, gate.targets).conj() for i in range(spec.dim)],
            axis=0,
        )
        out += rows
    tr = float(np.trace(out).real)
    if abs(tr - 1.0) > OP_TOL:
        raise GateError(f"channel does not preserve trace: {tr}")
    return DensityOracle(spec, out)


def partial_trace(oracle: DensityOracle, keep_labels) -> DensityOracle:
    keep = [oracle.spec.axis(l) for l in keep_labels]
    dims = oracle.spec.dims
    n = len(dims)
    t = oracle.matrix.reshape(dims + dims)
    drop = [i for i in range(n) if i not in keep]
    for off, ax in enumerate(sorted(drop, reverse=True)):
        t = np.trace(t, axis1=ax, axis2=ax + n - off)
        n -= 1
    kept = sorted(keep)
    d_keep = 1
    for ax in kept:
        d_keep *= dims[ax]
    sub = RegisterSpec(tuple(oracle.spec.subsystems[ax] for ax in kept))
    out = t.reshape(d_keep, d_keep)
    # reorder to requested label order if it differs from register order
    order = [kept.index(k) for k in keep]
    if order != list(range(len(keep))):
        kd = [dims[ax] for ax in kept]
        t2 = out.reshape(kd + kd)
        perm = order + [len(keep) + o for o in order]
        out = np.transpose(t2, perm).reshape(d_keep, d_keep)
        sub = RegisterSpec(tuple(sub.subsystems[o] for o in order))
    return DensityOracle(sub, out)


def state_fidelity(oracle: DensityOracle, target: PureState) -> float:
    """<psi| rho |psi> for a pure target."""
    v = target.amplitudes
    return float(np.real(v.conj() @ oracle.matrix @ v))


_HAD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / np.sqrt(2.0)


def basis_diagonals(
    oracle: DensityOracle,
    basis: str,
    qubit_sublabels,
) -> np.ndarray:
    """Four joint-diagonal populations of two embedded 2-level subspaces.

    qubit_sublabels: ((label_a, (i0, i1)), (label_b, (j0, j1))) picking which
    two levels of each subsystem form the logical qubit.  basis "ZZ" reads
    the computational diagonal; "XX" rotates both qubits by the Hadamard
    first.  Cell order: |00>, |01>, |10>, |11|.
    """
    if basis not in ("ZZ", "XX"):
        raise ValueError(f"basis must be 'ZZ' or 'XX', got {basis!r}")
    (la, (a0, a1)), (lb, (b0, b1)) = qubit_sublabels
    for lab, (k0, k1) in ((la, (a0, a1)), (lb, (b0, b1))):
        d = oracle.spec.dim_of(lab)
        if not (0 <= k0 < d and 0 <= k1 < d):
            raise RegisterError(f"sublabels {(k0, k1)} outside dimension {d} of {lab!r}")
    dims = oracle.spec.dims
    axa, axb = oracle.spec.axis(la), oracle.spec.axis(lb)
    t = oracle.matrix.reshape(dims + dims)
    n = len(dims)
    out = np.zeros((2, 2, 2, 2), dtype=np.complex128)
    idxa, idxb = (a0, a1), (b0, b1)
    for p in range(2):
        for q in range(2):
            for r in range(2):
                for s in range(2):
                    sel = [slice(None)] * (2 * n)
                    sel[axa], sel[axb] = idxa[p], idxb[q]
                    sel[n + axa], sel[n + axb] = idxa[r], idxb[s]
                    block = t[tuple(sel)]
                    rest = [i for i in range(n) if i not in (axa, axb)]
                    tr = block
                    m = len(rest)
                    for off, _ in enumerate(rest):
                        tr = np.trace(tr, axis1=0, axis2=m - off)
                    out[p, q, r, s] = tr
    rho4 = out.reshape(4, 4)
    if basis == "XX":
        H2 = np.kron(_HAD, _HAD)
        rho4 = H2 @ rho4 @ H2.conj().T
    vals = np.real(np.diag(rho4)).copy()
    vals[np.abs(vals) < 1e-15] = 0.0
    if (vals < -1e-10).any():
        raise RegisterError(f"negative diagonal populations {vals}")
    return vals


def enumerate_branches(state: PureState, gates) -> list[PureState]:
    """Brute-force expansion of every Kraus branch through a gate sequence."""
    frontier = [state]
    for g in gates:
        nxt = []
        for s in frontier:
            out = apply_gate(s, g)
            if isinstance(out, PureState):
                nxt.append(out)
            else:
                nxt.extend(out)
        frontier = nxt
    return frontier
