"""Estimators and closed forms: detection-probability law, fidelity lower
bound, phase-sweep fitting, dark-count correction, and the contrast budget.

Cell conventions (shared with the exact pipeline):

* quadruples are ordered |00>, |01>, |10>, |11> over (spin bit, photon bit);
* ZZ basis: photon bit 0 = early (arrival bin 1), 1 = late (bin 3); the
  correlated state populates |01> and |10>;
* XX basis: photon bit is the detector at the fitted extremal phase phi0
  (D1 -> 0, D2 -> 1), with the mapping inverted at phi0 + pi.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1

OUTCOMES = ((0, 1), (1, 1), (0, 2), (1, 2))  # (spin, detector) column order for sweeps


def detection_law(phi: float) -> tuple[float, float, float, float]:
    """Ideal joint click/readout law: ((1-cos)/4, (1+cos)/4, (1+cos)/4, (1-cos)/4)
    for (spin 0, D1), (spin 1, D1), (spin 0, D2), (spin 1, D2)."""
    c = math.cos(phi)
    return ((1 - c) / 4.0, (1 + c) / 4.0, (1 + c) / 4.0, (1 - c) / 4.0)


def fidelity_lower_bound(zz_diag, xx_diag) -> float:
    """Bell-fidelity lower bound from ZZ and XX diagonal populations.

    0.5 * (p01 + p10 - 2 sqrt(p00 p11) + q00 + q11 - q01 - q10) where p are
    the ZZ and q the XX quadruples in |00>,|01>,|10>,|11> order.
    """
    p = np.asarray(zz_diag, dtype=float)
    q = np.asarray(xx_diag, dtype=float)
    for name, v in (("zz", p), ("xx", q)):
        if v.shape != (4,):
            raise ValueError(f"{name} diagonal must have 4 entries")
        if (v < -1e-12).any():
            raise ValueError(f"{name} diagonal has negative entries: {v}")
        if v.sum() > 1.0 + 1e-6:
            raise ValueError(f"{name} diagonal sums to {v.sum()} > 1")
    return 0.5 * (p[1] + p[2] - 2.0 * math.sqrt(max(p[0], 0.0) * max(p[3], 0.0))
                  + q[0] + q[3] - q[1] - q[2])


@dataclass
class CorrelationTable:
    zz: np.ndarray
    xx: np.ndarray
    zz_counts: np.ndarray
    xx_counts: np.ndarray
    zz_stderr: np.ndarray = field(default=None)
    xx_stderr: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("zz", "xx"):
            v = getattr(self, name)
            if (v < -1e-12).any():
                raise ValueError(f"{name} probabilities must be non-negative")
        if self.zz_stderr is None:
            self.zz_stderr = _binomial_stderr(self.zz, self.zz_counts.sum())
        if self.xx_stderr is None:
            self.xx_stderr = _binomial_stderr(self.xx, self.xx_counts.sum())

    @property
    def zz_aggregate(self) -> float:
        return float(self.zz[1] + self.zz[2])

    @property
    def xx_aggregate(self) -> float:
        return float(self.xx[0] + self.xx[3] - self.xx[1] - self.xx[2])

    def bound(self) -> float:
        return fidelity_lower_bound(self.zz, self.xx)

    def as_dict(self) -> dict:
        return {
            "zz": [float(x) for x in self.zz],
            "xx": [float(x) for x in self.xx],
            "zz_counts": [int(x) for x in self.zz_counts],
            "xx_counts": [int(x) for x in self.xx_counts],
            "zz_stderr": [float(x) for x in self.zz_stderr],
            "xx_stderr": [float(x) for x in self.xx_stderr],
            "zz_aggregate": self.zz_aggregate,
            "xx_aggregate": self.xx_aggregate,
            "fidelity_lower_bound": self.bound(),
        }


def _binomial_stderr(p: np.ndarray, n: float) -> np.ndarray:
    n = max(float(n), 1.0)
    return np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / n)


def _zz_cells(records) -> np.ndarray:
    usable = (records["herald"] == 1) & np.isin(records["abin"], (1, 3)) & (records["inferred"] >= 0)
    if not usable.any():
        raise ValueError("no usable heralds for the ZZ table")
    spin = records["inferred"][usable]
    pbit = (records["abin"][usable] == 3).astype(np.int8)  # early -> 0, late -> 1
    counts = np.zeros(4, dtype=np.int64)
    for s, b in ((0, 0), (0, 1), (1, 0), (1, 1)):
        counts[2 * s + b] = int(((spin == s) & (pbit == b)).sum())
    return counts


def _xx_cells(records, invert_detector: bool) -> np.ndarray:
    usable = (records["herald"] == 1) & (records["abin"] == 2) & (records["inferred"] >= 0)
    if not usable.any():
        raise ValueError("no usable heralds for the XX table")
    spin = records["inferred"][usable]
    dbit = (records["detector"][usable] - 1).astype(np.int8)
    if invert_detector:
        dbit = 1 - dbit
    counts = np.zeros(4, dtype=np.int64)
    for s, b in ((0, 0), (0, 1), (1, 0), (1, 1)):
        counts[2 * s + b] = int(((spin == s) & (dbit == b)).sum())
    return counts


def correlation_table(zz_records, xx_records_phi0, xx_records_phi0_pi) -> CorrelationTable:
    """Assemble the ZZ/XX joint-probability table from three record sets.

    The two XX legs sit at the fitted extremal phases phi0 and phi0 + pi;
    the photonic X assignment flips between them.
    """
    zz_counts = _zz_cells(zz_records)
    xx_counts = _xx_cells(xx_records_phi0, invert_detector=False) + _xx_cells(
        xx_records_phi0_pi, invert_detector=True
    )
    return CorrelationTable(
        zz=zz_counts / zz_counts.sum(),
        xx=xx_counts / xx_counts.sum(),
        zz_counts=zz_counts,
        xx_counts=xx_counts,
    )


@dataclass
class PhaseSweepResult:
    phi_values: np.ndarray
    frequencies: np.ndarray        # shape (4, n) in OUTCOMES order
    stderr: np.ndarray
    offsets: np.ndarray            # per-outcome fitted offsets
    amplitude: float               # fitted aggregate amplitude (= visibility * 4 * offset)
    offset: float                  # mean per-outcome offset (~0.25)
    phi0: float                    # phase of maximal (spin 0, D1)/(spin 1, D2) correlation
    visibility: float
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "phi0": float(self.phi0),
            "visibility": float(self.visibility),
            "amplitude": float(self.amplitude),
            "offset": float(self.offset),
            "degenerate": bool(self.degenerate),
        }


def fit_phase_sweep(phi_values, frequencies, stderr=None) -> PhaseSweepResult:
    """Least-squares sinusoid fit of the four outcome frequencies.

    frequencies: array (4, n) in OUTCOMES order.  Fits each outcome to
    a + b cos(phi) + c sin(phi), combines the four signed amplitudes into
    the aggregate g(phi) = p00 + p12 - p10 - p02 = A_g cos(phi - phi0), and
    reports visibility = A_g / (4 * mean offset).
    """
    phis = np.asarray(phi_values, dtype=float)
    f = np.asarray(frequencies, dtype=float)
    if phis.size < 6:
        raise ValueError("need at least 6 phase points")
    if f.shape != (4, phis.size):
        raise ValueError(f"frequencies must be (4, {phis.size}), got {f.shape}")
    design = np.column_stack([np.ones_like(phis), np.cos(phis), np.sin(phis)])
    coef = np.linalg.lstsq(design, f.T, rcond=None)[0]  # (3, 4)
    offsets = coef[0]
    signs = np.array([+1.0, -1.0, -1.0, +1.0])  # (0,D1), (1,D1), (0,D2), (1,D2)
    bc = float(signs @ coef[1])
    bs = float(signs @ coef[2])
    amp = math.hypot(bc, bs)
    offset = float(offsets.mean())
    degenerate = amp < 1e-12 or offset <= 0.0
    visibility = 0.0 if degenerate else min(amp / (4.0 * offset), 1.0)
    phi0 = 0.0 if degenerate else math.atan2(bs, bc) % (2.0 * math.pi)
    return PhaseSweepResult(
        phi_values=phis,
        frequencies=f,
        stderr=np.asarray(stderr, dtype=float) if stderr is not None else np.zeros_like(f),
        offsets=offsets,
        amplitude=amp,
        offset=offset,
        phi0=phi0,
        visibility=visibility,
        degenerate=degenerate,
    )


def sweep_frequencies(records_by_phi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-phase usable-herald outcome frequencies for the sweep fit.

    records_by_phi: list of (phi, records).  Returns (phis, freq (4, n),
    stderr (4, n)) over central-bin heralds.
    """
    phis, cols, errs = [], [], []
    for phi, rec in records_by_phi:
        usable = (rec["herald"] == 1) & (rec["abin"] == 2) & (rec["inferred"] >= 0)
        n = int(usable.sum())
        if n == 0:
            raise ValueError(f"no usable heralds at phi={phi}")
        col = []
        for spin, det in OUTCOMES:
            col.append(((rec["inferred"][usable] == spin) & (rec["detector"][usable] == det)).mean())
        col = np.asarray(col)
        phis.append(phi)
        cols.append(col)
        errs.append(_binomial_stderr(col, n))
    return np.asarray(phis), np.stack(cols, axis=1), np.stack(errs, axis=1)


def dark_count_correct(probs, dark_fraction: float) -> tuple[np.ndarray, bool]:
    """Remove a uniform accidental background from a 4-cell table.

    p_corrected = (p - d/4) / (1 - d), clipped at zero and renormalized.
    Returns (corrected, degenerate) where degenerate flags a table that is
    pure background.
    """
    if not 0.0 <= dark_fraction < 1.0:
        raise ValueError(f"dark_fraction {dark_fraction} outside [0, 1)")
    p = np.asarray(probs, dtype=float)
    # a table indistinguishable from the uniform background has no signal
    # to recover, whatever fraction is assumed
    if np.max(np.abs(p - p.mean())) < 1e-6:
        return np.full(4, 0.25), True
    corr = (p - dark_fraction / 4.0) / (1.0 - dark_fraction)
    corr = np.clip(corr, 0.0, None)
    total = corr.sum()
    if total < 1e-9:
        return np.full(4, 0.25), True
    return corr / total, False


def visibility_dark_correct(visibility: float, dark_fraction: float) -> float:
    """Accidental-corrected sweep visibility (uniform background dilutes it by 1-d)."""
    if not 0.0 <= dark_fraction < 1.0:
        raise ValueError(f"dark_fraction {dark_fraction} outside [0, 1)")
    return min(visibility / (1.0 - dark_fraction), 1.0)


@dataclass
class ContrastBudget:
    init_readout: float
    interferometer_stability: float
    mode_overlap: float
    spectral: float

    def __post_init__(self):
        for name, v in self.factors().items():
            if not 0.0 < v <= 1.0:
                raise ValueError(f"budget factor {name} = {v} outside (0, 1]")

    def factors(self) -> dict:
        return {
            "init_readout": self.init_readout,
            "interferometer_stability": self.interferometer_stability,
            "mode_overlap": self.mode_overlap,
            "spectral": self.spectral,
        }

    @property
    def product(self) -> float:
        return self.init_readout * self.interferometer_stability * self.mode_overlap * self.spectral

    def as_dict(self) -> dict:
        d = {k: float(v) for k, v in self.factors().items()}
        d["product"] = float(self.product)
        return d


def contrast_budget(factors) -> ContrastBudget:
    if isinstance(factors, dict):
        return ContrastBudget(**factors)
    return ContrastBudget(*factors)


def estimate_dark_fraction(records, det_cfg, usable_bins=(2,), leak_mean: float = 0.0) -> float:
    """Estimate the accidental share of usable heralds from config rates.

    Mirrors experimental practice (rate bookkeeping, never the per-record
    truth flags): the signal click rate is unfolded from the observed
    herald rate, and the expected accidentals in the usable bins are
    referenced to the no-click shots.  Leakage, when configured, is
    treated with the same uniform bin share as dark counts.
    """
    n_shots = len(records["herald"])
    usable = (records["herald"] == 1) & np.isin(records["abin"], usable_bins)
    n_usable = int(usable.sum())
    if n_usable == 0:
        return 0.0
    p_leak = 1.0 - math.exp(-2.0 * leak_mean)
    p_acc = p_leak + (1.0 - p_leak) * det_cfg.dark_probability()
    if p_acc <= 0.0:
        return 0.0
    p_acc_usable = p_acc * (len(usable_bins) / 3.0)
    hr = (records["herald"] == 1).mean()
    p_click = min(max((hr - p_acc) / (1.0 - p_acc), 0.0), 1.0)
    expected = n_shots * (1.0 - p_click) * p_acc_usable
    return min(expected / n_usable, 0.999)


def sweep_csv(result: PhaseSweepResult) -> str:
    lines = ["phi,outcome,frequency,stderr"]
    names = ["spin0_d1", "spin1_d1", "spin0_d2", "spin1_d2"]
    for j, phi in enumerate(result.phi_values):
        for i, name in enumerate(names):
            lines.append(f"{phi!r},{name},{result.frequencies[i, j]!r},{result.stderr[i, j]!r}")
    return "\n".join(lines) + "\n"


def summary_json(payload: dict) -> str:
    payload = dict(payload)
    payload["schema_version"] = SCHEMA_VERSION
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"
