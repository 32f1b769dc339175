import math

import numpy as np
import pytest

from spinphoton import analysis, exact, kernel, nv, program, qstate
from spinphoton.analysis import (
    ContrastBudget,
    contrast_budget,
    correlation_table,
    dark_count_correct,
    detection_law,
    fidelity_lower_bound,
    fit_phase_sweep,
    sweep_frequencies,
    visibility_dark_correct,
)
from spinphoton.interferometer import DetectorConfig, EODConfig, InterferometerConfig
from spinphoton.noise import ReadoutModel
from spinphoton.program import RunSettings


# --- detection law -----------------------------------------------------


def test_detection_law_reference_points():
    assert detection_law(0.0) == pytest.approx((0.0, 0.5, 0.5, 0.0))
    assert detection_law(math.pi / 2) == pytest.approx((0.25, 0.25, 0.25, 0.25))


def test_detection_law_sums_to_one():
    rng = np.random.default_rng(0)
    for phi in rng.uniform(0, 2 * math.pi, 100):
        assert sum(detection_law(phi)) == pytest.approx(1.0, abs=1e-12)


# --- fidelity bound ----------------------------------------------------


def test_bound_ideal_bell():
    assert fidelity_lower_bound([0, 0.5, 0.5, 0], [0.5, 0, 0, 0.5]) == pytest.approx(1.0)


def test_bound_reported_aggregates():
    got = fidelity_lower_bound([0, 0.475, 0.475, 0], [0.365, 0.135, 0.135, 0.365])
    assert got == pytest.approx(0.705, abs=1e-12)


def test_bound_maximally_mixed():
    assert fidelity_lower_bound([0.25] * 4, [0.25] * 4) == pytest.approx(0.0, abs=1e-12)


def test_bound_rejects_negative():
    with pytest.raises(ValueError):
        fidelity_lower_bound([-0.1, 0.6, 0.5, 0], [0.25] * 4)


def _random_two_qubit_density(rng):
    g = rng.normal(size=(4, 6)) + 1j * rng.normal(size=(4, 6))
    m = g @ g.conj().T
    return m / np.trace(m).real


def test_bound_below_oracle_fidelity_on_random_states():
    # the defining property of a lower bound, on 100 random mixed states
    spec = qstate.RegisterSpec((("a", 2), ("b", 2)))
    target = np.zeros(4, dtype=complex)
    target[1] = target[2] = 1 / math.sqrt(2)
    bell = qstate.PureState(spec, target)
    rng = np.random.default_rng(42)
    pairs = (("a", (0, 1)), ("b", (0, 1)))
    for _ in range(100):
        rho = qstate.DensityOracle(spec, _random_two_qubit_density(rng))
        zz = qstate.basis_diagonals(rho, "ZZ", pairs)
        xx = qstate.basis_diagonals(rho, "XX", pairs)
        # XX diagonals enter relative to the Bell convention: recombine so
        # the bound's q00+q11-q01-q10 equals 2 Re rho14 + 2 Re rho23
        bound = fidelity_lower_bound(zz, xx)
        f = qstate.state_fidelity(rho, bell)
        assert bound <= f + 1e-10


# --- correlation tables -------------------------------------------------


def _ideal_records(phi, basis, n=40000, seed=3):
    eod = EODConfig(enabled=True, fidelity=1.0)
    if basis == "Z":
        eod = EODConfig(enabled=True, fidelity=1.0, drive_delay=35e-9)
    st = RunSettings(
        protocol="electron",
        basis=basis,
        phi=phi,
        emitter=nv.EmitterParams(),
        icfg=InterferometerConfig(arm_delay=70e-9),
        eod=eod,
        det=DetectorConfig(),
        readout=ReadoutModel(lambda_bright=20.0, lambda_dark=0.0, threshold=1),
    )
    prog = program.build_program(st)
    return kernel.run_batch(prog, seed=seed, shot0=0, n_shots=n, delta=np.zeros(n))


def test_ideal_correlation_table():
    zz = _ideal_records(0.0, "Z")
    x0 = _ideal_records(math.pi, "X", seed=4)
    x1 = _ideal_records(2 * math.pi, "X", seed=5)
    table = correlation_table(zz, x0, x1)
    n = table.zz_counts.sum()
    se = 3.0 / math.sqrt(n)
    assert table.zz == pytest.approx([0.0, 0.5, 0.5, 0.0], abs=se)
    assert table.zz_aggregate == pytest.approx(1.0, abs=se)
    assert table.xx_aggregate == pytest.approx(1.0, abs=3.0 / math.sqrt(table.xx_counts.sum()))
    assert table.bound() == pytest.approx(1.0, abs=0.01)


def test_empty_heralds_rejected():
    zz = {k: np.zeros(10, dtype=np.int8) for k in ("herald", "abin", "inferred", "detector")}
    with pytest.raises(ValueError):
        correlation_table(zz, zz, zz)


# --- phase sweep fit -----------------------------------------------------


def test_fit_recovers_exact_model():
    phis = np.linspace(0, 2 * math.pi, 12, endpoint=False)
    freqs = np.stack([np.array(detection_law(p)) for p in phis], axis=1)
    fit = fit_phase_sweep(phis, freqs)
    assert fit.visibility == pytest.approx(1.0, abs=1e-12)
    assert fit.offset == pytest.approx(0.25, abs=1e-12)
    assert fit.phi0 == pytest.approx(math.pi, abs=1e-12)


def test_fit_recovers_injected_origin_and_scaled_visibility():
    v, phi0 = 0.62, 1.0
    phis = np.linspace(0, 2 * math.pi, 24, endpoint=False)
    f = np.zeros((4, phis.size))
    signs = (+1, -1, -1, +1)
    for i, s in enumerate(signs):
        f[i] = 0.25 + s * (v / 4) * np.cos(phis - phi0)
    fit = fit_phase_sweep(phis, f)
    assert fit.visibility == pytest.approx(v, abs=1e-12)
    assert fit.phi0 == pytest.approx(phi0, abs=1e-12)


def test_fit_flags_degenerate_data():
    phis = np.linspace(0, 2 * math.pi, 8, endpoint=False)
    fit = fit_phase_sweep(phis, np.full((4, 8), 0.25))
    assert fit.degenerate and fit.visibility == 0.0


def test_fit_needs_six_points():
    with pytest.raises(ValueError):
        fit_phase_sweep(np.linspace(0, 1, 5), np.full((4, 5), 0.25))


def test_fit_on_simulated_sweep_recovers_origin():
    recs = []
    phis = np.linspace(0, 2 * math.pi, 12, endpoint=False)
    for i, p in enumerate(phis):
        recs.append((float(p), _ideal_records(float(p), "X", n=10000, seed=50 + i)))
    ph, f, err = sweep_frequencies(recs)
    fit = fit_phase_sweep(ph, f, err)
    assert fit.visibility == pytest.approx(1.0, abs=0.02)
    assert abs((fit.phi0 - math.pi + math.pi) % (2 * math.pi) - math.pi) < 0.05


# --- dark-count correction -----------------------------------------------


def test_dark_correct_identity():
    p = np.array([0.1, 0.4, 0.4, 0.1])
    out, flag = dark_count_correct(p, 0.0)
    assert not flag
    assert out == pytest.approx(p)


def test_dark_correct_pure_background_flagged():
    out, flag = dark_count_correct([0.25, 0.25, 0.25, 0.25], 0.999)
    assert flag


def test_dark_correct_rejects_bad_fraction():
    with pytest.raises(ValueError):
        dark_count_correct([0.25] * 4, 1.0)
    with pytest.raises(ValueError):
        visibility_dark_correct(0.5, -0.1)


def test_dark_correct_round_trip():
    # forward-mix 10% uniform accidentals over the ideal ZZ table, then invert
    rng = np.random.default_rng(7)
    d = 0.10
    ideal = np.array([0.0, 0.5, 0.5, 0.0])
    n = 200000
    mixed = (1 - d) * ideal + d / 4.0
    counts = rng.multinomial(n, mixed)
    raw = counts / n
    corr, flag = dark_count_correct(raw, d)
    assert not flag
    se = 3.0 / math.sqrt(n)
    assert corr == pytest.approx(ideal, abs=se)


# --- budget ---------------------------------------------------------------


def test_budget_product_reported_numbers():
    b = contrast_budget((0.80, 0.97, 0.95, 0.84))
    assert b.product == pytest.approx(0.80 * 0.97 * 0.95 * 0.84, abs=1e-15)
    assert round(b.product, 3) == 0.619


def test_budget_all_ones():
    assert contrast_budget((1.0, 1.0, 1.0, 1.0)).product == 1.0


def test_budget_without_spectral_factor():
    b = contrast_budget((0.80, 0.97, 0.95, 1.0))
    assert b.product == pytest.approx(0.737, abs=5e-4)


def test_budget_rejects_zero_factor():
    with pytest.raises(ValueError):
        contrast_budget((0.0, 1.0, 1.0, 1.0))


def test_budget_product_invariant():
    b = ContrastBudget(0.5, 0.9, 0.8, 0.7)
    assert b.product == pytest.approx(0.5 * 0.9 * 0.8 * 0.7, abs=1e-12)
