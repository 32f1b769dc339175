import math

import numpy as np
import pytest

from spinphoton import exact, kernel, nv, program
from spinphoton.interferometer import DetectorConfig, EODConfig, InterferometerConfig
from spinphoton.noise import ReadoutModel
from spinphoton.program import (
    RunSettings,
    build_program,
    electron_script,
    nuclear_script,
    validate_script,
)


def noisy_settings(protocol="electron"):
    return RunSettings(
        protocol=protocol,
        basis="X",
        phi=1.1,
        emitter=nv.EmitterParams(eta_collect=0.7, eta_detect=0.9),
        icfg=InterferometerConfig(arm_delay=70e-9, phase_jitter_rms=0.15, mode_overlap=0.93),
        eod=EODConfig(enabled=True, fidelity=0.96),
        det=DetectorConfig(dark_rate=1.5e5),
        readout=ReadoutModel(lambda_bright=8.2, lambda_dark=1.3, threshold=4),
        init_flip=0.04,
        nuclear_flip=0.05 if protocol == "nuclear" else 0.0,
        nuclear_dephase=0.06 if protocol == "nuclear" else 0.0,
    )


@pytest.mark.parametrize("protocol", ["electron", "nuclear"])
def test_lanes_bit_identical(protocol):
    prog = build_program(noisy_settings(protocol))
    n = 4000
    delta = 2e6 * np.sin(np.arange(n))
    out_py = kernel.run_batch(prog, seed=99, shot0=0, n_shots=n, delta=delta, lane="python")
    if kernel.ACTIVE_LANE == "compiled":
        out_c = kernel.run_batch(prog, seed=99, shot0=0, n_shots=n, delta=delta, lane="compiled")
        for k in out_py:
            assert np.array_equal(out_py[k], out_c[k]), k


def test_shots_replayable_in_isolation():
    prog = build_program(noisy_settings())
    n = 500
    delta = np.zeros(n)
    full = kernel.run_batch(prog, seed=5, shot0=0, n_shots=n, delta=delta)
    # re-run an interior span: identical records (draws are shot-addressed)
    part = kernel.run_batch(prog, seed=5, shot0=100, n_shots=50, delta=delta[100:150])
    for k in full:
        assert np.array_equal(full[k][100:150], part[k]), k


def test_heralding_contract_no_readout_without_click():
    prog = build_program(noisy_settings())
    n = 5000
    out = kernel.run_batch(prog, seed=6, shot0=0, n_shots=n, delta=np.zeros(n))
    h = out["herald"] == 1
    assert (out["inferred"][h] >= 0).all()
    assert (out["inferred"][~h] == -1).all()
    assert (out["counts"][~h] == -1).all()


def test_loss_flags_match_missing_photons():
    st = noisy_settings().replace(det=DetectorConfig(dark_rate=0.0))
    prog = build_program(st)
    n = 20000
    out = kernel.run_batch(prog, seed=61, shot0=0, n_shots=n, delta=np.zeros(n))
    lost = out["lost"] > 0
    # with darks off, shots that lost the photon can never herald
    assert not (lost & (out["herald"] == 1)).any()
    eta = st.emitter.eta_effective()
    assert abs((out["herald"] == 1).mean() - eta) < 0.01


def test_trajectory_matches_exact_cells_nuclear():
    st = noisy_settings("nuclear").replace(phi=0.6)
    res = exact.detection_cells(st)
    prog = build_program(st)
    n = 150000
    out = kernel.run_batch(prog, seed=13, shot0=0, n_shots=n, delta=np.zeros(n))
    us = (out["herald"] == 1) & (out["abin"] == 2) & (out["inferred"] >= 0)
    n_us = int(us.sum())
    for (sb, db), p in res.cells.items():
        f = ((out["inferred"][us] == sb) & (out["detector"][us] == db + 1)).mean()
        se = math.sqrt(max(p * (1 - p), 1e-9) / n_us)
        assert abs(f - p) < 4 * se, (sb, db, f, p)


def test_builder_rejects_double_bin():
    b = program._Builder(with_nuclear=False)
    b.emit(nv.PH_EARLY, 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        b.emit(nv.PH_EARLY, 1.0, 1.0, 0.0)


def test_scripts_validate():
    validate_script(electron_script("X"))
    validate_script(electron_script("Z"))
    validate_script(nuclear_script("X", store_time=1e-4))
    with pytest.raises(ValueError):
        validate_script([("optical_pi", "early"), ("optical_pi", "early"), ("readout", "Z")])
    with pytest.raises(ValueError):
        validate_script([("readout", "Z"), ("mw", 1.0, 0.0, "0,-1")])
    with pytest.raises(ValueError):
        validate_script([("mw", 1.0, 0.0, "0,-1"), ("crc",), ("readout", "Z")])


def test_invalid_settings_rejected():
    with pytest.raises(ValueError):
        build_program(noisy_settings().replace(protocol="proton"))
    with pytest.raises(ValueError):
        build_program(noisy_settings().replace(basis="Y"))
    with pytest.raises(ValueError):
        build_program(
            noisy_settings().replace(
                emitter=nv.EmitterParams(eta_collect=1.0, time_filter=(1e-6, 2e-6))
            )
        )


def test_time_filter_scales_efficiency():
    # a window catching ~63% of the 12 ns decay reduces the herald rate accordingly
    em = nv.EmitterParams(time_filter=(0.0, 12e-9))
    st = noisy_settings().replace(emitter=em, det=DetectorConfig(dark_rate=0.0))
    assert em.eta_effective() == pytest.approx(1 - math.exp(-1.0), rel=1e-12)
    prog = build_program(st)
    n = 50000
    out = kernel.run_batch(prog, seed=15, shot0=0, n_shots=n, delta=np.zeros(n))
    p = (out["herald"] == 1).mean()
    assert abs(p - em.eta_effective()) < 0.01


def test_leakage_produces_flagged_accidentals():
    em = nv.EmitterParams(eta_collect=1e-9, leakage_rate=2e6, leakage_decay=10e-9)
    st = noisy_settings().replace(emitter=em, det=DetectorConfig(dark_rate=0.0))
    prog = build_program(st)
    n = 100000
    out = kernel.run_batch(prog, seed=16, shot0=0, n_shots=n, delta=np.zeros(n))
    h = out["herald"] == 1
    assert h.any()
    assert (out["accidental"][h] == 2).all()
    p_leak = 1.0 - math.exp(-2.0 * em.leakage_mean())
    se = math.sqrt(p_leak * (1 - p_leak) / n)
    assert abs(h.mean() - p_leak) < 4 * se
