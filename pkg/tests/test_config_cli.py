import json
import math

import pytest

from spinphoton import cli
from spinphoton.config import (
    ConfigError,
    load_preset,
    parse_config,
    preset_names,
    serialize_config,
)


def test_empty_config_gets_defaults():
    cfg = parse_config("")
    assert cfg.get("run", "shots") == 100000
    assert cfg.get("interferometer", "arm_delay") == pytest.approx(70e-9)
    assert cfg.settings().protocol == "electron"


def test_bad_field_error_names_line_and_bound():
    text = "[eod]\nfidelity = 1.3\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    msg = str(err.value)
    assert "line 2" in msg and "eod.fidelity" in msg and "[0" in msg


def test_unknown_key_rejected_with_location():
    with pytest.raises(ConfigError) as err:
        parse_config("[run]\nbogus = 1\n")
    assert "line 2" in str(err.value) and "bogus" in str(err.value)


def test_unknown_section_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config("[warp_drive]\n")
    assert "line 1" in str(err.value)


def test_key_outside_section_rejected():
    with pytest.raises(ConfigError):
        parse_config("shots = 3\n")


def test_time_filter_cross_validation():
    with pytest.raises(ConfigError):
        parse_config("[detector]\nfilter_start = 2e-9\nfilter_end = 1e-9\n")


@pytest.mark.parametrize("name", ["fig1e", "fig1f", "fig2bc", "fig3", "fig4", "sm-crc", "sm-contrast"])
def test_presets_parse_and_round_trip(name):
    cfg = load_preset(name)
    text = serialize_config(cfg)
    cfg2 = parse_config(text)
    assert cfg2 == cfg
    assert serialize_config(cfg2) == text


def test_all_presets_shipped():
    assert set(preset_names()) == {"fig1e", "fig1f", "fig2bc", "fig3", "fig4", "sm-crc", "sm-contrast"}


def test_budget_section_maps_to_model_parameters():
    cfg = load_preset("fig3")
    icfg = cfg.interferometer()
    assert icfg.mode_overlap == pytest.approx(0.95)
    assert math.exp(-0.5 * icfg.phase_jitter_rms**2) == pytest.approx(0.97, rel=1e-12)
    nz = cfg.noise_settings()
    assert nz.spectral_mode == "scalar" and nz.spectral_factor == pytest.approx(0.84)
    eps = cfg.init_flip()
    from spinphoton.noise import readout_error_rates

    r0, r1 = readout_error_rates(cfg.readout())
    assert (1 - 2 * eps) * (1 - r0 - r1) == pytest.approx(0.80, rel=1e-12)


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[eod]\nfidelity = 2.0\n")
    rc = cli.main(["run", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert rc == cli.EXIT_CONFIG


def test_cli_numerical_failure_exit_code(tmp_path):
    cfgf = tmp_path / "dead.cfg"
    cfgf.write_text("[emitter]\neta_collect = 1e-9\n[run]\nshots = 200\nseed = 1\n")
    rc = cli.main(["histogram", "--config", str(cfgf), "--out", str(tmp_path / "o")])
    assert rc == cli.EXIT_NUMERIC


def test_cli_artifacts_deterministic(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        rc = cli.main(["histogram", "--preset", "fig2bc", "--shots", "20000", "--out", str(out)])
        assert rc == 0
    assert (out1 / "histogram.csv").read_bytes() == (out2 / "histogram.csv").read_bytes()
    assert (out1 / "histogram.json").read_bytes() == (out2 / "histogram.json").read_bytes()


def test_cli_threads_do_not_change_artifacts(tmp_path):
    outs = []
    for threads, name in ((1, "t1"), (4, "t4")):
        out = tmp_path / name
        rc = cli.main(
            ["run", "--preset", "fig1e", "--shots", "5000", "--threads", str(threads), "--out", str(out)]
        )
        assert rc == 0
        outs.append(out)
    assert (outs[0] / "records.jsonl").read_bytes() == (outs[1] / "records.jsonl").read_bytes()
    assert (outs[0] / "summary.json").read_bytes() == (outs[1] / "summary.json").read_bytes()


def test_cli_budget_artifact(tmp_path):
    rc = cli.main(["budget", "--preset", "fig3", "--out", str(tmp_path)])
    assert rc == 0
    payload = json.loads((tmp_path / "budget.json").read_text())
    assert payload["product"] == pytest.approx(0.619248, abs=1e-12)
    assert payload["schema_version"] == 1


def test_cli_budget_requires_section(tmp_path):
    rc = cli.main(["budget", "--preset", "fig1e", "--out", str(tmp_path)])
    assert rc == cli.EXIT_CONFIG


def test_sweep_csv_schema(tmp_path):
    rc = cli.main(["sweep-phase", "--preset", "fig3", "--shots", "4000", "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "phi,outcome,frequency,stderr"
    assert len(lines) == 1 + 12 * 4
    fit = json.loads((tmp_path / "sweep_fit.json").read_text())
    assert {"phi0", "visibility", "visibility_dark_corrected", "schema_version"} <= set(fit)
