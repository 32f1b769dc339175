"""Cross-cutting consistency checks and preset runtime budgets."""

import json
import math
import time

import pytest

from spinphoton import cli
from spinphoton.config import load_preset, preset_names


def test_sweep_visibility_equals_xx_aggregate(tmp_path):
    # the fitted sweep visibility and the XX aggregate taken at the fitted
    # extremal phases are the same observable, within statistics
    rc = cli.main(["fidelity", "--preset", "fig3", "--shots", "30000", "--out", str(tmp_path)])
    assert rc == 0
    payload = json.loads((tmp_path / "fidelity.json").read_text())
    vis = payload["visibility"]
    xx = payload["xx_aggregate"]
    n = sum(payload["xx_counts"])
    se = math.sqrt(max(1.0 - xx * xx, 1e-9) / n)
    assert abs(vis - xx) < 3.0 * se + 0.01


def test_corrected_bound_consistent(tmp_path):
    rc = cli.main(["fidelity", "--preset", "fig3", "--shots", "20000", "--out", str(tmp_path)])
    assert rc == 0
    payload = json.loads((tmp_path / "fidelity.json").read_text())
    # dark correction can only tighten the tables toward the ideal state here
    assert payload["bound_dark_corrected"] >= payload["fidelity_lower_bound"] - 0.01


_PRESET_COMMANDS = {
    "fig1e": "run",
    "fig1f": "run",
    "fig2bc": "histogram",
    "fig3": "fidelity",
    "fig4": "fidelity",
    "sm-crc": "crc-stats",
    "sm-contrast": "contrast-sweep",
}


@pytest.mark.parametrize("preset", sorted(_PRESET_COMMANDS))
def test_preset_runs_within_budget(preset, tmp_path):
    # every shipped preset completes at its default shot count in < 60 s
    load_preset(preset)  # parses cleanly
    t0 = time.monotonic()
    rc = cli.main([_PRESET_COMMANDS[preset], "--preset", preset, "--out", str(tmp_path)])
    elapsed = time.monotonic() - t0
    assert rc == 0
    assert elapsed < 60.0, (preset, elapsed)


def test_preset_names_match_commands():
    assert set(preset_names()) == set(_PRESET_COMMANDS)
