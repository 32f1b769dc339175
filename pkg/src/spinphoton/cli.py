"""Command-line runner: experiment commands and figure-reproduction presets.

Subcommands: run, sweep-phase, histogram, crc-stats, contrast-sweep,
budget, fidelity.  Every command writes CSV/JSON artifacts to --out and
prints a one-line summary.  Exit codes: 0 success, 2 configuration error,
3 numerical-invariant failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .analysis import (
    contrast_budget,
    correlation_table,
    dark_count_correct,
    estimate_dark_fraction,
    fit_phase_sweep,
    summary_json,
    sweep_csv,
    sweep_frequencies,
    visibility_dark_correct,
)
from .config import ConfigError, ExperimentConfig, load_preset, parse_config, preset_names
from .control import export_herald_log, run_experiment
from .noise import analytic_contrast
from .rng import derive_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class NumericalFailure(RuntimeError):
    pass


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load(args) -> ExperimentConfig:
    if args.preset:
        cfg = load_preset(args.preset)
    elif args.config:
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
    else:
        cfg = parse_config("")
    if args.seed is not None:
        cfg.values["run"]["seed"] = args.seed
    if args.shots is not None:
        cfg.values["run"]["shots"] = args.shots
    if args.threads is not None:
        cfg.values["run"]["threads"] = args.threads
    return cfg


def _run_cfg(cfg: ExperimentConfig, settings, shots, seed):
    return run_experiment(
        settings,
        shots,
        seed,
        noise_cfg=cfg.noise_settings(),
        crc_cfg=cfg.crc(),
        lanes=cfg.get("run", "lanes"),
        threads=cfg.get("run", "threads"),
    )


def _zz_settings(cfg: ExperimentConfig):
    """The ZZ-basis leg: deflector drive anti-aligned, bins 1/3 carry the bit."""
    s = cfg.settings(basis="Z")
    eod = s.eod
    from dataclasses import replace

    return s.replace(eod=replace(eod, drive_delay=eod.drive_delay + eod.switch_period / 2.0))


def cmd_run(cfg: ExperimentConfig, out: Path) -> str:
    shots = cfg.get("run", "shots")
    seed = cfg.get("run", "seed")
    res = _run_cfg(cfg, cfg.settings(), shots, seed)
    export_herald_log(res, out / "records.jsonl")
    r = res.records
    heralds = int((r["herald"] == 1).sum())
    read = r["inferred"][r["inferred"] >= 0]
    counts = r["counts"][r["counts"] >= 0]
    payload = {
        "command": "run",
        "shots": shots,
        "seed": seed,
        "heralds": heralds,
        "herald_fraction": heralds / shots,
        "readouts": int(read.size),
        "inferred_zero_fraction": float((read == 0).mean()) if read.size else None,
        "mean_counts": float(counts.mean()) if counts.size else None,
        "count_histogram": {str(k): int(v) for k, v in zip(*np.unique(counts, return_counts=True))},
    }
    st = cfg.settings()
    if st.store_time > 0.0 and st.memory is not None:
        from .nv import memory_decay_factor

        payload["memory_decay_factor"] = memory_decay_factor(st.store_time, st.memory)
    _write(out / "summary.json", summary_json(payload))
    return f"run: {heralds}/{shots} heralds, readouts {payload['readouts']}"


def _sweep(cfg: ExperimentConfig, out: Path, write: bool = True):
    shots = cfg.get("run", "shots")
    seed = cfg.get("run", "seed")
    n_phi = cfg.get("run", "phase_points")
    phis = np.linspace(0.0, 2.0 * math.pi, n_phi, endpoint=False)
    recs = []
    for i, phi in enumerate(phis):
        res = _run_cfg(cfg, cfg.settings(basis="X", phi=float(phi)), shots, derive_seed(seed, i))
        recs.append((float(phi), res.records))
    phis_arr, freqs, errs = sweep_frequencies(recs)
    fit = fit_phase_sweep(phis_arr, freqs, errs)
    if fit.degenerate:
        raise NumericalFailure("phase sweep fit degenerate (no contrast)")
    dark = estimate_dark_fraction(recs[0][1], cfg.detector(), usable_bins=(2,),
                                  leak_mean=cfg.emitter().leakage_mean())
    vis_corr = visibility_dark_correct(fit.visibility, dark)
    if write:
        _write(out / "sweep.csv", sweep_csv(fit))
        payload = fit.as_dict()
        payload.update(
            {
                "command": "sweep-phase",
                "shots_per_point": shots,
                "phase_points": n_phi,
                "dark_fraction_estimate": dark,
                "visibility_dark_corrected": vis_corr,
            }
        )
        _write(out / "sweep_fit.json", summary_json(payload))
    return fit, dark, vis_corr


def cmd_sweep(cfg: ExperimentConfig, out: Path) -> str:
    fit, dark, vis_corr = _sweep(cfg, out)
    return (
        f"sweep-phase: visibility {fit.visibility:.4f} "
        f"(dark-corrected {vis_corr:.4f}), phi0 {fit.phi0:.4f}"
    )


def cmd_histogram(cfg: ExperimentConfig, out: Path) -> str:
    shots = cfg.get("run", "shots")
    seed = cfg.get("run", "seed")
    res = _run_cfg(cfg, cfg.settings(basis="X"), shots, seed)
    r = res.records
    h = r["herald"] == 1
    if not h.any():
        raise NumericalFailure("no heralds recorded")
    lines = ["detector,bin,count,fraction"]
    total = int(h.sum())
    central = 0
    for det in (1, 2):
        for abin in (1, 2, 3):
            c = int(((r["detector"] == det) & (r["abin"] == abin) & h).sum())
            if abin == 2:
                central += c
            lines.append(f"{det},{abin},{c},{c / total!r}")
    _write(out / "histogram.csv", "\n".join(lines) + "\n")
    payload = {
        "command": "histogram",
        "shots": shots,
        "heralds": total,
        "central_bin_fraction": central / total,
        "eod_enabled": cfg.get("eod", "enabled"),
        "eod_fidelity": cfg.get("eod", "fidelity"),
    }
    _write(out / "histogram.json", summary_json(payload))
    return f"histogram: central-bin fraction {central / total:.4f} over {total} heralds"


def cmd_crc_stats(cfg: ExperimentConfig, out: Path) -> str:
    shots = cfg.get("run", "shots")
    seed = cfg.get("run", "seed")
    res = _run_cfg(cfg, cfg.settings(), shots, seed)
    crc = res.crc
    real = crc["counts"] >= 0
    counts = crc["counts"][real].astype(float)
    if counts.size < 10:
        raise NumericalFailure("too few CRC attempts for statistics")
    acc = real & (crc["passed"] == 1)
    c_acc = crc["counts"][acc].astype(float)
    vm_all = float(counts.var() / counts.mean()) if counts.mean() > 0 else 0.0
    vm_acc = float(c_acc.var() / c_acc.mean()) if c_acc.size and c_acc.mean() > 0 else 0.0
    rms_prior = cfg.get("noise", "sigma_diffusion")
    rms_acc = float(np.sqrt(np.mean(crc["delta"][acc] ** 2))) if acc.any() else 0.0
    lines = ["block,attempt,delta_hz,counts,passed,resync"]
    for i in range(len(crc["block"])):
        lines.append(
            f"{crc['block'][i]},{crc['attempt'][i]},{crc['delta'][i]!r},"
            f"{crc['counts'][i]},{int(crc['passed'][i])},{int(crc['resync'][i])}"
        )
    _write(out / "crc_attempts.csv", "\n".join(lines) + "\n")
    payload = {
        "command": "crc-stats",
        "attempts": int(real.sum()),
        "accepted": int(acc.sum()),
        "variance_over_mean_all": vm_all,
        "variance_over_mean_accepted": vm_acc,
        "detuning_rms_prior": rms_prior,
        "detuning_rms_accepted": rms_acc,
        "recharges_per_block_mean": float(res.records["recharge_count"].mean()),
    }
    _write(out / "crc_stats.json", summary_json(payload))
    return (
        f"crc-stats: var/mean {vm_all:.2f} -> {vm_acc:.2f} accepted; "
        f"detuning RMS {rms_prior:.3g} -> {rms_acc:.3g}"
    )


def cmd_contrast_sweep(cfg: ExperimentConfig, out: Path) -> str:
    shots = cfg.get("run", "shots")
    seed = cfg.get("run", "seed")
    arm = cfg.get("interferometer", "arm_delay")
    sig_max = max(cfg.get("noise", "sigma_diffusion"), 1e6)
    sigmas = np.linspace(0.0, sig_max, 10)
    rows = ["sigma_hz,contrast_mc,stderr,contrast_analytic"]
    worst = 0.0
    for i, sig in enumerate(sigmas):
        cfg.values["noise"]["sigma_diffusion"] = float(sig)
        cfg.values["noise"]["resample"] = "per_shot"
        cfg.values["noise"]["spectral_mode"] = "physical"
        vsum = 0.0
        agg = {}
        for j, phi in enumerate((math.pi, 0.0)):
            res = _run_cfg(cfg, cfg.settings(basis="X", phi=phi), shots,
                           derive_seed(seed, 100 + 2 * i + j))
            r = res.records
            us = (r["herald"] == 1) & (r["abin"] == 2) & (r["inferred"] >= 0)
            sgn = np.where((r["inferred"][us] == 0) == (r["detector"][us] == 1), 1.0, -1.0)
            agg[phi] = (float(sgn.mean()), sgn.size)
        mc = (agg[math.pi][0] - agg[0.0][0]) / 2.0
        n_eff = min(agg[math.pi][1], agg[0.0][1])
        se = math.sqrt(max(1.0 - mc * mc, 1e-9) / max(n_eff, 1)) / math.sqrt(2.0)
        ana = analytic_contrast(float(sig), arm)
        worst = max(worst, abs(mc - ana) / max(se, 1e-12))
        rows.append(f"{float(sig)!r},{mc!r},{se!r},{ana!r}")
    _write(out / "contrast_sweep.csv", "\n".join(rows) + "\n")
    payload = {"command": "contrast-sweep", "points": 10, "arm_delay": arm,
               "worst_deviation_sigmas": worst}
    _write(out / "contrast_sweep.json", summary_json(payload))
    return f"contrast-sweep: worst MC-vs-analytic deviation {worst:.2f} sigma"


def cmd_budget(cfg: ExperimentConfig, out: Path) -> str:
    factors = cfg.budget_factors()
    if factors is None:
        raise ConfigError("no [budget] section in this configuration")
    budget = contrast_budget(factors)
    payload = {"command": "budget"}
    payload.update(budget.as_dict())
    _write(out / "budget.json", summary_json(payload))
    return f"budget: product {budget.product:.6f}"


def cmd_fidelity(cfg: ExperimentConfig, out: Path) -> str:
    shots = cfg.get("run", "shots")
    seed = cfg.get("run", "seed")
    fit, dark_xx, vis_corr = _sweep(cfg, out, write=True)
    phi0 = fit.phi0

    res_zz = _run_cfg(cfg, _zz_settings(cfg), 2 * shots, derive_seed(seed, 1001))
    res_x0 = _run_cfg(cfg, cfg.settings(basis="X", phi=phi0), shots, derive_seed(seed, 1002))
    res_x1 = _run_cfg(cfg, cfg.settings(basis="X", phi=phi0 + math.pi), shots, derive_seed(seed, 1003))
    table = correlation_table(res_zz.records, res_x0.records, res_x1.records)

    dark_zz = estimate_dark_fraction(res_zz.records, cfg.detector(), usable_bins=(1, 3),
                                     leak_mean=cfg.emitter().leakage_mean())
    zz_corr, zz_flag = dark_count_correct(table.zz, dark_zz)
    xx_corr, xx_flag = dark_count_correct(table.xx, dark_xx)
    corrected_bound = analysis.fidelity_lower_bound(zz_corr, xx_corr)

    payload = {"command": "fidelity", "phi0": float(phi0), "shots_per_leg": shots}
    payload.update(table.as_dict())
    payload.update(
        {
            "visibility": fit.visibility,
            "visibility_dark_corrected": vis_corr,
            "dark_fraction_xx": dark_xx,
            "dark_fraction_zz": dark_zz,
            "zz_dark_corrected": [float(x) for x in zz_corr],
            "xx_dark_corrected": [float(x) for x in xx_corr],
            "bound_dark_corrected": corrected_bound if not (zz_flag or xx_flag) else None,
        }
    )
    factors = cfg.budget_factors()
    if factors is not None:
        payload["budget"] = contrast_budget(factors).as_dict()
    _write(out / "fidelity.json", summary_json(payload))
    return (
        f"fidelity: ZZ {table.zz_aggregate:.4f}, XX {table.xx_aggregate:.4f}, "
        f"bound {table.bound():.4f} (corrected {corrected_bound:.4f})"
    )


_COMMANDS = {
    "run": cmd_run,
    "sweep-phase": cmd_sweep,
    "histogram": cmd_histogram,
    "crc-stats": cmd_crc_stats,
    "contrast-sweep": cmd_contrast_sweep,
    "budget": cmd_budget,
    "fidelity": cmd_fidelity,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="spinphoton",
        description="NV spin-photon time-bin entanglement link simulator",
    )
    ap.add_argument("command", choices=sorted(_COMMANDS))
    ap.add_argument("--config", help="configuration file path")
    ap.add_argument("--preset", help=f"shipped preset name ({', '.join(preset_names())})"
                    if _presets_available() else "shipped preset name")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--shots", type=int, default=None)
    ap.add_argument("--out", default="out", help="artifact directory")
    ap.add_argument("--threads", type=int, default=None)
    return ap


def _presets_available() -> bool:
    try:
        preset_names()
        return True
    except Exception:
        return False


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg = _load(args)
        message = _COMMANDS[args.command](cfg, out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, ValueError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    print(message)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
