#!/usr/bin/env python3
"""Benchmark the compiled shot kernel against the pure-Python fallback.

Runs the electron and nuclear programs on both lanes, checks the outputs
are bit-identical, and reports per-shot cost and speedup.

Usage: python benchmarks/bench_kernel.py [--shots N]
"""

import argparse
import time

import numpy as np

from spinphoton import kernel, nv
from spinphoton.interferometer import DetectorConfig, EODConfig, InterferometerConfig
from spinphoton.noise import ReadoutModel
from spinphoton.program import RunSettings, build_program


def settings(protocol: str) -> RunSettings:
    return RunSettings(
        protocol=protocol,
        basis="X",
        phi=0.8,
        emitter=nv.EmitterParams(eta_collect=0.7),
        icfg=InterferometerConfig(arm_delay=70e-9, phase_jitter_rms=0.15, mode_overlap=0.95),
        eod=EODConfig(enabled=True, fidelity=0.97),
        det=DetectorConfig(dark_rate=1e5),
        readout=ReadoutModel(lambda_bright=8.2, lambda_dark=1.3, threshold=4),
        init_flip=0.05,
        nuclear_flip=0.05 if protocol == "nuclear" else 0.0,
    )


def bench(lane: str, prog, n: int, delta) -> tuple[float, dict]:
    t0 = time.perf_counter()
    out = kernel.run_batch(prog, seed=7, shot0=0, n_shots=n, delta=delta, lane=lane)
    return time.perf_counter() - t0, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--shots", type=int, default=50000)
    args = ap.parse_args()

    print(f"active lane: {kernel.ACTIVE_LANE}")
    for protocol in ("electron", "nuclear"):
        prog = build_program(settings(protocol))
        n = args.shots if protocol == "electron" else max(args.shots // 3, 1000)
        delta = 2e6 * np.sin(np.arange(n))
        t_py, out_py = bench("python", prog, n, delta)
        line = f"{protocol:9s} dim={prog.dim:2d}  python {1e6 * t_py / n:7.2f} us/shot"
        if kernel.ACTIVE_LANE == "compiled":
            t_c, out_c = bench("compiled", prog, n, delta)
            identical = all(np.array_equal(out_py[k], out_c[k]) for k in out_py)
            line += (
                f"  compiled {1e6 * t_c / n:5.2f} us/shot"
                f"  speedup {t_py / t_c:6.1f}x  bit-identical: {identical}"
            )
            if not identical:
                raise SystemExit("lane outputs differ")
        print(line)


if __name__ == "__main__":
    main()
