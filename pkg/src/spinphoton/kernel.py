"""Kernel lane selection: compiled extension if importable, else pure Python.

Both lanes produce bit-identical records for the same program and seed;
the compiled lane is roughly two orders of magnitude faster (see
benchmarks/bench_kernel.py).
"""

from __future__ import annotations

import numpy as np

from .program import ShotProgram

try:
    from . import _kernel as _impl

    ACTIVE_LANE = "compiled"
except ImportError:  # extension not built: fall back to the Python twin
    from . import _kernel_py as _impl

    ACTIVE_LANE = "python"

from . import _kernel_py as _py_impl


def allocate_records(n: int) -> dict[str, np.ndarray]:
    return {
        "herald": np.zeros(n, dtype=np.uint8),
        "detector": np.zeros(n, dtype=np.int8),
        "abin": np.zeros(n, dtype=np.int8),
        "accidental": np.zeros(n, dtype=np.int8),
        "lost": np.zeros(n, dtype=np.int8),
        "spin_true": np.full(n, -1, dtype=np.int8),
        "counts": np.full(n, -1, dtype=np.int32),
        "inferred": np.full(n, -1, dtype=np.int8),
    }


def run_batch(
    prog: ShotProgram,
    seed: int,
    shot0: int,
    n_shots: int,
    delta: np.ndarray,
    out: dict[str, np.ndarray] | None = None,
    lane: str | None = None,
) -> dict[str, np.ndarray]:
    """Simulate shots [shot0, shot0 + n_shots) and return the record arrays.

    `lane` forces "compiled" or "python" (used by tests and the benchmark);
    the default is the active lane selected at import.
    """
    if out is None:
        out = allocate_records(n_shots)
    impl = _impl
    if lane == "python":
        impl = _py_impl
    elif lane == "compiled":
        if ACTIVE_LANE != "compiled":
            raise RuntimeError("compiled kernel not available")
        impl = _impl
    impl.run_batch(prog, seed, shot0, n_shots, delta, out)
    return out
