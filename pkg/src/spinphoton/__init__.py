"""spinphoton: Monte-Carlo simulator of an NV-center time-bin spin-photon
entanglement link with deterministic optical routing.

The trajectory sampler runs on a compiled kernel when available (with a
bit-identical pure-Python fallback), and every result can be checked
against an exact density-matrix pipeline.
"""

from .kernel import ACTIVE_LANE

__version__ = "0.1.0"
__all__ = ["ACTIVE_LANE", "__version__"]
