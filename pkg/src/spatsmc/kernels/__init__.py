"""Hot-kernel backend selection.

The compiled extension (spatsmc.kernels._speedups) is preferred when it
imports cleanly; otherwise the pure numpy implementations are used.  Set
SPATSMC_PURE_PYTHON=1 to force the fallback.  bench/bench_kernels.py compares
the two.
"""

import os

from . import pure

if os.environ.get("SPATSMC_PURE_PYTHON") == "1":
    _impl = pure
else:
    try:
        from . import _speedups as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = pure

BACKEND = _impl.BACKEND

euler_multinomial = _impl.euler_multinomial
gamma_white_noise = _impl.gamma_white_noise
systematic_positions = _impl.systematic_positions
measles_euler_sweep = _impl.measles_euler_sweep


def backend_name() -> str:
    """Name of the active kernel backend: 'compiled' or 'pure'."""
    return BACKEND
