"""Hot numeric kernels: numba-jitted fast path with a pure-numpy fallback.

The simulator calls these once per uplink (pulse synthesis, peak scan) and
once per fix (point-in-polygon), so they dominate large-herd runs.  Both
implementations compute identical results element for element; the fallback
exists for environments without a working numba and for benchmarking.

Set ``CATTLESENSE_NO_NUMBA=1`` to force the numpy path.
"""

import os

__all__ = ["BACKEND", "peak_scan", "pulse_train", "point_in_polygon", "node_bpm"]


def _want_numba() -> bool:
    return os.environ.get("CATTLESENSE_NO_NUMBA", "").lower() not in ("1", "true", "yes")


if _want_numba():
    try:
        from cattlesense.kernels._njit import (
            node_bpm,
            peak_scan,
            point_in_polygon,
            pulse_train,
        )

        BACKEND = "numba"
    except ImportError:  # numba missing or broken: degrade silently
        from cattlesense.kernels._numpy import (
            node_bpm,
            peak_scan,
            point_in_polygon,
            pulse_train,
        )

        BACKEND = "numpy"
else:
    from cattlesense.kernels._numpy import node_bpm, peak_scan, point_in_polygon, pulse_train

    BACKEND = "numpy"
