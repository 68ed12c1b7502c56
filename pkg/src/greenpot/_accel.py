"""Backend dispatch for the hot evaluation kernels.

The numba-compiled implementations are used by default. Setting the
environment variable ``GREENPOT_NUMBA=0`` before import selects the
pure-numpy fallback (useful on platforms without a working numba, and
for benchmarking; see ``benchmarks/compare_backends.py``).
"""

import os

_flag = os.environ.get("GREENPOT_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "no", "off")

if _want_numba:
    try:
        from . import _accel_numba as _impl

        USING_NUMBA = True
    except ImportError:
        from . import _accel_numpy as _impl

        USING_NUMBA = False
else:
    from . import _accel_numpy as _impl

    USING_NUMBA = False

log_potential_matrix = _impl.log_potential_matrix
log_potential_pairs = _impl.log_potential_pairs
log_potential_gradient = _impl.log_potential_gradient
rect_green_matrix = _impl.rect_green_matrix
rect_green_pairs = _impl.rect_green_pairs
rect_green_gradient = _impl.rect_green_gradient
rect_green_gradient_pairs = _impl.rect_green_gradient_pairs
rect_green_regular_matrix = _impl.rect_green_regular_matrix
rect_green_regular_gradient = _impl.rect_green_regular_gradient
rect_green_regular_gradient_pairs = _impl.rect_green_regular_gradient_pairs
