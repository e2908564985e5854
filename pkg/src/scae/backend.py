"""Kernel backend selection.

The hot kernels (convolutions and the divisive-normalization channel mix)
exist twice: numba-compiled loops and pure-numpy equivalents.  The env var
``SCAE_BACKEND`` picks one:

    SCAE_BACKEND=numba   require numba, fail if it cannot be imported
    SCAE_BACKEND=numpy   force the pure-numpy path
    (unset)              numba when importable, numpy otherwise

``scripts/bench_kernels.py`` times the two side by side.
"""

import os

from .errors import ConfigError

_requested = os.environ.get("SCAE_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ConfigError(
        f"SCAE_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numpy":
    from . import _kernels_numpy as _impl
else:
    try:
        from . import _kernels_numba as _impl
    except ImportError:
        if _requested == "numba":
            raise ConfigError("SCAE_BACKEND=numba but numba is not importable")
        from . import _kernels_numpy as _impl

BACKEND = _impl.NAME

conv_fwd = _impl.conv_fwd
conv_scatter = _impl.conv_scatter
conv_kernel_grad = _impl.conv_kernel_grad
chan_affine = _impl.chan_affine
chan_outer = _impl.chan_outer


def active_backend() -> str:
    return BACKEND
