"""Kernel acceleration switch.

Hot numeric kernels (simulator inner loops, scalar samplers) are compiled
with numba when it is importable. Setting the environment variable
``LFI_NO_NUMBA=1`` before import forces the pure-Python/NumPy fallback: the
same functions run undecorated, so both paths consume random draws in the
same order and produce bit-identical results.
"""

import os


def _disabled_by_env() -> bool:
    return os.environ.get("LFI_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


NUMBA_ENABLED = False
if not _disabled_by_env():
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass


if NUMBA_ENABLED:

    def jit_kernel(fn):
        """Compile ``fn`` in nopython mode with on-disk caching."""
        return _njit(cache=True)(fn)

else:

    def jit_kernel(fn):
        """Fallback: run ``fn`` as plain Python."""
        return fn
