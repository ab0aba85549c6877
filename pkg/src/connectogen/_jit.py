"""Optional numba acceleration for hot graph kernels.

Set CONNECTOGEN_DISABLE_NUMBA=1 to force the pure-Python/numpy path (same
code, undecorated).  Both paths execute identical statements; results agree
bitwise except for last-ulp libm differences (cbrt).  Each path is fully
deterministic on its own.
"""

import os
import warnings


def numba_enabled() -> bool:
    flag = os.environ.get("CONNECTOGEN_DISABLE_NUMBA", "").strip().lower()
    return flag not in ("1", "true", "yes")


if numba_enabled():
    try:
        from numba import njit as _njit

        def maybe_jit(func):
            return _njit(cache=True)(func)

        JIT_ACTIVE = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        warnings.warn("numba unavailable; falling back to pure numpy kernels")

        def maybe_jit(func):
            return func

        JIT_ACTIVE = False
else:

    def maybe_jit(func):
        return func

    JIT_ACTIVE = False
