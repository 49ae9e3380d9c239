"""Hot time-stepping loops, compiled with numba when available.

Every kernel is written once in plain numpy-compatible Python. When numba
imports and ``GRADEDMECH_DISABLE_NUMBA`` is unset (or ``0``), the public
names are ``numba.njit`` versions of those functions; otherwise they are the
plain functions themselves. The uncompiled originals stay reachable as
``*_py`` for comparison and benchmarking.

Callables handed to a compiled kernel must themselves be compiled; use
:func:`jit` on generated expression functions before passing them in.
"""

from __future__ import annotations

import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

__all__ = ["NUMBA_ENABLED", "jit", "rk4_fixed", "separable_run", "EXPLICIT_EULER", "SYMPLECTIC_EULER", "VERLET"]


def _flag_disabled() -> bool:
    return os.environ.get("GRADEDMECH_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")


try:
    if _flag_disabled():
        raise ImportError("disabled by GRADEDMECH_DISABLE_NUMBA")
    import numba

    NUMBA_ENABLED = True
except ImportError as exc:
    numba = None
    NUMBA_ENABLED = False
    logger.debug("numba kernels off: %s", exc)


def jit(fn):
    """``numba.njit(fn)`` when kernels are compiled, else ``fn`` unchanged."""
    if NUMBA_ENABLED:
        return numba.njit(fn)
    return fn


EXPLICIT_EULER = 0
SYMPLECTIC_EULER = 1
VERLET = 2


def rk4_fixed_py(rhs, y0, t0, h, nsteps, stride):
    """Classical fixed-step RK4 for ``y' = rhs(t, y)``.

    Returns sample times and states for steps ``0, stride, 2*stride, ...``.
    Times are ``t0 + k*h`` (not accumulated) so runs are reproducible.
    """
    nsamp = nsteps // stride + 1
    ts = np.empty(nsamp)
    ys = np.empty((nsamp, y0.shape[0]))
    y = y0.copy()
    ts[0] = t0
    ys[0] = y
    half = 0.5 * h
    sixth = h / 6.0
    j = 1
    for k in range(nsteps):
        t = t0 + k * h
        k1 = rhs(t, y)
        k2 = rhs(t + half, y + half * k1)
        k3 = rhs(t + half, y + half * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (k + 1) % stride == 0:
            ts[j] = t0 + (k + 1) * h
            ys[j] = y
            j += 1
    return ts, ys


def separable_run_py(method, grad_t, grad_v, q0, p0, h, nsteps, stride):
    """Fixed-step run for ``H = T(p) + V(q)``; ``grad_t(p)``, ``grad_v(q)``.

    ``method`` is one of the module constants. Symplectic Euler updates the
    momentum first (``p+ = p - h V'(q)``, ``q+ = q + h T'(p+)``); Verlet is
    kick-drift-kick.
    """
    nsamp = nsteps // stride + 1
    n = q0.shape[0]
    qs = np.empty((nsamp, n))
    ps = np.empty((nsamp, n))
    q = q0.copy()
    p = p0.copy()
    qs[0] = q
    ps[0] = p
    j = 1
    for k in range(nsteps):
        if method == 0:
            dq = grad_t(p)
            dp = grad_v(q)
            q = q + h * dq
            p = p - h * dp
        elif method == 1:
            p = p - h * grad_v(q)
            q = q + h * grad_t(p)
        else:
            p = p - (0.5 * h) * grad_v(q)
            q = q + h * grad_t(p)
            p = p - (0.5 * h) * grad_v(q)
        if (k + 1) % stride == 0:
            qs[j] = q
            ps[j] = p
            j += 1
    return qs, ps


rk4_fixed = jit(rk4_fixed_py)
separable_run = jit(separable_run_py)
