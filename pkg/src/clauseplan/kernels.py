"""Hot enumeration kernels: cost components for batches of order schedules.

Two interchangeable implementations with bitwise-identical outputs:

* a numba ``@njit`` kernel (default when numba is importable), and
* a pure-numpy vectorized fallback.

Selection: set ``CLAUSEPLAN_NUMBA=0`` to force the numpy path, ``=1`` to
require numba. Unset picks numba when available, except for small batches
where JIT latency would dominate. ``benchmarks/compare_kernels.py`` times
both paths.

All simulation arithmetic is integer (quantities, shortfalls, unit-periods
held), so both paths produce exactly equal components; costs are formed once
from the integer components in a single shared numpy expression.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

# orders per period are restricted to this quantized action set
ACTION_SET = (0, 50, 100, 150, 200, 300, 400, 450, 600)

# batches smaller than this run the numpy path even when numba is available
_SMALL_BATCH = 4096

_ENV_FLAG = "CLAUSEPLAN_NUMBA"

_schedule_cache: dict[tuple, np.ndarray] = {}


def build_schedules(horizon: int, grid: tuple[int, ...] = ACTION_SET) -> np.ndarray:
    """All grid schedules of length `horizon` in lexicographic order.

    Row i spells the base-len(grid) digits of i, most significant first, so
    np.argmin over per-row costs lands on the lexicographically smallest
    minimizer.
    """
    key = (horizon, grid)
    cached = _schedule_cache.get(key)
    if cached is None:
        values = np.asarray(grid, dtype=np.int64)
        k = len(grid)
        idx = np.arange(k**horizon, dtype=np.int64)
        digits = np.empty((k**horizon, horizon), dtype=np.int64)
        for col in range(horizon - 1, -1, -1):
            digits[:, col] = idx % k
            idx //= k
        cached = values[digits]
        cached.setflags(write=False)
        _schedule_cache[key] = cached
    return cached


def _components_numpy(schedules: np.ndarray, demand: np.ndarray,
                      lead: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, horizon = schedules.shape
    total_q = schedules.sum(axis=1)
    inv = np.zeros(n, dtype=np.int64)
    emergency = np.zeros(n, dtype=np.int64)
    held = np.zeros(n, dtype=np.int64)
    for t in range(horizon):
        src = t - lead
        if src >= 0:
            inv = inv + schedules[:, src]
        short = demand[t] - inv
        np.maximum(short, 0, out=short)
        emergency += short
        inv = np.maximum(inv - demand[t], 0)
        held += inv
    return total_q, emergency, held


def _components_loop(schedules, demand, lead, total_q, emergency, held):
    n, horizon = schedules.shape
    for i in range(n):
        inv = 0
        emerg = 0
        hold = 0
        tq = 0
        for t in range(horizon):
            tq += schedules[i, t]
            src = t - lead
            if src >= 0:
                inv += schedules[i, src]
            short = demand[t] - inv
            if short > 0:
                emerg += short
            inv -= demand[t]
            if inv < 0:
                inv = 0
            hold += inv
        total_q[i] = tq
        emergency[i] = emerg
        held[i] = hold


if HAS_NUMBA:
    _components_numba = njit(cache=True)(_components_loop)


def _use_numba(n_rows: int) -> bool:
    flag = os.environ.get(_ENV_FLAG, "").strip().lower()
    if flag in ("0", "false", "off", "no"):
        return False
    if flag in ("1", "true", "on", "yes"):
        if not HAS_NUMBA:
            raise RuntimeError(f"{_ENV_FLAG}={flag!r} but numba is not installed")
        return True
    return HAS_NUMBA and n_rows >= _SMALL_BATCH


def active_kernel(n_rows: int = 10**9) -> str:
    return "numba" if _use_numba(n_rows) else "numpy"


def schedule_components(schedules: np.ndarray, demand, lead: int,
                        impl: str | None = None):
    """Integer cost components per schedule.

    Returns (units purchased, emergency units, unit-periods held), each
    int64[n]. Orders placed at t arrive at t+lead; arrivals beyond the
    horizon are still purchased; shortfalls are met by emergency units;
    holding accrues on end-of-period inventory every period including the
    last.
    """
    schedules = np.ascontiguousarray(schedules, dtype=np.int64)
    demand = np.ascontiguousarray(demand, dtype=np.int64)
    if impl is None:
        impl = active_kernel(schedules.shape[0])
    if impl == "numba":
        n = schedules.shape[0]
        total_q = np.empty(n, dtype=np.int64)
        emergency = np.empty(n, dtype=np.int64)
        held = np.empty(n, dtype=np.int64)
        _components_numba(schedules, demand, int(lead), total_q, emergency, held)
        return total_q, emergency, held
    if impl == "numpy":
        return _components_numpy(schedules, demand, int(lead))
    raise ValueError(f"unknown kernel impl {impl!r}")


def schedule_costs(schedules: np.ndarray, demand, moq: int, lead: int,
                   c_cheap: float, c_exp: float, h: float,
                   impl: str | None = None) -> np.ndarray:
    """Planning cost per schedule; +inf where the MOQ dichotomy is violated."""
    schedules = np.ascontiguousarray(schedules, dtype=np.int64)
    total_q, emergency, held = schedule_components(schedules, demand, lead, impl)
    costs = total_q * c_cheap + emergency * c_exp + held * h
    if moq > 0:
        valid = ((schedules == 0) | (schedules >= moq)).all(axis=1)
        costs = np.where(valid, costs, np.inf)
    return costs
