"""Order-preserving parallel map over independent units of work."""
from __future__ import annotations

import os

from joblib import Parallel, delayed

ENV_MAX_WORKERS = "SPINN_MAX_WORKERS"


def max_workers(n_jobs: int | None = None) -> int:
    """Resolve a worker count, capped by the ``SPINN_MAX_WORKERS`` variable."""
    cap = os.environ.get(ENV_MAX_WORKERS)
    cap = int(cap) if cap else None
    if n_jobs is None:
        n_jobs = cap if cap is not None else 1
    elif cap is not None:
        n_jobs = min(n_jobs, cap)
    return max(1, int(n_jobs))


def parallel_map(fn, units, n_jobs: int | None = None) -> list:
    """``[fn(*u) for u in units]``, possibly evaluated by a process pool."""
    workers = max_workers(n_jobs)
    if workers == 1 or len(units) <= 1:
        return [fn(*u) for u in units]
    return Parallel(n_jobs=workers)(delayed(fn)(*u) for u in units)
