"""BLAS thread control for the small-matrix hot paths.

Neighbourhood-scale factorizations (m up to ~1000) run fastest with
single-threaded BLAS; multi-threaded OpenBLAS spin-waits dominate at these
sizes.  Parallelism belongs at the query level instead, so the hot loops
wrap themselves in a single-threaded BLAS context.
"""

from __future__ import annotations

from contextlib import nullcontext

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover - threadpoolctl ships with scipy stacks
    threadpool_limits = None


def single_threaded_blas():
    if threadpool_limits is None:
        return nullcontext()
    return threadpool_limits(limits=1, user_api="blas")
