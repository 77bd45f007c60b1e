"""Small shared helpers: thread resolution and slot-parallel maps."""

import os
from concurrent.futures import ThreadPoolExecutor


def resolve_threads(threads=None):
    """Worker count: explicit argument, else RCCLT_THREADS, else cpu count."""
    if threads is None:
        env = os.environ.get("RCCLT_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def run_slots(n_tasks, fn, threads):
    """Run fn(0..n_tasks-1), each writing only its own preallocated slot.

    Output is independent of the worker count because tasks are disjoint
    by construction; the pool only changes scheduling.
    """
    if threads <= 1 or n_tasks <= 1:
        for i in range(n_tasks):
            fn(i)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for _ in pool.map(fn, range(n_tasks)):
            pass
