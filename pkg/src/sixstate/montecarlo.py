"""Deterministic sharded Monte Carlo driver.

Rounds are cut into fixed-size shards; shard ``k`` always draws from the
``k``-th child of ``SeedSequence(seed)``. Each shard returns a counter
array and the arrays are summed in shard order, so the result depends only
on ``(seed, rounds, shard_rounds)`` and not on how many workers ran it.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from typing import Callable

import numpy as np

from .quantum import make_rng

SHARD_ROUNDS = 1 << 16

Task = Callable[[int, np.random.Generator], np.ndarray]


def shard_sizes(rounds: int, shard_rounds: int = SHARD_ROUNDS) -> list[int]:
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    full, rest = divmod(rounds, shard_rounds)
    return [shard_rounds] * full + ([rest] if rest else [])


def _run_one(job):
    task, n, seq = job
    return np.asarray(task(n, make_rng(seq)))


def run_sharded(task: Task, rounds: int, seed: int, workers: int = 1,
                shard_rounds: int = SHARD_ROUNDS) -> np.ndarray:
    """Run ``task(n, rng)`` over all shards and return the summed counters.

    ``task`` must be picklable when ``workers > 1`` (a module-level
    function or a ``functools.partial`` of one).
    """
    sizes = shard_sizes(rounds, shard_rounds)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(task, n, s) for n, s in zip(sizes, seqs)]
    if workers <= 1 or len(jobs) == 1:
        parts = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_one, jobs))
    total = parts[0].copy()
    for p in parts[1:]:
        total = total + p
    return total


def binomial_se(p: float, n: int) -> float:
    """sqrt(p(1-p)/n); NaN for an empty sample."""
    if n <= 0:
        return math.nan
    return math.sqrt(max(p * (1 - p), 0.0) / n)
