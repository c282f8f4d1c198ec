from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, Tuple, TypeVar

import numpy as np

from simulation.rng import make_stream
from utils.settings import DEFAULT_BLOCK_SIZE

T = TypeVar("T")

# stream ids 0..N-1 are reserved for single paths; replication blocks start here
BLOCK_STREAM_OFFSET = 1 << 20


def split_blocks(reps: int, block_size: int = DEFAULT_BLOCK_SIZE) -> List[Tuple[int, int]]:
    """(block index, replication count) pairs covering reps in fixed-size chunks."""
    if reps < 1:
        raise ValueError("reps must be a positive integer")
    if block_size < 1:
        raise ValueError("block_size must be a positive integer")
    full, rest = divmod(reps, block_size)
    blocks = [(index, block_size) for index in range(full)]
    if rest:
        blocks.append((full, rest))
    return blocks


def run_blocks(
    work: Callable[[np.random.Generator, int], T],
    reps: int,
    seed: int,
    threads: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> List[T]:
    """Run ``work(rng, count)`` once per replication block and return results in block order.

    Each block owns the stream ``BLOCK_STREAM_OFFSET + index``; the worker count
    only changes scheduling, never the draws or their order.
    """
    blocks = split_blocks(reps, block_size)

    def _run(block: Tuple[int, int]) -> T:
        index, count = block
        return work(make_stream(seed, BLOCK_STREAM_OFFSET + index), count)

    logging.debug(f"Running {reps} replications in {len(blocks)} blocks on {threads} thread(s)")
    if threads <= 1 or len(blocks) == 1:
        return [_run(block) for block in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run, blocks))


def concat_blocks(parts: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(part) for part in parts]) if parts else np.empty(0)
