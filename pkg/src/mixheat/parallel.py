"""Fixed path-to-stream partitioning and order-preserving parallel map.

Paths are cut into blocks of ``block_size``; block b of a stream always draws
from ``RngStream.generator(b)``.  Results come back in block order, so sums
reduced over them do not depend on the worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

from .levy_sampling import RngStream

DEFAULT_BLOCK = 16384


def block_sizes(n_paths: int, block_size: int = DEFAULT_BLOCK) -> list[int]:
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    full, rest = divmod(n_paths, block_size)
    return [block_size] * full + ([rest] if rest else [])


def _run_one(args):
    fn, size, stream, block = args
    return fn(size, stream.generator(block))


def map_blocks(fn, n_paths: int, stream: RngStream, block_size: int = DEFAULT_BLOCK,
               workers: int = 1) -> list:
    """Call ``fn(size, generator)`` for every block; ``fn`` must be picklable when workers > 1."""
    tasks = [(fn, size, stream, b) for b, size in enumerate(block_sizes(n_paths, block_size))]
    if workers <= 1 or len(tasks) == 1:
        return [_run_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, tasks))


def as_stream(rng, default_stream: int = 0) -> RngStream:
    """Accept an RngStream or a bare integer seed."""
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int,)) and not isinstance(rng, bool):
        return RngStream(int(rng), default_stream)
    raise TypeError("expected an RngStream or an integer seed")
