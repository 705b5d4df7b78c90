import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, Union

import numpy as np
from tqdm import tqdm

logger = logging.getLogger(__name__)

DEFAULT_CHUNK = 1000


class ParallelRunner:
    """Thread pool that reduces results in index order.

    Work is split into fixed-size chunks and every chunk gets its own RNG stream from
    ``SeedSequence(seed).spawn``, so outputs depend on the seed and chunk size only,
    never on ``max_workers``.
    """

    def __init__(self, max_workers: int = 1, show_progress: bool = True):
        self.max_workers = max(1, int(max_workers))
        self.show_progress = show_progress

    def _run(self, tasks: Sequence[Callable], desc: str) -> List:
        if self.max_workers == 1:
            return [task() for task in tqdm(tasks, desc=desc, disable=not self.show_progress)]
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            futures = [executor.submit(task) for task in tasks]
            # Collect in submission order
            return [future.result() for future in tqdm(futures, desc=desc, disable=not self.show_progress)]

    def map_chunks(self, fn: Callable[[int, int, np.random.Generator], np.ndarray], n_items: int,
                   seed: Union[int, Sequence[int]], chunk_size: int = DEFAULT_CHUNK,
                   desc: str = "Processing") -> np.ndarray:
        """Call ``fn(start, stop, rng)`` on consecutive ranges and stack the results"""
        if n_items <= 0:
            return np.zeros(0)
        bounds = [(start, min(start + chunk_size, n_items)) for start in range(0, n_items, chunk_size)]
        streams = np.random.SeedSequence(seed).spawn(len(bounds))
        tasks = [
            (lambda b=b, s=s: fn(b[0], b[1], np.random.default_rng(s)))
            for b, s in zip(bounds, streams)
        ]
        logger.debug(f"{desc}: {n_items} items in {len(bounds)} chunks on {self.max_workers} threads")
        return np.concatenate([np.asarray(part) for part in self._run(tasks, desc)])

    def map_indexed(self, fn: Callable[[int], float], n_items: int, desc: str = "Processing") -> List:
        """Call ``fn(i)`` for every index; ``fn`` derives its own randomness from ``i``"""
        tasks = [(lambda i=i: fn(i)) for i in range(n_items)]
        return self._run(tasks, desc)
