"""Thread limits and parallel map helpers."""

import logging
from contextlib import contextmanager
from typing import Callable, Iterable, Iterator, List, Optional, TypeVar

from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

_log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@contextmanager
def limit_threads(threads: Optional[int]) -> Iterator[None]:
    """Bound BLAS/OpenMP threads; ``threads=1`` makes factorizations bit-reproducible."""
    if threads is None:
        yield
        return
    with threadpool_limits(limits=threads):
        _log.debug("BLAS threads limited to %d", threads)
        yield


def parallel_map(func: Callable[[T], R], items: Iterable[T], n_jobs: int = 1) -> List[R]:
    """Apply ``func`` to every item; results keep the input order."""
    items = list(items)
    if n_jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(func)(item) for item in items)


__all__ = ["limit_threads", "parallel_map"]
