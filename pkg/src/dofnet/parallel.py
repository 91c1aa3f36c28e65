import os
from concurrent.futures import ThreadPoolExecutor


def default_threads() -> int:
    env = os.environ.get("DOFNET_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def pmap(func, items, threads: int | None = None) -> list:
    """Ordered map.  The compiled trainer releases the GIL, so threads scale."""
    items = list(items)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
