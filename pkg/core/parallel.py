"""
Ordered parallel map over a process pool.

Results always come back in task order, so reductions over them are
deterministic whatever the number of workers.
"""
import logging
from multiprocessing import get_context

logger = logging.getLogger(__name__)


def ordered_map(func, tasks, workers: int = 1):
    """
    Apply func to every task and return the results in task order.

    Args:
        func: picklable top-level callable
        tasks: iterable of single arguments
        workers: number of worker processes; 1 runs inline

    Returns:
        list of results
    """
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]

    processes = min(workers, len(tasks))
    logger.debug("Dispatching %d tasks to %d workers", len(tasks), processes)
    # fork keeps the configured Django settings available in the workers
    with get_context('fork').Pool(processes=processes) as pool:
        return pool.map(func, tasks, chunksize=1)
