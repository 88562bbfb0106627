import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, List

import numpy as np

from cslfisher.configuration_service import ConfigurationService

logger = logging.getLogger(__name__)

SCALES = ('linear', 'log10')


class Model:
    """
    Base class for calculations that evaluate independent grid points.
    """

    def __init__(self, config: ConfigurationService = None, jobs: int = None):
        self._config = config if config else ConfigurationService()
        self.jobs = jobs if jobs else self._config.jobs

    @staticmethod
    def build_grid(scale: str, minimum: float, maximum: float, points: int) -> np.ndarray:
        """
        Evenly spaced axis values.

        Args:
            scale: 'linear' or 'log10'. For log10 the bounds are exponents.
            minimum: First value (or exponent).
            maximum: Last value (or exponent).
            points: Number of grid points.

        Returns:
            Ascending array of axis values.
        """
        if scale not in SCALES:
            raise ValueError(f'Unknown scale {scale}')
        if points < 2 or not minimum < maximum:
            raise ValueError(f'Need at least two points and min < max, got {points}, [{minimum}, {maximum}]')
        if scale == 'log10':
            return np.logspace(minimum, maximum, points)
        return np.linspace(minimum, maximum, points)

    def map_ordered(self, func: Callable[[Any], Any], items: Iterable[Any]) -> List[Any]:
        """
        Applies func to every item, in worker processes when more than one job is configured. Results come back in
        input order.

        Args:
            func: A picklable (module level) callable.
            items: Work items.

        Returns:
            List of results in the order of items.
        """
        items = list(items)
        workers = min(self.jobs, len(items))
        if workers <= 1:
            return [func(item) for item in items]
        logger.info(f'Computing {len(items)} rows over {workers} workers.')
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(func, items))
