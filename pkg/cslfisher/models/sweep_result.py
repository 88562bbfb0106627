import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, TextIO, Tuple

import pandas as pd

ERROR_PREFIX = 'ERR:'


@dataclass
class SweepResult:
    """
    Ordered sweep table.

    Args:
        axis: Name of the swept quantity.
        axis_unit: Its unit.
        columns: (name, unit) of every column after the axis, in output order.
        frame: One row per grid point, columns axis followed by the names in columns.
        errors: Per-row error code (for example 'unstable') or None. Output cells of a failed row are not meaningful.
        label: Free text carried from the configuration.
    """
    axis: str
    axis_unit: str
    columns: List[Tuple[str, str]]
    frame: pd.DataFrame
    errors: List[Optional[str]] = field(default_factory=list)
    label: str = ''

    def __post_init__(self):
        if not self.errors:
            self.errors = [None] * len(self.frame)
        if len(self.errors) != len(self.frame):
            raise ValueError('errors must have one entry per row')
        expected = [self.axis] + [name for name, _ in self.columns]
        if list(self.frame.columns) != expected:
            raise ValueError(f'Frame columns {list(self.frame.columns)} do not match {expected}')

    @property
    def header(self) -> List[str]:
        return [f'{self.axis} ({self.axis_unit})'] + [f'{name} ({unit})' for name, unit in self.columns]

    @property
    def failed_rows(self) -> int:
        return sum(1 for e in self.errors if e)


def emit_csv(result: SweepResult, destination: TextIO, protected: Tuple[str, ...] = ('Lambda',)) -> None:
    """
    Writes the sweep as CSV with 17 significant digits.

    Args:
        result: The sweep.
        destination: Writable text stream.
        protected: Columns that stay numeric in failed rows, unless they could not be computed either.
    """
    writer = csv.writer(destination, lineterminator='\n')
    writer.writerow(result.header)
    names = list(result.frame.columns)
    keep = {result.axis, *protected}
    for values, error in zip(result.frame.itertuples(index=False, name=None), result.errors):
        row = []
        for name, value in zip(names, values):
            if error and (name not in keep or not math.isfinite(value)):
                row.append(f'{ERROR_PREFIX}{error}')
            else:
                row.append(format_value(value))
        writer.writerow(row)


def format_value(value: float) -> str:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f'Non-finite value {value} in sweep output')
    return '{:.17g}'.format(value)
