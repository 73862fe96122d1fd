"""
CSV reading and writing with a fixed float format.

Every number goes through format_value, so two runs that compute the same
values write byte-identical files.
"""
import csv
from pathlib import Path

import numpy as np

from core.errors import ConfigurationError

FLOAT_FORMAT = '{:.12g}'


def format_value(value) -> str:
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return '1' if value else '0'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if np.isnan(value):
            return 'nan'
        if np.isinf(value):
            return 'inf' if value > 0 else '-inf'
        # avoid '-0'
        return FLOAT_FORMAT.format(value + 0.0)
    return str(value)


def write_csv(path, header, rows, comments=()) -> Path:
    """
    Write rows under a header line, preceded by '# ' comment lines.

    Args:
        path: output file (parent directories are created)
        header: column names
        rows: iterable of sequences or dicts keyed by header
        comments: lines written first, each prefixed with '# '

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as handle:
        for line in comments:
            handle.write(f"# {line}\n")
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(name) for name in header]
            writer.writerow([format_value(v) for v in row])
    return path


def read_csv(path) -> tuple:
    """
    Read a file written by write_csv.

    Returns:
        (comments, rows) where rows are dicts of strings keyed by header
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"CSV file not found: {path}")
    comments, body = [], []
    with path.open(newline='') as handle:
        for line in handle:
            if line.startswith('#'):
                comments.append(line[1:].strip())
            elif line.strip():
                body.append(line)
    if not body:
        raise ConfigurationError(f"CSV file {path} has no header")
    reader = csv.DictReader(body)
    return comments, list(reader)
