"""
Read and write parity-check matrices in MacKay's alist text format.

Layout: "n m", "max_col_weight max_row_weight", the n column weights, the m
row weights, then one line per column listing its 1-based row indices
(zero padded) and one line per row listing its 1-based column indices.
"""
from pathlib import Path

import numpy as np
from scipy import sparse

from core.errors import ConfigurationError


def read_alist(path) -> sparse.csr_matrix:
    """
    Load a parity-check matrix.

    Args:
        path: alist file

    Returns:
        uint8 CSR matrix (m, n)
    """
    path = Path(path)
    try:
        lines = [line.split() for line in path.read_text().splitlines() if line.strip()]
    except OSError as exc:
        raise ConfigurationError(f"Cannot read alist file {path}: {exc}") from exc

    try:
        n, m = int(lines[0][0]), int(lines[0][1])
        column_lines = lines[4:4 + n]
        rows, cols = [], []
        for col, entries in enumerate(column_lines):
            for entry in entries:
                index = int(entry)
                if index:
                    rows.append(index - 1)
                    cols.append(col)
    except (IndexError, ValueError) as exc:
        raise ConfigurationError(f"Malformed alist file {path}") from exc

    if len(column_lines) != n:
        raise ConfigurationError(f"{path} declares {n} columns but lists {len(column_lines)}")
    data = np.ones(len(rows), dtype=np.uint8)
    return sparse.csr_matrix((data, (rows, cols)), shape=(m, n))


def write_alist(parity_check, path) -> Path:
    """Write a 0/1 matrix in alist format; returns the path written"""
    matrix = sparse.csr_matrix(parity_check, dtype=np.uint8)
    m, n = matrix.shape
    by_column = matrix.tocsc()
    col_weights = np.diff(by_column.indptr)
    row_weights = np.diff(matrix.indptr)
    max_col, max_row = int(col_weights.max()), int(row_weights.max())

    def padded(indices, width):
        values = [str(i + 1) for i in indices] + ['0'] * (width - len(indices))
        return ' '.join(values)

    out = [
        f"{n} {m}",
        f"{max_col} {max_row}",
        ' '.join(str(w) for w in col_weights),
        ' '.join(str(w) for w in row_weights),
    ]
    for col in range(n):
        out.append(padded(np.sort(by_column.indices[by_column.indptr[col]:by_column.indptr[col + 1]]), max_col))
    for row in range(m):
        out.append(padded(np.sort(matrix.indices[matrix.indptr[row]:matrix.indptr[row + 1]]), max_row))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text('\n'.join(out) + '\n')
    return path
