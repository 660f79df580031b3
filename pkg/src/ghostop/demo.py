"""Built-in example: three 5x5 blocks stored as slabs of one 3-D index space.

Block 1 takes its left ghosts from block 0 through an interpolation
matrix, its right ghosts from block 2 through a rotated index mapping, and
zeros in the remaining ghost cells.
"""
from __future__ import annotations

from pathlib import Path

from .config import csr_from_rows
from .region import Region

DATA = Region.box((0, 3, 1), (0, 5, 1), (0, 5, 1))
FULL = Region.box((0, 3, 1), (-1, 6, 1), (-1, 6, 1))
LEFT = Region.box((1, 2, 1), (0, 5, 1), (-1, 0, 1))
RIGHT = Region.box((1, 2, 1), (0, 5, 1), (5, 6, 1))


def left_rows():
    """Non-conforming interface: each ghost mixes two cells of block 0's last column."""
    rows = []
    for _, j, _ in LEFT:
        nb = j + 1 if j < 4 else j - 1
        rows.append([((0, j, 4), 0.75), ((0, nb, 4), 0.25)])
    return rows


def left_storage():
    return csr_from_rows(left_rows(), LEFT, DATA)


def write_payload(path) -> Path:
    path = Path(path)
    left_storage().save(path)
    return path
