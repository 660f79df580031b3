"""NumPy implementations of the kernels in ``_kernels.pyx``.

Used when the compiled extension is missing or ``GHOSTOP_PURE=1``.
Accumulation order per cell matches the compiled loops exactly.
"""
import numpy as np

NAME = "numpy"


def _box_addresses(table, base_col, stride_col):
    out = []
    for row in table:
        counts = row[1:5]
        grids = np.meshgrid(*[np.arange(n, dtype=np.int64) for n in counts], indexing="ij")
        addr = row[base_col] + sum(g * row[stride_col + d] for d, g in enumerate(grids))
        out.append(addr.ravel())
    return out


def expand_zero(table):
    return np.concatenate(_box_addresses(table, 5, 6))


def expand_affine(table, w):
    """Flat ``(yaddr, xaddr, weight)`` arrays for an affine box table."""
    ys = _box_addresses(table, 5, 6)
    xs = _box_addresses(table, 10, 11)
    wa = np.repeat(np.asarray(w, dtype=np.float64), [len(a) for a in ys])
    return np.concatenate(ys), np.concatenate(xs), wa


def zero_cells(y, ya, ncomp):
    y.reshape(-1, ncomp)[ya] = 0.0


def axpy_distinct(y, x, ya, xa, wa, ncomp):
    # box cells are distinct, so buffered fancy-index accumulation is safe
    y2 = y.reshape(-1, ncomp)
    y2[ya] += wa[:, None] * x.reshape(-1, ncomp)[xa]


def zero_boxes(y, table, ncomp):
    if len(table) == 0:
        return
    zero_cells(y, expand_zero(table), ncomp)


def affine_axpy(y, x, table, w, ncomp):
    if len(table) == 0:
        return
    axpy_distinct(y, x, *expand_affine(table, w), ncomp)


def gather_axpy(y, x, yaddr, xaddr, w, ncomp):
    if len(yaddr) == 0:
        return
    np.add.at(y.reshape(-1, ncomp), yaddr, np.asarray(w)[:, None] * x.reshape(-1, ncomp)[xaddr])


def gather_axpy_data(y, x, yaddr, xaddr, daddr, data, ncomp):
    if len(yaddr) == 0:
        return
    w = np.asarray(data)[daddr]
    np.add.at(y.reshape(-1, ncomp), yaddr, w[:, None] * x.reshape(-1, ncomp)[xaddr])


def add_values(y, yaddr, v, ncomp):
    if len(yaddr) == 0:
        return
    np.add.at(y.reshape(-1, ncomp), yaddr, np.asarray(v)[:, None])


def pack(x, addr, out, ncomp):
    out.reshape(-1, ncomp)[:] = x.reshape(-1, ncomp)[addr]


def unpack(x, addr, buf, ncomp):
    x.reshape(-1, ncomp)[addr] = buf.reshape(-1, ncomp)
