"""Basic sub-matrices and sub-vectors, and constructors for common BCs.

A boundary operator ``y = A x + b`` is assembled from pieces that each
cover part of the rows:

* :class:`SubMatrix` -- a resolvable validity predicate over the output
  index plus a row iterator producing ``(column, weight, gid)`` entries.
* :class:`SubVector` -- a validity predicate plus a value expression
  contributing to ``b``.

Rows come either from a :class:`StaticRow` (a fixed list of entry
templates whose columns are index expressions, folded at staging time)
or from a :class:`DynamicRow` (callbacks evaluated per cell, typically
reading CSR or ELL arrays).  Where several pieces are valid at one cell
their contributions add up.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, UsageError
from .expr import (
    FALSE, And, BoolExpr, FLit, Idx, InArea, IntExpr, Lit, Max, Min, ModLit, Not, Or,
    WeightExpr, _wlit, Binding, eval_int, eval_weight,
)
from .region import Region, boxes_from_mask, bounding_box

Index = tuple[int, ...]


@dataclass(frozen=True)
class StaticEntry:
    col: tuple[IntExpr, ...]
    weight: WeightExpr = FLit(1.0)
    gid: IntExpr = Lit(0)


@dataclass(frozen=True)
class StaticRow:
    """Row whose entry count is known at staging time."""

    entries: tuple[StaticEntry, ...] = ()

    def row(self, idx: Index, arrays=None) -> list[tuple[Index, float, int]]:
        b = Binding(idx, arrays=arrays or {})
        return [
            (tuple(int(eval_int(c, b)) for c in e.col), eval_weight(e.weight, b), int(eval_int(e.gid, b)))
            for e in self.entries
        ]


class DynamicRow:
    """Row iterator driven by ``f_nnz``/``f_col``/``f_data``/``f_gid`` callbacks.

    ``f_nnz(idx)`` returns ``(nnz, info)``; the other three receive
    ``(idx, nnz, info, offset)``.  Callbacks must be pure.
    """

    def __init__(self, f_nnz, f_col, f_data, f_gid=None):
        self.f_nnz = f_nnz
        self.f_col = f_col
        self.f_data = f_data
        self.f_gid = f_gid or (lambda idx, nnz, info, off: 0)

    def row(self, idx: Index, arrays=None) -> list[tuple[Index, float, int]]:
        nnz, info = self.f_nnz(idx)
        return [
            (tuple(int(c) for c in self.f_col(idx, nnz, info, k)),
             float(self.f_data(idx, nnz, info, k)),
             int(self.f_gid(idx, nnz, info, k)))
            for k in range(int(nnz))
        ]

    def structure(self, idx: Index):
        """``[(col, gid, data_address)]``; the address is ``None`` without backing storage."""
        nnz, info = self.f_nnz(idx)
        return [
            (tuple(int(c) for c in self.f_col(idx, nnz, info, k)),
             int(self.f_gid(idx, nnz, info, k)), None)
            for k in range(int(nnz))
        ]

    flat_data = None


def wrap_to_iterator(f_list=None, *, f_nnz=None, f_col=None, f_data=None, f_gid=None, ndim=None):
    """Build a row iterator the way boundary authors describe one.

    With ``f_list`` the function is called once with symbolic index
    variables ``(i0, i1, ...)`` and must return ``[(cols, weight[, gid])]``;
    the resulting expressions become a :class:`StaticRow`.  Otherwise the
    four callbacks make a :class:`DynamicRow`.
    """
    if f_list is not None:
        if ndim is None:
            raise UsageError("ndim is required to stage an f_list")
        entries = []
        for item in f_list(tuple(Idx(d) for d in range(ndim))):
            cols, weight, *gid = item
            entries.append(StaticEntry(
                tuple(c if isinstance(c, IntExpr) else Lit(int(c)) for c in cols),
                _wlit(weight),
                (gid[0] if gid and isinstance(gid[0], IntExpr) else Lit(int(gid[0]) if gid else 0)),
            ))
        return StaticRow(tuple(entries))
    if f_nnz is None or f_col is None or f_data is None:
        raise UsageError("dynamic iterators need f_nnz, f_col and f_data")
    return DynamicRow(f_nnz, f_col, f_data, f_gid)


@dataclass(frozen=True, eq=False)
class SubMatrix:
    is_valid: BoolExpr
    row_iter: StaticRow | DynamicRow
    n_group: int = 1
    name: str = ""
    kind: str = "custom"
    arrays: Mapping[str, np.ndarray] = field(default_factory=dict)

    @property
    def is_static(self) -> bool:
        return isinstance(self.row_iter, StaticRow)


@dataclass(frozen=True, eq=False)
class SubVector:
    is_valid: BoolExpr
    value: WeightExpr
    name: str = ""
    kind: str = "pure_function"
    arrays: Mapping[str, np.ndarray] = field(default_factory=dict)


# ---------------------------------------------------------------- storage

def _as_index_map(m, what):
    if isinstance(m, Region):
        return m.ordinal if what == "calc_addr" else m.unravel
    if isinstance(m, Mapping):
        return lambda k: m[tuple(k)] if what == "calc_addr" else m[k]
    if isinstance(m, Sequence):
        return lambda k: tuple(m[k])
    if callable(m):
        return m
    raise UsageError(f"{what} must be a Region, mapping or callable")


@dataclass
class CsrStorage:
    """CSR arrays plus index translations.

    ``calc_addr`` maps an output index vector to its row; ``extract`` maps a
    packed column integer to the input index vector.  Passing a
    :class:`Region` for either uses its row-major ordinal (the mixed-radix
    encoding over the region's shape).
    """

    row_ptr: np.ndarray
    col: np.ndarray
    data: np.ndarray
    calc_addr: Any
    extract: Any

    def __post_init__(self):
        self.row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        self.col = np.ascontiguousarray(self.col, dtype=np.int64)
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        self._row_of = _as_index_map(self.calc_addr, "calc_addr")
        self._col_of = _as_index_map(self.extract, "extract")
        self.validate()

    @property
    def n_rows(self) -> int:
        return len(self.row_ptr) - 1

    @property
    def nnz(self) -> int:
        return len(self.col)

    def validate(self) -> None:
        rp = self.row_ptr
        if rp.ndim != 1 or len(rp) < 1 or rp[0] != 0:
            raise DataError("row_ptr must start at 0")
        if np.any(np.diff(rp) < 0):
            raise DataError("row_ptr must be nondecreasing")
        if rp[-1] != len(self.col) or len(self.col) != len(self.data):
            raise DataError(
                f"nnz mismatch: row_ptr ends at {rp[-1]}, {len(self.col)} cols, {len(self.data)} values")

    def row_of(self, idx: Index) -> int:
        try:
            r = int(self._row_of(tuple(idx)))
        except (KeyError, UsageError) as exc:
            raise ConfigurationError(f"calc_addr has no row for {tuple(idx)}") from exc
        if not 0 <= r < self.n_rows:
            raise ConfigurationError(f"calc_addr({tuple(idx)}) = {r} outside [0, {self.n_rows})")
        return r

    def col_index(self, packed: int) -> Index:
        return tuple(int(c) for c in self._col_of(int(packed)))

    # binary format: b"BCSR", <q n_rows, <q nnz, row_ptr, col, data (little endian)
    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(b"BCSR")
            fh.write(struct.pack("<qq", self.n_rows, self.nnz))
            fh.write(self.row_ptr.astype("<i8").tobytes())
            fh.write(self.col.astype("<i8").tobytes())
            fh.write(self.data.astype("<f8").tobytes())

    @classmethod
    def load(cls, path, calc_addr, extract) -> "CsrStorage":
        raw = Path(path).read_bytes()
        if raw[:4] != b"BCSR":
            raise DataError(f"{path}: bad magic {raw[:4]!r}")
        n_rows, nnz = struct.unpack_from("<qq", raw, 4)
        expected = 20 + 8 * (n_rows + 1) + 16 * nnz
        if n_rows < 0 or nnz < 0 or len(raw) != expected:
            raise DataError(f"{path}: size {len(raw)} does not match header ({expected})")
        off = 20
        row_ptr = np.frombuffer(raw, "<i8", n_rows + 1, off).copy()
        off += 8 * (n_rows + 1)
        col = np.frombuffer(raw, "<i8", nnz, off).copy()
        data = np.frombuffer(raw, "<f8", nnz, off + 8 * nnz).copy()
        return cls(row_ptr, col, data, calc_addr, extract)


class CsrRow(DynamicRow):
    """Row iterator over :class:`CsrStorage`, one row per output cell."""

    def __init__(self, storage: CsrStorage, gid: Callable[[Index], int] | None = None):
        st = storage
        self.storage = st

        def f_nnz(idx):
            pt = st.row_of(idx)
            a1, a2 = int(st.row_ptr[pt]), int(st.row_ptr[pt + 1])
            return a2 - a1, a1

        def f_col(idx, nnz, info, offset):
            return st.col_index(st.col[info + offset])

        def f_data(idx, nnz, info, offset):
            return float(st.data[info + offset])

        def f_gid(idx, nnz, info, offset):
            return gid(f_col(idx, nnz, info, offset)) if gid else 0

        super().__init__(f_nnz, f_col, f_data, f_gid)

    @property
    def flat_data(self):
        return self.storage.data

    def structure(self, idx):
        nnz, a1 = self.f_nnz(idx)
        return [
            (self.f_col(idx, nnz, a1, k), int(self.f_gid(idx, nnz, a1, k)), a1 + k)
            for k in range(nnz)
        ]


@dataclass
class EllStorage:
    """ELL arrays of shape ``(n_rows, width)``; column ``-1`` pads a row."""

    col: np.ndarray
    data: np.ndarray
    calc_addr: Any
    extract: Any

    def __post_init__(self):
        self.col = np.ascontiguousarray(self.col, dtype=np.int64)
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.col.ndim != 2 or self.col.shape != self.data.shape:
            raise DataError("ELL col and data must be equally shaped 2-D arrays")
        self._row_of = _as_index_map(self.calc_addr, "calc_addr")
        self._col_of = _as_index_map(self.extract, "extract")

    def row_of(self, idx):
        try:
            r = int(self._row_of(tuple(idx)))
        except (KeyError, UsageError) as exc:
            raise ConfigurationError(f"calc_addr has no row for {tuple(idx)}") from exc
        if not 0 <= r < self.col.shape[0]:
            raise ConfigurationError(f"calc_addr({tuple(idx)}) = {r} outside [0, {self.col.shape[0]})")
        return r


class EllRow(DynamicRow):
    def __init__(self, storage: EllStorage, gid=None):
        st = storage
        self.storage = st
        width = st.col.shape[1]

        def f_nnz(idx):
            r = st.row_of(idx)
            row = st.col[r]
            pad = np.flatnonzero(row < 0)
            return (int(pad[0]) if pad.size else width), r

        def f_col(idx, nnz, info, offset):
            return tuple(int(c) for c in st._col_of(int(st.col[info, offset])))

        def f_data(idx, nnz, info, offset):
            return float(st.data[info, offset])

        def f_gid(idx, nnz, info, offset):
            return gid(f_col(idx, nnz, info, offset)) if gid else 0

        super().__init__(f_nnz, f_col, f_data, f_gid)

    @property
    def flat_data(self):
        return self.storage.data.reshape(-1)

    def structure(self, idx):
        nnz, r = self.f_nnz(idx)
        w = self.storage.col.shape[1]
        return [
            (self.f_col(idx, nnz, r, k), int(self.f_gid(idx, nnz, r, k)), r * w + k)
            for k in range(nnz)
        ]


# ---------------------------------------------------------------- constructors

def _valid(region: Region, exclude: Sequence[Region] = ()) -> BoolExpr:
    parts = [InArea(region)] + [Not(InArea(r)) for r in exclude]
    return parts[0] if len(parts) == 1 else And(parts)


def _axis_extents(data_extent, axes, region: Region):
    """``{axis: (lo, last, step, n)}`` from a Region, mapping or (lo, hi) pair."""
    out = {}
    for a in axes:
        if isinstance(data_extent, Region):
            lo, hi, t = data_extent.dims[a]
        elif isinstance(data_extent, Mapping):
            lo, hi, *rest = data_extent[a]
            t = rest[0] if rest else region.dims[a][2]
        else:
            lo, hi, *rest = data_extent
            t = rest[0] if rest else region.dims[a][2]
        n = -(-(hi - lo) // t)
        if n <= 0:
            raise ConfigurationError(f"empty data extent on axis {a}")
        out[a] = (lo, lo + (n - 1) * t, t, n)
    return out


def _check_depth(region, a, lo, last, t, n, kind):
    if region.is_empty():
        return
    s = region.dims[a][0]
    rlast = region.lasts[a]
    depth = max(0, -(-(lo - s) // t), -(-(rlast - last) // t))
    if depth >= n:
        raise ConfigurationError(
            f"{kind} ghost depth {depth} on axis {a} must be smaller than the data extent {n}")


def _block_gid(cols, block_axis):
    return cols[block_axis] if block_axis is not None else Lit(0)


def make_simple(kind: str, region: Region, axis=None, data_extent=None, *,
                exclude: Sequence[Region] = (), block_axis: int | None = None,
                n_group: int = 1, name: str = "") -> SubMatrix:
    """Zero, halo-copy, circular or symmetric boundary over ``region``.

    ``axis`` may be a single dimension or a sequence of them (corners of a
    periodic box wrap on two axes).  ``data_extent`` is the data Region, a
    ``{axis: (lo, hi)}`` mapping, or one ``(lo, hi)`` pair.
    """
    nd = region.ndim
    ident = [Idx(d) for d in range(nd)]
    valid = _valid(region, exclude)
    if kind == "zero":
        return SubMatrix(valid, StaticRow(()), n_group, name or "zero", "zero")
    if kind == "halo_copy":
        entry = StaticEntry(tuple(ident), FLit(1.0), _block_gid(ident, block_axis))
        return SubMatrix(valid, StaticRow((entry,)), n_group, name or "halo_copy", "halo_copy")
    if kind not in ("circular", "symmetric"):
        raise UsageError(f"unknown simple boundary kind {kind!r}")
    if axis is None or data_extent is None:
        raise UsageError(f"{kind} needs axis and data_extent")
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    cols = list(ident)
    for a, (lo, last, t, n) in _axis_extents(data_extent, axes, region).items():
        _check_depth(region, a, lo, last, t, n, kind)
        i = Idx(a)
        if kind == "circular":
            cols[a] = Lit(lo) + ModLit(i + (-lo), n * t)
        else:
            cols[a] = Max(Min(i, (2 * last + t) - i), (2 * lo - t) - i)
    entry = StaticEntry(tuple(cols), FLit(1.0), _block_gid(cols, block_axis))
    return SubMatrix(valid, StaticRow((entry,)), n_group, name or kind, kind)


def make_mapping(region: Region, col_exprs: Sequence[IntExpr], weight=1.0, *,
                 exclude: Sequence[Region] = (), gid: IntExpr | None = None,
                 block_axis: int | None = None, n_group: int = 1, name: str = "") -> SubMatrix:
    """Single-entry rows whose column is an index expression of the cell."""
    cols = tuple(c if isinstance(c, IntExpr) else Lit(int(c)) for c in col_exprs)
    for c in cols:
        if not c.resolvable:
            raise ConfigurationError(f"mapping column {c} is not stage-1 resolvable")
    if gid is None:
        gid = _block_gid(cols, block_axis)
    entry = StaticEntry(cols, _wlit(weight), gid)
    return SubMatrix(_valid(region, exclude), StaticRow((entry,)), n_group, name or "mapping", "mapping")


def _check_rows(region, exclude, storage):
    for idx in region.enumerate():
        if any(r.contains(idx) for r in exclude):
            continue
        storage.row_of(idx)


def make_csr(region: Region, storage: CsrStorage, *, exclude: Sequence[Region] = (),
             gid: Callable[[Index], int] | None = None, n_group: int = 1,
             name: str = "") -> SubMatrix:
    _check_rows(region, exclude, storage)
    return SubMatrix(_valid(region, exclude), CsrRow(storage, gid), n_group, name or "csr", "csr")


def make_ell(region: Region, storage: EllStorage, *, exclude: Sequence[Region] = (),
             gid: Callable[[Index], int] | None = None, n_group: int = 1,
             name: str = "") -> SubMatrix:
    _check_rows(region, exclude, storage)
    return SubMatrix(_valid(region, exclude), EllRow(storage, gid), n_group, name or "ell", "ell")


def cover_points(points: Sequence[Index], ndim: int) -> BoolExpr:
    """Resolvable predicate true exactly on ``points``."""
    if not points:
        return FALSE
    frame = bounding_box(points)
    mask = np.zeros(frame.shape, dtype=bool)
    for p in points:
        mask[tuple(i - s for i, s in zip(p, frame.starts))] = True
    boxes = boxes_from_mask(mask, frame)
    parts = [InArea(b) for b in boxes]
    return parts[0] if len(parts) == 1 else Or(parts)


def make_edge_sync(groups: Sequence[Sequence[Index]], weights=None, *, ndim: int | None = None,
                   strict: bool = True, gid=None, n_group: int = 1, name: str = "") -> SubMatrix:
    """Averaging of cells that share one physical location.

    Each group lists coincident data cells; every member's row becomes the
    weighted combination of the whole group (uniform ``1/len`` by default).
    Rows whose weights do not sum to one raise unless ``strict=False``, in
    which case a warning is issued.
    """
    groups = [[tuple(int(v) for v in c) for c in g] for g in groups]
    cells = [c for g in groups for c in g]
    if ndim is None:
        if not cells:
            raise UsageError("ndim is required for an empty edge-sync group list")
        ndim = len(cells[0])
    if len(set(cells)) != len(cells):
        raise ConfigurationError("a cell appears in more than one edge-sync group")
    slot = {c: k for k, c in enumerate(cells)}
    row_ptr, col, data = [0], [], []
    for gi, g in enumerate(groups):
        w = [1.0 / len(g)] * len(g) if weights is None else [float(v) for v in weights[gi]]
        if len(w) != len(g):
            raise ConfigurationError(f"group {gi}: {len(w)} weights for {len(g)} cells")
        if abs(sum(w) - 1.0) > 1e-12:
            msg = f"edge-sync group {gi} weights sum to {sum(w)!r}, not 1"
            if strict:
                raise ConfigurationError(msg)
            warnings.warn(msg, stacklevel=2)
        for _ in g:
            col.extend(slot[m] for m in g)
            data.extend(w)
            row_ptr.append(len(col))
    storage = CsrStorage(np.array(row_ptr), np.array(col, dtype=np.int64), np.array(data),
                         calc_addr=slot, extract=cells)
    return SubMatrix(cover_points(cells, ndim), CsrRow(storage, gid), n_group,
                     name or "edge_sync", "edge_sync")


def make_pure_function(region: Region, value, *, exclude: Sequence[Region] = (),
                       name: str = "") -> SubVector:
    return SubVector(_valid(region, exclude), _wlit(value), name or "pure_function")


def make_custom(is_valid: BoolExpr, row_iter, n_group: int = 1, *, name: str = "",
                arrays=None) -> SubMatrix:
    if not is_valid.resolvable:
        raise ConfigurationError(f"is_valid is not stage-1 resolvable: {is_valid}")
    return SubMatrix(is_valid, row_iter, n_group, name or "custom", "custom", dict(arrays or {}))
