"""Executing boundary programs on one rank, and the dense reference.

Values of a :class:`GridVar` are stored row-major over the full region
with components innermost.  A program is lowered once per storage layout
into an :class:`ExecutionPlan`: every piece contributes a zero fill
followed by one operation per active row entry, and operations at the same
position are batched across pieces.  Pieces are disjoint, so batching
never changes the order in which contributions reach a cell.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels_py, kernels
from .boundary import StaticRow, SubMatrix, SubVector
from .errors import DataError, OutOfBoundsError, UsageError
from .expr import (
    Binding, eval_bool, eval_int, eval_weight, reads_arrays,
)
from .pruning import StencilFootprint
from .region import Region, parse_region
from .staging import DYNAMIC_LOOP, STATIC_FUSED, VECTOR, BoundaryProgram

MAXD = 4
DENSE_ROW_LIMIT = 10_000

__all__ = [
    "GridVar", "ExecutionPlan", "build_plan", "execute_local", "lookup",
    "DenseOperator", "assemble_dense", "OracleReport", "compare_against_oracle",
    "apply_inner_stencil",
]


def lookup(region: Region, cols: Sequence[np.ndarray]):
    """Vectorized ordinals of ``cols`` in ``region`` plus a membership mask."""
    cols = [np.asarray(c, dtype=np.int64) for c in cols]
    if len(cols) != region.ndim:
        raise UsageError(f"expected {region.ndim} coordinate arrays, got {len(cols)}")
    n = cols[0].shape[0] if cols else 0
    ok = np.full(n, not region.is_empty())
    addr = np.zeros(n, dtype=np.int64)
    for (s, e, t), size, c in zip(region.dims, region.shape, cols):
        q = c - s
        ok &= (q >= 0) & (c < e) & (q % t == 0)
        addr = addr * size + q // t
    return addr, ok


class GridVar:
    """Values on the full region of one variable (``ncomp`` per cell)."""

    def __init__(self, full_region: Region, data_region: Region | None = None,
                 ncomp: int = 1, values=None, name: str = "x"):
        data_region = full_region if data_region is None else data_region
        if not data_region.issubset(full_region):
            raise UsageError(f"data region {data_region} is not inside {full_region}")
        if ncomp < 1:
            raise UsageError("ncomp must be positive")
        n = full_region.count()
        if values is None:
            values = np.zeros((n, ncomp))
        else:
            values = np.array(values, dtype=np.float64, order="C")
            if values.size != n * ncomp:
                raise DataError(f"expected {n * ncomp} values, got {values.size}")
            values = values.reshape(n, ncomp)
        self.full_region = full_region
        self.data_region = data_region
        self.ncomp = int(ncomp)
        self.values = values
        self.name = name

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def addresses(self, cols: Sequence[np.ndarray]) -> np.ndarray:
        addr, ok = lookup(self.full_region, cols)
        if not ok.all():
            bad = tuple(int(c[np.flatnonzero(~ok)[0]]) for c in cols)
            raise OutOfBoundsError(f"{bad} is not stored in {self.name} ({self.full_region})")
        return addr

    def region_addresses(self, region: Region) -> np.ndarray:
        return self.addresses(region.index_arrays())

    def get(self, idx, comp: int | None = None):
        k = self.addresses([np.array([i]) for i in idx])[0]
        return self.values[k] if comp is None else self.values[k, comp]

    def set(self, idx, value) -> None:
        k = self.addresses([np.array([i]) for i in idx])[0]
        self.values[k] = value

    def read(self, region: Region) -> np.ndarray:
        return self.values[self.region_addresses(region)]

    def write(self, region: Region, values) -> None:
        self.values[self.region_addresses(region)] = np.asarray(values).reshape(-1, self.ncomp)

    def randomize(self, rng: np.random.Generator, region: Region | None = None) -> "GridVar":
        if region is None:
            self.values[:] = rng.uniform(-1.0, 1.0, self.values.shape)
        else:
            self.write(region, rng.uniform(-1.0, 1.0, (region.count(), self.ncomp)))
        return self

    def copy(self) -> "GridVar":
        return GridVar(self.full_region, self.data_region, self.ncomp, self.values.copy(), self.name)

    def same_layout(self, other: "GridVar") -> bool:
        return (self.full_region, self.data_region, self.ncomp) == (
            other.full_region, other.data_region, other.ncomp)

    # -- text header + raw little-endian float64 -----------------------
    def dumps(self) -> bytes:
        head = (f"GRIDVAR 1 name={self.name} full={self.full_region} "
                f"data={self.data_region} ncomp={self.ncomp}\n")
        return head.encode() + self.values.astype("<f8").tobytes()

    def dump(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, raw: bytes) -> "GridVar":
        nl = raw.find(b"\n")
        head = raw[:nl].decode() if nl >= 0 else ""
        m = re.fullmatch(r"GRIDVAR 1 name=(\S*) full=(\S+) data=(\S+) ncomp=(\d+)", head)
        if not m:
            raise DataError(f"bad grid variable header {head!r}")
        full, data = parse_region(m.group(2)), parse_region(m.group(3))
        ncomp = int(m.group(4))
        body = np.frombuffer(raw, "<f8", offset=nl + 1) if len(raw) > nl + 1 else np.zeros(0)
        return cls(full, data, ncomp, body.copy(), m.group(1))

    @classmethod
    def load(cls, path) -> "GridVar":
        with open(path, "rb") as fh:
            return cls.loads(fh.read())

    def __repr__(self):
        return f"GridVar({self.name}, full={self.full_region}, data={self.data_region}, ncomp={self.ncomp})"


# ---------------------------------------------------------------- plans

def _box_table(region: Region, box: Region):
    """``(counts, base, strides)`` addressing ``box`` inside ``region`` storage."""
    if not (region.contains(box.starts) and region.contains(box.lasts)):
        raise OutOfBoundsError(f"box {box} is not stored in {region}")
    rs = region.strides()
    strides = []
    for d, ((_, _, bt), (_, _, t)) in enumerate(zip(box.dims, region.dims)):
        if bt % t:
            raise OutOfBoundsError(f"box {box} is off the storage lattice of {region}")
        strides.append(bt // t * rs[d])
    return list(box.shape), region.ordinal(box.starts), strides


def _affine_fit(addr: np.ndarray, shape):
    """``(base, strides)`` if ``addr`` is affine in box ordinals, else ``None``."""
    if addr.size == 0:
        return None
    a = addr.reshape(shape)
    base = int(a.flat[0])
    strides = []
    for d, n in enumerate(shape):
        if n > 1:
            sl = [0] * len(shape)
            sl[d] = 1
            strides.append(int(a[tuple(sl)]) - base)
        else:
            strides.append(0)
    grids = np.indices(shape, dtype=np.int64)
    recon = base + sum(g * s for g, s in zip(grids, strides))
    return (base, strides) if np.array_equal(recon, a) else None


def _pad(v, fill):
    # leading padding keeps the last real axis in the innermost kernel loop
    return [fill] * (MAXD - len(v)) + list(v)


class _Stage:
    """All operations sitting at one contribution position of every piece."""

    def __init__(self):
        self.zero = []
        self.zero_cells = []
        self.affine = []
        self.affine_w = []
        self.gather = ([], [], [])
        self.gather_dyn = []
        self.data: dict = {}
        self.values = ([], [])
        self.values_dyn = []

    def freeze(self):
        i8 = np.int64
        self.zero = np.array(self.zero, dtype=i8).reshape(-1, 2 + 2 * MAXD)
        self.affine = np.array(self.affine, dtype=i8).reshape(-1, 3 + 3 * MAXD)
        self.zero_cells = _cat(self.zero_cells, i8)
        self.affine_w = np.array(self.affine_w, dtype=np.float64)
        ya, xa, w = self.gather
        self.gather = (_cat(ya, i8), _cat(xa, i8), _cat(w, np.float64))
        self.data = [
            (src, _cat(ya, i8), _cat(xa, i8), _cat(da, i8))
            for src, ya, xa, da in self.data.values()
        ]
        ya, v = self.values
        self.values = (_cat(ya, i8), _cat(v, np.float64))

    def run(self, k, y, x, nc):
        if k is _kernels_py:
            self._run_boxes_expanded(y, x, nc)
        else:
            if len(self.zero):
                k.zero_boxes(y, self.zero, nc)
            if len(self.affine):
                k.affine_axpy(y, x, self.affine, self.affine_w, nc)
        if len(self.zero_cells):
            y.reshape(-1, nc)[self.zero_cells] = 0.0
        ya, xa, w = self.gather
        if len(ya):
            k.gather_axpy(y, x, ya, xa, w, nc)
        for ya, xa, fn in self.gather_dyn:
            k.gather_axpy(y, x, ya, xa, np.ascontiguousarray(fn(), dtype=np.float64), nc)
        for src, ya, xa, da in self.data:
            k.gather_axpy_data(y, x, ya, xa, da, np.ascontiguousarray(src.flat_data, dtype=np.float64), nc)
        ya, v = self.values
        if len(ya):
            k.add_values(y, ya, v, nc)
        for ya, fn in self.values_dyn:
            k.add_values(y, ya, np.ascontiguousarray(fn(), dtype=np.float64), nc)


    def _run_boxes_expanded(self, y, x, nc):
        # the fallback has no cheap box loop, so expand tables once
        ex = self.__dict__.get("_expanded")
        if ex is None:
            kp = _kernels_py
            ex = self._expanded = (
                kp.expand_zero(self.zero) if len(self.zero) else None,
                kp.expand_affine(self.affine, self.affine_w) if len(self.affine) else None,
            )
        if ex[0] is not None:
            _kernels_py.zero_cells(y, ex[0], nc)
        if ex[1] is not None:
            _kernels_py.axpy_distinct(y, x, *ex[1], nc)


def _cat(parts, dtype):
    if not parts:
        return np.zeros(0, dtype=dtype)
    return np.ascontiguousarray(np.concatenate(parts), dtype=dtype)


@dataclass
class ExecutionPlan:
    stages: list
    cells: int
    written: np.ndarray
    read: np.ndarray
    stats: dict = field(default_factory=dict)

    @property
    def reads_written(self) -> bool:
        return bool(np.intersect1d(self.written, self.read).size)

    def run(self, y: np.ndarray, x: np.ndarray, ncomp: int, backend=None) -> None:
        k = backend or kernels.backend
        for st in self.stages:
            st.run(k, y, x, ncomp)


def _broadcast(v, n):
    return np.broadcast_to(np.asarray(v, dtype=np.float64), (n,)).copy()


def build_plan(program: BoundaryProgram, x_map: Callable, y_region: Region,
               restrict: Region | None = None) -> ExecutionPlan:
    """Lower ``program`` for one storage layout.

    ``x_map(cols)`` turns coordinate arrays into x addresses (raising
    :class:`OutOfBoundsError` for columns it cannot serve); ``y_region`` is
    the stored region of the output.  With ``restrict`` only the part of
    every piece inside it is executed.
    """
    ents = program.entities
    params = program.params
    stages: list[_Stage] = []
    written, read = [], []
    counts = {"affine": 0, "gather": 0, "stored": 0, "vector": 0}

    def stage(j):
        while len(stages) <= j:
            stages.append(_Stage())
        return stages[j]

    for piece in program.pieces:
        box = piece.box if restrict is None else (piece.box & restrict).trimmed()
        if box.is_empty():
            continue
        n = box.count()
        shape, ybase, ystr = _box_table(y_region, box)
        affine_ok = box.ndim <= MAXD
        idx = box.index_arrays()
        ya = _addresses_from(ybase, ystr, shape)
        written.append(ya)
        if affine_ok:
            stage(0).zero.append([box.ndim] + _pad(shape, 1) + [ybase] + _pad(ystr, 0))
        else:
            stage(0).zero_cells.append(ya)
        pos = 1
        for term in piece.kernel.terms:
            ent = ents[term.entity]
            if term.mode == VECTOR:
                st = stage(pos)
                pos += 1
                counts["vector"] += n
                if reads_arrays(term.value):
                    fn = (lambda e=term.value, b=Binding(idx, params, ent.arrays), n=n:
                          _broadcast(eval_weight(e, b), n))
                    st.values_dyn.append((ya, fn))
                else:
                    st.values[0].append(ya)
                    st.values[1].append(_broadcast(eval_weight(term.value, Binding(idx, params, ent.arrays)), n))
            elif term.mode == STATIC_FUSED:
                b = Binding(idx, params, ent.arrays)
                for e in term.entries:
                    st = stage(pos)
                    pos += 1
                    cols = [np.broadcast_to(np.asarray(eval_int(c, b), dtype=np.int64), (n,)) for c in e.col]
                    _check_columns(program, ent, cols, idx)
                    xa = x_map(cols)
                    read.append(xa)
                    dyn_w = reads_arrays(e.weight)
                    w = None if dyn_w else _broadcast(eval_weight(e.weight, b), n)
                    fit = _affine_fit(xa, shape) if affine_ok and not dyn_w and np.all(w == w[0]) else None
                    if fit is not None:
                        xbase, xstr = fit
                        st.affine.append([box.ndim] + _pad(shape, 1) + [ybase] + _pad(ystr, 0)
                                         + [xbase] + _pad(xstr, 0))
                        st.affine_w.append(w[0])
                        counts["affine"] += n
                    elif dyn_w:
                        fn = lambda e=e.weight, b=b, n=n: _broadcast(eval_weight(e, b), n)
                        st.gather_dyn.append((ya, xa, fn))
                        counts["gather"] += n
                    else:
                        st.gather[0].append(ya)
                        st.gather[1].append(xa)
                        st.gather[2].append(w)
                        counts["gather"] += n
            elif term.mode == DYNAMIC_LOOP:
                st = stage(pos)
                pos += 1
                _lower_dynamic(program, ent, st, box, ya, x_map, read, counts)
            else:
                raise UsageError(f"unknown kernel mode {term.mode!r}")

    for st in stages:
        st.freeze()
    cells = sum(len(w) for w in written)
    return ExecutionPlan(
        stages, cells, _cat(written, np.int64), _cat(read, np.int64), counts,
    )


def _addresses_from(base, strides, shape):
    grids = np.indices(shape, dtype=np.int64)
    return np.ascontiguousarray((base + sum(g * s for g, s in zip(grids, strides))).reshape(-1))


def _check_columns(program, ent, cols, idx):
    _, ok = lookup(program.column_space, cols)
    if not ok.all():
        k = int(np.flatnonzero(~ok)[0])
        raise OutOfBoundsError(
            f"{ent.name}: column {tuple(int(c[k]) for c in cols)} at "
            f"{tuple(int(i[k]) for i in idx)} is outside the column space {program.column_space}"
        )


def _lower_dynamic(program, ent: SubMatrix, st: _Stage, box: Region, ya, x_map, read, counts):
    it = ent.row_iter
    stored = getattr(it, "flat_data", None) is not None
    cell_y, cols, daddr, calls = [], [], [], []
    for cell, idx in zip(ya, box.enumerate()):
        if stored:
            for col, _gid, a in it.structure(idx):
                cell_y.append(cell)
                cols.append(col)
                daddr.append(a)
        else:
            nnz, info = it.f_nnz(idx)
            for k in range(int(nnz)):
                cell_y.append(cell)
                cols.append(tuple(int(c) for c in it.f_col(idx, nnz, info, k)))
                calls.append((idx, nnz, info, k))
    nd = program.column_space.ndim
    carr = [np.array([c[d] for c in cols], dtype=np.int64) for d in range(nd)]
    idx_arr = [np.zeros(len(cols), dtype=np.int64)] * nd
    if cols:
        cell_idx = {int(c): i for c, i in zip(ya, box.enumerate())}
        idx_arr = [np.array([cell_idx[int(c)][d] for c in cell_y]) for d in range(nd)]
    _check_columns(program, ent, carr, idx_arr)
    xa = x_map(carr)
    read.append(xa)
    yarr = np.array(cell_y, dtype=np.int64)
    if stored:
        key = id(it)
        slot = st.data.setdefault(key, (it, [], [], []))
        slot[1].append(yarr)
        slot[2].append(xa)
        slot[3].append(np.array(daddr, dtype=np.int64))
        counts["stored"] += len(cols)
    else:
        fn = lambda calls=calls, f=it.f_data: np.array([float(f(*c)) for c in calls])
        st.gather_dyn.append((yarr, xa, fn))
        counts["gather"] += len(cols)


def _local_x_map(program: BoundaryProgram, x_region: Region):
    def x_map(cols):
        addr, ok = lookup(x_region, cols)
        if not ok.all():
            k = int(np.flatnonzero(~ok)[0])
            raise OutOfBoundsError(
                f"column {tuple(int(c[k]) for c in cols)} is not stored in x ({x_region})")
        return addr
    return x_map


def plan_for(program: BoundaryProgram, x_region: Region, y_region: Region) -> ExecutionPlan:
    cache = program.__dict__.setdefault("_plans", {})
    key = (x_region, y_region)
    plan = cache.get(key)
    if plan is None:
        plan = cache[key] = build_plan(program, _local_x_map(program, x_region), y_region)
    return plan


def execute_local(program: BoundaryProgram, x: GridVar, y: GridVar, *, backend=None) -> GridVar:
    """``y = A x + b`` on every piece cell; other cells of ``y`` are untouched."""
    if x.ncomp != y.ncomp:
        raise UsageError(f"component mismatch: x has {x.ncomp}, y has {y.ncomp}")
    plan = plan_for(program, x.full_region, y.full_region)
    xf = x.flat
    if x is y and plan.reads_written:
        xf = xf.copy()
    plan.run(y.flat, xf, y.ncomp, backend)
    return y


# ---------------------------------------------------------------- oracle

def row_entries(ent: SubMatrix, idx, params=None):
    """``[(col, weight, gid)]`` of one row, evaluated directly from the entity."""
    it = ent.row_iter
    if isinstance(it, StaticRow):
        b = Binding(tuple(idx), dict(params or {}), ent.arrays)
        return [
            (tuple(int(eval_int(c, b)) for c in e.col), float(eval_weight(e.weight, b)),
             int(eval_int(e.gid, b)))
            for e in it.entries
        ]
    return it.row(tuple(idx), ent.arrays)


def valid_mask(ent, region: Region, params=None) -> np.ndarray:
    b = Binding(region.index_arrays(), dict(params or {}), getattr(ent, "arrays", {}))
    v = eval_bool(ent.is_valid, b)
    return np.broadcast_to(np.asarray(v, dtype=bool), (region.count(),)).copy()


@dataclass
class DenseOperator:
    """Explicit ``A`` and ``b`` over the rows of ``row_region``."""

    A: np.ndarray
    b: np.ndarray
    row_region: Region
    col_region: Region
    touched: np.ndarray

    def apply(self, xcols: np.ndarray) -> np.ndarray:
        xcols = np.asarray(xcols, dtype=np.float64)
        if xcols.ndim == 1:
            return self.A @ xcols + self.b
        return self.A @ xcols + self.b[:, None]

    def row(self, idx) -> dict:
        r = self.row_region.ordinal(idx)
        nz = np.flatnonzero(self.A[r])
        return {self.col_region.unravel(int(j)): float(self.A[r, j]) for j in nz}


def assemble_dense(mats: Sequence[SubMatrix], vecs: Sequence[SubVector], full_region: Region,
                   column_space: Region, params=None, *, limit: int = DENSE_ROW_LIMIT) -> DenseOperator:
    """Materialize the operator cell by cell, without any staging."""
    nr, ncol = full_region.count(), column_space.count()
    if nr > limit or ncol > limit:
        raise UsageError(f"dense operator of {nr}x{ncol} exceeds the {limit} guard")
    A = np.zeros((nr, ncol))
    b = np.zeros(nr)
    touched = np.zeros(nr, dtype=bool)
    cells = list(full_region.enumerate())
    for ent in mats:
        m = valid_mask(ent, full_region, params)
        touched |= m
        for r in np.flatnonzero(m):
            for col, w, _gid in row_entries(ent, cells[r], params):
                if not column_space.contains(col):
                    raise OutOfBoundsError(f"{ent.name}: column {col} outside {column_space}")
                A[r, column_space.ordinal(col)] += w
    for ent in vecs:
        m = valid_mask(ent, full_region, params)
        touched |= m
        val = eval_weight(ent.value, Binding(full_region.index_arrays(), dict(params or {}), ent.arrays))
        b += np.where(m, np.broadcast_to(np.asarray(val, dtype=np.float64), (nr,)), 0.0)
    return DenseOperator(A, b, full_region, column_space, touched)


@dataclass
class OracleReport:
    trials: int
    max_error: float
    coverage_ok: bool
    tol: float = 1e-12

    @property
    def passed(self) -> bool:
        return self.coverage_ok and self.max_error <= self.tol

    def __str__(self):
        state = "pass" if self.passed else "FAIL"
        return f"oracle {state}: {self.trials} trials, max |err| = {self.max_error:.3e}"


def compare_against_oracle(program: BoundaryProgram, mats=None, vecs=None, trials: int = 100,
                           seed: int = 0, *, ncomp: int = 1, x_region: Region | None = None,
                           backend=None, tol: float = 1e-12) -> OracleReport:
    """Random-input comparison of :func:`execute_local` with the dense operator.

    Cells the program writes must match ``A x + b``; all other cells must
    keep their prior values.  An unpruned program must write exactly the
    cells where some entity is valid; a pruned one a subset of them.
    """
    mats = program.mats if mats is None else mats
    vecs = program.vecs if vecs is None else vecs
    full = program.full_region
    dense = assemble_dense(mats, vecs, full, program.column_space, program.params)
    if x_region is None:
        x_region = full if program.column_space.issubset(full) else program.column_space
    rng = np.random.default_rng(seed)
    x = GridVar(x_region, ncomp=ncomp, name=program.input_var)
    y = GridVar(full, ncomp=ncomp, name=program.output_var)
    written = np.zeros(full.count(), dtype=bool)
    for p in program.pieces:
        written[y.region_addresses(p.box)] = True
    coverage = bool(np.all(dense.touched[written]))
    if not program.pruned:
        coverage &= bool(np.array_equal(written, dense.touched))
    xcol = x.region_addresses(program.column_space)
    worst = 0.0
    for _ in range(trials):
        x.randomize(rng)
        y.randomize(rng)
        before = y.values.copy()
        execute_local(program, x, y, backend=backend)
        want = before.copy()
        full_apply = dense.apply(x.values[xcol])
        want[written] = full_apply[written]
        worst = max(worst, float(np.max(np.abs(y.values - want), initial=0.0)))
    return OracleReport(trials, worst, coverage, tol)


# ---------------------------------------------------------------- inner stand-in

def apply_inner_stencil(footprint: StencilFootprint, weights: Sequence[float], x: GridVar,
                        var: str | None = None) -> GridVar:
    """``out[i] = sum_o w_o * x[i + o]`` on the inner domain, zero elsewhere."""
    offs = footprint.offsets(var)
    if len(weights) != len(offs):
        raise UsageError(f"{len(offs)} reads but {len(weights)} weights")
    inner = footprint.inner_domain
    out = GridVar(x.full_region, x.data_region, x.ncomp, name="stencil")
    acc = np.zeros((inner.count(), x.ncomp))
    for w, o in zip(weights, offs):
        src = inner.translate(o)
        if not src.issubset(x.full_region):
            raise OutOfBoundsError(f"stencil read {src} leaves {x.full_region}")
        acc += float(w) * x.read(src)
    out.write(inner, acc)
    return out
