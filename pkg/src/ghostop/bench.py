"""Boundary execution timings: matrix-free kernels against a CSR twin.

The CSR twin holds exactly the rows of the matrix-free boundary (one
nonzero per ghost cell for periodic/halo/symmetric kinds) and runs through
the same plan executor, so the comparison isolates nnz-proportional
storage and indirection.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .boundary import CsrRow, CsrStorage, SubMatrix, make_simple
from .expr import disj
from .dist import InProcessFabric, exchange, partition_grid, plan_communication, scatter, auto_proc_grid
from .region import Region
from .runtime import GridVar, plan_for, row_entries, valid_mask
from .staging import BoundaryProgram, synthesize_branches

COLUMNS = ["config", "kind", "cells", "ns_per_cell", "msgs", "bytes"]


@dataclass
class Row:
    config: str
    kind: str
    cells: int
    ns_per_cell: float
    msgs: int = 0
    bytes: int = 0

    def as_list(self):
        return [self.config, self.kind, self.cells, f"{self.ns_per_cell:.3f}", self.msgs, self.bytes]


def periodic_grid(n: int, halo: int = 1) -> tuple[Region, Region]:
    data = Region([(0, n, 1), (0, n, 1)])
    full = Region([(-halo, n + halo, 1), (-halo, n + halo, 1)])
    return data, full


def matrix_free(kind: str, data: Region, full: Region) -> BoundaryProgram:
    ent = make_simple(kind, full, (0, 1), data, exclude=[data], name=kind)
    return synthesize_branches([ent], [], full, column_space=data, data_region=data)


def csr_twin(program: BoundaryProgram) -> BoundaryProgram:
    """The same matrix part with every row stored explicitly."""
    full, cols = program.full_region, program.column_space
    masks = [valid_mask(e, full, program.params) for e in program.mats]
    rows, ptr, col, val = {}, [0], [], []
    for a in np.flatnonzero(np.logical_or.reduce(masks)):
        idx = full.unravel(int(a))
        for e, m in zip(program.mats, masks):
            if m[a]:
                for c, w, _ in row_entries(e, idx, program.params):
                    col.append(cols.ordinal(c))
                    val.append(w)
        rows[idx] = len(rows)
        ptr.append(len(col))
    st = CsrStorage(np.array(ptr), np.array(col, dtype=np.int64), np.array(val), rows, cols)
    ent = SubMatrix(disj(*[e.is_valid for e in program.mats]), CsrRow(st), 1, "csr", "csr")
    return synthesize_branches([ent], [], full, program.params, column_space=cols,
                               data_region=program.data_region, full_column=program.full_column)


def time_program(program: BoundaryProgram, ncomp: int = 1, repeats: int = 200, backend=None,
                 seed: int = 0) -> float:
    """Best-of-5 mean wall time per written cell, in nanoseconds."""
    k = kernels.get_backend(backend) if isinstance(backend, (str, type(None))) else backend
    full, data = program.full_region, program.column_space
    rng = np.random.default_rng(seed)
    x = GridVar(full, data, ncomp).randomize(rng)
    y = x.copy()
    plan = plan_for(program, full, full)
    plan.run(y.flat, x.flat, ncomp, k)
    cells = max(plan.cells, 1)
    best = float("inf")
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeats):
            plan.run(y.flat, x.flat, ncomp, k)
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best * 1e9 / cells


def time_exchange(program: BoundaryProgram, ranks: int, halo=None, proc_grid=None,
                  repeats: int = 20, seed: int = 0, ncomp: int = 1):
    """Per-element exchange time, messages, bytes per step and elements."""
    data, full = program.data_region or program.column_space, program.full_region
    if halo is None:
        halo = tuple(-(-(ds - fs) // dt) for (fs, _, _), (ds, _, dt) in zip(full.dims, data.dims))
    part = partition_grid(data, proc_grid or auto_proc_grid(ranks, data.shape), halo, full)
    sched = plan_communication(program, part)
    fab = InProcessFabric(ranks)
    xs = scatter(part, GridVar(full, data, ncomp).randomize(np.random.default_rng(seed)))
    exchange(sched, fab, xs)
    fab.reset_stats()
    t0 = time.perf_counter()
    for _ in range(repeats):
        exchange(sched, fab, xs)
    dt = (time.perf_counter() - t0) / repeats
    elems = max(sched.elements, 1)
    return dt * 1e9 / elems, sched.messages, fab.stats["bytes"] // repeats, sched.elements


def bench_program(name: str, program: BoundaryProgram, *, ranks=(), halo=None, proc_grids=None,
                  repeats: int = 200, backend=None, ncomp: int = 1) -> list[Row]:
    """Matrix-free and CSR rows for ``program``, then one exchange row per rank count."""
    cs = csr_twin(program)
    out = [
        Row(name, "matrix_free", program.cells(), time_program(program, ncomp, repeats, backend)),
        Row(name, "csr", cs.cells(), time_program(cs, ncomp, repeats, backend)),
    ]
    for P in ranks:
        grid = (proc_grids or {}).get(P)
        ns, msgs, nbytes, elems = time_exchange(program, P, halo, grid, ncomp=ncomp)
        out.append(Row(f"{name}-P{P}", "exchange", elems, ns, msgs, nbytes))
    return out


def circular_vs_csr(n: int = 1024, kinds=("circular",), ranks=(2, 4), repeats: int = 200,
                    backend=None, ncomp: int = 1) -> list[Row]:
    data, full = periodic_grid(n)
    out = []
    for kind in kinds:
        out += bench_program(f"{kind}-n{n}", matrix_free(kind, data, full), ranks=ranks,
                             repeats=repeats, backend=backend, ncomp=ncomp)
    return out


def ratio(rows: list[Row], config: str) -> float:
    mf = next(r for r in rows if r.config == config and r.kind == "matrix_free")
    cs = next(r for r in rows if r.config == config and r.kind == "csr")
    return mf.ns_per_cell / cs.ns_per_cell


def to_csv(rows: list[Row]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.as_list())
    return buf.getvalue()
