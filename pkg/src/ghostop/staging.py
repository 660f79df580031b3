"""Stage-1 compilation of sub-matrices into a piecewise boundary program.

The validity predicates of the user's sub-matrices and sub-vectors may
overlap.  :func:`synthesize_branches` explores inclusion/exclusion of each
entity depth-first, discarding any partial conjunction the prover refutes,
so every surviving branch has a fixed set of active entities.  Each
branch's cells are covered by disjoint boxes, and each box gets a
:class:`KernelSpec` in which static row templates are folded against the
box's index ranges.  Boxes are further split where that turns ``mod``,
``div``, ``max`` or ``min`` columns into affine ones.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

from .boundary import StaticEntry, StaticRow, SubMatrix, SubVector
from .errors import StagingError
from .expr import (
    And, BoolExpr, DivLit, FoldContext, IntExpr, ModLit, Not, WeightExpr,
    _MinMax, _canonical, affine_in_index, Add, MulLit, params_of,
)
from .prover import Prover, Verdict
from .region import Region, boxes_from_mask

STATIC_FUSED = "static_fused"
DYNAMIC_LOOP = "dynamic_loop"
VECTOR = "vector"

_SPLIT_BUDGET = 64


@dataclass(frozen=True)
class Term:
    """One active entity inside a kernel."""

    entity: int
    mode: str
    entries: tuple[StaticEntry, ...] = ()
    value: WeightExpr | None = None


@dataclass(frozen=True)
class KernelSpec:
    terms: tuple[Term, ...]

    @property
    def matrix_free(self) -> bool:
        return all(t.mode != DYNAMIC_LOOP for t in self.terms)

    def affine(self) -> bool:
        """True if every static column expression is affine in the indices."""
        return all(
            affine_in_index(c) is not None
            for t in self.terms if t.mode == STATIC_FUSED
            for e in t.entries for c in e.col
        )

    def stored_entries(self, entities) -> int:
        """Nonzeros of backing storage this kernel reads (0 when matrix-free)."""
        total = 0
        for t in self.terms:
            if t.mode == DYNAMIC_LOOP:
                st = getattr(entities[t.entity].row_iter, "storage", None)
                total += int(st.data.size) if st is not None else 0
        return total


@dataclass(frozen=True)
class Piece:
    box: Region
    kernel: KernelSpec
    branch: tuple[int, ...]


@dataclass
class BoundaryProgram:
    output_var: str
    input_var: str
    column_space: Region
    full_region: Region
    data_region: Region | None
    mats: tuple[SubMatrix, ...]
    vecs: tuple[SubVector, ...]
    pieces: tuple[Piece, ...]
    params: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    full_column: bool = False
    pruned: bool = False

    @property
    def entities(self) -> tuple:
        return tuple(self.mats) + tuple(self.vecs)

    def cells(self) -> int:
        return sum(p.box.count() for p in self.pieces)

    def branches(self) -> dict[tuple[int, ...], list[Piece]]:
        out: dict = {}
        for p in self.pieces:
            out.setdefault(p.branch, []).append(p)
        return out

    def valid_cells(self) -> dict[str, int]:
        """Cells written per entity name (summed over pieces where active)."""
        out = {e.name: 0 for e in self.entities}
        for p in self.pieces:
            for k in p.branch:
                out[self.entities[k].name] += p.box.count()
        return out

    def dump(self) -> str:
        ents = self.entities
        lines = [
            f"program {self.output_var} <- {self.input_var}"
            + (" (pruned)" if self.pruned else ""),
            f"  full={self.full_region} data={self.data_region} columns={self.column_space}",
            "entities:",
        ]
        for k, e in enumerate(ents):
            lines.append(f"  [{k}] {e.name} kind={e.kind} valid={e.is_valid}")
        lines.append(f"pieces: {len(self.pieces)} cells: {self.cells()}")
        for n, p in enumerate(self.pieces):
            names = ",".join(ents[k].name for k in p.branch)
            lines.append(f"  piece {n} box={p.box} cells={p.box.count()} active={{{names}}}")
            for t in p.kernel.terms:
                lines.append("    " + _term_text(t, ents[t.entity]))
        return "\n".join(lines)


def _term_text(t: Term, ent) -> str:
    if t.mode == STATIC_FUSED:
        if not t.entries:
            return f"{t.mode} {ent.name} (empty row)"
        parts = [
            f"col=({', '.join(str(c) for c in e.col)}) w={e.weight} gid={e.gid}" for e in t.entries
        ]
        return f"{t.mode} {ent.name} " + "; ".join(parts)
    if t.mode == VECTOR:
        return f"{t.mode} {ent.name} value={t.value}"
    return f"{t.mode} {ent.name}"


# ---------------------------------------------------------------- splitting

def _single_var(e: IntExpr, unit=True):
    aff = affine_in_index(_canonical(e))
    if aff is None:
        return None
    coeffs, const = aff
    if len(coeffs) != 1:
        return None
    (d, c), = coeffs.items()
    if unit and abs(c) != 1:
        return None
    return d, c, const


def _cuts(e: IntExpr, ctx: FoldContext):
    """``(dim, cut values)`` splitting the box so one non-affine node folds away."""
    nodes = [e]
    while nodes:
        node = nodes.pop()
        nodes.extend(node.children())
        if isinstance(node, (ModLit, DivLit)):
            sv = _single_var(node.a)
            if sv is None:
                continue
            d, c, r = sv
            k = abs(node.k)
            lo, hi = node.a.interval(ctx)
            qs = range(int(lo // k) + 1, int(hi // k) + 1)
            if len(qs) == 0 or len(qs) > 8:
                continue
            # c*i + r crosses q*k between the cut and its predecessor
            return d, [q * k - r if c == 1 else r - q * k + 1 for q in qs]
        if isinstance(node, _MinMax):
            sv = _single_var(Add(node.a, MulLit(node.b, -1)), unit=False)
            if sv is None:
                continue
            d, c, r = sv
            # sign of c*i + r flips at the cut
            return d, [-(r // c) if c > 0 else r // -c + 1]
    return None


def _cut_box(box: Region, d: int, values) -> list[Region]:
    s, e, t = box.dims[d]
    edges = sorted({v for v in values if s < v < e})
    out, lo = [], s
    for v in edges + [e]:
        start = s + -(-(lo - s) // t) * t
        dims = list(box.dims)
        dims[d] = (start, v, t)
        r = Region(dims)
        if not r.is_empty():
            out.append(r)
        lo = v
    return out


def split_for_affinity(box: Region, exprs: Sequence[IntExpr], params=None) -> list[Region]:
    """Split ``box`` until every expression folds to an affine form (bounded)."""
    work, done = [box], []
    budget = _SPLIT_BUDGET
    while work:
        b = work.pop(0)
        ctx = FoldContext.for_box(b, params)
        cut = None
        for e in exprs:
            f = e.fold(ctx)
            if affine_in_index(f) is None:
                cut = _cuts(f, ctx)
                if cut:
                    break
        if cut is None or budget <= 0:
            done.append(b)
            continue
        parts = _cut_box(b, *cut)
        if len(parts) <= 1:
            done.append(b)
            continue
        budget -= len(parts) - 1
        work = parts + work
    return done


# ---------------------------------------------------------------- staging

def specialize_kernel(branch: Sequence[int], entities: Sequence, box: Region, params=None) -> KernelSpec:
    """Fold every active entity's templates against the facts of ``box``."""
    if not branch:
        raise StagingError("cannot specialize an empty branch")
    ctx = FoldContext.for_box(box, params)
    terms = []
    for k in branch:
        ent = entities[k]
        if isinstance(ent, SubVector):
            terms.append(Term(k, VECTOR, value=ent.value.fold(ctx)))
        elif isinstance(ent.row_iter, StaticRow):
            entries = tuple(
                StaticEntry(tuple(c.fold(ctx) for c in e.col), e.weight.fold(ctx), e.gid.fold(ctx))
                for e in ent.row_iter.entries
            )
            terms.append(Term(k, STATIC_FUSED, entries))
        else:
            terms.append(Term(k, DYNAMIC_LOOP))
    return KernelSpec(tuple(terms))


def _static_exprs(entities, branch) -> list[IntExpr]:
    out = []
    for k in branch:
        ent = entities[k]
        if isinstance(ent, SubMatrix) and isinstance(ent.row_iter, StaticRow):
            for e in ent.row_iter.entries:
                out.extend(e.col)
    return out


def synthesize_branches(mats: Sequence[SubMatrix], vecs: Sequence[SubVector], full_region: Region,
                        params=None, *, column_space: Region | None = None,
                        data_region: Region | None = None, output_var: str = "y",
                        input_var: str = "x", full_column: bool = False,
                        split_affine: bool = True) -> BoundaryProgram:
    """Compile overlapping entities into disjoint, decided pieces."""
    t0 = time.perf_counter()
    params = dict(params or {})
    entities = tuple(mats) + tuple(vecs)
    preds: list[BoolExpr] = []
    for ent in entities:
        p = ent.is_valid
        if not p.resolvable:
            raise StagingError(f"{ent.name}: is_valid is not stage-1 resolvable")
        missing = params_of(p) - set(params)
        if missing:
            raise StagingError(f"{ent.name}: unbound parameters {sorted(missing)}")
        preds.append(p.fold(FoldContext(params=params)))

    prover = Prover(full_region, params)
    stats = {"nodes": 0, "refuted": 0}
    leaves = []

    def dfs(k, parts, active):
        if k == len(preds):
            if active:
                leaves.append((active, And(parts) if parts else None))
            return
        refuted_include = False
        for include in (True, False):
            lit = preds[k] if include else Not(preds[k])
            conj = And(parts + [lit])
            # a satisfiable parent whose include-branch is empty keeps all its cells
            if not (not include and refuted_include):
                stats["nodes"] += 1
                if prover.decide(conj) is Verdict.PROVED_FALSE:
                    stats["refuted"] += 1
                    refuted_include = include
                    continue
            dfs(k + 1, parts + [lit], active + ((k,) if include else ()))

    if not full_region.is_empty():
        dfs(0, [], ())

    pieces = []
    for active, conj in leaves:
        boxes = boxes_from_mask(prover.mask(conj), full_region)
        exprs = _static_exprs(entities, active) if split_affine else []
        for box in boxes:
            for sub in (split_for_affinity(box, exprs, params) if exprs else [box]):
                pieces.append(Piece(sub, specialize_kernel(active, entities, sub, params), active))

    stats["branches"] = len(leaves)
    stats["pieces"] = len(pieces)
    stats["prover"] = dict(prover.stats)
    stats["seconds"] = time.perf_counter() - t0
    return BoundaryProgram(
        output_var=output_var, input_var=input_var,
        column_space=column_space if column_space is not None else (data_region or full_region),
        full_region=full_region, data_region=data_region,
        mats=tuple(mats), vecs=tuple(vecs), pieces=tuple(pieces), params=params,
        stats=stats, full_column=full_column,
    )
