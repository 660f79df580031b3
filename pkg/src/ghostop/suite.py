"""Randomized configurations and the checks run by ``verify`` and the tests.

Every check compares against something computed independently of
staging: the dense operator assembled cell by cell, exhaustive enumeration
of the validity predicates, or the single-rank run.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boundary import (
    CsrStorage, DynamicRow, EllStorage, make_csr, make_custom, make_edge_sync, make_ell,
    make_mapping, make_pure_function, make_simple,
)
from .dist import (
    InProcessFabric, auto_proc_grid, execute_distributed, gather, partition_grid,
    plan_communication, scatter,
)
from .errors import ConfigurationError
from .expr import FromInt, Idx, InArea, Lit, ModLit, Param
from .pruning import StencilFootprint, apply_pruning, compute_effective_space
from .region import Region
from .runtime import (
    GridVar, OracleReport, apply_inner_stencil, compare_against_oracle, execute_local, lookup,
    valid_mask,
)
from .staging import BoundaryProgram, synthesize_branches

KINDS = ("zero", "halo_copy", "circular", "symmetric", "mapping", "csr", "ell",
         "edge_sync", "pure_function", "custom")


@dataclass
class Case:
    name: str
    data: Region
    full: Region
    mats: list
    vecs: list
    ncomp: int = 1
    params: dict = field(default_factory=dict)
    footprint: StencilFootprint | None = None
    stencil_weights: list = field(default_factory=list)
    halo: tuple = ()

    @property
    def kinds(self) -> set[str]:
        return {e.kind for e in self.mats} | {e.kind for e in self.vecs}

    def stage(self) -> BoundaryProgram:
        return synthesize_branches(self.mats, self.vecs, self.full, self.params,
                                   column_space=self.data, data_region=self.data)

    def prune(self, program: BoundaryProgram) -> BoundaryProgram:
        if self.footprint is None:
            return program
        return apply_pruning(program, compute_effective_space(program, [self.footprint]))


# ---------------------------------------------------------------- generation

def _sub_box(rng, frame: Region) -> Region:
    dims = []
    for (s, _, t), n in zip(frame.dims, frame.shape):
        a = int(rng.integers(0, n))
        b = int(rng.integers(a, n))
        dims.append((s + a * t, s + (b + 1) * t, t))
    return Region(dims)


def _data_point(rng, data: Region):
    return tuple(s + int(rng.integers(0, n)) * t for (s, _, t), n in zip(data.dims, data.shape))


def _entity(rng, kind: str, k: int, data: Region, full: Region, params: dict):
    name = f"{kind}{k}"
    nd = data.ndim
    if kind == "zero":
        return make_simple("zero", _sub_box(rng, full), exclude=[data], name=name)
    if kind == "halo_copy":
        return make_simple("halo_copy", _sub_box(rng, data), name=name)
    if kind in ("circular", "symmetric"):
        axes = tuple(range(nd))
        return make_simple(kind, _sub_box(rng, full), axes, data,
                           exclude=[data] if rng.random() < 0.7 else [], name=name)
    if kind == "mapping":
        perm = rng.permutation(nd)
        cols = []
        for d in range(nd):
            s, _, t = data.dims[d]
            n = data.shape[d]
            wrap = ModLit(Idx(int(perm[d])) + int(rng.integers(-3, 4)), n)
            base = Param(f"s{d}") if rng.random() < 0.3 else Lit(s)
            if isinstance(base, Param):
                params[f"s{d}"] = s
            cols.append(base + wrap * t)
        w = float(rng.uniform(-1, 1)) if rng.random() < 0.7 else FromInt(Idx(0)) * 0.25 + 0.5
        return make_mapping(_sub_box(rng, full), cols, w, name=name)
    if kind in ("csr", "ell"):
        region = _sub_box(rng, full)
        rows = [[(_data_point(rng, data), float(rng.uniform(-1, 1)))
                 for _ in range(int(rng.integers(0, 4)))] for _ in range(region.count())]
        if kind == "csr":
            ptr, col, val = [0], [], []
            for r in rows:
                for c, w in r:
                    col.append(data.ordinal(c))
                    val.append(w)
                ptr.append(len(col))
            st = CsrStorage(np.array(ptr), np.array(col, dtype=np.int64), np.array(val), region, data)
            return make_csr(region, st, name=name)
        width = 3
        col = -np.ones((len(rows), width), dtype=np.int64)
        val = np.zeros((len(rows), width))
        for i, r in enumerate(rows):
            for j, (c, w) in enumerate(r):
                col[i, j] = data.ordinal(c)
                val[i, j] = w
        st = EllStorage(col, val, region, data)
        return make_ell(region, st, name=name)
    if kind == "edge_sync":
        cells = list(dict.fromkeys(_data_point(rng, data) for _ in range(8)))
        groups, pos = [], 0
        while pos < len(cells) - 1 and len(groups) < 3:
            size = min(int(rng.integers(2, 4)), len(cells) - pos)
            groups.append(cells[pos:pos + size])
            pos += size
        return make_edge_sync(groups, ndim=nd, name=name)
    if kind == "pure_function":
        value = float(rng.uniform(-2, 2)) if rng.random() < 0.5 else FromInt(Idx(nd - 1)) * 0.5 + 1.5
        return make_pure_function(_sub_box(rng, full), value, exclude=[data], name=name)
    if kind == "custom":
        region = _sub_box(rng, full)
        lo, last = data.starts, data.lasts
        steps = data.steps

        def clamp(idx):
            return tuple(min(max(s + (i - s) // t * t, s), e) for i, s, e, t in zip(idx, lo, last, steps))

        row = DynamicRow(
            lambda idx: (1, None),
            lambda idx, nnz, info, off: clamp(idx),
            lambda idx, nnz, info, off: 0.5,
        )
        return make_custom(InArea(region), row, name=name)
    raise ValueError(kind)


def random_case(rng: np.random.Generator, *, step: int = 1, kinds=KINDS, n_entities=None,
                ncomp=None, name: str = "random") -> Case:
    """A small grid (at most 12 cells per side per block) with 1-4 random entities."""
    shape_kind = rng.random()
    if shape_kind < 0.15:
        nd, blocks = 1, 0
    elif shape_kind < 0.85:
        nd, blocks = 2, 0
    else:
        nd, blocks = 3, int(rng.integers(2, 4))
    data_dims, full_dims, halo = [], [], []
    for d in range(nd):
        if blocks and d == 0:
            data_dims.append((0, blocks, 1))
            full_dims.append((0, blocks, 1))
            halo.append(0)
            continue
        n = int(rng.integers(4, 9))
        g = int(rng.integers(1, 3))
        s = int(rng.integers(-2, 3)) * step
        data_dims.append((s, s + n * step, step))
        full_dims.append((s - g * step, s + (n + g) * step, step))
        halo.append(g)
    data, full = Region(data_dims), Region(full_dims)
    params: dict = {}
    count = n_entities or int(rng.integers(1, 5))
    chosen = [kinds[int(rng.integers(0, len(kinds)))] for _ in range(count)]
    mats, vecs = [], []
    for k, kind in enumerate(chosen):
        e = _entity(rng, kind, k, data, full, params)
        (vecs if kind == "pure_function" else mats).append(e)
    offs = [(0,) * nd]
    axes = range(1, nd) if blocks else range(nd)
    for d in axes:
        for sgn in (-1, 1):
            o = [0] * nd
            o[d] = sgn * step
            offs.append(tuple(o))
    if rng.random() < 0.5:
        # add diagonal neighbors, turning the 5-point shape into 9 points
        ax = list(axes)
        for a in ax:
            for b in ax:
                if a < b:
                    for sa in (-1, 1):
                        for sb in (-1, 1):
                            o = [0] * nd
                            o[a], o[b] = sa * step, sb * step
                            offs.append(tuple(o))
    fp = StencilFootprint(data, [("y", o) for o in offs])
    weights = [float(w) for w in rng.uniform(-1, 1, len(offs))]
    nc = ncomp if ncomp is not None else int(rng.choice([1, 3]))
    return Case(name, data, full, mats, vecs, nc, params, fp, weights, tuple(halo))


def coverage_cases(seed: int = 0, step: int = 1) -> list[Case]:
    """One case per built-in kind, so every constructor is exercised."""
    rng = np.random.default_rng(seed)
    out = []
    for kind in KINDS:
        c = random_case(rng, step=step, kinds=(kind,), n_entities=2, name=f"cover-{kind}")
        out.append(c)
    return out


# ---------------------------------------------------------------- checks

def check_structure(program: BoundaryProgram) -> list[str]:
    """Disjoint, exact cover of the valid cells; each predicate constant per box."""
    full = program.full_region
    problems = []
    hits = np.zeros(full.count(), dtype=np.int64)
    frame_addr = {}
    for n, p in enumerate(program.pieces):
        if not p.box.issubset(full):
            problems.append(f"piece {n} box {p.box} leaves the full region")
            continue
        a, _ = lookup(full, p.box.index_arrays())
        frame_addr[n] = a
        hits[a] += 1
    masks = [valid_mask(e, full, program.params) for e in program.entities]
    any_valid = np.logical_or.reduce(masks) if masks else np.zeros(full.count(), dtype=bool)
    if np.any(hits > 1):
        problems.append(f"{int(np.sum(hits > 1))} cells covered by more than one piece")
    if program.pruned:
        if np.any((hits > 0) & ~any_valid):
            problems.append("pruned pieces write cells where nothing is valid")
    elif not np.array_equal(hits == 1, any_valid):
        problems.append("pieces do not cover exactly the valid cells")
    for n, a in frame_addr.items():
        branch = set(program.pieces[n].branch)
        for k, m in enumerate(masks):
            vals = m[a]
            if vals.size and not (vals.all() or not vals.any()):
                problems.append(f"piece {n}: {program.entities[k].name} is not constant on {program.pieces[n].box}")
            elif vals.size and bool(vals[0]) != (k in branch):
                problems.append(f"piece {n}: active set disagrees with {program.entities[k].name}")
    return problems


def check_pruning(program: BoundaryProgram, pruned: BoundaryProgram, footprint: StencilFootprint,
                  weights=None, ncomp: int = 1, trials: int = 50, seed: int = 0) -> list[str]:
    """Read soundness by enumeration plus bitwise equality of the stencil output."""
    problems = []
    full = program.full_region
    data = program.data_region or program.column_space
    weights = weights if weights is not None else [1.0] * len(footprint.reads)
    written = set()
    for p in pruned.pieces:
        written.update(p.box.enumerate())
    original = set()
    for p in program.pieces:
        original.update(p.box.enumerate())
    for r in footprint.read_regions(program.output_var):
        lost = [c for c in r.enumerate() if c in original and c not in written]
        if lost:
            problems.append(f"read of {lost[0]} lost by pruning")
    rng = np.random.default_rng(seed)
    x = GridVar(full, data, ncomp, name=program.input_var)
    for _ in range(trials):
        x.randomize(rng)
        y0 = GridVar(full, data, ncomp, name=program.output_var).randomize(rng)
        ya, yb = y0.copy(), y0.copy()
        if program.input_var == program.output_var:
            ya, yb = x.copy(), x.copy()
            execute_local(program, ya, ya)
            execute_local(pruned, yb, yb)
        else:
            execute_local(program, x, ya)
            execute_local(pruned, x, yb)
        sa = apply_inner_stencil(footprint, weights, ya)
        sb = apply_inner_stencil(footprint, weights, yb)
        if not np.array_equal(sa.read(footprint.inner_domain), sb.read(footprint.inner_domain)):
            problems.append("stencil output differs after pruning")
            break
    return problems


@dataclass
class RankReport:
    ranks: tuple
    identical: bool
    messages: dict
    elements: dict
    exact_packing: bool
    setup_messages: int
    problems: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.identical and self.exact_packing and self.setup_messages == 0 and not self.problems


def check_ranks(program: BoundaryProgram, data: Region, full: Region, halo, ncomp: int = 1,
                ranks=(1, 2, 4), steps: int = 1, seed: int = 0, proc_grids=None) -> RankReport:
    """Gathered distributed output must equal the single-rank run bitwise."""
    rng = np.random.default_rng(seed)
    xg = GridVar(full, data, ncomp, name=program.input_var).randomize(rng)
    yg = GridVar(full, data, ncomp, name=program.output_var).randomize(rng)
    same_var = program.input_var == program.output_var
    ref_y = yg.copy() if not same_var else xg.copy()
    ref_x = xg.copy() if not same_var else ref_y
    for _ in range(steps):
        execute_local(program, ref_x, ref_y)
    identical, exact, setup = True, True, 0
    msgs, elems, problems = {}, {}, []
    for P in ranks:
        try:
            grid = (proc_grids or {}).get(P) or auto_proc_grid(P, data.shape)
            part = partition_grid(data, grid, halo, full)
        except ConfigurationError as exc:
            problems.append(f"P={P}: {exc}")
            continue
        sched = plan_communication(program, part)
        fab = InProcessFabric(P)
        xs = scatter(part, xg)
        ys = xs if same_var else scatter(part, yg)
        for _ in range(steps):
            execute_distributed(program, part, sched, fab, xs, ys)
        out = gather(part, ys, xg if same_var else yg)
        if not np.array_equal(out.values, ref_y.values):
            identical = False
            problems.append(f"P={P}: gathered output differs")
        msgs[P] = fab.stats["messages"]
        elems[P] = sched.elements
        setup += fab.stats["setup_messages"]
        if fab.stats["messages"] != steps * sched.messages:
            problems.append(f"P={P}: {fab.stats['messages']} messages for {steps} steps")
        if fab.stats["bytes"] != steps * 8 * ncomp * sched.elements:
            exact = False
        for b in sched.buckets:
            if not b.count or b.count > b.box.count():
                exact = False
    return RankReport(tuple(ranks), identical, msgs, elems, exact, setup, problems)


@dataclass
class CaseResult:
    case: str
    kinds: set
    oracle: OracleReport
    oracle_pruned: OracleReport
    structure: list
    pruning: list
    ranks: RankReport | None = None

    @property
    def passed(self) -> bool:
        ok = self.oracle.passed and self.oracle_pruned.passed and not self.structure and not self.pruning
        return ok and (self.ranks is None or self.ranks.passed)


def run_case(case: Case, *, trials: int = 3, prune_trials: int = 3, ranks=None, seed: int = 0) -> CaseResult:
    prog = case.stage()
    pruned = case.prune(prog)
    rep = compare_against_oracle(prog, trials=trials, seed=seed, ncomp=case.ncomp)
    rep_p = compare_against_oracle(pruned, trials=trials, seed=seed + 1, ncomp=case.ncomp)
    structure = check_structure(prog) + check_structure(pruned)
    pruning = (check_pruning(prog, pruned, case.footprint, case.stencil_weights, case.ncomp, prune_trials, seed)
               if case.footprint else [])
    rr = None
    if ranks:
        rr = check_ranks(prog, case.data, case.full, case.halo, case.ncomp, ranks, seed=seed)
    return CaseResult(case.name, case.kinds, rep, rep_p, structure, pruning, rr)
