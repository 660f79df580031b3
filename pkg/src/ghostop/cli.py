"""Command line driver: ``ghostop {explain,verify,run,bench} CONFIG``.

Exit codes: 0 success, 1 a verification failed, 2 bad configuration.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import bench, kernels
from .config import Built, ConfigError, parse_config, resolve
from .dist import InProcessFabric, execute_distributed, gather, partition_grid, plan_communication, scatter
from .dist import auto_proc_grid
from .errors import GhostopError
from .pruning import apply_pruning, compute_effective_space
from .runtime import GridVar, compare_against_oracle
from . import suite

log = logging.getLogger("ghostop")

BENCH_TARGETS = {"circular-vs-csr": "circular", "symmetric-vs-csr": "symmetric"}


def _ranks(text: str) -> list[int]:
    try:
        out = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad rank list {text!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("rank counts must be positive")
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ghostop", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config")
        p.add_argument("--ranks", type=_ranks)
        p.add_argument("--seed", type=int)
        p.add_argument("--backend", choices=["auto", "numpy", "compiled"], default="auto")
        p.add_argument("--pruned", action=argparse.BooleanOptionalAction, default=None)
        return p

    common(sub.add_parser("explain", help="print staged and pruned programs and the schedule"))
    p = common(sub.add_parser("verify", help="oracle, structure, pruning and rank checks"))
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--steps", type=int)
    p.add_argument("--random", type=int, default=20, help="extra randomized configurations")
    p = common(sub.add_parser("run", help="execute steps and write GridVar dumps"))
    p.add_argument("--steps", type=int)
    p.add_argument("--out")
    p = sub.add_parser("bench", help="matrix-free against CSR timings, as CSV")
    p.add_argument("config", help="a config file or one of: " + ", ".join(BENCH_TARGETS))
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--ranks", type=_ranks, default=[2, 4])
    p.add_argument("--repeats", type=int, default=200)
    p.add_argument("--backend", choices=["auto", "numpy", "compiled"], default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    return ap


def _load(path) -> Built:
    return resolve(parse_config(path))


def _stage(built: Built):
    t0 = time.perf_counter()
    prog = built.stage()
    print(f"staged {len(prog.pieces)} pieces in {1e3 * (time.perf_counter() - t0):.1f} ms",
          file=sys.stderr)
    return prog


def _partition(built: Built, P: int):
    grid = built.proc_grid(P) or auto_proc_grid(P, built.data.shape)
    return partition_grid(built.data, grid, built.halo(), built.full)


def cmd_explain(args) -> int:
    built = _load(args.config)
    prog = _stage(built)
    out = [f"config {built.config.name}", prog.dump(), "valid cells: "
           + " ".join(f"{k}={v}" for k, v in prog.valid_cells().items())]
    if args.pruned is not False and built.footprints:
        deps = compute_effective_space(prog, built.footprints)
        pruned = apply_pruning(prog, deps)
        out.append("")
        if deps.disabled:
            out.append("pruning disabled: the program reads its own full region")
        out.append(pruned.dump())
        out.append(f"pruning: {prog.cells()} -> {pruned.cells()} cells")
        for n, (p, eff) in enumerate(zip(prog.pieces, deps.effective)):
            out.append(f"  piece {n} box={p.box} cells {p.box.count()} -> {eff.count()}")
        prog = pruned
    for P in args.ranks or built.config.run["ranks"]:
        part = _partition(built, P)
        sched = plan_communication(prog, part)
        out += ["", part.describe(), sched.summary()]
    print("\n".join(out))
    return 0


def _line(ok: bool, text: str) -> bool:
    print(("PASS " if ok else "FAIL ") + text)
    return ok


def cmd_verify(args) -> int:
    built = _load(args.config)
    cfg = built.config
    seed = cfg.run["seed"] if args.seed is None else args.seed
    steps = cfg.run["steps"] if args.steps is None else args.steps
    ncomp = cfg.ncomp(cfg.program["input"])
    backend = kernels.get_backend(args.backend)
    prog = _stage(built)
    programs = [("staged", prog)]
    if args.pruned is not False and built.footprints:
        programs.append(("pruned", built.prune(prog)))
    ok = True
    for label, p in programs:
        rep = compare_against_oracle(p, trials=args.trials, seed=seed, ncomp=ncomp, backend=backend)
        ok &= _line(rep.passed, f"oracle {label}: {rep.trials} trials, max error {rep.max_error:.3g}, "
                                f"coverage {'ok' if rep.coverage_ok else 'wrong'}")
        problems = suite.check_structure(p)
        ok &= _line(not problems, f"structure {label}: {len(p.pieces)} pieces"
                    + "".join(f"\n  {m}" for m in problems[:5]))
    if len(programs) > 1:
        for k, (fp, w) in enumerate(zip(built.footprints, built.stencil_weights)):
            problems = suite.check_pruning(prog, programs[1][1], fp, w, ncomp, trials=50, seed=seed)
            ok &= _line(not problems, f"pruning soundness footprint {k}: 50 inputs"
                        + "".join(f"\n  {m}" for m in problems[:5]))
    ranks = args.ranks or cfg.run["ranks"]
    grids = {P: built.proc_grid(P) for P in ranks}
    for label, p in programs:
        rr = suite.check_ranks(p, built.data, built.full, built.halo(), ncomp, ranks, steps, seed, grids)
        ok &= _line(rr.passed, f"ranks {label} P={list(ranks)}: {steps} steps, messages {rr.messages}, "
                               f"elements {rr.elements}, setup messages {rr.setup_messages}"
                    + "".join(f"\n  {m}" for m in rr.problems[:5]))
    # built-in kinds the config may not use are exercised on random grids
    rng = np.random.default_rng(seed)
    cases = suite.coverage_cases(seed) + [random_case for random_case in
                                          (suite.random_case(rng, step=[1, 2, 4][k % 3], name=f"random{k}")
                                           for k in range(args.random))]
    kinds, bad = set(), []
    for k, case in enumerate(cases):
        res = suite.run_case(case, trials=3, prune_trials=3, ranks=(1, 2, 4) if k % 3 == 0 else None, seed=seed + k)
        kinds |= res.kinds
        if not res.passed:
            bad.append(case.name)
    ok &= _line(not bad, f"randomized suite: {len(cases)} configurations"
                + (f", failing {bad}" if bad else ""))
    missing = sorted(set(suite.KINDS) - kinds)
    ok &= _line(not missing, "kind coverage: " + (f"missing {missing}" if missing else "all built-in kinds"))
    return 0 if ok else 1


def cmd_run(args) -> int:
    built = _load(args.config)
    cfg = built.config
    seed = cfg.run["seed"] if args.seed is None else args.seed
    steps = cfg.run["steps"] if args.steps is None else args.steps
    out_dir = Path(args.out or cfg.run["out"])
    P = (args.ranks or cfg.run["ranks"])[-1]
    prog = _stage(built)
    if args.pruned and built.footprints:
        prog = built.prune(prog)
    ncomp = cfg.ncomp(cfg.program["input"])
    rng = np.random.default_rng(seed)
    x = GridVar(built.full, built.data, ncomp, name=prog.input_var).randomize(rng)
    y = GridVar(built.full, built.data, ncomp, name=prog.output_var)
    part = _partition(built, P)
    sched = plan_communication(prog, part)
    fab = InProcessFabric(P)
    same = prog.input_var == prog.output_var
    xs = scatter(part, x)
    ys = xs if same else scatter(part, y)
    backend = kernels.get_backend(args.backend)
    t0 = time.perf_counter()
    for _ in range(steps):
        execute_distributed(prog, part, sched, fab, xs, ys, backend)
    dt = time.perf_counter() - t0
    result = gather(part, ys, x if same else y)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    if not same:
        x.dump(out_dir / f"{x.name}.gridvar")
        paths.append(out_dir / f"{x.name}.gridvar")
    result.dump(out_dir / f"{result.name}.gridvar")
    paths.append(out_dir / f"{result.name}.gridvar")
    print(f"{steps} steps on {P} ranks: {fab.stats['messages']} messages, {fab.stats['bytes']} bytes, "
          f"{dt * 1e3:.1f} ms")
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_bench(args) -> int:
    if args.config in BENCH_TARGETS:
        kind = BENCH_TARGETS[args.config]
        rows = bench.circular_vs_csr(args.n, (kind,), args.ranks, args.repeats, args.backend)
        name = f"{kind}-n{args.n}"
    else:
        built = _load(args.config)
        cfg = built.config
        from .staging import synthesize_branches
        p = cfg.program
        prog = synthesize_branches(built.mats, [], built.full, built.params, column_space=built.column_space,
                                   data_region=built.data, output_var=p["output"], input_var=p["input"],
                                   full_column=p["full_column"])
        name = cfg.name
        rows = bench.bench_program(name, prog, ranks=args.ranks, halo=built.halo(),
                                   proc_grids={P: built.proc_grid(P) for P in args.ranks},
                                   repeats=args.repeats, backend=args.backend,
                                   ncomp=cfg.ncomp(p["input"]))
    text = bench.to_csv(rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    print(f"matrix-free/csr time ratio {bench.ratio(rows, name):.3f} "
          f"(backend {kernels.get_backend(args.backend).NAME})", file=sys.stderr)
    return 0


COMMANDS = {"explain": cmd_explain, "verify": cmd_verify, "run": cmd_run, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GhostopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
