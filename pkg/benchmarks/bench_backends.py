"""Compiled kernels against the NumPy fallback on the same execution plans.

    python benchmarks/bench_backends.py [--n 1024] [--repeats 100]

Prints CSV: program, backend, cells, ns_per_cell, speedup over numpy.
Both backends must produce bitwise identical output; the script checks.
"""
import argparse
import csv
import sys

import numpy as np

from ghostop import kernels
from ghostop.bench import csr_twin, matrix_free, periodic_grid, time_program
from ghostop.runtime import GridVar, plan_for


def same_output(program, ncomp):
    full, data = program.full_region, program.column_space
    x = GridVar(full, data, ncomp).randomize(np.random.default_rng(1))
    outs = []
    for name in ("numpy", "compiled"):
        y = x.copy()
        plan_for(program, full, full).run(y.flat, x.flat, ncomp, kernels.get_backend(name))
        outs.append(y.values)
    return np.array_equal(outs[0], outs[1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1024)
    ap.add_argument("--repeats", type=int, default=100)
    ap.add_argument("--ncomp", type=int, default=1)
    args = ap.parse_args(argv)
    if "compiled" not in kernels.available():
        print("compiled kernels are not built; reinstall without GHOSTOP_NO_EXT", file=sys.stderr)
        return 1
    data, full = periodic_grid(args.n)
    programs = {}
    for kind in ("circular", "symmetric"):
        programs[kind] = matrix_free(kind, data, full)
        programs[f"{kind}-csr"] = csr_twin(programs[kind])
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["program", "backend", "cells", "ns_per_cell", "speedup"])
    ok = True
    for name, prog in programs.items():
        ok &= same_output(prog, args.ncomp)
        t = {b: time_program(prog, args.ncomp, args.repeats, b) for b in ("numpy", "compiled")}
        for b in ("numpy", "compiled"):
            w.writerow([name, b, prog.cells(), f"{t[b]:.3f}", f"{t['numpy'] / t[b]:.2f}"])
    if not ok:
        print("backends disagree", file=sys.stderr)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
