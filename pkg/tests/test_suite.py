import dataclasses
import subprocess
import sys

import numpy as np

from ghostop import suite
from ghostop.boundary import make_simple
from ghostop.pruning import five_point
from ghostop.region import Region
from ghostop.staging import synthesize_branches

DATA = Region.box((0, 5, 1), (0, 5, 1))
FULL = Region.box((-1, 6, 1), (-1, 6, 1))


def ring():
    return synthesize_branches([make_simple("circular", FULL, (0, 1), DATA, exclude=[DATA])], [], FULL,
                               column_space=DATA, data_region=DATA)


def test_structure_catches_overlap_and_gap():
    prog = ring()
    dup = dataclasses.replace(prog, pieces=prog.pieces + prog.pieces[:1])
    assert any("more than one" in m for m in suite.check_structure(dup))
    gap = dataclasses.replace(prog, pieces=prog.pieces[1:])
    assert any("exactly" in m for m in suite.check_structure(gap))


def test_pruning_check_catches_lost_reads():
    prog = ring()
    # keep only one piece: reads of the others are lost
    bad = dataclasses.replace(prog, pieces=prog.pieces[:1], pruned=True)
    problems = suite.check_pruning(prog, bad, five_point(DATA), [-4.0, 1, 1, 1, 1], trials=5)
    assert problems


def test_random_cases_cover_kinds():
    cases = suite.coverage_cases(0)
    assert set().union(*(c.kinds for c in cases)) == set(suite.KINDS)
    for c in cases:
        assert suite.run_case(c, trials=2, prune_trials=2).passed


def test_random_case_limits():
    rng = np.random.default_rng(0)
    for step in (1, 2, 4):
        for _ in range(30):
            c = suite.random_case(rng, step=step)
            assert 1 <= len(c.mats) + len(c.vecs) <= 4
            assert all(n <= 12 for n in c.data.shape)
            assert all(t == step for t, n in zip(c.data.steps, c.data.shape) if n > 3)


def test_pure_env_forces_numpy():
    code = "from ghostop import kernels; print(kernels.backend.NAME)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={"GHOSTOP_PURE": "1", "PATH": ""}, check=True)
    assert out.stdout.strip() == "numpy"
