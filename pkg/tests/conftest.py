import itertools

import numpy as np
import pytest

from perc_chem.graph import build_box, build_heisenberg, build_lattice


@pytest.fixture(scope="session")
def z2_small():
    return build_lattice(2, 8)


@pytest.fixture(scope="session")
def heis6():
    return build_heisenberg(6)


@pytest.fixture(scope="session")
def box44():
    return build_box((4, 4))


def l1_ball(d, L):
    """Brute-force enumeration of the L1 ball."""
    return [c for c in itertools.product(range(-L, L + 1), repeat=d) if sum(map(abs, c)) <= L]


def heis_matrix(c):
    a, b, z = c
    return np.array([[1, a, z], [0, 1, b], [0, 0, 1]], dtype=np.int64)


def heis_ball_oracle(r):
    """Word ball via products of 3x3 integer matrices (independent of the group-law helper)."""
    gens = [heis_matrix(g) for g in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0))]
    key = lambda m: (int(m[0, 1]), int(m[1, 2]), int(m[0, 2]))
    seen = {key(np.eye(3, dtype=np.int64)): 0}
    frontier = [np.eye(3, dtype=np.int64)]
    for step in range(1, r + 1):
        nxt = []
        for m in frontier:
            for g in gens:
                h = m @ g
                k = key(h)
                if k not in seen:
                    seen[k] = step
                    nxt.append(h)
        frontier = nxt
    return seen
