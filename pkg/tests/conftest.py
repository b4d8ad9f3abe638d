import sys

import numpy as np
import pytest

from rdnet import mesh
from rdnet.compartmental import assemble
from rdnet.crn import ReactionNetwork, balance


def ab_network(kf=2.0, kb=1.0, diffusion=(1.0, 1.0)):
    return ReactionNetwork.from_reactions(["A", "B"], [({"A": 1}, {"B": 1}, kf, kb)], diffusion)


def random_balanced_network(rng, max_m=4, max_c=4, max_r=4, max_coef=2):
    """Random reversible network with detailed-balanced rates.

    Rates are synthesised from a random positive equilibrium and random
    balanced constants, so a thermodynamic equilibrium exists by construction.
    """
    m = int(rng.integers(1, max_m + 1))
    c = int(rng.integers(2, max_c + 1))
    cols = []
    while len(cols) < c:
        col = tuple(int(v) for v in rng.integers(0, max_coef + 1, m))
        if any(col) and col not in cols:
            cols.append(col)
        elif len(cols) >= (max_coef + 1) ** m - 1:
            break
    c = len(cols)
    if c < 2:
        return random_balanced_network(rng, max_m, max_c, max_r, max_coef)
    Z = np.array(cols).T
    r = int(rng.integers(1, max_r + 1))
    B = np.zeros((c, r), dtype=int)
    for j in range(r):
        s, p = rng.choice(c, 2, replace=False)
        B[s, j], B[p, j] = -1, 1
    x_star = rng.uniform(0.2, 5.0, m)
    kappa = rng.uniform(0.1, 10.0, r)
    zl = Z.T @ np.log(x_star)
    src, prod = np.argmin(B, axis=0), np.argmax(B, axis=0)
    kf = kappa / np.exp(zl[src])
    kb = kappa / np.exp(zl[prod])
    names = [f"S{i}" for i in range(m)]
    return ReactionNetwork(tuple(names), Z, B, kf, kb, rng.uniform(0.5, 2.0, m)), x_star


@pytest.fixture
def ab_net():
    return ab_network()


@pytest.fixture
def ab_bf(ab_net):
    return balance(ab_net, [1.0, 2.0])


@pytest.fixture
def fig1_mesh():
    return mesh.fig1()


@pytest.fixture
def fig1_sys(ab_net, ab_bf, fig1_mesh):
    return assemble(ab_net, ab_bf, fig1_mesh)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
