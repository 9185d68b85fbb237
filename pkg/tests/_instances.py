"""Random problem instances shared by the tests."""

import numpy as np

from fomas.graph import AgentGraph
from fomas.model import AgentDynamics, ControllerBlock, DecentralizedController, FomasProblem
from fomas.uncertainty import UncertaintyModel, UncertaintyRealization


def random_graph(n_agents, rng):
    a = np.zeros((n_agents, n_agents))
    perm = rng.permutation(n_agents)
    for i, j in zip(perm[:-1], perm[1:]):
        a[i, j] = a[j, i] = rng.uniform(0.5, 2.0)
    extra = np.triu(rng.random((n_agents, n_agents)) < 0.3, 1) * rng.uniform(0.1, 1.0, (n_agents, n_agents))
    return AgentGraph(a + extra + extra.T)


def random_problem(rng, n_agents=None, n=None, l=1, q=1, n_c=0, m0=1, uncertain=True):
    n_agents = n_agents or int(rng.integers(2, 6))
    n = n or int(rng.integers(1, 5))
    dyn = AgentDynamics(rng.normal(size=(n, n)),
                        tuple(rng.normal(size=(n, l)) for _ in range(n_agents)),
                        rng.normal(size=(q, n)))
    unc = real = None
    if uncertain:
        unc = UncertaintyModel(0.3 * rng.normal(size=(n, m0)), 0.3 * rng.normal(size=(m0, n)), np.eye(m0))
        real = UncertaintyRealization(tuple(rng.uniform(0, 0.9) * np.eye(m0) for _ in range(n_agents)))
    return FomasProblem(dyn, random_graph(n_agents, rng), 0.8, n_c, unc, real)


def random_controller(p, rng, scale=1.0):
    blocks = tuple(ControllerBlock(scale * rng.normal(size=(p.n_c, p.n_c)), scale * rng.normal(size=(p.n_c, p.q)),
                                   scale * rng.normal(size=(p.l, p.n_c)), scale * rng.normal(size=(p.l, p.q)))
                   for _ in range(p.n_agents))
    return DecentralizedController(blocks)
