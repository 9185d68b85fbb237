import numpy as np
import pytest

from fomas.errors import ConnectivityError, HomotopyStalled
from fomas.graph import AgentGraph, cycle_graph
from fomas.lmi import eigen_margin, solve
from fomas.model import AgentDynamics, DecentralizedController, ControllerBlock, FomasProblem, closed_loop
from fomas.stability import spectral_stable
from fomas.synthesis import (HomotopyConfig, certificate_margin, corollary1_constraints, default_q,
                             f1_constraints, homotopy_blend, k_step_constraints, synthesize,
                             theorem1_constraints, verification_deltas, verify)
from fomas.uncertainty import UncertaintyModel, UncertaintyRealization


def toy(a, b, n_agents=2, n_c=0, uncertain=True):
    dyn = AgentDynamics([[a]], tuple(np.array([[b]]) for _ in range(n_agents)), [[1.0]])
    graph = AgentGraph([[0, 1], [1, 0]]) if n_agents == 2 else cycle_graph(n_agents)
    unc = real = None
    if uncertain:
        unc = UncertaintyModel([[0.5]], [[0.5]], [[1.0]])
        real = UncertaintyRealization(tuple(np.array([[0.6]]) for _ in range(n_agents)))
    return FomasProblem(dyn, graph, 0.7, n_c, unc, real)


@pytest.fixture(scope="module")
def example_static(example):
    return synthesize(example, HomotopyConfig())


class TestConstraintSystems:
    def test_reference_gains_certify(self, example, refs):
        assert solve(theorem1_constraints(example, refs["ref_robust_order0"])).feasible
        assert solve(corollary1_constraints(example, refs["ref_nominal_order0"])).feasible

    def test_block_sizes(self, example, refs):
        sys = theorem1_constraints(example, refs["ref_robust_order0"])
        assert [b.size for b in sys.blocks] == [2 * 12 + 4 * 3, 24, 24, 1]
        assert sys.n_vars == 2 * 78 + 2 * 66 + 1

    def test_unstable_loop_infeasible(self, example):
        k = DecentralizedController(tuple(ControllerBlock.static([[5.0]]) for _ in range(4)))
        assert not spectral_stable(closed_loop(example, k).a_cl, 0.8)
        assert not solve(corollary1_constraints(example, k)).feasible

    def test_f1_rejects_singular_shift(self, example):
        p = example.with_order(2)
        with pytest.raises(ValueError, match="Hurwitz"):
            f1_constraints(p, q=np.zeros((20, 20)))

    def test_f1_feasible(self, example):
        assert solve(f1_constraints(example)).feasible

    def test_default_q(self, example):
        from fomas.model import k_decomposition
        kd = k_decomposition(example)
        np.testing.assert_allclose(kd.a_k - default_q(example, 2.0), -2.0 * np.eye(12))

    def test_k_step_structure(self, example, example_static):
        sys = k_step_constraints(example, example_static.x_matrices, example_static.mu)
        assert sys.n_vars == 4 and len(sys.blocks) == 1
        k = example_static.controller.k_matrix()
        point = np.diag(k)
        full = theorem1_constraints(example, example_static.controller)
        assert eigen_margin(sys, point) == pytest.approx(float(np.linalg.eigvalsh(full.blocks[0].evaluate(
            full_point(example, example_static)))[-1]), abs=1e-9)


def full_point(p, res):
    from fomas.synthesis import _xmu_layout
    return _xmu_layout(p.n_cl, True).pack({**res.x_matrices, "mu": res.mu})


@pytest.fixture(scope="module")
def pair(example, refs):
    return f1_constraints(example), theorem1_constraints(example, refs["ref_robust_order0"])


class TestBlend:
    def test_endpoints(self, pair):
        f1, f2 = pair
        assert homotopy_blend(f1, f2, 0.0) is f1
        assert homotopy_blend(f1, f2, 1.0) is f2

    def test_midpoint(self, pair):
        f1, f2 = pair
        mid = homotopy_blend(f1, f2, 0.5)
        for b, b1, b2 in zip(mid.blocks, f1.blocks, f2.blocks):
            np.testing.assert_allclose(b.f0, (b1.f0 + b2.f0) / 2)
            np.testing.assert_allclose(b.coeffs, (b1.coeffs + b2.coeffs) / 2)

    def test_range(self, pair):
        with pytest.raises(ValueError):
            homotopy_blend(*pair, 1.5)


class TestToySynthesis:
    def test_unstable_scalar_agents(self):
        p = toy(a=1.0, b=1.0)
        res = synthesize(p, HomotopyConfig(t_steps=4))
        assert res.robustly_stable
        assert certificate_margin(p, res) <= -1e-7
        assert all(m <= -1e-7 for _, m in res.eta_trace)

    def test_dynamic_order(self):
        p = toy(a=0.5, b=1.0, n_agents=3, n_c=1)
        res = synthesize(p, HomotopyConfig(t_steps=4))
        assert res.robustly_stable
        assert res.controller.n_c == 1
        assert certificate_margin(p, res) <= -1e-7

    def test_nominal_mode(self):
        p = toy(a=1.0, b=1.0, uncertain=False)
        res = synthesize(p, HomotopyConfig(t_steps=3), robust=False)
        assert res.robustly_stable
        assert spectral_stable(closed_loop(p, res.controller).a_cl, p.alpha)

    def test_uncontrollable_stalls(self):
        p = toy(a=1.0, b=0.0)
        with pytest.raises(HomotopyStalled) as info:
            synthesize(p, HomotopyConfig(t_steps=2, max_refinements=2))
        assert 0.0 < info.value.eta <= 1.0

    def test_disconnected(self):
        p = FomasProblem(AgentDynamics([[1.0]], (np.ones((1, 1)),) * 2, [[1.0]]), AgentGraph(np.zeros((2, 2))),
                         0.5, uncertainty=UncertaintyModel([[1.0]], [[1.0]], [[1.0]]))
        with pytest.raises(ConnectivityError):
            synthesize(p)

    def test_robust_needs_model(self):
        with pytest.raises(ValueError):
            synthesize(toy(1.0, 1.0, uncertain=False))


class TestExampleStatic:
    def test_result(self, example, example_static):
        assert example_static.robustly_stable
        assert certificate_margin(example, example_static) <= -1e-7
        assert example_static.eta_trace[-1][0] == 1.0
        assert all(m <= -1e-7 for _, m in example_static.eta_trace)

    def test_static_only(self, example_static):
        k = example_static.controller
        assert k.n_c == 0
        assert all(b.a_c.size == 0 and b.b_c.size == 0 and b.c_c.size == 0 for b in k.blocks)

    def test_nominal_consistency(self, example, example_static):
        assert solve(corollary1_constraints(example, example_static.controller)).feasible

    def test_verification(self, example, example_static):
        checks = verify(example, example_static.controller)
        assert set(checks) == {"nominal", "agent1", "agent2", "agent3", "agent4", "worst"}
        assert all(v > 0 for v in checks.values())


def test_verification_order(example):
    labels = [lbl for lbl, _ in verification_deltas(example, [np.array([[0.3]])])]
    assert labels == ["agent1", "agent2", "agent3", "agent4", "worst", "sample0"]
