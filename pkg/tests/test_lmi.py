import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from fomas.errors import DimensionError
from fomas.lmi import AffineLmiSystem, LmiBlock, Status, VarLayout, dump, eigen_margin, linearize, solve


def scalar_system(*pairs):
    """Blocks ``c0 + c1 * theta``, one 1x1 block per pair."""
    blocks = tuple(LmiBlock([[c0]], [[[c1]]], f"b{i}") for i, (c0, c1) in enumerate(pairs))
    return AffineLmiSystem(1, blocks)


def max_eig_scipy(sys, x):
    # second eigen routine (LAPACK syevr via scipy) for soundness checks
    return max(scipy.linalg.eigh(m, eigvals_only=True, driver="evr")[-1] for m in sys.evaluate(x))


def random_feasible(rng, d, sizes):
    """Blocks built around a known strictly feasible point."""
    x_star = rng.normal(size=d)
    blocks = []
    for i, m in enumerate(sizes):
        coeffs = rng.normal(size=(d, m, m))
        coeffs = coeffs + coeffs.transpose(0, 2, 1)
        g = rng.normal(size=(m, m))
        f_star = -(g @ g.T + 0.1 * np.eye(m))
        f0 = f_star - np.tensordot(x_star, coeffs, axes=1)
        blocks.append(LmiBlock(f0, coeffs, f"b{i}"))
    return AffineLmiSystem(d, tuple(blocks))


class TestSolveExamples:
    def test_single_block(self):
        res = solve(scalar_system((-1.0, 1.0)))
        assert res.feasible
        assert res.point[0] < 1 - 1e-7

    def test_interval(self):
        res = solve(scalar_system((0.0, 1.0), (-1.0, -1.0)))
        assert res.feasible
        assert -1 < res.point[0] < 0

    def test_no_strict_point(self):
        res = solve(scalar_system((0.0, 1.0), (0.0, -1.0)))
        assert res.status is not Status.FEASIBLE

    def test_empty_interval_is_certified(self):
        res = solve(scalar_system((1.0, 1.0), (1.0, -1.0)))
        assert res.status is Status.INFEASIBLE

    def test_zero_variables(self):
        stable = AffineLmiSystem(0, (LmiBlock(-np.eye(2), np.zeros((0, 2, 2))),))
        assert solve(stable).feasible
        unstable = AffineLmiSystem(0, (LmiBlock(np.diag([-1.0, 1.0]), np.zeros((0, 2, 2))),))
        assert not solve(unstable).feasible

    def test_eigen_margin_examples(self):
        sys = scalar_system((-1.0, 1.0))
        assert eigen_margin(sys, [0.0]) == pytest.approx(-1.0)


class TestSolveProperties:
    @settings(max_examples=15, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_soundness(self, d, seed):
        rng = np.random.default_rng(seed)
        sys = random_feasible(rng, d, [2, 3])
        res = solve(sys)
        assert res.feasible
        assert max_eig_scipy(sys, res.point) <= -1e-7
        assert eigen_margin(sys, res.point) <= -1e-7

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_random_systems_sound_either_way(self, seed):
        rng = np.random.default_rng(seed)
        d = 3
        blocks = []
        for i in range(2):
            c = rng.normal(size=(d, 3, 3))
            blocks.append(LmiBlock(rng.normal(size=(3, 3)), c + c.transpose(0, 2, 1), f"b{i}"))
        sys = AffineLmiSystem(d, tuple(blocks))
        res = solve(sys, radius=1e3)
        if res.feasible:
            assert max_eig_scipy(sys, res.point) <= -1e-7

    def test_deterministic(self, rng):
        sys = random_feasible(rng, 5, [3, 2])
        a, b = solve(sys), solve(sys)
        assert a.status == b.status
        np.testing.assert_allclose(a.point, b.point, atol=1e-12)

    @pytest.mark.parametrize("scale", [1e-3, 0.5, 7.0, 1e3])
    def test_scaling_preserves_status(self, rng, scale):
        feas = random_feasible(rng, 4, [3])
        infeas = scalar_system((1.0, 1.0), (1.0, -1.0))
        for sys in (feas, infeas):
            scaled = AffineLmiSystem(sys.n_vars, tuple(b.scaled(scale) for b in sys.blocks))
            assert solve(sys).feasible == solve(scaled).feasible

    def test_minimisation_mode(self, rng):
        sys = random_feasible(rng, 3, [2])
        res = solve(sys, target=-np.inf, radius=50.0, rel_gap=1e-3)
        assert res.feasible
        assert res.margin <= solve(sys).margin


class TestStructures:
    def test_blocks_symmetrized(self):
        b = LmiBlock([[0.0, 2.0], [0.0, 0.0]], np.zeros((1, 2, 2)))
        np.testing.assert_array_equal(b.f0, [[0, 1], [1, 0]])

    def test_dimension_checks(self):
        with pytest.raises(DimensionError):
            LmiBlock(np.zeros((2, 3)), np.zeros((1, 2, 3)))
        with pytest.raises(DimensionError):
            AffineLmiSystem(2, (LmiBlock(np.zeros((1, 1)), np.zeros((1, 1, 1))),))

    def test_layout_round_trip(self, rng):
        mask = np.array([[1, 0], [1, 1]], dtype=bool)
        lay = VarLayout().symmetric("S", 3).skew("W", 3).scalar("mu").masked("K", mask)
        assert lay.n_vars == 6 + 3 + 1 + 3
        x = rng.normal(size=lay.n_vars)
        v = lay.unpack(x)
        np.testing.assert_array_equal(v["S"], v["S"].T)
        np.testing.assert_array_equal(v["W"], -v["W"].T)
        assert v["K"][0, 1] == 0
        np.testing.assert_allclose(lay.pack(v), x)
        assert len(lay.labels()) == lay.n_vars

    def test_linearize_matches_direct(self, rng):
        a = rng.normal(size=(3, 3))
        lay = VarLayout().symmetric("P", 3)
        sys = linearize(lay, lambda v: [a.T @ v["P"] + v["P"] @ a], ("lyap",))
        x = rng.normal(size=lay.n_vars)
        p = lay.unpack(x)["P"]
        np.testing.assert_allclose(sys.evaluate(x)[0], a.T @ p + p @ a, atol=1e-12)

    def test_dump(self, tmp_path):
        path = tmp_path / "sys.txt"
        dump(scalar_system((-1.0, 0.1)), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "n_vars 1 n_blocks 1"
        assert float(lines[3]) == 0.1
        assert lines[3] == "0.10000000000000001"
