"""JSON problem and controller files."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .graph import AgentGraph, is_connected
from .model import AgentDynamics, ControllerBlock, DecentralizedController, FomasProblem
from .simulation import SimulationConfig
from .synthesis import HomotopyConfig, SynthesisResult
from .uncertainty import UncertaintyModel, UncertaintyRealization, delta_from_z, is_admissible_delta

log = logging.getLogger(__name__)

PAPER_EXAMPLE = "paper_example.json"


class ProblemFormatError(ValueError):
    pass


class InadmissibleDeltaWarning(UserWarning):
    """A listed delta lies outside the positive-real class generated by J."""


@dataclass
class ProblemFile:
    problem: FomasProblem
    sim: SimulationConfig | None = None
    x0: np.ndarray | None = None
    homotopy: HomotopyConfig = field(default_factory=HomotopyConfig)
    references: dict = field(default_factory=dict)


def bundled_example_path() -> Path:
    return Path(str(resources.files("fomas") / "data" / PAPER_EXAMPLE))


def _array(doc, key, path, shape=None, ndim=2):
    if key not in doc:
        raise ProblemFormatError(f"missing key {path}")
    try:
        a = np.array(doc[key], dtype=float)
    except (TypeError, ValueError):
        raise ProblemFormatError(f"{path} must be a rectangular numeric array") from None
    if a.ndim == 0 and ndim == 2:
        a = a.reshape(1, 1)
    if a.ndim != ndim:
        raise ProblemFormatError(f"{path} must be a {ndim}-D array, got {a.ndim}-D")
    if not np.all(np.isfinite(a)):
        raise ProblemFormatError(f"{path} contains non-finite values")
    if shape is not None:
        want = tuple(shape)
        if a.shape != want:
            raise ProblemFormatError(f"{path}: expected shape {'x'.join(map(str, want))}, got {'x'.join(map(str, a.shape))}")
    return a


def problem_from_dict(doc: dict) -> ProblemFile:
    if "alpha" not in doc:
        raise ProblemFormatError("missing key alpha")
    alpha = float(doc["alpha"])
    if not 0.0 < alpha < 1.0:
        raise ProblemFormatError("alpha must lie in (0,1)")
    n_c = doc.get("n_c", 0)
    if not isinstance(n_c, int) or n_c < 0:
        raise ProblemFormatError("n_c must be a nonnegative integer")
    a = _array(doc, "A", "A")
    n = a.shape[0]
    if a.shape != (n, n):
        raise ProblemFormatError(f"A: expected a square matrix, got {a.shape[0]}x{a.shape[1]}")
    c = _array(doc, "C", "C")
    if c.shape[1] != n:
        raise ProblemFormatError(f"C: expected shape qx{n}, got {c.shape[0]}x{c.shape[1]}")
    agents = doc.get("agents")
    if not isinstance(agents, list) or not agents:
        raise ProblemFormatError("agents must be a nonempty list of {B: n x l array}")
    bs = []
    for i, ag in enumerate(agents):
        b = _array(ag, "B", f"agents[{i}].B")
        if b.shape[0] != n:
            raise ProblemFormatError(f"agents[{i}].B: expected shape {n}xl, got {b.shape[0]}x{b.shape[1]}")
        if bs and b.shape != bs[0].shape:
            raise ProblemFormatError(f"agents[{i}].B: expected shape {bs[0].shape[0]}x{bs[0].shape[1]}, got {b.shape[0]}x{b.shape[1]}")
        bs.append(b)
    n_agents = len(bs)
    adj = _array(doc, "adjacency", "adjacency", (n_agents, n_agents))
    try:
        graph = AgentGraph(adj)
    except ValueError as exc:
        raise ProblemFormatError(f"adjacency: {exc}") from None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        connected = is_connected(graph)
    if not connected:
        warnings.warn("graph is not connected; design will fail", UserWarning, stacklevel=2)
    if not graph.is_symmetric:
        log.warning("adjacency is not symmetric; consensus guarantees are only established for undirected graphs")

    unc = real = None
    if doc.get("uncertainty") is not None:
        u = doc["uncertainty"]
        j = _array(u, "J", "uncertainty.J")
        m0 = j.shape[0]
        if j.shape != (m0, m0):
            raise ProblemFormatError(f"uncertainty.J: expected a square matrix, got {j.shape[0]}x{j.shape[1]}")
        m = _array(u, "M", "uncertainty.M", (n, m0))
        r = _array(u, "R", "uncertainty.R", (m0, n))
        unc = UncertaintyModel(m, r, j)
        if np.linalg.eigvalsh(j + j.T)[0] <= 0:
            raise ProblemFormatError("uncertainty.J: J + J^T must be positive definite")
        if "deltas" in u and "Z" in u:
            raise ProblemFormatError("uncertainty: give either deltas or Z, not both")
        if "deltas" in u or "Z" in u:
            key = "deltas" if "deltas" in u else "Z"
            raw = u[key]
            if not isinstance(raw, list) or len(raw) != n_agents:
                raise ProblemFormatError(f"uncertainty.{key}: expected a list of {n_agents} entries")
            mats = [_array({"v": v}, "v", f"uncertainty.{key}[{i}]", (m0, m0)) for i, v in enumerate(raw)]
            if key == "Z":
                try:
                    mats = [delta_from_z(zm, j) for zm in mats]
                except ValueError as exc:
                    raise ProblemFormatError(f"uncertainty.Z: {exc}") from None
            real = UncertaintyRealization(tuple(mats))
            bad = [i + 1 for i, d in enumerate(mats) if not is_admissible_delta(d, j)]
            if bad:
                warnings.warn(f"deltas for agents {bad} are outside the positive-real class of J; "
                              "they are still used for verification and simulation",
                              InadmissibleDeltaWarning, stacklevel=2)

    problem = FomasProblem(AgentDynamics(a, tuple(bs), c), graph, alpha, n_c, unc, real)

    sim = x0 = None
    if doc.get("sim") is not None:
        s = doc["sim"]
        sim = SimulationConfig(float(s.get("h", 1e-3)), float(s.get("t_end", 30.0)),
                               s.get("scheme", "gl_corrected"))
        if "x0" in s:
            x0 = _array(s, "x0", "sim.x0", (n_agents * n,), ndim=1)
    hom = HomotopyConfig()
    if doc.get("homotopy") is not None:
        h = doc["homotopy"]
        hom = HomotopyConfig(
            t_steps=int(h.get("T", hom.t_steps)),
            eps_feas=float(h.get("eps_feas", hom.eps_feas)),
            q_shift=float(h.get("q_shift", hom.q_shift)),
            max_refinements=int(h.get("max_refinements", hom.max_refinements)),
        )
    refs = {name: controller_from_dict(c, f"reference_controllers.{name}")
            for name, c in (doc.get("reference_controllers") or {}).items()}
    return ProblemFile(problem, sim, x0, hom, refs)


def read_problem_file(path) -> ProblemFile:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ProblemFormatError(f"{path}: invalid JSON ({exc})") from None
    return problem_from_dict(doc)


def parse_problem(path) -> FomasProblem:
    return read_problem_file(path).problem


def problem_to_dict(pf: ProblemFile | FomasProblem) -> dict:
    if isinstance(pf, FomasProblem):
        pf = ProblemFile(pf)
    p = pf.problem
    doc = {
        "alpha": p.alpha,
        "n_c": p.n_c,
        "A": p.dynamics.a_tilde.tolist(),
        "C": p.dynamics.c_tilde.tolist(),
        "agents": [{"B": b.tolist()} for b in p.dynamics.b_list],
        "adjacency": p.graph.adjacency.tolist(),
    }
    if p.uncertainty is not None:
        u = {"M": p.uncertainty.left_factor.tolist(), "R": p.uncertainty.right_factor.tolist(),
             "J": p.uncertainty.j_matrix.tolist()}
        if p.realization is not None:
            u["deltas"] = [d.tolist() for d in p.realization.per_agent_delta]
        doc["uncertainty"] = u
    if pf.sim is not None:
        doc["sim"] = {"h": pf.sim.step, "t_end": pf.sim.t_end, "scheme": pf.sim.scheme}
        if pf.x0 is not None:
            doc["sim"]["x0"] = np.asarray(pf.x0).tolist()
    hc = pf.homotopy
    doc["homotopy"] = {"T": hc.t_steps, "eps_feas": hc.eps_feas, "q_shift": hc.q_shift,
                       "max_refinements": hc.max_refinements}
    if pf.references:
        doc["reference_controllers"] = {k: controller_to_dict(v) for k, v in pf.references.items()}
    return doc


def dumps(doc, indent: int = 1, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(doc, bool) or doc is None:
        return json.dumps(doc)
    if isinstance(doc, (int, np.integer)):
        return str(int(doc))
    if isinstance(doc, (float, np.floating)):
        v = float(doc)
        if not np.isfinite(v):
            raise ValueError("non-finite value cannot be written")
        text = f"{v:.17g}"
        return text if any(ch in text for ch in ".en") else text + ".0"
    if isinstance(doc, str):
        return json.dumps(doc)
    if isinstance(doc, dict):
        if not doc:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in doc.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(doc, (list, tuple, np.ndarray)):
        seq = list(doc)
        if not seq:
            return "[]"
        if all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(doc).__name__}")


def _write(doc, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(doc) + "\n")


def write_problem_file(pf, path) -> None:
    _write(problem_to_dict(pf), path)


# ---------------------------------------------------------------------------
# controllers


def controller_to_dict(k: DecentralizedController, provenance: dict | None = None) -> dict:
    doc = {
        "n_c": k.n_c,
        "agents": [({"A_c": b.a_c.tolist(), "B_c": b.b_c.tolist(), "C_c": b.c_c.tolist()} if k.n_c else {})
                   | {"D_c": b.d_c.tolist()} for b in k.blocks],
    }
    if provenance is not None:
        doc["provenance"] = provenance
    return doc


def controller_from_dict(doc: dict, where: str = "controller") -> DecentralizedController:
    if "agents" not in doc:
        raise ProblemFormatError(f"{where}: missing key agents")
    n_c = int(doc.get("n_c", 0))
    blocks = []
    for i, ag in enumerate(doc["agents"]):
        path = f"{where}.agents[{i}]"
        d = _array(ag, "D_c", f"{path}.D_c")
        l, q = d.shape
        if n_c == 0:
            blocks.append(ControllerBlock.static(d))
            continue
        a = _array(ag, "A_c", f"{path}.A_c", (n_c, n_c))
        b = _array(ag, "B_c", f"{path}.B_c", (n_c, q))
        c = _array(ag, "C_c", f"{path}.C_c", (l, n_c))
        blocks.append(ControllerBlock(a, b, c, d))
    return DecentralizedController(tuple(blocks))


def synthesis_provenance(p: FomasProblem, res: SynthesisResult) -> dict:
    trace = res.eta_trace
    return {
        "alpha": p.alpha,
        "mode": "robust" if res.robust else "nominal",
        "robustly_stable": bool(res.robustly_stable),
        "eta_trace": {"steps": len(trace) - 1, "final_eta": trace[-1][0], "final_margin": trace[-1][1],
                      "margins": [[e, m] for e, m in trace]},
        "mu": res.mu,
        "verification": {k: v for k, v in res.verification.items()},
        "certificate": {k: np.asarray(v).tolist() for k, v in res.x_matrices.items()},
    }


def write_controller_file(k: DecentralizedController, path, provenance: dict | None = None) -> None:
    _write(controller_to_dict(k, provenance), path)


def read_controller_file(path) -> DecentralizedController:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ProblemFormatError(f"{path}: invalid JSON ({exc})") from None
    return controller_from_dict(doc, str(path))
