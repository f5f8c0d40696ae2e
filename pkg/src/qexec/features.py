"""Global and graph feature encodings of a circuit."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .circuit import INIT, MEASURE, Circuit, CircuitDag, GateRegistry, asap_layers, depth, to_dag

MAX_QUBITS = 127
METRIC_NAMES = (
    "num_qubits",
    "depth",
    "program_communication",
    "critical_depth",
    "entanglement_ratio",
    "parallelism",
    "liveness",
)


class FeatureError(ValueError):
    pass


# -- calibration --------------------------------------------------------------


@dataclass(frozen=True)
class BackendCalibration:
    backend_id: str
    t1: tuple[float, ...]  # microseconds, one per qubit
    t2: tuple[float, ...]

    def __post_init__(self):
        if len(self.t1) != len(self.t2):
            raise FeatureError("T1 and T2 lists differ in length")
        for q, (a, b) in enumerate(zip(self.t1, self.t2)):
            if not (math.isfinite(a) and math.isfinite(b) and a > 0 and b > 0):
                raise FeatureError(f"{self.backend_id}: qubit {q} has non-positive or non-finite T1/T2")

    @property
    def num_qubits(self) -> int:
        return len(self.t1)

    @classmethod
    def from_text(cls, text: str) -> "BackendCalibration":
        """Parse ``key = value`` records followed by ``index, T1_us, T2_us`` rows."""
        meta: dict[str, str] = {}
        rows: dict[int, tuple[float, float]] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, value = (s.strip() for s in line.split("=", 1))
                meta[key] = value
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                if len(parts) != 3:
                    raise ValueError("expected 'index, T1_us, T2_us'")
                idx = int(parts[0])
                if idx in rows:
                    raise ValueError(f"qubit {idx} listed twice")
                rows[idx] = (float(parts[1]), float(parts[2]))
            except ValueError as exc:
                raise FeatureError(f"calibration line {lineno}: {exc}") from None
        if "backend_id" not in meta:
            raise FeatureError("calibration file has no backend_id record")
        n = int(meta.get("num_qubits", len(rows)))
        if sorted(rows) != list(range(n)):
            raise FeatureError(f"calibration must list qubits 0..{n - 1} exactly once")
        return cls(meta["backend_id"], tuple(rows[q][0] for q in range(n)), tuple(rows[q][1] for q in range(n)))

    @classmethod
    def from_file(cls, path: str | Path) -> "BackendCalibration":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        lines = [f"backend_id = {self.backend_id}", f"num_qubits = {self.num_qubits}", "# index, T1_us, T2_us"]
        lines += [f"{q}, {a!r}, {b!r}" for q, (a, b) in enumerate(zip(self.t1, self.t2))]
        return "\n".join(lines) + "\n"


# -- global features ------------------------------------------------------------


@dataclass(frozen=True)
class GlobalFeatures:
    gate_counts: tuple[int, ...]
    num_qubits: int
    depth: int
    program_communication: float
    critical_depth: float
    entanglement_ratio: float
    parallelism: float
    liveness: float

    def to_vector(self) -> np.ndarray:
        return np.array(
            list(self.gate_counts)
            + [
                self.num_qubits,
                self.depth,
                self.program_communication,
                self.critical_depth,
                self.entanglement_ratio,
                self.parallelism,
                self.liveness,
            ],
            dtype=np.float64,
        )


def global_feature_names(registry: GateRegistry) -> list[str]:
    return [f"count_{name}" for name in registry.names] + list(METRIC_NAMES)


def program_communication(circuit: Circuit) -> float:
    """Average normalized degree of the two-qubit interaction graph."""
    n = circuit.num_qubits
    if n <= 1:
        return 0.0
    edges = {frozenset(op.qubits) for op in circuit.gates if op.arity == 2}
    degree_sum = 2 * len(edges)
    return degree_sum / (n * (n - 1))


def critical_path(circuit: Circuit) -> tuple[int, int]:
    """(length, two-qubit ops) of the longest gate dependency chain.

    Among equally long chains the one with the most two-qubit ops wins.
    """
    frontier: list[tuple[int, int]] = [(0, 0)] * circuit.num_qubits
    best = (0, 0)
    for op in circuit.gates:
        prev = max(frontier[q] for q in op.qubits)
        cur = (prev[0] + 1, prev[1] + (op.arity == 2))
        for q in op.qubits:
            frontier[q] = cur
        best = max(best, cur)
    return best


def critical_depth(circuit: Circuit) -> float:
    n2q = sum(op.arity == 2 for op in circuit.gates)
    if n2q == 0:
        return 0.0
    return critical_path(circuit)[1] / n2q


def entanglement_ratio(circuit: Circuit) -> float:
    gates = circuit.gates
    if not gates:
        return 0.0
    return sum(op.arity == 2 for op in gates) / len(gates)


def parallelism(circuit: Circuit) -> float:
    gates = circuit.gates
    n = circuit.num_qubits
    d = max(asap_layers(n, gates), default=0)
    if n <= 1 or d == 0:
        return 0.0
    return min(1.0, max(0.0, (len(gates) / d - 1) / (n - 1)))


def liveness_matrix(circuit: Circuit) -> np.ndarray:
    """qubits x ASAP-layers matrix, 1 where the qubit hosts a gate in that layer."""
    gates = circuit.gates
    layers = asap_layers(circuit.num_qubits, gates)
    mat = np.zeros((circuit.num_qubits, max(layers, default=0)), dtype=np.int64)
    for op, layer in zip(gates, layers):
        for q in op.qubits:
            mat[q, layer - 1] = 1
    return mat


def liveness(circuit: Circuit) -> float:
    mat = liveness_matrix(circuit)
    if mat.size == 0:
        return 0.0
    return float(mat.sum()) / mat.size


def global_features(circuit: Circuit, registry: GateRegistry) -> GlobalFeatures:
    counts = [0] * len(registry)
    for op in circuit.gates:
        if op.name not in registry:
            raise FeatureError(f"gate {op.name!r} is not in the global registry")
        counts[registry.index(op.name)] += 1
    return GlobalFeatures(
        gate_counts=tuple(counts),
        num_qubits=circuit.num_qubits,
        depth=depth(circuit),
        program_communication=program_communication(circuit),
        critical_depth=critical_depth(circuit),
        entanglement_ratio=entanglement_ratio(circuit),
        parallelism=parallelism(circuit),
        liveness=liveness(circuit),
    )


# -- graph features -------------------------------------------------------------


@dataclass(frozen=True)
class NodeLayout:
    """Column layout of node-feature rows for a given node registry."""

    num_gate_types: int
    max_qubits: int = MAX_QUBITS

    @property
    def type_slots(self) -> int:
        return 2 + self.num_gate_types

    @property
    def pos_offset(self) -> int:
        return self.type_slots

    @property
    def calib_offset(self) -> int:
        return self.pos_offset + self.max_qubits

    @property
    def index_col(self) -> int:
        return self.calib_offset + 4

    @property
    def dim(self) -> int:
        return self.index_col + 1


@dataclass
class GraphSample:
    node_features: np.ndarray  # (n, dim)
    edges: np.ndarray  # (m, 2) int, into-node edges in operand order
    circuit_id: str = ""
    backend_id: str = ""

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        n = len(self.node_features)
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= n):
            raise FeatureError("edge index out of range")

    @property
    def num_nodes(self) -> int:
        return len(self.node_features)


def node_features(dag: CircuitDag, calib: BackendCalibration, registry: GateRegistry) -> np.ndarray:
    layout = NodeLayout(len(registry))
    if dag.num_qubits > layout.max_qubits:
        raise FeatureError(f"circuit uses {dag.num_qubits} qubits; at most {layout.max_qubits} are encodable")
    if dag.num_qubits > calib.num_qubits:
        raise FeatureError(
            f"backend {calib.backend_id} calibrates {calib.num_qubits} qubits, circuit needs {dag.num_qubits}"
        )
    out = np.zeros((len(dag.nodes), layout.dim))
    for row, node in zip(out, dag.nodes):
        if node.kind == INIT:
            slot = 0
        elif node.kind == MEASURE:
            slot = 1
        else:
            if node.kind not in registry:
                raise FeatureError(f"gate {node.kind!r} is not in the node registry")
            slot = 2 + registry.index(node.kind)
        row[slot] = 1.0
        for k, q in enumerate(node.qubits):
            row[layout.pos_offset + q] = 1.0
            row[layout.calib_offset + 2 * k] = calib.t1[q]
            row[layout.calib_offset + 2 * k + 1] = calib.t2[q]
        row[layout.index_col] = node.topo_index
    return out


def graph_sample(dag: CircuitDag, calib: BackendCalibration, registry: GateRegistry, circuit_id: str = "") -> GraphSample:
    return GraphSample(node_features(dag, calib, registry), np.array(dag.edges, dtype=np.int64), circuit_id, calib.backend_id)


def pooled_graph_vector(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or len(m) == 0:
        raise FeatureError("cannot pool an empty node-feature matrix")
    return m.mean(axis=0)


# -- scaling ---------------------------------------------------------------------


@dataclass(frozen=True)
class MinMaxRanges:
    mins: np.ndarray
    maxs: np.ndarray

    def apply(self, rows) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape[-1] != len(self.mins):
            raise FeatureError(f"dimension mismatch: rows have {rows.shape[-1]} columns, ranges {len(self.mins)}")
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (rows - self.mins) / safe, 0.0)


def fit_minmax(rows) -> MinMaxRanges:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or len(rows) == 0:
        raise FeatureError("cannot fit ranges on empty data")
    return MinMaxRanges(rows.min(axis=0), rows.max(axis=0))


def minmax_scale(rows, ranges: MinMaxRanges | None = None) -> tuple[np.ndarray, MinMaxRanges]:
    """Per-column (x - min) / (max - min); zero-span columns map to 0.

    Held-out values outside the fitted range are not clamped.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[:, None]
    if len(rows) == 0:
        raise FeatureError("cannot scale an empty set of rows")
    if ranges is None:
        ranges = fit_minmax(rows)
    return ranges.apply(rows), ranges


# -- batch helpers -----------------------------------------------------------------


def circuit_graph(circuit: Circuit, calib: BackendCalibration, registry: GateRegistry) -> GraphSample:
    return graph_sample(to_dag(circuit), calib, registry, circuit.name)


def global_matrix(circuits: Sequence[Circuit], registry: GateRegistry) -> np.ndarray:
    return np.stack([global_features(c, registry).to_vector() for c in circuits])
