"""Gate-level circuit IR, gate registries and the circuit DAG."""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

MEASURE = "measure"
INIT = "init"


@dataclass(frozen=True)
class GateSpec:
    name: str
    arity: int
    param_count: int


class GateRegistry:
    """Ordered list of known gates; position fixes the feature-vector slot."""

    def __init__(self, entries: Iterable[GateSpec]):
        self.entries: tuple[GateSpec, ...] = tuple(entries)
        self._index: dict[str, int] = {}
        for i, spec in enumerate(self.entries):
            if spec.name in self._index:
                raise ValueError(f"duplicate gate name in registry: {spec.name!r}")
            if spec.name == MEASURE:
                raise ValueError("'measure' is implicit and cannot be registered")
            if spec.arity not in (1, 2):
                raise ValueError(f"gate {spec.name!r}: arity must be 1 or 2, got {spec.arity}")
            if spec.param_count < 0:
                raise ValueError(f"gate {spec.name!r}: negative param_count")
            self._index[spec.name] = i

    @classmethod
    def from_text(cls, text: str) -> "GateRegistry":
        entries = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise ValueError(f"registry line {lineno}: expected 'name,arity,param_count'")
            try:
                entries.append(GateSpec(parts[0], int(parts[1]), int(parts[2])))
            except ValueError as exc:
                raise ValueError(f"registry line {lineno}: {exc}") from None
        return cls(entries)

    @classmethod
    def from_file(cls, path: str | Path) -> "GateRegistry":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        return "".join(f"{e.name},{e.arity},{e.param_count}\n" for e in self.entries)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __getitem__(self, name: str) -> GateSpec:
        return self.entries[self._index[name]]

    def index(self, name: str) -> int:
        return self._index[name]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GateRegistry) and self.entries == other.entries

    def __repr__(self) -> str:
        return f"GateRegistry({len(self)} gates)"


def _bundled(name: str) -> str:
    return resources.files("qexec").joinpath("data").joinpath(name).read_text(encoding="utf-8")


def default_node_registry() -> GateRegistry:
    """The 44-gate registry used for parsing and node-type one-hots."""
    return GateRegistry.from_text(_bundled("node_gates.txt"))


def default_global_registry() -> GateRegistry:
    """The 34-gate registry used for global gate counts."""
    return GateRegistry.from_text(_bundled("global_gates.txt"))


@dataclass(frozen=True)
class GateOp:
    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    clbit: int | None = None

    def __post_init__(self):
        if not 1 <= len(self.qubits) <= 2:
            raise ValueError(f"{self.name}: ops act on 1 or 2 qubits, got {len(self.qubits)}")
        if len(self.qubits) == 2 and self.qubits[0] == self.qubits[1]:
            raise ValueError(f"{self.name}: repeated qubit {self.qubits[0]}")
        if self.is_measure:
            if len(self.qubits) != 1 or self.clbit is None:
                raise ValueError("measure needs exactly one qubit and one clbit")
        elif self.clbit is not None:
            raise ValueError(f"{self.name}: only measurements write classical bits")

    @property
    def is_measure(self) -> bool:
        return self.name == MEASURE

    @property
    def arity(self) -> int:
        return len(self.qubits)


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    num_clbits: int = 0
    ops: tuple[GateOp, ...] = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        for op in self.ops:
            for q in op.qubits:
                if not 0 <= q < self.num_qubits:
                    raise ValueError(f"{op.name}: qubit {q} out of range (num_qubits={self.num_qubits})")
            if op.clbit is not None and not 0 <= op.clbit < self.num_clbits:
                raise ValueError(f"measure: clbit {op.clbit} out of range (num_clbits={self.num_clbits})")

    @property
    def gates(self) -> list[GateOp]:
        """Non-measurement operations in program order."""
        return [op for op in self.ops if not op.is_measure]

    @property
    def num_measurements(self) -> int:
        return sum(op.is_measure for op in self.ops)

    def without_measurements(self) -> "Circuit":
        return Circuit(self.num_qubits, self.num_clbits, tuple(self.gates), self.name)


@dataclass(frozen=True)
class DagNode:
    kind: str  # INIT, MEASURE or a gate name
    qubits: tuple[int, ...]
    topo_index: int


@dataclass(frozen=True)
class CircuitDag:
    num_qubits: int
    nodes: tuple[DagNode, ...]
    # edges into each node are listed in operand order of the destination
    edges: tuple[tuple[int, int], ...] = field(default=())

    def predecessors(self) -> list[list[int]]:
        preds: list[list[int]] = [[] for _ in self.nodes]
        for src, dst in self.edges:
            preds[dst].append(src)
        return preds

    def __len__(self) -> int:
        return len(self.nodes)


def to_dag(circuit: Circuit) -> CircuitDag:
    """Convert a circuit to its wire-dependency DAG.

    Nodes are one init node per qubit followed by the ops in program order.
    Each op gets an edge from the last node seen on each of its qubits.
    """
    nodes = [DagNode(INIT, (q,), q) for q in range(circuit.num_qubits)]
    last = list(range(circuit.num_qubits))
    edges = []
    for op in circuit.ops:
        idx = len(nodes)
        nodes.append(DagNode(op.name, op.qubits, idx))
        for q in op.qubits:
            edges.append((last[q], idx))
            last[q] = idx
    return CircuitDag(circuit.num_qubits, tuple(nodes), tuple(edges))


def asap_layers(num_qubits: int, ops: Sequence[GateOp]) -> list[int]:
    """1-based as-soon-as-possible layer of every op."""
    frontier = [0] * num_qubits
    layers = []
    for op in ops:
        layer = 1 + max(frontier[q] for q in op.qubits)
        for q in op.qubits:
            frontier[q] = layer
        layers.append(layer)
    return layers


def depth(circuit: Circuit) -> int:
    """ASAP depth counting measurements as ordinary layer occupants."""
    return max(asap_layers(circuit.num_qubits, circuit.ops), default=0)


def _fmt_param(x: float) -> str:
    return repr(float(x))


def to_qasm(circuit: Circuit) -> str:
    """Serialize to OpenQASM 2.0 with a single ``q``/``c`` register pair."""
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{circuit.num_qubits}];"]
    if circuit.num_clbits:
        lines.append(f"creg c[{circuit.num_clbits}];")
    for op in circuit.ops:
        if op.is_measure:
            lines.append(f"measure q[{op.qubits[0]}] -> c[{op.clbit}];")
            continue
        head = op.name
        if op.params:
            head += "(" + ",".join(_fmt_param(p) for p in op.params) + ")"
        lines.append(head + " " + ",".join(f"q[{q}]" for q in op.qubits) + ";")
    return "\n".join(lines) + "\n"
