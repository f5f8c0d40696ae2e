"""Synthetic circuits, calibrations and timings with a known ground truth.

The timing law is a fixed smooth function of circuit structure and of the T1
values of the qubits a circuit touches, so both feature branches carry signal.
"""
from __future__ import annotations

import json
from importlib import resources
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .circuit import MEASURE, Circuit, GateOp, GateRegistry, default_global_registry, to_qasm
from .dataset import TimingRecord, make_rng, write_manifest
from .features import BackendCalibration, MAX_QUBITS, global_features


def random_calibration(backend_id: str, seed: int, num_qubits: int = MAX_QUBITS,
                       t1_mean: float = 250.0, t2_mean: float = 150.0) -> BackendCalibration:
    rng = make_rng(seed)
    t1 = np.round(rng.uniform(0.5, 1.5, num_qubits) * t1_mean, 3)
    t2 = np.round(np.minimum(rng.uniform(0.4, 1.4, num_qubits) * t2_mean, 2 * t1), 3)
    return BackendCalibration(backend_id, tuple(float(v) for v in t1), tuple(float(v) for v in t2))


def random_circuit(rng: np.random.Generator, name: str, registry: GateRegistry | None = None,
                   qubits: tuple[int, int] = (2, 6), gates: tuple[int, int] = (2, 16),
                   measure: bool = True) -> Circuit:
    """Uniformly drawn gates from ``registry`` on a random register, then measure all."""
    registry = registry or default_global_registry()
    nq = int(rng.integers(qubits[0], qubits[1] + 1))
    ng = int(rng.integers(gates[0], gates[1] + 1))
    ops = []
    specs = [e for e in registry.entries if e.arity <= nq]
    for _ in range(ng):
        spec = specs[int(rng.integers(len(specs)))]
        qs = tuple(int(q) for q in rng.choice(nq, size=spec.arity, replace=False))
        params = tuple(float(np.round(rng.uniform(-np.pi, np.pi), 6)) for _ in range(spec.param_count))
        ops.append(GateOp(spec.name, qs, params))
    if measure:
        ops += [GateOp(MEASURE, (q,), (), q) for q in range(nq)]
    return Circuit(nq, nq if measure else 0, tuple(ops), name)


def true_log_seconds(circuit: Circuit, calib: BackendCalibration) -> float:
    """Ground-truth log execution time."""
    gf = global_features(circuit, default_global_registry())
    gates = circuit.gates
    n2q = sum(op.arity == 2 for op in gates)
    n1q = len(gates) - n2q
    used = sorted({q for op in circuit.ops for q in op.qubits})
    t1 = np.mean([calib.t1[q] for q in used]) if used else 250.0
    return float(
        0.2
        + 0.10 * n2q
        + 0.035 * n1q
        + 0.06 * gf.depth
        + 0.12 * circuit.num_qubits
        + 0.4 * np.tanh(2.0 * gf.liveness - 1.0)
        + 0.6 * (250.0 / t1 - 1.0)
    )


def synthetic_timing(circuit: Circuit, calib: BackendCalibration, rng: np.random.Generator,
                     repeats: int = 3, noise: float = 0.05, shots: int = 1024) -> TimingRecord:
    """Repeated timings with multiplicative Gaussian noise of relative size ``noise``."""
    base = float(np.exp(true_log_seconds(circuit, calib)))
    times = base * (1.0 + noise * rng.standard_normal(repeats))
    times = np.maximum(times, base * 1e-3)
    return TimingRecord(circuit.name, calib.backend_id, shots, tuple(float(np.round(t, 9)) for t in times))


@dataclass
class SyntheticCorpus:
    circuits: list[Circuit]
    calibrations: list[BackendCalibration]
    records: list[TimingRecord]


def make_corpus(n_circuits: int, backends: Sequence[str] = ("fake_alpha", "fake_beta"), seed: int = 0,
                **circuit_kw) -> SyntheticCorpus:
    rng = make_rng(seed)
    calibs = [random_calibration(b, seed * 1000 + i + 1) for i, b in enumerate(backends)]
    circuits = [random_circuit(rng, f"rc{i:04d}", **circuit_kw) for i in range(n_circuits)]
    records = [synthetic_timing(c, cal, rng) for cal in calibs for c in circuits]
    return SyntheticCorpus(circuits, calibs, records)


def write_fixture(root: str | Path, corpus: SyntheticCorpus, seed: int = 0, extra_config: dict | None = None,
                  corrupt: Sequence[str] = ()) -> Path:
    """Lay out a project directory: corpus/, calibrations/, manifest.csv and config.json.

    Names in ``corrupt`` are written as unparseable files to exercise error logging.
    """
    root = Path(root)
    (root / "corpus").mkdir(parents=True, exist_ok=True)
    (root / "calibrations").mkdir(exist_ok=True)
    for c in corpus.circuits:
        (root / "corpus" / f"{c.name}.qasm").write_text(to_qasm(c), encoding="utf-8")
    for name in corrupt:
        (root / "corpus" / f"{name}.qasm").write_text("OPENQASM 2.0;\nqreg q[2];\nfoo q[0];\n", encoding="utf-8")
    for cal in corpus.calibrations:
        (root / "calibrations" / f"{cal.backend_id}.txt").write_text(cal.to_text(), encoding="utf-8")
    write_manifest(corpus.records, root / "manifest.csv")
    config = {
        "corpus_dir": "corpus",
        "calibration_dir": "calibrations",
        "manifest": "manifest.csv",
        "artifact_dir": "artifacts",
        "seed": seed,
    }
    config.update(extra_config or {})
    (root / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return root / "config.json"


def copy_example_project(dest: str | Path) -> Path:
    """Copy the bundled example project (corpus, calibrations, manifest, config) to ``dest``; returns ``dest``."""
    dest = Path(dest)
    src = resources.files("qexec").joinpath("data")
    for sub in ("corpus", "calibrations"):
        (dest / sub).mkdir(parents=True, exist_ok=True)
        for entry in src.joinpath(sub).iterdir():
            if entry.name.endswith((".qasm", ".txt")):
                (dest / sub / entry.name).write_bytes(entry.read_bytes())
    for name in ("manifest.csv", "config.json"):
        (dest / name).write_bytes(src.joinpath(name).read_bytes())
    return dest
