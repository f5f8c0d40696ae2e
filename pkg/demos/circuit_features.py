"""
From QASM text to model inputs
==============================

A Bell-pair program is parsed, turned into a dependency graph and encoded as
the two inputs the predictor consumes: a 41-entry global vector and a
178-column node matrix.
"""

# %%
# Parse the program. Registers are flattened in declaration order.
import numpy as np

from qexec import default_global_registry, default_node_registry, global_features, node_features, parse_qasm, to_dag
from qexec.features import global_feature_names
from qexec.synthetic import random_calibration

bell = parse_qasm("""OPENQASM 2.0;
include "qelib1.inc";
qreg q[2];
creg c[2];
h q[0];
cx q[0],q[1];
measure q -> c;
""")
print(bell.num_qubits, "qubits,", len(bell.ops), "operations")

# %%
# The graph has one init node per qubit, then one node per gate or
# measurement. Each edge follows a qubit wire from its previous node.
dag = to_dag(bell)
for i, node in enumerate(dag.nodes):
    print(i, node)
print("edges:", list(dag.edges))

# %%
# Global features: gate counts plus seven structural ratios.
gf = global_features(bell, default_global_registry())
names = global_feature_names(default_global_registry())
for name, value in zip(names, gf.to_vector()):
    if value:
        print(f"{name:24s} {value:g}")

# %%
# Node features need calibration data: T1/T2 of the qubits each node touches.
cal = random_calibration("demo_backend", seed=3)
m = node_features(dag, cal, default_node_registry())
print("node matrix", m.shape)
np.set_printoptions(precision=2, suppress=True)
print("nonzero columns of the cx row:", np.flatnonzero(m[3]))
