"""
Choosing what to measure
========================

Measuring circuits on hardware is slow, so only a budgeted subset of the
candidates gets timed. The budget comes from a finite-population sample-size
formula and the subset from greedy max-min selection in feature space.
"""

# %%
import numpy as np

from qexec import build_pool, gsx_select, plan_budget
from qexec.circuit import default_global_registry, default_node_registry, to_dag
from qexec.features import global_features, node_features
from qexec.synthetic import random_calibration, random_circuit

print("budget for 3020 candidates:", plan_budget(3020, confidence=95, margin=5))
print("budget for 200 candidates:", plan_budget(200))

# %%
# Build a pool of 200 random circuits on one backend.
rng = np.random.default_rng(0)
cal = random_calibration("demo_backend", seed=1)
circuits = [random_circuit(rng, f"c{i:03d}") for i in range(200)]
globals_ = [global_features(c, default_global_registry()).to_vector() for c in circuits]
mats = [node_features(to_dag(c), cal, default_node_registry()) for c in circuits]
pool = build_pool([c.name for c in circuits], globals_, mats, alpha=0.5)

# %%
# The first pick sits nearest the centroid; every later pick is the candidate
# farthest from everything already chosen, so the distances shrink.
res = gsx_select(pool, plan_budget(len(pool)))
for rank, (cid, d) in enumerate(zip(res.selected_ids[:8], res.distances_at_selection), start=1):
    print(f"{rank:2d} {cid} {d:.3f}")
print("...", len(res.selected_ids), "selected")

# %%
# Compare coverage with a random subset of the same size: the greedy subset
# leaves no candidate far from a chosen one.
def coverage(chosen):
    idx = {it.id: j for j, it in enumerate(pool.items)}
    G = np.stack([it.global_vec for it in pool.items])
    H = np.stack([it.graph_vec for it in pool.items])
    sel = [idx[c] for c in chosen]
    d = 0.5 * np.linalg.norm(G[:, None] - G[sel][None], axis=2) + 0.5 * np.linalg.norm(H[:, None] - H[sel][None], axis=2)
    return d.min(axis=1).max()


random_ids = list(rng.choice([it.id for it in pool.items], len(res.selected_ids), replace=False))
print(f"worst uncovered distance: greedy {coverage(res.selected_ids):.3f}, random {coverage(random_ids):.3f}")
