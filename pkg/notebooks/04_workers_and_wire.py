"""
Worker pools, round accounting and the TCP wire format
======================================================

Shards are contiguous and partial sums are added in worker order, so the
result depends on the worker count only through floating point rounding.
A TCP transport runs the same workers behind localhost sockets.
"""

import numpy as np

from dance import DanceConfig, RiskSpec, WorkerPool, run_dance, synth_logistic, wire
from dance.solver import resolve_spec

ds = synth_logistic(2048, 10, seed=3)
spec = resolve_spec(RiskSpec(), ds)
cfg = DanceConfig(m0=64)

# %% worker-count invariance
ref = None
for K in (1, 2, 4, 8):
    pool = WorkerPool(ds, K)
    w, _ = run_dance(ds, spec, cfg, pool)
    ref = w if ref is None else ref
    print(K, pool.ledger.stage_totals, f"max dev {np.max(np.abs(w - ref)):.1e}")

# %% the same run over TCP
with WorkerPool(ds, 3, transport="tcp") as pool:
    w_tcp, _ = run_dance(ds, spec, cfg, pool)
    print("tcp rounds:", pool.ledger.total, "max dev:", np.max(np.abs(w_tcp - ref)))

# %% a frame: 4-byte big-endian length, 1-byte opcode, little-endian float64 payload
frame = wire.encode_frame(wire.BROADCAST_WEIGHTS, [1.0, 2.0])
print(frame.hex(" "))
print(wire.decode_frame(frame))
