"""Master/worker pool with broadcast-reduce rounds and a round ledger.

Every broadcast from the master followed by the matching reduce is one
communication round. Partial results are always summed in worker order
``0, 1, ..., K-1`` starting from zero, so reduced vectors are reproducible
for a given ``K`` and agree across different ``K`` up to rounding.

Two transports exist. ``"simulated"`` calls the shard workers in-process and
is what the solver and tests use. ``"tcp"`` runs each worker behind a
localhost socket speaking the frame format in :mod:`dance.wire`.
"""

from __future__ import annotations

import socket
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from . import wire
from .data import Dataset, partition
from .model import RiskView

__all__ = ["ShardWorker", "WorkerPool", "RoundLedger", "TransportError", "ledger_snapshot"]


class TransportError(ConnectionError):
    """A worker could not be reached; the round may be retried."""

    retryable = True


class ShardWorker:
    """Holds one contiguous shard of the active window.

    The partial results are scaled by ``1/n`` of the whole window so that
    the master only has to add them up.
    """

    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        self.n = 0
        self.lo = self.hi = 0
        self._w = None
        self._s = None

    def configure(self, n: int, lo: int, hi: int) -> None:
        if not 0 <= lo < hi <= n <= self.dataset.N:
            raise ValueError(f"bad shard [{lo}, {hi}) for window {n}")
        self.n, self.lo, self.hi = n, lo, hi
        self.X = self.dataset.features[lo:hi]
        self.y = self.dataset.labels[lo:hi]
        self._w = None

    def gradient(self, w: np.ndarray) -> np.ndarray:
        z = self.y * (self.X @ w)
        sig = expit(z)
        self._w = w
        self._s = sig * (1.0 - sig)
        coef = -self.y * expit(-z)
        return np.asarray(self.X.T @ coef).ravel() / self.n

    def hvp2(self, u: np.ndarray, v: np.ndarray):
        if self._w is None:
            raise RuntimeError("no weights broadcast to this worker")
        XV = self.X @ np.column_stack([u, v])
        out = np.asarray(self.X.T @ (self._s[:, None] * XV)) / self.n
        return out[:, 0], out[:, 1]


@dataclass
class RoundLedger:
    """Communication rounds charged to PCG calls, grouped by stage size."""

    calls: list = field(default_factory=list)
    stage_totals: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.stage_totals.values())

    def record(self, stage: int, rounds: int) -> None:
        self.calls.append((stage, rounds))
        self.stage_totals[stage] = self.stage_totals.get(stage, 0) + rounds

    def copy(self) -> "RoundLedger":
        return RoundLedger(list(self.calls), dict(self.stage_totals))


class _TcpLink:
    """Master side of one worker connection, plus the serving thread."""

    def __init__(self, dataset: Dataset, timeout: float):
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.bind(("127.0.0.1", 0))
        listener.listen(1)
        self.worker = ShardWorker(dataset)
        self.thread = threading.Thread(target=self._serve, args=(listener,), daemon=True)
        self.thread.start()
        self.sock = socket.create_connection(listener.getsockname(), timeout=timeout)

    def _serve(self, listener):
        conn, _ = listener.accept()
        listener.close()
        with conn:
            serve_worker(conn, self.worker)

    def call(self, opcode, payload, expect):
        try:
            wire.send_frame(self.sock, opcode, payload)
            if expect is None:
                return None
            op, body = wire.recv_frame(self.sock)
        except (OSError, wire.WireError) as exc:
            raise TransportError(str(exc)) from exc
        if op != expect:
            raise TransportError(f"expected opcode 0x{expect:02x}, got 0x{op:02x}")
        return body

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


def serve_worker(conn: socket.socket, worker: ShardWorker) -> None:
    """Answer master frames on ``conn`` until it closes."""
    d = worker.dataset.d
    while True:
        try:
            op, body = wire.recv_frame(conn)
        except wire.WireError:
            return
        if op == wire.RECONFIGURE_WINDOW:
            n, lo, hi = (int(x) for x in body)
            worker.configure(n, lo, hi)
        elif op == wire.BROADCAST_WEIGHTS:
            wire.send_frame(conn, wire.REDUCE_GRADIENT, worker.gradient(body))
        elif op == wire.BROADCAST_TWO_VECTORS:
            Hu, Hv = worker.hvp2(body[:d], body[d:])
            wire.send_frame(conn, wire.REDUCE_TWO_HVP, np.concatenate([Hu, Hv]))
        else:
            return


class WorkerPool:
    """``K`` workers over contiguous shards of the active window.

    Parameters
    ----------
    dataset : Dataset
        Full dataset; workers slice their shards from it.
    workers : int
        Number of workers ``K``.
    transport : {"simulated", "tcp"}

    Attributes
    ----------
    rounds : int
        Rounds charged to the algorithm (never decreases).
    monitor_rounds : int
        Gradient evaluations made only to test stopping rules; these are
        kept out of ``rounds``.
    samples_touched : int
        Sample evaluations across all rounds, monitor rounds and
        preconditioner construction.
    """

    def __init__(self, dataset: Dataset, workers: int = 1, transport: str = "simulated", timeout: float = 30.0):
        if transport not in ("simulated", "tcp"):
            raise ValueError(f"unknown transport {transport!r}")
        if workers < 1:
            raise ValueError("need at least one worker")
        self.dataset = dataset
        self.K = int(workers)
        self.transport = transport
        self.rounds = 0
        self.monitor_rounds = 0
        self.samples_touched = 0
        self.ledger = RoundLedger()
        self.n: Optional[int] = None
        self.shards: list[range] = []
        self._w = None
        if transport == "simulated":
            self._workers = [ShardWorker(dataset) for _ in range(self.K)]
            self._links = None
        else:
            self._workers = None
            self._links = [_TcpLink(dataset, timeout) for _ in range(self.K)]

    def close(self) -> None:
        for link in self._links or ():
            link.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def configure(self, n: int) -> None:
        """Repartition the first ``n`` rows across the workers."""
        self.shards = partition(n, self.K)
        self.n = n
        self._w = None
        for k, r in enumerate(self.shards):
            if self._links is None:
                self._workers[k].configure(n, r.start, r.stop)
            else:
                self._links[k].call(wire.RECONFIGURE_WINDOW, [n, r.start, r.stop], None)

    def _check(self, view: RiskView) -> None:
        if self.n is None:
            self.configure(view.n)
        elif view.n != self.n or view.window.dataset is not self.dataset:
            raise RuntimeError(f"pool is configured for window {self.n}, got view of size {view.n}")

    @staticmethod
    def _sum(parts):
        acc = np.zeros_like(parts[0])
        for p in parts:
            acc += p
        return acc

    def broadcast_reduce_grad(self, view: RiskView, w, monitor: bool = False) -> np.ndarray:
        """Full gradient of ``R_n`` at ``w``; one round (or monitor round)."""
        self._check(view)
        w = np.array(w, dtype=np.float64)
        if self._links is None:
            parts = [wk.gradient(w) for wk in self._workers]
        else:
            parts = [lk.call(wire.BROADCAST_WEIGHTS, w, wire.REDUCE_GRADIENT) for lk in self._links]
        self._w = w
        if monitor:
            self.monitor_rounds += 1
        else:
            self.rounds += 1
        self.samples_touched += self.n
        return self._sum(parts) + view.lam * w

    def broadcast_reduce_hvp2(self, view: RiskView, w, u, v):
        """``(H u, H v)`` at the last broadcast ``w``; one round."""
        self._check(view)
        if self._w is None or not np.array_equal(self._w, w):
            raise RuntimeError("hvp2 needs the weights from the preceding gradient broadcast")
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if self._links is None:
            parts = [wk.hvp2(u, v) for wk in self._workers]
        else:
            d = u.shape[0]
            parts = []
            for lk in self._links:
                body = lk.call(wire.BROADCAST_TWO_VECTORS, np.concatenate([u, v]), wire.REDUCE_TWO_HVP)
                parts.append((body[:d], body[d:]))
        self.rounds += 1
        self.samples_touched += self.n
        Hu = self._sum([p[0] for p in parts]) + view.lam * u
        Hv = self._sum([p[1] for p in parts]) + view.lam * v
        return Hu, Hv

    def note_samples(self, count: int) -> None:
        self.samples_touched += int(count)

    def ledger_snapshot(self) -> RoundLedger:
        return self.ledger.copy()


def ledger_snapshot(pool: WorkerPool) -> RoundLedger:
    return pool.ledger_snapshot()
