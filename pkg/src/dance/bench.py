"""Experiment runner: DANCE, DiSCO-mode and minibatch SGD traces.

Each algorithm produces a list of :class:`MetricsRow`. ``effective_passes``
is the number of sample evaluations divided by ``N``, so methods that work
on partial windows compare fairly with full-batch methods.

Config files are INI-style key/value text, e.g.::

    [data]
    source = synth        ; or: libsvm
    n = 4096              ; synth only
    d = 20
    margin = 1.0
    ; path = train.libsvm ; libsvm only
    ; test_path = test.libsvm
    ; shuffle_seed = 0

    [risk]
    c = 0.1
    gamma = 0.5

    [dance]
    alpha = 2
    m0 = 128
    beta = 0.05
    stop_rule = gradient  ; or: decrement
    subset_size = 100

    [sgd]
    batch_size = 10
    step_size = 0.05
    schedule = constant   ; or: invsqrt
    epochs = 5
    eval_every = 0.25

    [run]
    seed = 1              ; required
    algorithms = dance, disco, sgd
    workers = 1
    transport = simulated
    output = out
    timing = false
    oracle = true
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import theory
from .data import Dataset, load_libsvm, synth_logistic, window
from .distrib import WorkerPool
from .model import RiskSpec, RiskView, predict_accuracy, risk_value
from .pcg import DENSE_LIMIT, reference_minimizer
from .solver import DanceConfig, StageFailure, resolve_spec, run_dance

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "SgdParams",
    "MetricsRow",
    "CSV_COLUMNS",
    "load_config",
    "parse_config",
    "run_sgd_baseline",
    "run_dance_trace",
    "run_disco_mode",
    "run_experiment",
    "write_csv",
    "OUTPUT_ENV",
]

OUTPUT_ENV = "DANCE_OUTPUT_DIR"


class ConfigError(ValueError):
    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


@dataclass(frozen=True)
class SgdParams:
    batch_size: int = 10
    step_size: Optional[float] = None
    schedule: str = "constant"
    epochs: float = 5.0
    eval_every: float = 0.25
    seed: int = 0


@dataclass
class ExperimentConfig:
    seed: int
    source: str = "synth"
    path: Optional[str] = None
    test_path: Optional[str] = None
    synth_n: int = 4096
    synth_d: int = 20
    margin: float = 1.0
    shuffle_seed: Optional[int] = None
    spec: RiskSpec = field(default_factory=RiskSpec)
    dance: DanceConfig = field(default_factory=DanceConfig)
    sgd: SgdParams = field(default_factory=SgdParams)
    algorithms: tuple = ("dance", "disco", "sgd")
    workers: int = 1
    transport: str = "simulated"
    output: str = "out"
    timing: bool = False
    oracle: bool = True


CSV_COLUMNS = (
    "algorithm",
    "event",
    "stage_n",
    "step",
    "effective_passes",
    "rounds",
    "wall_time",
    "risk_n",
    "risk_N",
    "train_acc_window",
    "train_acc_full",
    "test_acc",
)


@dataclass
class MetricsRow:
    algorithm: str
    event: str
    stage_n: int
    step: int
    effective_passes: float
    rounds: int
    wall_time: Optional[float]
    risk_n: float
    risk_N: float
    train_acc_window: float
    train_acc_full: float
    test_acc: Optional[float]


# -- config -----------------------------------------------------------------


def _get(cp, section, key, conv, default=None, required=False):
    path = f"{section}.{key}"
    if not cp.has_option(section, key):
        if required:
            raise ConfigError(path, "missing")
        return default
    raw = cp.get(section, key).strip()
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(path, f"cannot parse {raw!r} ({exc})") from None


def _bool(s):
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _opt_float(s):
    return None if s.lower() in ("", "none", "auto") else float(s)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate an experiment config; errors name the field."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc)) from None

    seed = _get(cp, "run", "seed", int, required=True)
    source = _get(cp, "data", "source", str, "synth")
    if source not in ("synth", "libsvm"):
        raise ConfigError("data.source", f"must be 'synth' or 'libsvm', got {source!r}")
    path = _get(cp, "data", "path", str)
    if source == "libsvm":
        if not path:
            raise ConfigError("data.path", "missing (required for source = libsvm)")
        for key in ("n", "d", "margin"):
            if cp.has_option("data", key):
                raise ConfigError(f"data.{key}", "synthetic parameter given with source = libsvm")
    elif path:
        raise ConfigError("data.path", "given with source = synth; choose one dataset source")

    try:
        spec = RiskSpec(c=_get(cp, "risk", "c", float, 0.1), gamma=_get(cp, "risk", "gamma", float, 0.5))
    except ValueError as exc:
        raise ConfigError("risk", str(exc)) from None
    try:
        dance = DanceConfig(
            alpha=_get(cp, "dance", "alpha", float, 2.0),
            m0=_get(cp, "dance", "m0", int, 128),
            beta=_get(cp, "dance", "beta", float, 1.0 / 20.0),
            stop_rule=_get(cp, "dance", "stop_rule", str, "gradient"),
            subset_size=_get(cp, "dance", "subset_size", int, 100),
            mu=_get(cp, "dance", "mu", _opt_float, None),
            max_inner=_get(cp, "dance", "max_inner", int, 100),
            max_pcg=_get(cp, "dance", "max_pcg", lambda s: None if s.lower() in ("", "none", "auto") else int(s), None),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError("dance", str(exc)) from None
    sgd = SgdParams(
        batch_size=_get(cp, "sgd", "batch_size", int, 10),
        step_size=_get(cp, "sgd", "step_size", _opt_float, None),
        schedule=_get(cp, "sgd", "schedule", str, "constant"),
        epochs=_get(cp, "sgd", "epochs", float, 5.0),
        eval_every=_get(cp, "sgd", "eval_every", float, 0.25),
        seed=seed,
    )
    if sgd.schedule not in ("constant", "invsqrt"):
        raise ConfigError("sgd.schedule", f"must be 'constant' or 'invsqrt', got {sgd.schedule!r}")
    if sgd.batch_size < 1:
        raise ConfigError("sgd.batch_size", "must be >= 1")
    if sgd.step_size is not None and not sgd.step_size > 0:
        raise ConfigError("sgd.step_size", "must be positive")
    if not sgd.eval_every > 0:
        raise ConfigError("sgd.eval_every", "must be positive")

    algos = tuple(a.strip() for a in _get(cp, "run", "algorithms", str, "dance, disco, sgd").split(",") if a.strip())
    for a in algos:
        if a not in ("dance", "disco", "sgd"):
            raise ConfigError("run.algorithms", f"unknown algorithm {a!r}")
    transport = _get(cp, "run", "transport", str, "simulated")
    if transport not in ("simulated", "tcp"):
        raise ConfigError("run.transport", f"must be 'simulated' or 'tcp', got {transport!r}")
    workers = _get(cp, "run", "workers", int, 1)
    if workers < 1:
        raise ConfigError("run.workers", "must be >= 1")

    return ExperimentConfig(
        seed=seed,
        source=source,
        path=path,
        test_path=_get(cp, "data", "test_path", str),
        synth_n=_get(cp, "data", "n", int, 4096),
        synth_d=_get(cp, "data", "d", int, 20),
        margin=_get(cp, "data", "margin", float, 1.0),
        shuffle_seed=_get(cp, "data", "shuffle_seed", int, seed if source == "libsvm" else None),
        spec=spec,
        dance=dance,
        sgd=sgd,
        algorithms=algos,
        workers=workers,
        transport=transport,
        output=_get(cp, "run", "output", str, "out"),
        timing=_get(cp, "run", "timing", _bool, False),
        oracle=_get(cp, "run", "oracle", _bool, True),
    )


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from None
    cfg = parse_config(text)
    base = Path(path).resolve().parent
    for attr in ("path", "test_path"):
        val = getattr(cfg, attr)
        if val and not os.path.isabs(val):
            setattr(cfg, attr, str(base / val))
    return cfg


def load_datasets(cfg: ExperimentConfig):
    """Return ``(train, test)``; synthetic data keeps its last 20% for testing."""
    if cfg.source == "synth":
        full = synth_logistic(cfg.synth_n, cfg.synth_d, cfg.seed, cfg.margin)
        n_test = full.N // 5
        if n_test == 0:
            return full, None
        return full.head(full.N - n_test), full.tail(n_test)
    if not os.path.exists(cfg.path):
        raise ConfigError("data.path", f"file not found: {cfg.path}")
    train = load_libsvm(cfg.path, shuffle_seed=cfg.shuffle_seed)
    test = None
    if cfg.test_path:
        if not os.path.exists(cfg.test_path):
            raise ConfigError("data.test_path", f"file not found: {cfg.test_path}")
        test = load_libsvm(cfg.test_path, d_hint=train.d)
        if test.d > train.d:
            train = Dataset(_pad(train.features, test.d), train.labels, train.order)
    return train, test


def _pad(X, d):
    X = sp.csr_matrix(X)
    return sp.csr_matrix((X.data, X.indices, X.indptr), shape=(X.shape[0], d))


# -- evaluation -------------------------------------------------------------


class _Evaluator:
    def __init__(self, ds: Dataset, test: Optional[Dataset], spec: RiskSpec, timing: bool):
        self.ds = ds
        self.test = test
        self.full_view = RiskView(spec, window(ds, ds.N))
        self.spec = spec
        self.timing = timing
        self.t0 = time.perf_counter()

    def row(self, algo, event, n, step, passes, rounds, w, risk_n=None) -> MetricsRow:
        win = window(self.ds, n)
        if risk_n is None:
            risk_n = risk_value(RiskView(self.spec, win), w)
        Xt = self.test
        return MetricsRow(
            algorithm=algo,
            event=event,
            stage_n=n,
            step=step,
            effective_passes=passes,
            rounds=rounds,
            wall_time=(time.perf_counter() - self.t0) if self.timing else None,
            risk_n=risk_n,
            risk_N=risk_value(self.full_view, w),
            train_acc_window=predict_accuracy(win.X, win.y, w),
            train_acc_full=predict_accuracy(self.ds.features, self.ds.labels, w),
            test_acc=None if Xt is None else predict_accuracy(Xt.features, Xt.labels, w),
        )


# -- algorithms -------------------------------------------------------------


def run_dance_trace(
    ds: Dataset,
    spec: RiskSpec,
    cfg: DanceConfig,
    test: Optional[Dataset] = None,
    workers: int = 1,
    transport: str = "simulated",
    algorithm: str = "dance",
    timing: bool = False,
):
    """Run DANCE and record one row per stage start and per inner step.

    The first row of every stage after the first has ``event = "restart"``.
    Returns ``(rows, w, reports, pool)``; the pool is closed.
    """
    spec = resolve_spec(spec, ds)
    ev = _Evaluator(ds, test, spec, timing)
    rows: list[MetricsRow] = []
    pool = WorkerPool(ds, workers, transport)
    state = {"stage": 0}

    def cb(event, report, w):
        if event == "stage_start":
            tag = "start" if state["stage"] == 0 else "restart"
            state["stage"] += 1
            rows.append(ev.row(algorithm, tag, report.n, 0, pool.samples_touched / ds.N, pool.rounds, w))
        elif event == "step":
            rows.append(ev.row(algorithm, "step", report.n, report.steps, pool.samples_touched / ds.N, pool.rounds, w))

    try:
        w, reports = run_dance(ds, spec, cfg, pool, callback=cb)
    finally:
        pool.close()
    return rows, w, reports, pool


def run_disco_mode(ds: Dataset, spec: RiskSpec, cfg: DanceConfig, **kw):
    """DANCE with a single full-sample stage (``m0 = N``)."""
    kw.setdefault("algorithm", "disco")
    return run_dance_trace(ds, spec, replace(cfg, m0=ds.N), **kw)


def run_sgd_baseline(
    ds: Dataset,
    spec: RiskSpec,
    params: SgdParams,
    test: Optional[Dataset] = None,
    timing: bool = False,
):
    """Minibatch SGD on ``R_N`` from zero.

    Samples are drawn without replacement within each epoch. The default
    step size is ``1 / (c V_N + M)``; ``schedule = "invsqrt"`` divides it by
    ``sqrt(t)`` at step ``t``. Each minibatch step counts as one round.
    Returns ``(rows, w, diverged)``.
    """
    spec = resolve_spec(spec, ds)
    ev = _Evaluator(ds, test, spec, timing)
    view = ev.full_view
    N, b = ds.N, min(params.batch_size, ds.N)
    lam = view.lam
    step0 = params.step_size if params.step_size is not None else 1.0 / (lam + spec.M)
    if not step0 > 0:
        raise ValueError("step size must be positive")
    rng = np.random.default_rng([params.seed, 7])
    X, y = ds.features, ds.labels
    w = np.zeros(ds.d)
    rows = [ev.row("sgd", "start", N, 0, 0.0, 0, w)]
    total_steps = int(math.floor(params.epochs * N / b))
    eval_stride = max(1, int(round(params.eval_every * N / b)))
    touched = 0
    perm = rng.permutation(N)
    pos = 0
    diverged = False
    for t in range(1, total_steps + 1):
        if pos + b > N:
            perm = rng.permutation(N)
            pos = 0
        idx = perm[pos:pos + b]
        pos += b
        Xb, yb = X[idx], y[idx]
        z = yb * (Xb @ w)
        coef = -yb * np.exp(-np.logaddexp(0.0, z))
        g = np.asarray(Xb.T @ coef).ravel() / b + lam * w
        eta = step0 / math.sqrt(t) if params.schedule == "invsqrt" else step0
        w = w - eta * g
        touched += b
        if t % eval_stride == 0 or t == total_steps:
            row = ev.row("sgd", "step", N, t, touched / N, t, w)
            rows.append(row)
            if not math.isfinite(row.risk_N) or row.risk_N > 1e6:
                diverged = True
                break
    return rows, w, diverged


# -- output -----------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])


def csv_text(rows) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def _stage_summary(ds, spec, cfg, reports, trace, oracle):
    """Per-stage ledger and bounds.

    The initial suboptimality of a stage is measured at its warm start (the
    stage-start row of ``trace``) against the dense reference minimizer, so
    it is only available when ``oracle`` is set.
    """
    starts = [r for r in trace if r.event in ("start", "restart")]
    out, bound_inputs = [], []
    for i, (rep, start) in enumerate(zip(reports, starts)):
        entry = {
            "n": rep.n,
            "V_n": rep.V,
            "steps": rep.steps,
            "pcg_iters": list(rep.pcg_iters),
            "rounds": rep.rounds,
            "monitor_rounds": rep.monitor_rounds,
            "pcg_bound": rep.pcg_bound,
            "mu_n": rep.mu,
            "final_grad_norm": rep.final_grad_norm,
        }
        if oracle:
            view = RiskView(spec, window(ds, rep.n))
            w_star, r_star = reference_minimizer(view)
            subopt0 = max(start.risk_n - r_star, 0.0)
            wsq = float(w_star @ w_star)
            entry.update(
                initial_subopt=subopt0,
                inner_bound=rep.predicted_inner(subopt0),
                round_bound=rep.predicted_rounds(subopt0),
                wstar_norm_sq=wsq,
            )
            if i > 0:
                entry["warmstart_bound"] = theory.warmstart_bound_general(reports[i - 1].n, rep.n, spec.gamma, spec.c, wsq)
            bound_inputs.append(theory.StageBoundInput(rep.n, subopt0, rep.V, spec.c, spec.M, rep.mu, cfg.beta))
        out.append(entry)
    return out, bound_inputs


def run_experiment(cfg: ExperimentConfig, output: Optional[str] = None):
    """Run every configured algorithm and write ``metrics.csv`` and ``summary.json``.

    The output directory is ``output``, else ``$DANCE_OUTPUT_DIR``, else
    ``cfg.output``. Returns the output directory.
    """
    outdir = Path(output or os.environ.get(OUTPUT_ENV) or cfg.output)
    train, test = load_datasets(cfg)
    spec = resolve_spec(cfg.spec, train)
    oracle = cfg.oracle and train.d <= DENSE_LIMIT
    rows: list[MetricsRow] = []
    summary = {
        "config": _config_echo(cfg),
        "seed": cfg.seed,
        "N": train.N,
        "d": train.d,
        "M": spec.M,
        "algorithms": {},
    }
    for algo in cfg.algorithms:
        if algo in ("dance", "disco"):
            runner = run_dance_trace if algo == "dance" else run_disco_mode
            try:
                trace, w, reports, pool = runner(
                    train, spec, cfg.dance, test=test, workers=cfg.workers, transport=cfg.transport, timing=cfg.timing
                )
            except StageFailure as exc:
                summary["algorithms"][algo] = {"failed": str(exc)}
                continue
            rows.extend(trace)
            ledger = pool.ledger_snapshot()
            stages, bound_inputs = _stage_summary(train, spec, cfg.dance, reports, trace, oracle)
            info = {
                "final": asdict(trace[-1]),
                "rounds": ledger.total,
                "stage_rounds": {str(k): v for k, v in ledger.stage_totals.items()},
                "monitor_rounds": pool.monitor_rounds,
                "effective_passes": pool.samples_touched / train.N,
                "stages": stages,
            }
            if oracle:
                info["total_round_bound"] = theory.total_round_bound(bound_inputs)
            if len(reports) > 1:
                info["doubling_round_bound"] = theory.doubling_round_bound(
                    train.N, reports[0].n, spec.gamma, spec.c, spec.M, max(r.mu for r in reports), cfg.dance.beta,
                    stages[-1].get("wstar_norm_sq", 0.0),
                )
            info["complexity_order"] = theory.complexity_order(train.N, train.d)
            summary["algorithms"][algo] = info
        else:
            trace, w, diverged = run_sgd_baseline(train, spec, cfg.sgd, test=test, timing=cfg.timing)
            rows.extend(trace)
            summary["algorithms"]["sgd"] = {"final": asdict(trace[-1]), "diverged": diverged}

    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "metrics.csv", "w", newline="") as fh:
        write_csv(rows, fh)
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return outdir


def _config_echo(cfg: ExperimentConfig) -> dict:
    out = {}
    for f in fields(cfg):
        val = getattr(cfg, f.name)
        if hasattr(val, "__dataclass_fields__"):
            val = asdict(val)
        elif isinstance(val, tuple):
            val = list(val)
        out[f.name] = val
    return out
