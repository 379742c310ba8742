"""Cross-validated comparison of the online and offline training methods."""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .features import RawRecord, WindowSet, WindowSpec, Normalizer, make_windows
from .nn_core import Adam, SgdMomentum, backward, init_mlp, predict
from .replay import STRATEGIES, OnlineTrainer, StrategyConfigError

logger = logging.getLogger(__name__)

OFFLINE_METHODS = ("offline_classifier", "offline_regressor")
METHODS = OFFLINE_METHODS + STRATEGIES


class RocError(ValueError):
    """ROC/AUC undefined (a class has no scores)."""


# -- ROC / AUC ---------------------------------------------------------------


@dataclass
class RocResult:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # points[k] is "positive iff score > thresholds[k]"
    auc: float
    n_healthy: int
    n_anomalous: int

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc(scores_healthy, scores_anomalous) -> RocResult:
    """ROC sweep with positive = score > T as T falls from +inf.

    Equal scores are grouped into one sweep step, so ties contribute a
    diagonal segment and count half in the trapezoidal area.
    """
    h = np.asarray(scores_healthy, dtype=np.float64).ravel()
    a = np.asarray(scores_anomalous, dtype=np.float64).ravel()
    if h.size == 0 or a.size == 0:
        raise RocError("ROC needs at least one healthy and one anomalous score")
    scores = np.concatenate([a, h])
    is_pos = np.concatenate([np.ones(a.size), np.zeros(h.size)])
    order = np.argsort(-scores, kind="stable")
    scores, is_pos = scores[order], is_pos[order]
    # last index of each group of equal scores
    ends = np.flatnonzero(np.diff(scores) != 0.0)
    ends = np.append(ends, scores.size - 1)
    tp = np.cumsum(is_pos)[ends]
    fp = (ends + 1) - tp
    tpr = np.concatenate([[0.0], tp / a.size])
    fpr = np.concatenate([[0.0], fp / h.size])
    # threshold just below each group value; the first point is T = +inf
    thresholds = np.concatenate([[np.inf], np.nextafter(scores[ends], -np.inf)])
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1])) / 2.0)
    return RocResult(fpr, tpr, thresholds, auc, int(h.size), int(a.size))


def auc_pairwise_oracle(scores_healthy, scores_anomalous) -> float:
    """P(anomalous > healthy) + 0.5 P(equal), by direct enumeration of all pairs."""
    h = np.asarray(scores_healthy, dtype=np.float64).ravel()
    a = np.asarray(scores_anomalous, dtype=np.float64).ravel()
    if h.size == 0 or a.size == 0:
        raise RocError("AUC needs at least one healthy and one anomalous score")
    total = 0.0
    for chunk in np.array_split(a, max(1, a.size * h.size // 4_000_000 + 1)):
        diff = chunk[:, None] - h[None, :]
        total += float(np.sum(diff > 0) + 0.5 * np.sum(diff == 0))
    return total / (a.size * h.size)


# -- cross-validation plan ---------------------------------------------------


@dataclass(frozen=True)
class CvPlan:
    parts: tuple[tuple[int, int], ...]  # [start, end) into the gridded healthy stream
    folds: tuple[tuple[int, int], ...]  # test part pairs, canonical i < j order

    def train_parts(self, fold: int) -> list[int]:
        test = set(self.folds[fold])
        return [p for p in range(len(self.parts)) if p not in test]


def make_cv_plan(n_records: int, n_parts: int = 8, min_part: int = 1) -> CvPlan:
    """Contiguous ``n_parts``-way split and all test pairs."""
    if n_parts < 2:
        raise ValueError("need at least two parts")
    if n_records < n_parts * max(min_part, 1):
        raise ValueError(
            f"corpus of {n_records} records too short for {n_parts} parts of >= {min_part}"
        )
    edges = np.linspace(0, n_records, n_parts + 1).round().astype(int)
    parts = tuple((int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]))
    folds = tuple(itertools.combinations(range(n_parts), 2))
    return CvPlan(parts, folds)


@dataclass
class FoldData:
    fold: int
    test_parts: tuple[int, int]
    train: WindowSet  # engineering units, time-ordered
    test_healthy: WindowSet
    anomalous: WindowSet  # full anomalous corpus (regressor test set)
    anomalous_train: WindowSet  # classifier-only training slice
    anomalous_test: WindowSet  # classifier test slice


def part_windows(stream: Sequence[RawRecord | None], plan: CvPlan, spec: WindowSpec) -> list[WindowSet]:
    return [make_windows(stream[a:b], spec) for a, b in plan.parts]


def split_anomalous(stream: Sequence[RawRecord | None], spec: WindowSpec, train_fraction: float):
    cut = int(round(len(stream) * train_fraction))
    return make_windows(stream[:cut], spec), make_windows(stream[cut:], spec)


def fold_data(
    plan: CvPlan,
    fold: int,
    parts: list[WindowSet],
    anomalous: WindowSet,
    anomalous_split: tuple[WindowSet, WindowSet],
) -> FoldData:
    i, j = plan.folds[fold]
    train = WindowSet.concat([parts[p] for p in plan.train_parts(fold)])
    test = WindowSet.concat([parts[i], parts[j]])
    return FoldData(fold, (i, j), train, test, anomalous, *anomalous_split)


# -- single fold -------------------------------------------------------------


@dataclass
class MethodParams:
    hidden: tuple[int, ...] = (16, 8)
    learning_rate: float = 1e-3
    momentum: float = 0.9
    epochs_per_step: int = 1
    buffer_size: int = 50
    icarl_exemplars: int = 25
    ewc_lambda: float = 22.5
    ewc_gamma: float = 0.8
    lwf_lambda: float = 0.1
    eval_every: int = 180  # training samples between AUC evaluations
    sample_period: float = 10.0
    offline_epochs: int = 100
    offline_batch: int = 32
    offline_lr: float = 1e-3
    normalizer: Normalizer = field(default_factory=Normalizer)


@dataclass
class FoldResult:
    method: str
    fold: int
    hours: np.ndarray
    auc: np.ndarray
    step_seconds: float  # median wall time of one train + inference step

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.auc))

    @property
    def final_auc(self) -> float:
        return float(self.auc[-1])


def fold_seed(seed: int, fold: int, stream: int = 0) -> np.random.SeedSequence:
    """Pure per-fold seed: identical for every method so initial models are paired."""
    return np.random.SeedSequence([seed, fold, stream])


def _eval_points(n_train: int, every: int) -> list[int]:
    pts = list(range(every, n_train + 1, every))
    if not pts or pts[-1] != n_train:
        pts.append(n_train)
    return pts


def _scores(model, norm: Normalizer, windows: WindowSet) -> np.ndarray:
    d = norm.normalize_y(windows.y) - predict(model, norm.normalize_x(windows.x))
    return d * d


def run_online(data: FoldData, method: str, params: MethodParams, seed: int) -> FoldResult:
    norm = params.normalizer
    dims = [data.train.x.shape[1], *params.hidden, 1]
    model = init_mlp(dims, np.random.default_rng(fold_seed(seed, data.fold)))
    opt = SgdMomentum(model, params.learning_rate, params.momentum)
    trainer = OnlineTrainer(
        method, model, opt,
        buffer_size=params.buffer_size,
        icarl_exemplars=params.icarl_exemplars,
        ewc_lambda=params.ewc_lambda,
        ewc_gamma=params.ewc_gamma,
        lwf_lambda=params.lwf_lambda,
        epochs=params.epochs_per_step,
    )
    x = norm.normalize_x(data.train.x)
    y = norm.normalize_y(data.train.y)
    t_idx = np.arange(len(y))
    test_h = data.test_healthy
    test_a = data.anomalous
    xh, yh = norm.normalize_x(test_h.x), norm.normalize_y(test_h.y)
    xa, ya = norm.normalize_x(test_a.x), norm.normalize_y(test_a.y)

    points = set(_eval_points(len(y), params.eval_every))
    hours, aucs, timings = [], [], []
    for k in range(len(y)):
        t0 = time.perf_counter()
        trainer.step(x[k], float(y[k]), int(t_idx[k]))
        # the edge loop also predicts the incoming sample
        predict(model, x[k : k + 1])
        timings.append(time.perf_counter() - t0)
        if k + 1 in points:
            sh = (yh - predict(model, xh)) ** 2
            sa = (ya - predict(model, xa)) ** 2
            hours.append((k + 1) * params.sample_period / 3600.0)
            aucs.append(roc(sh, sa).auc)
    return FoldResult(method, data.fold, np.array(hours), np.array(aucs), float(np.median(timings)))


def _train_offline(model, x, y, params: MethodParams, rng: np.random.Generator) -> None:
    opt = Adam(model, params.offline_lr)
    n = len(y)
    for _ in range(params.offline_epochs):
        order = rng.permutation(n)
        for start in range(0, n, params.offline_batch):
            idx = order[start : start + params.offline_batch]
            _, grads = backward(model, x[idx], y[idx])
            opt.step(model, grads)


def run_offline(data: FoldData, method: str, params: MethodParams, seed: int) -> FoldResult:
    rng = np.random.default_rng(fold_seed(seed, data.fold, 1 + OFFLINE_METHODS.index(method)))
    dims = [data.train.x.shape[1], *params.hidden, 1]
    init_rng = np.random.default_rng(fold_seed(seed, data.fold))
    t0 = time.perf_counter()
    if method == "offline_regressor":
        norm = Normalizer.fit(data.train)
        model = init_mlp(dims, init_rng)
        _train_offline(model, norm.normalize_x(data.train.x), norm.normalize_y(data.train.y), params, rng)
        sh = _scores(model, norm, data.test_healthy)
        sa = _scores(model, norm, data.anomalous)
    else:
        train = WindowSet.concat([data.train, data.anomalous_train])
        norm = Normalizer.fit(train)
        model = init_mlp([dims[0] + 1, *dims[1:]], init_rng, output_activation="logistic")
        labels = np.concatenate([np.zeros(len(data.train)), np.ones(len(data.anomalous_train))])
        # current history plus the measured temperature
        feats = _classifier_features(norm, train)
        _train_offline(model, feats, labels, params, rng)
        sh = predict(model, _classifier_features(norm, data.test_healthy))
        sa = predict(model, _classifier_features(norm, data.anomalous_test))
    elapsed = time.perf_counter() - t0
    auc = roc(sh, sa).auc
    hours = np.array([p * params.sample_period / 3600.0 for p in _eval_points(len(data.train), params.eval_every)])
    return FoldResult(method, data.fold, hours, np.full(len(hours), auc), elapsed)


def _classifier_features(norm: Normalizer, windows: WindowSet) -> np.ndarray:
    return np.column_stack([norm.normalize_x(windows.x), norm.normalize_y(windows.y)])


def run_fold(data: FoldData, method: str, params: MethodParams, seed: int) -> FoldResult:
    if method in STRATEGIES:
        return run_online(data, method, params, seed)
    if method in OFFLINE_METHODS:
        return run_offline(data, method, params, seed)
    raise StrategyConfigError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")


# -- experiment orchestration ------------------------------------------------


@dataclass
class Corpus:
    """Gridded corpora and their cross-validation views."""

    plan: CvPlan
    parts: list[WindowSet]
    anomalous: WindowSet
    anomalous_split: tuple[WindowSet, WindowSet]

    def fold(self, k: int) -> FoldData:
        return fold_data(self.plan, k, self.parts, self.anomalous, self.anomalous_split)


def prepare_corpus(
    healthy: Sequence[RawRecord | None],
    anomalous: Sequence[RawRecord | None],
    spec: WindowSpec = WindowSpec(),
    n_parts: int = 8,
    classifier_fraction: float = 0.5,
) -> Corpus:
    plan = make_cv_plan(len(healthy), n_parts, min_part=spec.window_len)
    parts = part_windows(healthy, plan, spec)
    if any(len(p) == 0 for p in parts):
        raise ValueError("every cross-validation part needs at least one full window")
    return Corpus(
        plan,
        parts,
        make_windows(anomalous, spec),
        split_anomalous(anomalous, spec, classifier_fraction),
    )


def _fold_job(corpus: Corpus, fold: int, methods: Sequence[str], params: MethodParams, seed: int):
    data = corpus.fold(fold)
    return [run_fold(data, m, params, seed) for m in methods]


def run_experiment(
    corpus: Corpus,
    methods: Sequence[str],
    params: MethodParams,
    seed: int,
    jobs: int = 1,
    folds: Sequence[int] | None = None,
) -> tuple[list[FoldResult], dict[int, str]]:
    """All folds x methods. Returns results ordered by (method, fold) and per-fold failures."""
    folds = list(range(len(corpus.plan.folds))) if folds is None else list(folds)
    results: list[FoldResult] = []
    failures: dict[int, str] = {}
    if jobs <= 1:
        for k in folds:
            try:
                results.extend(_fold_job(corpus, k, methods, params, seed))
            except Exception as exc:  # reported per fold, run continues
                logger.exception("fold %d failed", k)
                failures[k] = f"{type(exc).__name__}: {exc}"
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {k: pool.submit(_fold_job, corpus, k, methods, params, seed) for k in folds}
            for k, fut in futures.items():
                try:
                    results.extend(fut.result())
                except Exception as exc:
                    logger.error("fold %d failed: %s", k, exc)
                    failures[k] = f"{type(exc).__name__}: {exc}"
    order = {m: i for i, m in enumerate(methods)}
    results.sort(key=lambda r: (order[r.method], r.fold))
    return results, failures


@dataclass
class MethodSummary:
    method: str
    n_folds: int
    mean_auc: float
    ci95: float  # half-width, normal approximation across folds
    final_auc: float
    memory: int  # ideal parameter count
    memory_formula: str
    median_step_ms: float  # offline methods: median training wall time
    normalized_runtime: float | None = None


def memory_footprint(method: str, n_params: int, buffer_values: int, dataset_values: int) -> tuple[int, str]:
    if method == "incremental":
        return n_params, "|theta|"
    if method in ("buffer", "selection", "icarl"):
        return n_params + buffer_values, "|theta| + |B|"
    if method == "ewc":
        return 3 * n_params + buffer_values, "3 x |theta| + |B|"
    if method == "lwf":
        return 2 * n_params + buffer_values, "2 x |theta| + |B|"
    return n_params + dataset_values, "|theta| + |D|"


def mlp_param_count(dims: Sequence[int]) -> int:
    return sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))


def summarize(
    results: Sequence[FoldResult],
    params: MethodParams,
    n_inputs: int,
    n_train_windows: int,
) -> list[MethodSummary]:
    by_method: dict[str, list[FoldResult]] = {}
    for r in results:
        by_method.setdefault(r.method, []).append(r)
    out = []
    for method, rs in by_method.items():
        means = np.array([r.mean_auc for r in rs])
        sd = float(np.std(means, ddof=1)) if len(means) > 1 else 0.0
        dims = [n_inputs + (1 if method == "offline_classifier" else 0), *params.hidden, 1]
        n_params = mlp_param_count(dims)
        mem, formula = memory_footprint(
            method, n_params, params.buffer_size * (n_inputs + 1), n_train_windows * (n_inputs + 1)
        )
        out.append(MethodSummary(
            method=method,
            n_folds=len(rs),
            mean_auc=float(means.mean()),
            ci95=1.96 * sd / math.sqrt(len(means)),
            final_auc=float(np.mean([r.final_auc for r in rs])),
            memory=mem,
            memory_formula=formula,
            median_step_ms=float(np.median([r.step_seconds for r in rs])) * 1e3,
        ))
    base = next((s for s in out if s.method == "incremental"), None)
    for s in out:
        if base is not None and s.method in STRATEGIES:
            s.normalized_runtime = s.median_step_ms / base.median_step_ms
    return out


def mean_traces(results: Sequence[FoldResult]):
    """Per-method (hours, mean AUC, 95% half-width) over folds, aligned on eval points."""
    by_method: dict[str, list[FoldResult]] = {}
    for r in results:
        by_method.setdefault(r.method, []).append(r)
    hours, mean, ci = {}, {}, {}
    for method, rs in by_method.items():
        n = min(len(r.auc) for r in rs)
        a = np.array([r.auc[:n] for r in rs])
        hours[method] = rs[0].hours[:n]
        mean[method] = a.mean(axis=0)
        sd = a.std(axis=0, ddof=1) if len(rs) > 1 else np.zeros(n)
        ci[method] = 1.96 * sd / math.sqrt(len(rs))
    return hours, mean, ci


# -- report files ------------------------------------------------------------

RESULTS_HEADER = ("method", "fold", "train_hours", "auc")
SUMMARY_HEADER = ("method", "n_folds", "mean_auc", "ci95", "final_auc", "memory_params", "memory_formula")
RUNTIME_HEADER = ("method", "median_step_ms", "normalized_runtime", "offline_train_s")


def write_csv(path, header, rows) -> None:
    import csv
    from pathlib import Path

    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else ("" if v is None else v) for v in row])
    tmp.replace(path)


def write_results(path, results: Sequence[FoldResult]) -> None:
    rows = []
    for r in results:
        for h, a in zip(r.hours, r.auc):
            rows.append((r.method, r.fold, float(h), float(a)))
    write_csv(path, RESULTS_HEADER, rows)


def write_summary(path, summaries: Sequence[MethodSummary]) -> None:
    write_csv(path, SUMMARY_HEADER, [
        (s.method, s.n_folds, s.mean_auc, s.ci95, s.final_auc, s.memory, s.memory_formula)
        for s in summaries
    ])


def write_runtime(path, summaries: Sequence[MethodSummary]) -> None:
    """Wall-clock measurements; unlike the other reports these vary run to run."""
    rows = []
    for s in summaries:
        if s.method in OFFLINE_METHODS:
            # one batch training run per fold, not a streaming step
            rows.append((s.method, None, None, round(s.median_step_ms / 1e3, 3)))
        else:
            ratio = None if s.normalized_runtime is None else round(s.normalized_runtime, 4)
            rows.append((s.method, round(s.median_step_ms, 6), ratio, None))
    write_csv(path, RUNTIME_HEADER, rows)


# -- step-time benchmark -----------------------------------------------------


def bench_strategies(
    windows: WindowSet,
    params: MethodParams,
    steps: int = 1000,
    seed: int = 0,
    strategies: Sequence[str] = STRATEGIES,
) -> dict[str, float]:
    """Median seconds per train + inference step, measured after the buffers fill."""
    norm = params.normalizer
    x = norm.normalize_x(windows.x)
    y = norm.normalize_y(windows.y)
    warm = params.buffer_size
    if len(y) < warm + steps:
        raise ValueError(f"benchmark stream needs {warm + steps} windows, got {len(y)}")
    out = {}
    for strategy in strategies:
        model = init_mlp([x.shape[1], *params.hidden, 1], np.random.default_rng(fold_seed(seed, 0)))
        trainer = OnlineTrainer(
            strategy, model, SgdMomentum(model, params.learning_rate, params.momentum),
            buffer_size=params.buffer_size, icarl_exemplars=params.icarl_exemplars,
            ewc_lambda=params.ewc_lambda, ewc_gamma=params.ewc_gamma, lwf_lambda=params.lwf_lambda,
            epochs=params.epochs_per_step,
        )
        for k in range(warm):
            trainer.step(x[k], float(y[k]), k)
        timings = np.empty(steps)
        for j in range(steps):
            k = warm + j
            t0 = time.perf_counter()
            trainer.step(x[k], float(y[k]), k)
            predict(model, x[k : k + 1])
            timings[j] = time.perf_counter() - t0
        out[strategy] = float(np.median(timings))
    return out
