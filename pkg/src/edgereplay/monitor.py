"""Threshold demo: online training, then a monitored test run.

The healthy corpus is split in time. The leading parts are streamed through
the chosen strategy; the trailing parts followed by the blocked-outlet corpus
form the test run. The threshold is fitted on the first ``fit_samples``
residuals of the test run and frozen afterwards.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import ANOMALOUS, HEALTHY, Normalizer, RawRecord, WindowSet, WindowSpec, make_windows
from .nn_core import SgdMomentum, init_mlp, predict
from .replay import OnlineTrainer
from .threshold import ThresholdEstimator

EVENT_HEADER = ("index", "hours", "label", "t_hs", "t_hs_pred", "sq_error", "threshold", "state", "verdict")


@dataclass
class MonitorResult:
    hours: np.ndarray
    label: np.ndarray
    t_hs: np.ndarray  # degC
    t_hs_pred: np.ndarray  # degC
    sq_error: np.ndarray  # normalized units
    threshold: np.ndarray  # per-sample T (inf until two residuals are in)
    frozen: np.ndarray
    verdict: np.ndarray
    fit_samples: int
    train_samples: int

    @property
    def false_positive_rate(self) -> float:
        mask = self.frozen & (self.label == HEALTHY)
        return float(self.verdict[mask].mean()) if mask.any() else float("nan")

    @property
    def true_positive_rate(self) -> float:
        mask = self.frozen & (self.label == ANOMALOUS)
        return float(self.verdict[mask].mean()) if mask.any() else float("nan")

    @property
    def anomaly_onset_hours(self) -> float | None:
        idx = np.flatnonzero(self.label == ANOMALOUS)
        return float(self.hours[idx[0]]) if idx.size else None

    def event_rows(self) -> list[tuple]:
        rows = []
        for k in range(len(self.hours)):
            rows.append((
                k,
                float(self.hours[k]),
                int(self.label[k]),
                float(self.t_hs[k]),
                float(self.t_hs_pred[k]),
                float(self.sq_error[k]),
                float(self.threshold[k]),
                "frozen" if self.frozen[k] else "fitting",
                int(self.verdict[k]),
            ))
        return rows


def split_for_monitor(
    healthy: Sequence[RawRecord | None], n_parts: int, test_parts: int
) -> tuple[Sequence[RawRecord | None], Sequence[RawRecord | None]]:
    cut = round(len(healthy) * (n_parts - test_parts) / n_parts)
    return healthy[:cut], healthy[cut:]


def run_monitor(
    train_windows: WindowSet,
    test_windows: WindowSet,
    strategy: str = "selection",
    normalizer: Normalizer = Normalizer(),
    hidden: tuple[int, ...] = (16, 8),
    learning_rate: float = 1e-3,
    momentum: float = 0.9,
    alpha: float = 0.99,
    fit_samples: int = 1440,
    sample_period: float = 10.0,
    train_during_test: bool = False,
    seed: int = 0,
    trainer_kwargs: dict | None = None,
) -> MonitorResult:
    x_tr = normalizer.normalize_x(train_windows.x)
    y_tr = normalizer.normalize_y(train_windows.y)
    model = init_mlp([x_tr.shape[1], *hidden, 1], np.random.default_rng(np.random.SeedSequence([seed, 0])))
    opt = SgdMomentum(model, learning_rate, momentum)
    trainer = OnlineTrainer(strategy, model, opt, **(trainer_kwargs or {}))
    for k in range(len(y_tr)):
        trainer.step(x_tr[k], float(y_tr[k]), k)

    x = normalizer.normalize_x(test_windows.x)
    y = normalizer.normalize_y(test_windows.y)
    n = len(y)
    est = ThresholdEstimator(alpha=alpha, fit_duration=fit_samples)
    pred = np.zeros(n)
    thr = np.zeros(n)
    frozen = np.zeros(n, dtype=bool)
    verdict = np.zeros(n, dtype=bool)
    for k in range(n):
        pred[k] = predict(model, x[k : k + 1])[0]
        r = float(y[k] - pred[k])
        was_frozen = est.frozen
        if was_frozen:
            verdict[k] = est.classify(r * r)
        else:
            est.observe(r)
        frozen[k] = was_frozen
        thr[k] = est.threshold
        if train_during_test:
            trainer.step(x[k], float(y[k]), len(y_tr) + k)
    sq = (y - pred) ** 2
    return MonitorResult(
        hours=np.arange(n) * sample_period / 3600.0,
        label=test_windows.label.copy(),
        t_hs=test_windows.y.copy(),
        t_hs_pred=normalizer.denormalize_y(pred),
        sq_error=sq,
        threshold=thr,
        frozen=frozen,
        verdict=verdict,
        fit_samples=fit_samples,
        train_samples=len(y_tr),
    )


def monitor_windows(
    healthy: Sequence[RawRecord | None],
    anomalous: Sequence[RawRecord | None],
    spec: WindowSpec,
    n_parts: int,
    test_parts: int,
) -> tuple[WindowSet, WindowSet]:
    train_stream, test_stream = split_for_monitor(healthy, n_parts, test_parts)
    test = WindowSet.concat([make_windows(test_stream, spec), make_windows(anomalous, spec)])
    return make_windows(train_stream, spec), test


def write_events(path, result: MonitorResult) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_HEADER)
        for row in result.event_rows():
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    tmp.replace(path)
