"""Replay buffers and the six online training strategies.

Every strategy performs one buffer update followed by one model update per
incoming sample:

    incremental  train on the incoming sample alone
    buffer       FIFO buffer of N samples
    selection    incoming sample overwrites the buffered sample with the
                 lowest loss under the current model
    icarl        FIFO buffer plus an exemplar buffer fed every |B| steps with
                 the sample closest to the buffer's mean feature vector
    ewc          FIFO buffer plus an online-EWC quadratic parameter penalty
    lwf          FIFO buffer plus a distillation penalty against the model
                 from the previous step
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .nn_core import Gradients, LayerParams, MlpModel, OptimizerState, backward, predict

STRATEGIES = ("incremental", "buffer", "selection", "icarl", "ewc", "lwf")
POLICIES = ("incremental", "fifo", "min_loss_selection")


class StrategyConfigError(ValueError):
    pass


@dataclass
class Sample:
    x: np.ndarray
    y: float
    t: int
    label: int = 0  # evaluation only, never read by training code


class ReplayBuffer:
    """Fixed-capacity sample store backed by preallocated arrays."""

    def __init__(self, capacity: int, n_features: int, policy: str = "fifo"):
        if policy not in POLICIES:
            raise StrategyConfigError(f"unknown buffer policy {policy!r}")
        if policy == "incremental":
            capacity = 1
        if capacity < 0:
            raise StrategyConfigError("capacity must be non-negative")
        self.capacity = capacity
        self.policy = policy
        self.x = np.zeros((capacity, n_features))
        self.y = np.zeros(capacity)
        self.t = np.full(capacity, -1, dtype=np.int64)
        self.label = np.zeros(capacity, dtype=np.int64)
        self.size = 0
        self.forward_rows = 0  # model evaluations spent on slot losses

    def __len__(self) -> int:
        return self.size

    @property
    def full(self) -> bool:
        return self.size >= self.capacity

    @property
    def xs(self) -> np.ndarray:
        return self.x[: self.size]

    @property
    def ys(self) -> np.ndarray:
        return self.y[: self.size]

    def sample_at(self, i: int) -> Sample:
        return Sample(self.x[i].copy(), float(self.y[i]), int(self.t[i]), int(self.label[i]))

    def samples(self) -> list[Sample]:
        return [self.sample_at(i) for i in range(self.size)]

    def _put(self, i: int, s: Sample) -> Sample | None:
        evicted = self.sample_at(i) if i < self.size else None
        self.x[i] = s.x
        self.y[i] = s.y
        self.t[i] = s.t
        self.label[i] = s.label
        if i >= self.size:
            self.size = i + 1
        return evicted

    def insert_fifo(self, s: Sample) -> Sample | None:
        if self.capacity == 0:
            return None
        if not self.full:
            return self._put(self.size, s)
        return self._put(int(np.argmin(self.t)), s)

    def slot_losses(self, model: MlpModel) -> np.ndarray:
        self.forward_rows += self.size
        d = self.ys - predict(model, self.xs)
        return d * d

    def insert_min_loss(self, s: Sample, model: MlpModel) -> tuple[Sample | None, np.ndarray]:
        """Fill empty rows first, then overwrite the lowest-loss slot (lowest index on ties)."""
        if self.capacity == 0:
            return None, np.zeros(0)
        if not self.full:
            return self._put(self.size, s), np.zeros(0)
        losses = self.slot_losses(model)
        return self._put(int(np.argmin(losses)), s), losses

    def insert(self, s: Sample, model: MlpModel | None = None) -> Sample | None:
        if self.policy == "min_loss_selection":
            if model is None:
                raise StrategyConfigError("min-loss selection needs the current model")
            return self.insert_min_loss(s, model)[0]
        return self.insert_fifo(s)

    def snapshot_hash(self) -> int:
        """CRC32 over the arrival indices currently held, in slot order."""
        return zlib.crc32(self.t[: self.size].tobytes())


class ExemplarBuffer:
    """iCaRL exemplar memory; oldest exemplar is overwritten once full."""

    def __init__(self, capacity: int, n_features: int):
        self.store = ReplayBuffer(capacity, n_features, "fifo")
        self.steps = 0
        self.admissions = 0

    @property
    def capacity(self) -> int:
        return self.store.capacity

    def __len__(self) -> int:
        return len(self.store)

    def countdown(self, period: int) -> int:
        return period - (self.steps % period)


def icarl_maybe_admit(ex: ExemplarBuffer, buf: ReplayBuffer) -> Sample | None:
    """Advance one step; every ``buf.capacity`` steps admit the buffer sample
    closest to the buffer's mean feature vector."""
    ex.steps += 1
    period = buf.capacity
    if ex.capacity == 0 or period == 0 or ex.steps % period != 0 or len(buf) == 0:
        return None
    xs = buf.xs
    dist = np.linalg.norm(xs - xs.mean(axis=0), axis=1)
    chosen = buf.sample_at(int(np.argmin(dist)))
    # admission stamps its own order so FIFO eviction follows admission time
    ex.store.insert_fifo(Sample(chosen.x, chosen.y, ex.admissions, chosen.label))
    ex.admissions += 1
    return chosen


def _zeros(model: MlpModel) -> list[LayerParams]:
    return [LayerParams(np.zeros_like(l.weights), np.zeros_like(l.biases)) for l in model.layers]


@dataclass
class EwcState:
    lam: float
    gamma: float
    fisher: list[LayerParams]
    theta_prev: list[LayerParams] | None = None

    @classmethod
    def for_model(cls, model: MlpModel, lam: float = 22.5, gamma: float = 0.8) -> "EwcState":
        if lam < 0:
            raise StrategyConfigError("ewc lambda must be non-negative")
        if not 0.0 <= gamma <= 1.0:
            raise StrategyConfigError("ewc gamma must lie in [0, 1]")
        return cls(lam, gamma, _zeros(model))


def ewc_penalty(state: EwcState, model: MlpModel) -> tuple[float, Gradients]:
    """(lam / 2) * sum F * (theta - theta_prev)^2 and its gradient."""
    grads = []
    penalty = 0.0
    if state.theta_prev is None:
        return 0.0, _zeros(model)
    for layer, f, prev in zip(model.layers, state.fisher, state.theta_prev):
        dw = layer.weights - prev.weights
        db = layer.biases - prev.biases
        penalty += float(np.sum(f.weights * dw * dw) + np.sum(f.biases * db * db))
        grads.append(LayerParams(state.lam * f.weights * dw, state.lam * f.biases * db))
    return 0.5 * state.lam * penalty, grads


def ewc_update_fisher(state: EwcState, base_grads: Gradients, model: MlpModel) -> None:
    """F <- gamma * F + grad^2; snapshot the current parameters."""
    for f, g in zip(state.fisher, base_grads):
        f.weights *= state.gamma
        f.weights += g.weights * g.weights
        f.biases *= state.gamma
        f.biases += g.biases * g.biases
    state.theta_prev = [l.copy() for l in model.layers]


@dataclass
class LwfState:
    lam: float
    prev_model: MlpModel | None = None

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise StrategyConfigError("lwf lambda must be non-negative")


def lwf_penalty(state: LwfState, model: MlpModel, xs: np.ndarray) -> tuple[float, Gradients]:
    """(lam / N) * sum ||f(x, theta) - f(x, theta_prev)||^2 over the buffer inputs.

    The previous model's outputs act as constants, so the gradient is the
    batch-MSE gradient towards them, scaled by lam.
    """
    if state.prev_model is None or len(xs) == 0:
        return 0.0, _zeros(model)
    targets = predict(state.prev_model, xs)
    loss, grads = backward(model, xs, targets)
    for g in grads:
        g.weights *= state.lam
        g.biases *= state.lam
    return state.lam * loss, grads


def _add_into(acc: Gradients, extra: Gradients) -> None:
    for a, e in zip(acc, extra):
        a.weights += e.weights
        a.biases += e.biases


@dataclass
class StepReport:
    loss: float
    buffer_hash: int


@dataclass
class StepCounters:
    forward_rows: int = 0  # rows evaluated outside backward (selection, distillation targets)
    backward_rows: int = 0  # rows passed through a forward+backward pass
    steps: int = 0


class OnlineTrainer:
    """One strategy, one model, one optimizer; ``step`` consumes one sample."""

    def __init__(
        self,
        strategy: str,
        model: MlpModel,
        opt: OptimizerState,
        buffer_size: int = 50,
        icarl_exemplars: int = 25,
        ewc_lambda: float = 22.5,
        ewc_gamma: float = 0.8,
        lwf_lambda: float = 0.1,
        epochs: int = 1,
    ):
        if strategy not in STRATEGIES:
            raise StrategyConfigError(
                f"unknown strategy {strategy!r}; expected one of {', '.join(STRATEGIES)}"
            )
        if epochs < 1:
            raise StrategyConfigError("epochs must be >= 1")
        self.strategy = strategy
        self.model = model
        self.opt = opt
        self.epochs = epochs
        self.counters = StepCounters()
        n = model.n_inputs
        self.exemplars: ExemplarBuffer | None = None
        self.ewc: EwcState | None = None
        self.lwf: LwfState | None = None
        if strategy == "incremental":
            self.buffer = ReplayBuffer(1, n, "incremental")
        elif strategy == "selection":
            self.buffer = ReplayBuffer(buffer_size, n, "min_loss_selection")
        elif strategy == "icarl":
            if not 0 <= icarl_exemplars < buffer_size:
                raise StrategyConfigError("icarl exemplar capacity must be in [0, buffer_size)")
            self.buffer = ReplayBuffer(buffer_size - icarl_exemplars, n, "fifo")
            self.exemplars = ExemplarBuffer(icarl_exemplars, n)
        else:
            self.buffer = ReplayBuffer(buffer_size, n, "fifo")
            if strategy == "ewc":
                self.ewc = EwcState.for_model(model, ewc_lambda, ewc_gamma)
            elif strategy == "lwf":
                self.lwf = LwfState(lwf_lambda)

    def _batch(self) -> tuple[np.ndarray, np.ndarray]:
        if self.exemplars is not None and len(self.exemplars):
            ex = self.exemplars.store
            return np.concatenate([self.buffer.xs, ex.xs]), np.concatenate([self.buffer.ys, ex.ys])
        return self.buffer.xs, self.buffer.ys

    def _update(self) -> float:
        xs, ys = self._batch()
        loss, grads = backward(self.model, xs, ys)
        self.counters.backward_rows += len(xs)
        if self.ewc is not None:
            pen, pg = ewc_penalty(self.ewc, self.model)
            # fisher takes the data-loss gradient; the snapshot is pre-update
            ewc_update_fisher(self.ewc, grads, self.model)
            _add_into(grads, pg)
            loss += pen
        elif self.lwf is not None:
            if self.lwf.prev_model is not None:
                pen, pg = lwf_penalty(self.lwf, self.model, xs)
                self.counters.forward_rows += len(xs)
                self.counters.backward_rows += len(xs)
                _add_into(grads, pg)
                loss += pen
            self.lwf.prev_model = self.model.copy()
        self.opt.step(self.model, grads)
        return loss

    def step(self, x: np.ndarray, y: float, t: int, label: int = 0) -> StepReport:
        s = Sample(x, y, t, label)
        before = self.buffer.forward_rows
        self.buffer.insert(s, self.model)
        self.counters.forward_rows += self.buffer.forward_rows - before
        if self.exemplars is not None:
            icarl_maybe_admit(self.exemplars, self.buffer)
        loss = 0.0
        for _ in range(self.epochs):
            loss = self._update()
        self.counters.steps += 1
        return StepReport(loss, self.buffer.snapshot_hash())
