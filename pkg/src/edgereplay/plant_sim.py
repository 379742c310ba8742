"""Synthetic motor-drive thermal plant.

Speed and torque references are drawn uniformly from the drive's operating
range and held for 10 minutes; after each hold the drive either gets a new
reference or is stopped to cool down, with equal probability. The heat sink
is a first-order lumped model driven by conduction-plus-resistive losses of
the output current. A blocked cooling outlet is emulated by scaling the
thermal resistance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import ANOMALOUS, HEALTHY, RawRecord, write_dataset

logger = logging.getLogger(__name__)

OMEGA_MAX = 1465.0  # r/min
TORQUE_MAX = 28.0  # N*m


class PlantConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    start: float
    duration: float
    omega: float
    torque: float
    stopped: bool = False

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass
class ReferenceSchedule:
    segments: list[Segment]
    decisions: int  # number of hold-end decision points
    stops: int  # decisions that stopped the drive

    @property
    def duration(self) -> float:
        return self.segments[-1].end if self.segments else 0.0

    def at(self, t: float) -> Segment:
        for seg in self.segments:
            if seg.start <= t < seg.end:
                return seg
        return self.segments[-1]


def generate_references(
    seed: int,
    total_duration: float,
    hold: float = 600.0,
    p_stop: float = 0.5,
    stop_duration: float = 600.0,
    omega_max: float = OMEGA_MAX,
    torque_max: float = TORQUE_MAX,
) -> ReferenceSchedule:
    """Random hold/stop reference process covering ``total_duration`` seconds."""
    if total_duration <= 0:
        raise PlantConfigError("total_duration must be positive")
    rng = np.random.default_rng(seed)
    segments: list[Segment] = []
    t = 0.0
    decisions = stops = 0
    while t < total_duration:
        omega = float(rng.uniform(0.0, omega_max))
        torque = float(rng.uniform(0.0, torque_max))
        segments.append(Segment(t, hold, omega, torque))
        t += hold
        if t >= total_duration:
            break
        decisions += 1
        if rng.random() < p_stop:
            stops += 1
            segments.append(Segment(t, stop_duration, 0.0, 0.0, stopped=True))
            t += stop_duration
    return ReferenceSchedule(segments, decisions, stops)


@dataclass(frozen=True)
class ThermalPlant:
    t_amb: float = 25.0  # degC
    r_th: float = 1.0  # K/W heat sink to ambient
    tau_th: float = 600.0  # s
    loss_a: float = 0.8  # W/A conduction term
    loss_b: float = 0.35  # W/A^2 resistive term
    anomaly_factor: float = 1.5  # R_th multiplier with the outlet blocked
    # i_rms = c_torque * tau + c_cross * omega * tau; 12 A at the rated point
    c_torque: float = 6.0 / TORQUE_MAX
    c_cross: float = 6.0 / (OMEGA_MAX * TORQUE_MAX)
    phase_noise: float = 0.02  # A, per-phase measurement noise std
    inner_step: float = 1.0  # s, explicit Euler step
    record_period: float = 10.0  # s

    def __post_init__(self) -> None:
        if self.tau_th <= 0:
            raise PlantConfigError("tau_th must be positive")
        if self.r_th <= 0:
            raise PlantConfigError("r_th must be positive")
        if self.anomaly_factor < 1.0:
            raise PlantConfigError("anomaly_factor must be >= 1")
        if self.inner_step <= 0 or self.record_period < self.inner_step:
            raise PlantConfigError("record_period must be a multiple of a positive inner_step")

    def current(self, omega: float, torque: float) -> float:
        return self.c_torque * torque + self.c_cross * omega * torque

    def losses(self, i: float) -> float:
        return self.loss_a * i + self.loss_b * i * i


@dataclass
class SimTrace:
    """Per-record simulator output before noise and quantization."""

    time: np.ndarray
    current: np.ndarray
    temperature: np.ndarray  # unquantized
    anomalous: np.ndarray


def _in_intervals(t: float, intervals: Sequence[tuple[float, float]]) -> bool:
    return any(a <= t < b for a, b in intervals)


def simulate_trace(
    plant: ThermalPlant,
    schedule: ReferenceSchedule,
    anomaly_intervals: Sequence[tuple[float, float]] = (),
    duration: float | None = None,
) -> SimTrace:
    """Integrate the heat-sink temperature and sample it every record period."""
    if not schedule.segments:
        raise PlantConfigError("schedule is empty")
    duration = schedule.duration if duration is None else duration
    dt = plant.inner_step
    per_record = int(round(plant.record_period / dt))
    n_records = int(duration // plant.record_period)
    times = np.arange(n_records) * plant.record_period
    cur = np.zeros(n_records)
    temp = np.zeros(n_records)
    anom = np.zeros(n_records, dtype=bool)

    starts = np.array([seg.start for seg in schedule.segments])
    seg_idx = np.clip(np.searchsorted(starts, times, side="right") - 1, 0, len(starts) - 1)
    # per_record explicit Euler steps at a constant target collapse to one factor
    decay = (1.0 - dt / plant.tau_th) ** per_record
    temp_now = plant.t_amb
    for k in range(n_records):
        seg = schedule.segments[seg_idx[k]]
        i_rms = 0.0 if seg.stopped else plant.current(seg.omega, seg.torque)
        is_anom = _in_intervals(times[k], anomaly_intervals)
        cur[k] = i_rms
        temp[k] = temp_now
        anom[k] = is_anom
        r_th = plant.r_th * (plant.anomaly_factor if is_anom else 1.0)
        target = plant.t_amb + plant.losses(i_rms) * r_th
        temp_now = target + (temp_now - target) * decay
    return SimTrace(times, cur, temp, anom)


def simulate(
    plant: ThermalPlant,
    schedule: ReferenceSchedule,
    anomaly_intervals: Sequence[tuple[float, float]] = (),
    duration: float | None = None,
    noise_seed: int | None = 0,
) -> list[RawRecord]:
    """Logged drive records: balanced phase currents plus quantized T_hs."""
    trace = simulate_trace(plant, schedule, anomaly_intervals, duration)
    rng = np.random.default_rng(noise_seed)
    n = len(trace.time)
    if plant.phase_noise > 0:
        noise = rng.normal(0.0, plant.phase_noise, size=(n, 3))
    else:
        noise = np.zeros((n, 3))
    phases = np.maximum(trace.current[:, None] + noise, 0.0)
    phases[trace.current == 0.0] = 0.0  # a stopped drive reports exactly zero
    t_q = np.floor(trace.temperature)
    return [
        RawRecord(
            float(trace.time[k]),
            float(phases[k, 0]), float(phases[k, 1]), float(phases[k, 2]),
            float(t_q[k]),
            ANOMALOUS if trace.anomalous[k] else HEALTHY,
        )
        for k in range(n)
    ]


@dataclass(frozen=True)
class CorpusPaths:
    healthy: Path
    anomalous: Path


HEALTHY_FILE = "train.csv"
ANOMALOUS_FILE = "test_anomalous.csv"


def corpus_seeds(seed: int) -> dict[str, int]:
    """Independent child seeds for each stochastic piece of the corpus."""
    children = np.random.SeedSequence(seed).spawn(4)
    names = ("healthy_refs", "healthy_noise", "anomalous_refs", "anomalous_noise")
    return {name: int(c.generate_state(1)[0]) for name, c in zip(names, children)}


def synthetic_run(
    plant: ThermalPlant,
    hours: float,
    refs_seed: int,
    noise_seed: int,
    anomalous: bool = False,
    hold: float = 600.0,
    p_stop: float = 0.5,
    stop_duration: float = 600.0,
) -> list[RawRecord]:
    """One continuous logged run, healthy or with the outlet blocked throughout."""
    duration = hours * 3600.0
    sched = generate_references(refs_seed, duration, hold, p_stop, stop_duration)
    intervals = [(0.0, math.inf)] if anomalous else []
    return simulate(plant, sched, intervals, duration, noise_seed)


def build_corpus(
    seed: int,
    out_dir,
    plant: ThermalPlant = ThermalPlant(),
    healthy_hours: float = 26.0,
    anomalous_hours: float = 21.0,
    hold: float = 600.0,
    p_stop: float = 0.5,
    stop_duration: float = 600.0,
) -> CorpusPaths:
    """Write the healthy training corpus and the blocked-outlet corpus."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = corpus_seeds(seed)

    kw = dict(hold=hold, p_stop=p_stop, stop_duration=stop_duration)
    healthy = synthetic_run(plant, healthy_hours, seeds["healthy_refs"], seeds["healthy_noise"], False, **kw)
    anomalous = synthetic_run(
        plant, anomalous_hours, seeds["anomalous_refs"], seeds["anomalous_noise"], True, **kw
    )
    paths = CorpusPaths(out_dir / HEALTHY_FILE, out_dir / ANOMALOUS_FILE)
    write_dataset(paths.healthy, healthy)
    write_dataset(paths.anomalous, anomalous)
    logger.info("wrote %d healthy and %d anomalous records", len(healthy), len(anomalous))
    return paths
