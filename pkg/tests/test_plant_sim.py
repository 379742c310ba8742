import math

import numpy as np
import pytest

from edgereplay.features import ANOMALOUS, HEALTHY, read_dataset
from edgereplay.plant_sim import (
    OMEGA_MAX,
    TORQUE_MAX,
    PlantConfigError,
    ReferenceSchedule,
    Segment,
    ThermalPlant,
    build_corpus,
    generate_references,
    simulate,
    simulate_trace,
)


def constant(omega, torque, duration, stopped=False):
    return ReferenceSchedule([Segment(0.0, duration, omega, torque, stopped)], 0, 0)


def test_references_deterministic_and_bounded():
    a = generate_references(3, 48 * 3600)
    b = generate_references(3, 48 * 3600)
    assert a == b
    for seg in a.segments:
        assert 0 <= seg.omega <= OMEGA_MAX and 0 <= seg.torque <= TORQUE_MAX
        if seg.stopped:
            assert seg.omega == 0 and seg.torque == 0


def test_stop_fraction():
    sched = generate_references(0, 1.2e4 * 900)
    assert sched.decisions >= 10_000
    assert sched.stops / sched.decisions == pytest.approx(0.5, abs=0.02)


def test_stop_is_followed_by_new_reference():
    sched = generate_references(1, 24 * 3600)
    for prev, nxt in zip(sched.segments, sched.segments[1:]):
        if prev.stopped:
            assert not nxt.stopped
        assert nxt.start == prev.end


def test_zero_load_stays_ambient():
    plant = ThermalPlant()
    recs = simulate(plant, constant(0, 0, 3600, stopped=True), duration=3600)
    assert all(r.i_a == r.i_b == r.i_c == 0 for r in recs)
    assert all(r.t_hs == math.floor(plant.t_amb) for r in recs)


def test_step_response_time_constant():
    plant = ThermalPlant()
    trace = simulate_trace(plant, constant(OMEGA_MAX, TORQUE_MAX, 4000), duration=4000)
    i = plant.current(OMEGA_MAX, TORQUE_MAX)
    gap = plant.losses(i) * plant.r_th
    k = int(plant.tau_th / plant.record_period)
    remaining = (plant.t_amb + gap - trace.temperature[k]) / gap
    assert remaining == pytest.approx(math.exp(-1), rel=2e-3)
    assert remaining <= math.exp(-1)


def test_rated_current():
    assert ThermalPlant().current(OMEGA_MAX, TORQUE_MAX) == pytest.approx(12.0)


def test_blocked_outlet_runs_hotter():
    plant = ThermalPlant()
    sched = constant(1000, 20, 6 * 3600)
    healthy = simulate_trace(plant, sched, duration=6 * 3600)
    blocked = simulate_trace(plant, sched, [(0, math.inf)], duration=6 * 3600)
    assert blocked.temperature[-1] > healthy.temperature[-1]
    assert blocked.anomalous.all() and not healthy.anomalous.any()


def test_plant_validation():
    with pytest.raises(PlantConfigError):
        ThermalPlant(tau_th=0)
    with pytest.raises(PlantConfigError):
        ThermalPlant(anomaly_factor=0.5)


def test_corpus_files(tmp_path):
    paths = build_corpus(0, tmp_path)
    healthy = read_dataset(paths.healthy)
    anomalous = read_dataset(paths.anomalous)
    assert len(healthy) * 10 / 3600 == pytest.approx(26, rel=0.01)
    assert len(anomalous) * 10 / 3600 == pytest.approx(21, rel=0.01)
    assert all(r.label == HEALTHY for r in healthy)
    assert all(r.label == ANOMALOUS for r in anomalous)
    temps = np.array([r.t_hs for r in healthy])
    assert temps.min() >= 25 and temps.max() < 100
    assert (temps == np.floor(temps)).all()


def test_corpus_is_byte_identical(tmp_path):
    a = build_corpus(7, tmp_path / "a", healthy_hours=2, anomalous_hours=1)
    b = build_corpus(7, tmp_path / "b", healthy_hours=2, anomalous_hours=1)
    assert a.healthy.read_bytes() == b.healthy.read_bytes()
    assert a.anomalous.read_bytes() == b.anomalous.read_bytes()
    c = build_corpus(8, tmp_path / "c", healthy_hours=2, anomalous_hours=1)
    assert c.healthy.read_bytes() != a.healthy.read_bytes()
