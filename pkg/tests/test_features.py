import numpy as np
import pytest
from hypothesis import given, strategies as st

from edgereplay.features import (
    DatasetError,
    Normalizer,
    RawRecord,
    WindowSpec,
    downsample,
    make_windows,
    mean_rms_current,
    read_dataset,
    write_dataset,
)


def rec(t, i=1.0, th=30.0, label=0):
    return RawRecord(float(t), i, i, i, th, label)


def test_downsample_takes_latest_in_each_slot():
    out = downsample([rec(0, 1), rec(3, 2), rec(9, 3), rec(12, 4)], 10.0)
    assert [r.timestamp for r in out] == [0.0, 10.0, 20.0]
    assert out[1].i_a == 3  # t = 9 is the latest record at or before 10
    assert out[2].i_a == 4  # t = 12 only appears at the next grid point


def test_downsample_identity_and_empty():
    grid = [rec(10 * k, k) for k in range(5)]
    assert downsample(grid, 10.0) == grid
    assert downsample([], 10.0) == []


def test_downsample_gap_and_order():
    out = downsample([rec(0), rec(40)], 10.0)
    assert out[1] is None and out[2] is None and out[3] is None
    with pytest.raises(DatasetError):
        downsample([rec(10), rec(5)], 10.0)


def test_mean_current():
    assert mean_rms_current(RawRecord(0, 3, 3, 3, 0, 0)) == 3
    assert mean_rms_current(RawRecord(0, 0, 0, 0, 0, 0)) == 0
    assert mean_rms_current(RawRecord(0, 1, 2, 3, 0, 0)) == 2


def test_constant_stream_windows():
    ws = make_windows([rec(10 * k, 5.0, 40.0) for k in range(200)])
    assert ws.x.shape == (21, 180)
    assert (ws.x == 5.0).all() and (ws.y == 40.0).all()


def test_window_count():
    assert len(make_windows([rec(10 * k) for k in range(181)])) == 2
    assert len(make_windows([rec(10 * k) for k in range(179)])) == 0


def test_window_target_is_end_temperature():
    stream = [rec(10 * k, float(k), float(k) + 20) for k in range(185)]
    ws = make_windows(stream, WindowSpec(10.0, 180))
    np.testing.assert_array_equal(ws.x[0], np.arange(180.0))
    assert ws.y[0] == 179 + 20 and ws.t[0] == 179


@pytest.mark.parametrize("k", [0, 1, 179, 180, 250, 399])
def test_single_gap_kills_covering_windows(k):
    n, w = 400, 180
    stream = [rec(10 * j) for j in range(n)]
    stream[k] = None
    ws = make_windows(stream, WindowSpec(10.0, w))
    # brute force: a window ending at e covers [e-w+1, e]
    expected = [e for e in range(w - 1, n) if not (e - w + 1 <= k <= e)]
    assert ws.t.tolist() == expected
    assert ws.skipped == (n - w + 1) - len(expected)
    if w - 1 <= k <= n - w:
        assert ws.skipped == w


def test_normalizer_values():
    nm = Normalizer(0.0, 10.0, 20.0, 100.0)
    assert nm.normalize_x(5.0) == 0.5
    assert nm.normalize_x(0.0) == 0.0 and nm.normalize_x(10.0) == 1.0
    assert nm.normalize_y(100.0) == 1.0


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=50))
def test_normalizer_round_trip(xs):
    nm = Normalizer()
    xs = np.array(xs)
    assert np.max(np.abs(nm.denormalize_x(nm.normalize_x(xs)) - xs)) < 1e-12
    assert np.max(np.abs(nm.denormalize_y(nm.normalize_y(xs)) - xs)) < 1e-12


def test_normalizer_rejects_degenerate_range():
    with pytest.raises(ValueError):
        Normalizer(1.0, 1.0)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    recs = [
        RawRecord(10.0 * k, *map(float, rng.uniform(0, 12, 3)), float(np.floor(rng.uniform(25, 70))), int(k % 2))
        for k in range(1000)
    ]
    p = tmp_path / "d.csv"
    write_dataset(p, recs)
    assert read_dataset(p) == recs


def test_csv_missing_column(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("timestamp_s,i_a,i_b,t_hs,label\n0,1,1,30,0\n")
    with pytest.raises(DatasetError, match="i_c"):
        read_dataset(p)


def test_csv_header_only(tmp_path):
    p = tmp_path / "d.csv"
    write_dataset(p, [])
    assert read_dataset(p) == []


def test_csv_bad_row_names_line(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("timestamp_s,i_a,i_b,i_c,t_hs,label\n0,1,1,1,30,0\n10,x,1,1,30,0\n")
    with pytest.raises(DatasetError, match=r"d\.csv:3"):
        read_dataset(p)
