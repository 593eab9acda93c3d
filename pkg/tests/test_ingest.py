import numpy as np
import pytest

from nvbgen.features import BEHAVIOR_FEATURES, SPEECH_BASE_FEATURES, SPEECH_DIM
from nvbgen.ingest import (
    BEHAVIOR_META_COLUMNS,
    add_derivatives,
    align_tracks,
    attach_speaking_flag,
    downsample_speech,
    export_track_csv,
    parse_openface_csv,
    parse_opensmile_csv,
)
from nvbgen.features import behavior_track, speech_track


def write_openface_csv(path, n_rows, fps=25.0, value_fn=None, drop=None, shuffle_columns=False):
    columns = list(BEHAVIOR_META_COLUMNS + BEHAVIOR_FEATURES)
    if drop:
        columns = [c for c in columns if c != drop]
    if shuffle_columns:
        columns = columns[::-1]
    lines = [",".join(columns)]
    for i in range(n_rows):
        row = {"timestamp": i / fps, "confidence": 0.98, "success": 1}
        for j, name in enumerate(BEHAVIOR_FEATURES):
            row[name] = value_fn(i, j) if value_fn else 0.01 * i + 0.001 * j
        lines.append(",".join(str(row[c]) for c in columns))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_opensmile_csv(path, n_rows, fps=50.0, extra_columns=(), shuffle_columns=False):
    columns = ["timestamp"] + list(SPEECH_BASE_FEATURES) + list(extra_columns)
    if shuffle_columns:
        columns = columns[::-1]
    lines = [",".join(columns)]
    for i in range(n_rows):
        row = {"timestamp": i / fps}
        for j, name in enumerate(SPEECH_BASE_FEATURES):
            row[name] = float(j) + 0.1 * i
        for name in extra_columns:
            row[name] = -1.0
        lines.append(",".join(str(row[c]) for c in columns))
    path.write_text("\n".join(lines) + "\n")
    return path


def test_parse_openface_field_exact(tmp_path):
    path = write_openface_csv(tmp_path / "b.csv", 3, value_fn=lambda i, j: i * 100.0 + j)
    rows = parse_openface_csv(path)
    assert len(rows) == 3
    for i, row in enumerate(rows):
        assert row.confidence == 0.98
        assert row.success == 1
        assert np.array_equal(row.values, np.arange(28) + i * 100.0)


def test_parse_openface_missing_column(tmp_path):
    path = write_openface_csv(tmp_path / "b.csv", 3, drop="AU45_r")
    with pytest.raises(ValueError, match="missing column AU45_r"):
        parse_openface_csv(path)


def test_parse_openface_bad_cell(tmp_path):
    path = tmp_path / "b.csv"
    write_openface_csv(path, 3)
    text = path.read_text().splitlines()
    parts = text[2].split(",")
    parts[4] = "oops"
    text[2] = ",".join(parts)
    path.write_text("\n".join(text) + "\n")
    with pytest.raises(ValueError, match="row 1"):
        parse_openface_csv(path)


def test_parse_openface_duration_from_frame_arithmetic(tmp_path):
    path = write_openface_csv(tmp_path / "b.csv", 250)
    rows = parse_openface_csv(path)
    assert len(rows) == 250
    assert rows[-1].timestamp - rows[0].timestamp == pytest.approx(249 / 25)


def test_parse_opensmile_keeps_seven_features(tmp_path):
    extra = [f"spare{k}" for k in range(13)]  # 20 feature columns total
    path = write_opensmile_csv(tmp_path / "s.csv", 5, extra_columns=extra)
    rows = parse_opensmile_csv(path)
    assert all(r.values.shape == (7,) for r in rows)


def test_parse_opensmile_order_independent_of_csv(tmp_path):
    a = write_opensmile_csv(tmp_path / "a.csv", 4)
    b = write_opensmile_csv(tmp_path / "b.csv", 4, shuffle_columns=True)
    rows_a = parse_opensmile_csv(a)
    rows_b = parse_opensmile_csv(b)
    for ra, rb in zip(rows_a, rows_b):
        assert np.array_equal(ra.values, rb.values)


def test_parse_opensmile_row_preservation(tmp_path):
    path = write_opensmile_csv(tmp_path / "s.csv", 500)
    assert len(parse_opensmile_csv(path)) == 500


def test_derivatives_constant_signal():
    base = np.full((10, 7), 3.0)
    out = add_derivatives(base)
    assert out.shape == (10, 21)
    assert np.all(out[:, 7:] == 0.0)


def test_derivatives_linear_ramp():
    base = np.tile(np.arange(10.0)[:, None], (1, 7))
    out = add_derivatives(base)
    assert np.all(out[:, 7:14] == 1.0)   # one-sided boundaries agree on a ramp
    assert np.all(out[:, 14:] == 0.0)


def test_derivatives_match_finite_difference_oracle():
    rng = np.random.default_rng(2)
    base = rng.normal(size=(10, 7))
    out = add_derivatives(base)

    def oracle_diff(x):
        n = len(x)
        d = [0.0] * n
        for t in range(n):
            if t == 0:
                d[t] = x[1] - x[0]
            elif t == n - 1:
                d[t] = x[-1] - x[-2]
            else:
                d[t] = (x[t + 1] - x[t - 1]) / 2.0
        return d

    for j in range(7):
        first = oracle_diff(list(base[:, j]))
        second = oracle_diff(first)
        assert np.allclose(out[:, 7 + j], first, atol=1e-12)
        assert np.allclose(out[:, 14 + j], second, atol=1e-12)


def test_derivatives_too_short():
    with pytest.raises(ValueError, match="too short"):
        add_derivatives(np.zeros((2, 7)))


def test_downsample_pairwise_mean():
    values = np.array([[1.0], [3.0], [5.0], [7.0]])
    ts = np.arange(4) / 50.0
    out, out_ts = downsample_speech(values, ts)
    assert np.array_equal(out, np.array([[2.0], [6.0]]))
    assert np.allclose(out_ts, [(0 + 1 / 50) / 2, (2 / 50 + 3 / 50) / 2])


def test_downsample_constant_half_length():
    values = np.full((10, 3), 4.2)
    out, _ = downsample_speech(values, np.arange(10) / 50.0)
    assert out.shape == (5, 3)
    assert np.all(out == 4.2)


def test_downsample_odd_length_drops_trailing_row():
    values = np.arange(5.0)[:, None]
    out, _ = downsample_speech(values, np.arange(5) / 50.0)
    assert out.shape == (2, 1)


def test_speaking_flag_interval_membership():
    values = np.zeros((100, 21))
    ts = np.arange(100) / 25.0
    out = attach_speaking_flag(values, ts, [(0.0, 2.0)])
    assert out.shape == (100, SPEECH_DIM)
    assert np.all(out[:50, -1] == 1.0)
    assert np.all(out[50:, -1] == 0.0)


def test_speaking_flag_empty_and_full():
    values = np.zeros((10, 21))
    ts = np.arange(10) / 25.0
    assert np.all(attach_speaking_flag(values, ts, [])[:, -1] == 0.0)
    assert np.all(attach_speaking_flag(values, ts, [(0.0, 1.0)])[:, -1] == 1.0)


def test_speaking_flag_overlap_error():
    values = np.zeros((10, 21))
    ts = np.arange(10) / 25.0
    with pytest.raises(ValueError, match="overlapping"):
        attach_speaking_flag(values, ts, [(0.0, 1.0), (0.5, 2.0)])


def test_align_tracks_truncates_longer():
    speech = speech_track(np.zeros((100, SPEECH_DIM)))
    behavior = behavior_track(np.zeros((101, 28)), confidence=np.ones(101), success=np.ones(101))
    s, b = align_tracks(speech, behavior)
    assert s.n_frames == b.n_frames == 100
    assert b.confidence.shape == (100,)


def test_export_track_csv_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    track = speech_track(np.round(rng.normal(size=(20, SPEECH_DIM)), 6))
    path = tmp_path / "track.csv"
    export_track_csv(track, path)
    header = path.read_text().splitlines()[0].split(",")
    assert tuple(header) == track.feature_names
    reloaded = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.allclose(reloaded, track.data, atol=1e-9)
