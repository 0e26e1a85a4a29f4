"""CA-CFAR detection and the detection-sequence likelihood ratio."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sonartkbd.detect import (CfarDetector, CfarParams, ClutterModel,
                              _window_kernel, cfar_detect, detection_log_lr)


def test_param_validation():
    with pytest.raises(ValueError):
        CfarParams(guard_cells=-1)
    with pytest.raises(ValueError):
        CfarParams(train_cells=0)
    with pytest.raises(ValueError):
        CfarParams(alpha=0.0)
    with pytest.raises(ValueError):
        ClutterModel(rate=0.0)
    with pytest.raises(ValueError):
        ClutterModel(prob_detect=1.5)


def test_z_quantile_frozen():
    assert CfarParams(alpha=1e-3).z_alpha == pytest.approx(3.090232306167813,
                                                           abs=1e-12)
    assert CfarParams(alpha=0.25).z_alpha == pytest.approx(0.6744897501960817,
                                                           abs=1e-12)


def test_window_kernel_layout():
    k = _window_kernel(CfarParams(guard_cells=2, train_cells=3))
    # three training taps, two guard cells, the test cell, mirrored
    assert k.tolist() == [1, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1]


def test_constant_rows_fire_nothing():
    """Zero training spread means threshold == value; strict > keeps quiet."""
    params = CfarParams(guard_cells=2, train_cells=4, train_rows=3)
    row = np.full(50, 7.0)
    history = np.full((3, 50), 7.0)
    idx, threshold = cfar_detect(row, history, params)
    assert idx.size == 0
    np.testing.assert_allclose(threshold, 7.0, atol=1e-9)


def test_spike_is_detected_at_its_cell():
    rng = np.random.default_rng(0)
    params = CfarParams(guard_cells=2, train_cells=8, train_rows=4, alpha=1e-3)
    history = rng.normal(10.0, 1.0, size=(4, 80))
    row = rng.normal(10.0, 1.0, size=80)
    row[37] = 40.0
    idx, _ = cfar_detect(row, history, params)
    assert idx.tolist() == [37]


def test_adjacent_detections_collapse_to_peak():
    rng = np.random.default_rng(1)
    params = CfarParams(guard_cells=2, train_cells=8, train_rows=4, alpha=1e-3)
    history = rng.normal(10.0, 1.0, size=(4, 80))
    row = rng.normal(10.0, 1.0, size=80)
    row[40] = 35.0
    row[41] = 45.0
    row[42] = 36.0
    idx, _ = cfar_detect(row, history, params)
    assert 41 in idx.tolist()
    assert not {40, 42} & set(idx.tolist())


def test_history_row_budget_enforced():
    params = CfarParams(train_rows=2)
    with pytest.raises(ValueError):
        cfar_detect(np.zeros(40), np.zeros((3, 40)), params)
    with pytest.raises(ValueError):
        cfar_detect(np.zeros(40), np.zeros((2, 41)), params)


def test_false_alarm_rate_is_controlled():
    """On iid Gaussian rows the empirical rate stays near alpha."""
    rng = np.random.default_rng(2)
    params = CfarParams(guard_cells=2, train_cells=16, train_rows=10, alpha=1e-2)
    det = CfarDetector(params, np.arange(181.0))
    fired = 0
    n_rows = 400
    for _ in range(n_rows):
        fired += det.push(rng.normal(0.0, 1.0, size=181)).size
    rate = fired / (n_rows * 181)
    # local-max suppression and estimated std keep it loosely near alpha
    assert 0.0 < rate < 3e-2


def test_detector_streams_bearings():
    params = CfarParams(guard_cells=1, train_cells=4, train_rows=2, alpha=1e-3)
    bearings = np.linspace(-90.0, 90.0, 41)
    det = CfarDetector(params, bearings)
    rng = np.random.default_rng(3)
    for _ in range(2):
        det.push(rng.normal(5.0, 0.3, size=41))
    row = rng.normal(5.0, 0.3, size=41)
    row[20] = 30.0
    out = det.push(row)
    assert out.tolist() == [bearings[20]]


def test_train_rows_zero_uses_current_row_only():
    params = CfarParams(guard_cells=2, train_cells=8, train_rows=0, alpha=1e-3)
    det = CfarDetector(params, np.arange(60.0))
    rng = np.random.default_rng(4)
    # a globally hot row should not fire when its shape is flat
    hot = rng.normal(100.0, 1.0, size=60)
    assert det.push(hot).size == 0
    spiky = rng.normal(10.0, 1.0, size=60)
    spiky[30] = 60.0
    assert det.push(spiky).tolist() == [30.0]


def test_detection_log_lr_frozen_values():
    clutter = ClutterModel(rate=1.0, prob_detect=0.9, bearing_var=4.0,
                           interval=(-90.0, 90.0))
    on_target = detection_log_lr(np.array([10.0]), 10.0, clutter)
    # ln(0.1 + 0.9 * 180 * N(0; 0, 4)) with N(0; 0, 4) = 0.19947114020071635
    assert float(on_target) == pytest.approx(3.4786004458483677, abs=1e-12)
    miss = detection_log_lr(np.array([]), 10.0, clutter)
    assert float(miss) == pytest.approx(np.log(0.1), abs=1e-12)
    sharper = detection_log_lr(np.array([10.0]), 10.0,
                               ClutterModel(rate=0.2, prob_detect=0.9,
                                            bearing_var=4.0))
    assert float(sharper) == pytest.approx(5.085567263011165, abs=1e-12)


def test_detection_log_lr_vectorized():
    clutter = ClutterModel(rate=0.5, prob_detect=0.9, bearing_var=9.0)
    dets = np.array([-20.0, 35.0])
    query = np.array([-20.0, 0.0, 35.0])
    vec = detection_log_lr(dets, query, clutter)
    assert vec.shape == (3,)
    scalars = [float(detection_log_lr(dets, float(b), clutter)) for b in query]
    np.testing.assert_allclose(vec, scalars, rtol=1e-12)
    assert vec[0] > vec[1] and vec[2] > vec[1]


@settings(max_examples=40, deadline=None)
@given(offset=st.floats(0.0, 60.0))
def test_detection_log_lr_decays_with_miss_distance(offset):
    clutter = ClutterModel(rate=0.2, prob_detect=0.9, bearing_var=4.0)
    near = float(detection_log_lr(np.array([0.0]), 0.0, clutter))
    far = float(detection_log_lr(np.array([0.0]), offset, clutter))
    assert far <= near + 1e-12
    assert far >= np.log(1.0 - 0.9) - 1e-12
