"""Metric edge cases pinned exactly: OSPA, confirmation runs, aggregation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sonartkbd.evaluate import (OspaParams, RunReport, aggregate_quantiles,
                                flip_count, make_run_report,
                                median_detection_eta, ospa_single,
                                sustained_confirmation)
from sonartkbd.sim import ScenarioTruth


P = OspaParams(cutoff=30.0, order=1.0)


def truth_const(n, psi=0.0, eta=-5.0, rng_m=500.0):
    idx = np.arange(n)
    return ScenarioTruth(idx, idx * 0.17, np.full(n, psi), np.full(n, eta),
                         np.full(n, rng_m))


def test_ospa_edges():
    assert ospa_single(None, 10.0, P) == 30.0
    assert ospa_single([], 10.0, P) == 30.0
    assert ospa_single([10.0], 10.0, P) == 0.0
    assert ospa_single([13.5], 10.0, P) == pytest.approx(3.5)
    assert ospa_single([-75.0], 10.0, P) == 30.0  # saturates at cutoff
    with pytest.raises(ValueError):
        ospa_single([1.0, 2.0], 10.0, P)


def test_ospa_params_validation():
    with pytest.raises(ValueError):
        OspaParams(cutoff=0.0)
    with pytest.raises(ValueError):
        OspaParams(order=0.5)


@settings(max_examples=100, deadline=None)
@given(est=st.floats(-90, 90), truth=st.floats(-90, 90))
def test_ospa_bounded_and_symmetric(est, truth):
    d = ospa_single([est], truth, P)
    assert 0.0 <= d <= P.cutoff
    assert d == ospa_single([truth], est, P)


def test_sustained_confirmation_first_window():
    conf = np.array([0, 1, 1, 0, 1, 1, 1, 1, 1, 0], dtype=bool)
    assert sustained_confirmation(conf, min_run=5) == 4
    assert sustained_confirmation(conf, min_run=2) == 1
    assert sustained_confirmation(conf, min_run=6) is None
    assert sustained_confirmation(np.zeros(10, dtype=bool)) is None
    assert sustained_confirmation(np.ones(5, dtype=bool), min_run=5) == 0


def test_flip_count_edges():
    conf = np.array([0, 1, 1, 0, 1], dtype=bool)
    assert flip_count(conf, start=0) == 3
    assert flip_count(conf, start=1) == 2
    assert flip_count(conf, start=None) == 0
    assert flip_count(conf, start=10) == 0
    assert flip_count(np.ones(6, dtype=bool), start=0) == 0


def test_run_report_scores_only_confirmed_batches():
    n = 12
    truth = truth_const(n, psi=5.0)
    psi_est = np.full(n, 7.0)
    confirmed = np.zeros(n, dtype=bool)
    confirmed[4:10] = True
    report = make_run_report(psi_est, np.linspace(0, 1, n), confirmed, truth,
                             P, min_run=5)
    np.testing.assert_allclose(report.ospa[:4], 30.0)
    np.testing.assert_allclose(report.ospa[4:10], 2.0)
    np.testing.assert_allclose(report.ospa[10:], 30.0)
    assert report.first_confirm == 4
    assert report.detection_range_m == pytest.approx(500.0)
    assert report.detection_eta_db == pytest.approx(-5.0)
    # one drop at batch 10 after the detection window opens
    assert report.flips_after_detect == 1


def test_run_report_never_confirmed():
    n = 8
    truth = truth_const(n)
    report = make_run_report(np.zeros(n), np.zeros(n), np.zeros(n, dtype=bool),
                             truth, P)
    assert report.first_confirm is None
    assert report.detection_range_m is None
    assert report.detection_eta_db is None
    assert report.flips_after_detect == 0
    np.testing.assert_allclose(report.ospa, 30.0)


def test_run_report_length_mismatch():
    truth = truth_const(5)
    with pytest.raises(ValueError):
        make_run_report(np.zeros(6), np.zeros(6), np.zeros(6, dtype=bool),
                        truth, P)


def test_aggregate_quantiles_shape_and_median():
    runs = np.array([[0.0, 1.0, 2.0],
                     [10.0, 11.0, 12.0],
                     [20.0, 21.0, 22.0]])
    q = aggregate_quantiles(runs)
    assert q.shape == (3, 3)
    np.testing.assert_allclose(q[1], [10.0, 11.0, 12.0])
    single = aggregate_quantiles(np.array([1.0, 2.0, 3.0]))
    assert single.shape == (3, 3)


def report_with_eta(eta):
    return RunReport(np.arange(1), np.zeros(1), np.zeros(1),
                     np.zeros(1, dtype=bool), None if eta is None else 0,
                     None, eta, 0)


def test_median_detection_eta_censors_missed_runs():
    reports = [report_with_eta(-12.0), report_with_eta(-8.0),
               report_with_eta(None)]
    assert median_detection_eta(reports) == pytest.approx(-8.0)
    assert median_detection_eta(reports, censor_db=0.0) == pytest.approx(-8.0)
    all_missed = [report_with_eta(None)] * 3
    assert np.isposinf(median_detection_eta(all_missed))
    assert median_detection_eta(all_missed, censor_db=0.0) == 0.0
