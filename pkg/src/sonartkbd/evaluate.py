"""Tracking metrics: single-target OSPA, detection statistics, aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OspaParams:
    """Cutoff (degrees) and order for the bearing OSPA distance."""

    cutoff: float = 30.0
    order: float = 1.0

    def __post_init__(self):
        if self.cutoff <= 0 or self.order < 1:
            raise ValueError("cutoff must be positive and order >= 1")


def ospa_single(estimates, truth_psi_deg: float, params: OspaParams) -> float:
    """OSPA distance against one true bearing for 0 or 1 estimates.

    An empty estimate set costs the full cutoff; a single estimate costs
    its cutoff-saturated bearing error. More than one estimate is outside
    the single-target contract and raises.
    """
    est = np.atleast_1d(np.asarray(estimates, dtype=float)) if estimates is not None \
        else np.empty(0)
    if est.size > 1:
        raise ValueError(f"single-target OSPA got {est.size} estimates")
    if est.size == 0:
        return float(params.cutoff)
    return float(min(abs(est[0] - truth_psi_deg), params.cutoff))


def sustained_confirmation(confirmed: np.ndarray, min_run: int = 5) -> int | None:
    """Index of the first batch opening >= `min_run` consecutive confirmations."""
    conf = np.asarray(confirmed, dtype=bool)
    run = 0
    for i, c in enumerate(conf):
        run = run + 1 if c else 0
        if run >= min_run:
            return i - min_run + 1
    return None


def flip_count(confirmed: np.ndarray, start: int | None = None) -> int:
    """Number of confirmed-status changes from `start` onward."""
    conf = np.asarray(confirmed, dtype=bool)
    if start is None or start >= conf.size:
        return 0
    seg = conf[start:]
    return int(np.count_nonzero(np.diff(seg)))


@dataclass
class RunReport:
    """Per-run evaluation: per-batch metrics plus detection summary.

    `first_confirm` is the start of the first sustained confirmation run
    (None if never); detection range and SNR are the ground truth at that
    batch. OSPA counts the estimate only while confirmed, so an unconfirmed
    filter scores the cutoff.
    """

    batch_index: np.ndarray
    ospa: np.ndarray
    exist_prob: np.ndarray
    confirmed: np.ndarray
    first_confirm: int | None
    detection_range_m: float | None
    detection_eta_db: float | None
    flips_after_detect: int


def make_run_report(psi_est: np.ndarray, exist_prob: np.ndarray, confirmed: np.ndarray,
                    truth, ospa_params: OspaParams, min_run: int = 5) -> RunReport:
    """Score one tracker pass against ground truth."""
    psi_est = np.asarray(psi_est, dtype=float)
    confirmed = np.asarray(confirmed, dtype=bool)
    n = psi_est.shape[0]
    if truth.psi_deg.shape[0] != n:
        raise ValueError(f"track has {n} batches, truth has {truth.psi_deg.shape[0]}")
    ospa = np.array([
        ospa_single([psi_est[k]] if confirmed[k] else None, truth.psi_deg[k], ospa_params)
        for k in range(n)
    ])
    first = sustained_confirmation(confirmed, min_run)
    return RunReport(
        batch_index=np.arange(n),
        ospa=ospa,
        exist_prob=np.asarray(exist_prob, dtype=float),
        confirmed=confirmed,
        first_confirm=first,
        detection_range_m=float(truth.range_m[first]) if first is not None else None,
        detection_eta_db=float(truth.eta_db[first]) if first is not None else None,
        flips_after_detect=flip_count(confirmed, first),
    )


def aggregate_quantiles(values: np.ndarray, quants=(0.1, 0.5, 0.9)) -> np.ndarray:
    """Columnwise quantiles of stacked per-run series, shape (len(quants), n)."""
    arr = np.atleast_2d(np.asarray(values, dtype=float))
    return np.quantile(arr, quants, axis=0)


def median_detection_eta(reports, censor_db: float = np.inf) -> float:
    """Median detection SNR over runs; never-detected runs count as `censor_db`."""
    vals = [r.detection_eta_db if r.detection_eta_db is not None else censor_db
            for r in reports]
    return float(np.median(vals))
