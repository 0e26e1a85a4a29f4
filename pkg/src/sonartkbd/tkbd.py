"""Bernoulli track-before-detect particle filter.

The belief over a single possibly-present target is an existence
probability q plus a weighted particle cloud over the state
x = (bearing psi in degrees, bearing rate psi_dot in deg/s, SNR eta_dB).
Prediction mixes survivors with fresh births proposed from the previous
batch's likelihood field; the measurement update multiplies weights by a
pluggable per-particle likelihood ratio and folds the particle-averaged
ratio I into q through q <- q I / (1 - q + q I). No detector sits in front
of the filter, the raw (whitened) batch drives it directly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

# state columns
PSI, PSIDOT, ETA_DB = 0, 1, 2

BEARING_LIMIT_DEG = 90.0


@dataclass(frozen=True)
class TargetState:
    """Point state: bearing (deg), bearing rate (deg/s), SNR (dB)."""

    psi_deg: float
    psidot: float
    eta_db: float


@dataclass(frozen=True)
class FilterParams:
    """Bernoulli filter tuning.

    The defaults are the simulation profile; `prob_survival` and
    `prob_birth` are per batch, `batch_period` is the batch spacing in
    seconds, `q_cv` and `q_dbsnr` are the process-noise standard deviations
    for bearing rate (deg/s^2) and SNR (dB/s), `p_psidot` the variance of
    a newborn bearing rate (deg^2/s^2). Births draw SNR inside
    [snr_lo_db, snr_hi_db]; `confirm_threshold` is the q level gamma above
    which a track is reported.
    """

    prob_survival: float = 0.99347
    prob_birth: float = 4.56e-8
    batch_period: float = 0.17
    q_cv: float = 0.13
    q_dbsnr: float = 0.05
    p_psidot: float = 0.001
    snr_lo_db: float = -12.0
    snr_hi_db: float = -2.0
    eta_step_db: float = 1.0
    n_persist: int = 2000
    n_birth: int = 500
    confirm_threshold: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.prob_survival <= 1.0:
            raise ValueError("prob_survival must be in [0, 1]")
        if not 0.0 <= self.prob_birth <= 1.0:
            raise ValueError("prob_birth must be in [0, 1]")
        if self.snr_hi_db <= self.snr_lo_db:
            raise ValueError("empty SNR prior interval")
        if self.n_persist < 1 or self.n_birth < 1:
            raise ValueError("particle counts must be positive")
        if not 0.0 < self.confirm_threshold < 1.0:
            raise ValueError("confirm_threshold must be in (0, 1)")


@dataclass
class BernoulliBelief:
    """Existence probability plus particles (n, 3) with normalised weights."""

    exist_prob: float
    states: np.ndarray
    weights: np.ndarray

    @classmethod
    def empty(cls, params: FilterParams, rng: np.random.Generator) -> "BernoulliBelief":
        """Zero-existence belief with a uniform placeholder cloud."""
        n = params.n_persist
        states = np.column_stack([
            rng.uniform(-BEARING_LIMIT_DEG, BEARING_LIMIT_DEG, n),
            rng.normal(0.0, math.sqrt(params.p_psidot), n),
            rng.uniform(params.snr_lo_db, params.snr_hi_db, n),
        ])
        return cls(0.0, states, np.full(n, 1.0 / n))


class LikelihoodField:
    """Log likelihood ratio gridded over (bearing, SNR) for birth proposals.

    `fn(psi_deg, eta_db)` must broadcast over arrays; the grid is evaluated
    lazily and cached. `at` exposes the same callable for point queries.
    """

    def __init__(self, psi_grid: np.ndarray, eta_db_grid: np.ndarray, fn):
        self.psi_grid = np.asarray(psi_grid, dtype=float)
        self.eta_db_grid = np.asarray(eta_db_grid, dtype=float)
        self._fn = fn
        self._grid = None

    @property
    def grid(self) -> np.ndarray:
        """(n_psi, n_eta) array of ln L over the cell centres."""
        if self._grid is None:
            pp, ee = np.meshgrid(self.psi_grid, self.eta_db_grid, indexing="ij")
            self._grid = np.asarray(self._fn(pp.ravel(), ee.ravel()), dtype=float)\
                .reshape(pp.shape)
        return self._grid

    def at(self, psi_deg, eta_db):
        return self._fn(psi_deg, eta_db)


def reflect_bearing(psi_deg: np.ndarray) -> np.ndarray:
    """Fold bearings back into [-90, 90] by reflection at the ends."""
    folded = np.mod(np.asarray(psi_deg, dtype=float) + BEARING_LIMIT_DEG, 360.0)
    folded = np.where(folded > 180.0, 360.0 - folded, folded)
    return folded - BEARING_LIMIT_DEG


def motion_step(states: np.ndarray, params: FilterParams,
                rng: np.random.Generator) -> np.ndarray:
    """Nearly-constant-velocity transition for the particle array.

    psi gains T psi_dot plus half-step acceleration noise, psi_dot and
    eta_dB random walk with standard deviations q_cv T and q_dbsnr T. With
    zero process noise the deterministic part moves psi only.
    """
    t = params.batch_period
    n = states.shape[0]
    w_cv = rng.normal(0.0, params.q_cv, n) if params.q_cv > 0 else np.zeros(n)
    w_db = rng.normal(0.0, params.q_dbsnr, n) if params.q_dbsnr > 0 else np.zeros(n)
    out = states.copy()
    out[:, PSI] += t * states[:, PSIDOT] + 0.5 * t * t * w_cv
    out[:, PSIDOT] += t * w_cv
    out[:, ETA_DB] += t * w_db
    out[:, PSI] = reflect_bearing(out[:, PSI])
    return out


def sample_birth(field: LikelihoodField | None, params: FilterParams, n: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Draw n birth particles from the previous batch's likelihood field.

    Cell probabilities are proportional to exp(ln L) over the field grid,
    restricted to the SNR prior box; positions get uniform jitter inside
    their cell. Without a field (first batch) the draw is uniform over the
    prior box. Bearing rates are N(0, p_psidot) regardless.
    """
    if field is None:
        psi = rng.uniform(-BEARING_LIMIT_DEG, BEARING_LIMIT_DEG, n)
        eta = rng.uniform(params.snr_lo_db, params.snr_hi_db, n)
    else:
        loglr = field.grid
        flat = loglr.ravel()
        probs = np.exp(flat - flat.max())
        total = probs.sum()
        if not np.isfinite(total) or total <= 0:
            probs = np.full(flat.size, 1.0 / flat.size)
        else:
            probs = probs / total
        cells = rng.choice(flat.size, size=n, p=probs)
        pi, ei = np.unravel_index(cells, loglr.shape)
        dpsi = _cell_step(field.psi_grid)
        deta = _cell_step(field.eta_db_grid)
        psi = field.psi_grid[pi] + rng.uniform(-0.5, 0.5, n) * dpsi
        eta = field.eta_db_grid[ei] + rng.uniform(-0.5, 0.5, n) * deta
        psi = np.clip(psi, -BEARING_LIMIT_DEG, BEARING_LIMIT_DEG)
        eta = np.clip(eta, params.snr_lo_db, params.snr_hi_db)
    psidot = rng.normal(0.0, math.sqrt(params.p_psidot), n)
    return np.column_stack([psi, psidot, eta])


def _cell_step(grid: np.ndarray) -> float:
    return float(grid[1] - grid[0]) if grid.size > 1 else 0.0


def predict(belief: BernoulliBelief, params: FilterParams,
            field: LikelihoodField | None, rng: np.random.Generator) -> BernoulliBelief:
    """Bernoulli time update.

    q_pred = p_b (1 - q) + p_s q; survivors keep their weights scaled by
    p_s q / q_pred after a motion step, and n_birth birth particles share
    the complementary p_b (1 - q) / q_pred mass. If q_pred is zero the
    cloud is left in place with q = 0.
    """
    q = belief.exist_prob
    q_pred = params.prob_birth * (1.0 - q) + params.prob_survival * q
    if q_pred <= 0.0:
        return BernoulliBelief(0.0, belief.states.copy(), belief.weights.copy())
    survivors = motion_step(belief.states, params, rng)
    births = sample_birth(field, params, params.n_birth, rng)
    w_surv = belief.weights * (params.prob_survival * q / q_pred)
    w_birth = np.full(params.n_birth,
                      params.prob_birth * (1.0 - q) / q_pred / params.n_birth)
    states = np.vstack([survivors, births])
    weights = np.concatenate([w_surv, w_birth])
    total = weights.sum()
    if total > 0:
        weights = weights / total
    else:
        weights = np.full(weights.size, 1.0 / weights.size)
    return BernoulliBelief(min(q_pred, 1.0), states, weights)


def effective_sample_size(weights: np.ndarray) -> float:
    return float(1.0 / np.square(weights).sum())


def systematic_resample(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of a systematic resample: one uniform draw, n even strides."""
    positions = (rng.uniform() + np.arange(n)) / n
    return np.searchsorted(np.cumsum(weights), positions)


def update(belief: BernoulliBelief, loglr_fn, params: FilterParams,
           rng: np.random.Generator) -> BernoulliBelief:
    """Bernoulli measurement update with a pluggable likelihood ratio.

    `loglr_fn(states)` returns per-particle ln L. The particle-averaged
    ratio I = sum_i w_i L_i updates q <- q I / (1 - q + q I) (computed in
    log odds so saturation is well behaved) and reweights the cloud. If
    every ratio is zero while q > 0 the event is logged and q drops to 0
    with the cloud kept. The cloud is resampled to n_persist whenever it
    exceeds that size or its effective sample size falls under half of it.
    """
    loglr = np.asarray(loglr_fn(belief.states), dtype=float)
    if loglr.shape != (belief.states.shape[0],):
        raise ValueError("loglr_fn must return one value per particle")
    q = belief.exist_prob
    peak = loglr.max()
    if np.isneginf(peak):
        if q > 0:
            log.warning("all particle likelihood ratios vanished; dropping existence")
        return BernoulliBelief(0.0, belief.states.copy(), belief.weights.copy())
    scaled = belief.weights * np.exp(loglr - peak)
    total = scaled.sum()
    if total <= 0.0:
        if q > 0:
            log.warning("all particle likelihood ratios vanished; dropping existence")
        return BernoulliBelief(0.0, belief.states.copy(), belief.weights.copy())
    log_ratio = peak + math.log(total)  # ln I
    if q <= 0.0:
        q_new = 0.0
    elif q >= 1.0:
        q_new = 1.0
    else:
        logit = math.log(q) - math.log1p(-q) + log_ratio
        if logit >= 0:
            q_new = 1.0 / (1.0 + math.exp(-logit))
        else:
            expo = math.exp(logit)
            q_new = expo / (1.0 + expo)
    weights = scaled / total
    states = belief.states
    n_keep = params.n_persist
    if states.shape[0] > n_keep or effective_sample_size(weights) < 0.5 * n_keep:
        idx = systematic_resample(weights, n_keep, rng)
        states = states[idx]
        weights = np.full(n_keep, 1.0 / n_keep)
    else:
        states = states.copy()
    return BernoulliBelief(q_new, states, weights)


@dataclass(frozen=True)
class TrackEstimate:
    """Extraction output: confirmation flag plus the weighted-mean state."""

    confirmed: bool
    exist_prob: float
    state: TargetState


def extract(belief: BernoulliBelief, params: FilterParams) -> TrackEstimate:
    """Report the weighted-mean state and whether q clears the threshold."""
    mean = belief.weights @ belief.states
    return TrackEstimate(
        confirmed=bool(belief.exist_prob > params.confirm_threshold),
        exist_prob=float(belief.exist_prob),
        state=TargetState(float(mean[PSI]), float(mean[PSIDOT]), float(mean[ETA_DB])),
    )
