"""Tracker pipelines: measurement preparation wired to the Bernoulli filter.

Four variants share the identical filter and differ only in how a raw
batch becomes a likelihood ratio:

    tvar   t-model ratio on a VAR(p)-whitened batch
    tvar0  t-model ratio on a spatially whitened batch (order-0 model)
    gvar   Gaussian ratio on a VAR(p)-whitened batch
    cfar   detection-based ratio from a CFAR front end on the raw record

`run_tracker` drives any of them over a dataset and returns a TrackLog.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .array import ArrayGeometry, BeamformGrid
from .config import PipelineConfig
from .detect import CfarDetector, CfarParams, ClutterModel, detection_log_lr
from .noise import VarModel, WhitenState, whiten
from .sim import Dataset
from .stats import TModelParams, gauss_log_lr, t_log_lr
from .tkbd import (ETA_DB, PSI, BernoulliBelief, FilterParams, LikelihoodField,
                   extract, predict, update)

VARIANTS = ("tvar", "tvar0", "gvar", "cfar")


def bearing_grid(step_deg: float = 1.0) -> np.ndarray:
    return np.arange(-90.0, 90.0 + 0.5 * step_deg, step_deg)


def spawn_rng(master_seed: int, *path: int) -> np.random.Generator:
    """Independent stream for a component, derived from one master seed.

    The scheme is `SeedSequence(master_seed, spawn_key=path)`; components
    use fixed leading keys (0 simulate, 1 track, 2 calibrate) followed by
    run indices, so any stream can be reproduced in isolation.
    """
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=path))


class EnergyLikelihood:
    """t or Gaussian likelihood on whitened batches.

    Holds the whitening state and the beamforming grid; `prepare` consumes
    the next raw batch and returns a measurement object (or None while the
    whitener is still warming up, in which case the filter should only
    predict).
    """

    def __init__(self, grid: BeamformGrid, model: VarModel, dof: float,
                 gaussian: bool = False):
        self.grid = grid
        self.model = model
        self.params = TModelParams(dof, grid.n_samples, grid.geom.n_channels)
        self.gaussian = gaussian
        self._wstate = WhitenState.fresh(model)

    def prepare(self, batch: np.ndarray):
        white, self._wstate, warmup = whiten(self.model, batch, self._wstate)
        if warmup:
            return None
        return _EnergyMeasurement(self, self.grid.energies(white),
                                  float((white * white).sum()))


class _EnergyMeasurement:
    """Beamformed energies of one whitened batch, queryable at any state."""

    def __init__(self, parent: EnergyLikelihood, energies: np.ndarray, z2: float):
        self.parent = parent
        self.energies = energies
        self.z_norm_sq = z2

    def _energy_at(self, psi_deg):
        return np.interp(psi_deg, self.parent.grid.bearings_deg, self.energies)

    def loglr(self, psi_deg, eta_db):
        b = self._energy_at(psi_deg)
        eta = 10.0 ** (np.asarray(eta_db, dtype=float) / 10.0)
        if self.parent.gaussian:
            return gauss_log_lr(b, eta, self.parent.params)
        return t_log_lr(b, self.z_norm_sq, eta, self.parent.params)

    def particle_loglr(self, states: np.ndarray):
        return self.loglr(states[:, PSI], states[:, ETA_DB])

    def field(self, fparams: FilterParams) -> LikelihoodField:
        eta_grid = np.arange(fparams.snr_lo_db, fparams.snr_hi_db + 1e-9,
                             fparams.eta_step_db)
        return LikelihoodField(self.parent.grid.bearings_deg, eta_grid, self.loglr)


class DetectionLikelihood:
    """CFAR front end feeding the detection-based likelihood ratio."""

    def __init__(self, grid: BeamformGrid, cfar: CfarParams, clutter: ClutterModel):
        self.grid = grid
        self.clutter = clutter
        self._detector = CfarDetector(cfar, grid.bearings_deg)

    def prepare(self, batch: np.ndarray):
        detections = self._detector.push(self.grid.energies(batch))
        return _DetectionMeasurement(self, detections)


class _DetectionMeasurement:
    def __init__(self, parent: DetectionLikelihood, detections: np.ndarray):
        self.parent = parent
        self.detections = detections

    def loglr(self, psi_deg, eta_db=None):
        out = detection_log_lr(self.detections, psi_deg, self.parent.clutter)
        return out if np.ndim(psi_deg) else float(out)

    def particle_loglr(self, states: np.ndarray):
        return self.loglr(states[:, PSI])

    def field(self, fparams: FilterParams) -> LikelihoodField:
        eta_grid = np.arange(fparams.snr_lo_db, fparams.snr_hi_db + 1e-9,
                             fparams.eta_step_db)
        return LikelihoodField(self.parent.grid.bearings_deg, eta_grid,
                               lambda p, e: self.loglr(p))


@dataclass
class TrackLog:
    """Plot-ready tracker output, one row per batch."""

    batch_index: np.ndarray
    time_s: np.ndarray
    exist_prob: np.ndarray
    psi_deg: np.ndarray
    psidot: np.ndarray
    eta_db: np.ndarray
    confirmed: np.ndarray


def filter_params_from_config(cfg: PipelineConfig) -> FilterParams:
    return FilterParams(
        prob_survival=cfg.filter_prob_survival,
        prob_birth=cfg.filter_prob_birth,
        batch_period=cfg.batch_period_s,
        q_cv=cfg.filter_q_cv,
        q_dbsnr=cfg.filter_q_dbsnr,
        p_psidot=cfg.filter_p_psidot,
        snr_lo_db=cfg.filter_snr_lo_db,
        snr_hi_db=cfg.filter_snr_hi_db,
        eta_step_db=cfg.filter_eta_step_db,
        n_persist=cfg.filter_n_persist,
        n_birth=cfg.filter_n_birth,
        confirm_threshold=cfg.filter_confirm_threshold,
    )


def make_likelihood(variant: str, geom: ArrayGeometry, cfg: PipelineConfig,
                    model: VarModel | None):
    """Build the per-variant measurement front end."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    grid = BeamformGrid(geom, bearing_grid(cfg.grid_bearing_step_deg), cfg.batch_samples)
    if variant == "cfar":
        cfar = CfarParams(cfg.cfar_guard_cells, cfg.cfar_train_cells,
                          cfg.cfar_train_rows, cfg.cfar_alpha)
        clutter = ClutterModel(cfg.clutter_rate, cfg.clutter_prob_detect,
                               cfg.clutter_bearing_var)
        return DetectionLikelihood(grid, cfar, clutter)
    if model is None:
        raise ValueError(f"variant {variant!r} needs a noise model")
    if variant == "tvar0" and model.order != 0:
        raise ValueError("tvar0 expects an order-0 noise model")
    return EnergyLikelihood(grid, model, cfg.tmodel_dof, gaussian=(variant == "gvar"))


def run_tracker(dataset: Dataset, variant: str, cfg: PipelineConfig,
                model: VarModel | None, rng: np.random.Generator) -> TrackLog:
    """Run one tracker variant over a dataset, batch by batch."""
    fparams = filter_params_from_config(cfg)
    likelihood = make_likelihood(variant, dataset.geometry, cfg, model)
    belief = BernoulliBelief.empty(fparams, rng)
    prev_field: LikelihoodField | None = None
    n = dataset.n_batches
    out = {key: np.empty(n) for key in
           ("exist_prob", "psi_deg", "psidot", "eta_db")}
    confirmed = np.zeros(n, dtype=bool)
    for k, batch in dataset.batches():
        belief = predict(belief, fparams, prev_field, rng)
        meas = likelihood.prepare(batch)
        if meas is not None:
            belief = update(belief, meas.particle_loglr, fparams, rng)
            prev_field = meas.field(fparams)
        est = extract(belief, fparams)
        out["exist_prob"][k] = est.exist_prob
        out["psi_deg"][k] = est.state.psi_deg
        out["psidot"][k] = est.state.psidot
        out["eta_db"][k] = est.state.eta_db
        confirmed[k] = est.confirmed
    period = dataset.n_per_batch / dataset.geometry.sample_rate
    idx = np.arange(n)
    return TrackLog(idx, (idx + 0.5) * period, out["exist_prob"], out["psi_deg"],
                    out["psidot"], out["eta_db"], confirmed)


_TRACK_COLUMNS = ("batch_index", "time_s", "q", "psi_est_deg", "psidot_est",
                  "eta_db_est", "confirmed")


def save_track_log(track: TrackLog, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_TRACK_COLUMNS)
        for i in range(track.batch_index.size):
            writer.writerow([
                int(track.batch_index[i]), f"{track.time_s[i]:.6f}",
                f"{track.exist_prob[i]:.9g}", f"{track.psi_deg[i]:.6f}",
                f"{track.psidot[i]:.6f}", f"{track.eta_db[i]:.6f}",
                int(track.confirmed[i]),
            ])


def load_track_log(path) -> TrackLog:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != _TRACK_COLUMNS:
            raise ValueError(f"{path}: not a track log (header {header})")
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: empty track log")
    arr = np.asarray(rows, dtype=float)
    return TrackLog(arr[:, 0].astype(int), arr[:, 1], arr[:, 2], arr[:, 3],
                    arr[:, 4], arr[:, 5], arr[:, 6].astype(bool))


def save_detections(rows: list[tuple[int, float]], path) -> None:
    """Write (batch_index, bearing_deg) detection pairs."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("batch_index", "bearing_deg"))
        for k, b in rows:
            writer.writerow([int(k), f"{b:.6f}"])
