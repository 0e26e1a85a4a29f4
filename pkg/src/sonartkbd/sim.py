"""Scenario simulator and dataset persistence.

One scenario is a target moving along a Cartesian polyline at constant
speed past a hydrophone array sitting in correlated ambient noise. Batches
are synthesised back to front from the measurement model: a white source
batch is pushed through the per-channel fractional-delay steering for the
target's current bearing, VAR noise is streamed continuously underneath,
and every batch is scaled jointly by sqrt(nu / c_k) with one chi-square
draw c_k, which is what makes whole batches come out heavy tailed.

SNR follows range as eta_dB = -10 log10((r / r_ref)^kappa), i.e. 0 dB at
the reference range, falling with distance (18 dB down at 10 r_ref for the
default spreading exponent 1.8).

A dataset on disk is a directory:
    meta.json    parameters, geometry, seed, shapes
    samples.f32  row-major float32, (n_batches * N, M)
    truth.csv    batch_index, psi_deg, eta_db, range_m (absent if target free)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .array import ArrayGeometry, apply_steering, make_steering
from .noise import NoiseStream, VarModel


class ScenarioError(ValueError):
    """Raised for degenerate paths or bearings."""


class DatasetError(ValueError):
    """Raised on malformed dataset directories."""


@dataclass(frozen=True)
class Scenario:
    """Target path, SNR mapping and noise environment for one simulation.

    waypoints : (W, 2) polyline in metres, traversed at `speed` m/s
    duration : seconds of data; defaults to the full traversal time
    n_per_batch : samples per batch (even)
    ref_range / spread_exponent : SNR map parameters
    sim_dof : chi-square degrees of freedom for the per-batch scale
    """

    geometry: ArrayGeometry
    ambient: VarModel
    waypoints: np.ndarray
    speed: float
    duration: float | None = None
    n_per_batch: int = 64
    ref_range: float = 200.0
    spread_exponent: float = 1.8
    sim_dof: float = 12.0

    def __post_init__(self):
        wp = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        if wp.shape[0] < 2 or wp.shape[1] != 2:
            raise ScenarioError(f"waypoints must be (W>=2, 2), got {wp.shape}")
        if self.speed <= 0:
            raise ScenarioError("speed must be positive")
        if self.sim_dof <= 2:
            raise ScenarioError("sim_dof must exceed 2")
        if self.n_per_batch % 2 or self.n_per_batch < 2:
            raise ScenarioError("n_per_batch must be even and positive")
        object.__setattr__(self, "waypoints", wp)

    @property
    def path_seconds(self) -> float:
        seg = np.diff(self.waypoints, axis=0)
        return float(np.hypot(seg[:, 0], seg[:, 1]).sum() / self.speed)

    @property
    def batch_period(self) -> float:
        return self.n_per_batch / self.geometry.sample_rate

    def n_batches(self) -> int:
        total = self.duration if self.duration is not None else self.path_seconds
        if total > self.path_seconds + 1e-9:
            raise ScenarioError(
                f"duration {total:.1f} s exceeds the {self.path_seconds:.1f} s traversal")
        return int(np.floor(total / self.batch_period))


def bearing_range_from_xy(geom: ArrayGeometry, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bearing (deg from broadside) and range (m) of points relative to the array."""
    rel = np.atleast_2d(xy) - geom.centroid
    rng = np.hypot(rel[:, 0], rel[:, 1])
    if np.any(rng <= 0):
        raise ScenarioError("target collocated with the array, bearing undefined")
    psi = np.degrees(np.arctan2(rel[:, 0], rel[:, 1]))
    return psi, rng


def snr_db_at_range(range_m, ref_range: float, exponent: float):
    """eta_dB = -10 log10((r / r_ref)^exponent)."""
    return -10.0 * exponent * np.log10(np.asarray(range_m, dtype=float) / ref_range)


@dataclass(frozen=True)
class ScenarioTruth:
    """Per-batch ground truth arrays (batch centre times)."""

    batch_index: np.ndarray
    time_s: np.ndarray
    psi_deg: np.ndarray
    eta_db: np.ndarray
    range_m: np.ndarray


def truth_from_path(scenario: Scenario) -> ScenarioTruth:
    """Ground truth evaluated at every batch centre along the polyline."""
    n = scenario.n_batches()
    times = (np.arange(n) + 0.5) * scenario.batch_period
    wp = scenario.waypoints
    seg = np.diff(wp, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    dist = np.minimum(times * scenario.speed, cum[-1])
    k = np.clip(np.searchsorted(cum, dist, side="right") - 1, 0, len(seg_len) - 1)
    frac = (dist - cum[k]) / np.where(seg_len[k] > 0, seg_len[k], 1.0)
    xy = wp[k] + seg[k] * frac[:, None]
    psi, rng = bearing_range_from_xy(scenario.geometry, xy)
    eta = snr_db_at_range(rng, scenario.ref_range, scenario.spread_exponent)
    return ScenarioTruth(np.arange(n), times, psi, eta, rng)


def channel_noise_power(model: VarModel) -> float:
    """Geometric-mean stationary channel power |E[e e^T]|^(1/M)."""
    cov = model.stationary_cov()
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise ScenarioError("ambient stationary covariance is not positive definite")
    return float(np.exp(logdet / model.n_channels))


def generate_batch(scenario: Scenario, psi_deg: float, eta_db: float | None,
                   noise: NoiseStream, rng: np.random.Generator,
                   noise_power: float) -> np.ndarray:
    """One (N, M) batch: steered source plus streamed noise, jointly scaled.

    `eta_db=None` means no target in this batch. The chi-square scale draw
    happens for every batch either way so target-free data has the same
    heavy-tailed batch statistics.
    """
    n = scenario.n_per_batch
    e = noise.take(n)
    if eta_db is not None:
        sigma_s = np.sqrt(10.0 ** (eta_db / 10.0) * noise_power)
        source = rng.normal(0.0, sigma_s, n)
        op = make_steering(scenario.geometry, psi_deg, n)
        batch = apply_steering(op, source) + e
    else:
        batch = e
    c = rng.chisquare(scenario.sim_dof)
    return np.sqrt(scenario.sim_dof / c) * batch


@dataclass
class Dataset:
    """In-memory dataset: contiguous samples plus optional ground truth."""

    geometry: ArrayGeometry
    samples: np.ndarray  # (n_batches * N, M)
    n_per_batch: int
    truth: ScenarioTruth | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_batches(self) -> int:
        return self.samples.shape[0] // self.n_per_batch

    def batch(self, k: int) -> np.ndarray:
        n = self.n_per_batch
        return self.samples[k * n:(k + 1) * n]

    def batches(self):
        for k in range(self.n_batches):
            yield k, self.batch(k)


def generate_dataset(scenario: Scenario, rng: np.random.Generator,
                     target_free: bool = False, seed: int | None = None) -> Dataset:
    """Simulate the whole scenario into one Dataset.

    The noise stream runs continuously across batches; the target-free flag
    keeps the truth trajectory (for reference) but injects no signal.
    """
    truth = truth_from_path(scenario)
    noise = NoiseStream(scenario.ambient, rng)
    power = channel_noise_power(scenario.ambient)
    n = scenario.n_per_batch
    out = np.empty((truth.batch_index.size * n, scenario.geometry.n_channels))
    for k in truth.batch_index:
        eta = None if target_free else float(truth.eta_db[k])
        out[k * n:(k + 1) * n] = generate_batch(
            scenario, float(truth.psi_deg[k]), eta, noise, rng, power)
    meta = {
        "target_free": bool(target_free),
        "speed": scenario.speed,
        "ref_range": scenario.ref_range,
        "spread_exponent": scenario.spread_exponent,
        "sim_dof": scenario.sim_dof,
        "waypoints": scenario.waypoints.tolist(),
    }
    return Dataset(scenario.geometry, out, n, truth, seed, meta)


def save_dataset(ds: Dataset, path) -> None:
    """Write the directory layout documented in the module docstring."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": 1,
        "sample_rate": ds.geometry.sample_rate,
        "speed_of_sound": ds.geometry.speed_of_sound,
        "positions": ds.geometry.positions.tolist(),
        "n_per_batch": ds.n_per_batch,
        "n_batches": ds.n_batches,
        "seed": ds.seed,
        "extra": ds.meta,
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=2))
    np.ascontiguousarray(ds.samples, dtype="<f4").tofile(root / "samples.f32")
    if ds.truth is not None:
        t = ds.truth
        rows = np.column_stack([t.batch_index, t.psi_deg, t.eta_db, t.range_m])
        header = "batch_index,psi_deg,eta_db,range_m"
        np.savetxt(root / "truth.csv", rows, delimiter=",", header=header,
                   comments="", fmt=["%d", "%.8f", "%.8f", "%.8f"])


def load_dataset(path) -> Dataset:
    """Read a dataset directory back; inverse of :func:`save_dataset`."""
    root = Path(path)
    meta_path = root / "meta.json"
    if not meta_path.exists():
        raise DatasetError(f"{root}: missing meta.json")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as err:
        raise DatasetError(f"{meta_path}: invalid JSON ({err})") from err
    if meta.get("format_version") != 1:
        raise DatasetError(f"{root}: unsupported dataset format {meta.get('format_version')}")
    geom = ArrayGeometry(np.asarray(meta["positions"], dtype=float),
                         meta["speed_of_sound"], meta["sample_rate"])
    raw = np.fromfile(root / "samples.f32", dtype="<f4")
    m = geom.n_channels
    n_rows = meta["n_batches"] * meta["n_per_batch"]
    if raw.size != n_rows * m:
        raise DatasetError(
            f"{root}: samples.f32 holds {raw.size} values, expected {n_rows * m}")
    samples = raw.reshape(n_rows, m).astype(float)
    truth = None
    truth_path = root / "truth.csv"
    if truth_path.exists():
        rows = np.loadtxt(truth_path, delimiter=",", skiprows=1, ndmin=2)
        if rows.shape[0] != meta["n_batches"]:
            raise DatasetError(f"{truth_path}: row count does not match n_batches")
        times = (rows[:, 0] + 0.5) * meta["n_per_batch"] / geom.sample_rate
        truth = ScenarioTruth(rows[:, 0].astype(int), times, rows[:, 1],
                              rows[:, 2], rows[:, 3])
    return Dataset(geom, samples, meta["n_per_batch"], truth, meta.get("seed"),
                   meta.get("extra", {}))
