"""Array geometry, fractional-delay steering and delay-and-sum beamforming.

Steering is done in the frequency domain. Delaying a length-N real batch by
tau seconds multiplies its DFT bin n by

    gamma_n(tau) = exp(-2i pi n tau fs / N)          for n < N/2
    gamma_N/2(tau) = cos(tau pi fs)                  at the Nyquist bin
    gamma_n(tau) = exp(+2i pi (N - n) tau fs / N)    for n > N/2

which keeps real inputs real (the Nyquist bin has no quadrature component,
so only its in-phase part survives a fractional shift). The per-channel
steering operator is diagonal in the DFT basis and is therefore stored as a
spectrum, never as a dense matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Raised for non-finite positions or non-positive rates."""


class BatchShapeError(ValueError):
    """Raised when a sample batch has the wrong shape or an odd length."""


@dataclass(frozen=True)
class ArrayGeometry:
    """Hydrophone positions and sampling parameters.

    Parameters
    ----------
    positions : ndarray, shape (M, 2)
        Element coordinates in metres. Bearings are measured from the
        positive y axis (broadside for a ULA laid along x), positive
        toward positive x.
    speed_of_sound : float
        Propagation speed in m/s.
    sample_rate : float
        Sampling rate in Hz.
    """

    positions: np.ndarray
    speed_of_sound: float = 1500.0
    sample_rate: float = 375.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
            raise GeometryError(f"positions must be (M, 2), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise GeometryError("positions must be finite")
        if not (self.speed_of_sound > 0 and np.isfinite(self.speed_of_sound)):
            raise GeometryError("speed_of_sound must be positive")
        if not (self.sample_rate > 0 and np.isfinite(self.sample_rate)):
            raise GeometryError("sample_rate must be positive")
        object.__setattr__(self, "positions", pos)

    @property
    def n_channels(self) -> int:
        return self.positions.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    @classmethod
    def ula(cls, n_elements: int, spacing: float, speed_of_sound: float = 1500.0,
            sample_rate: float = 375.0) -> "ArrayGeometry":
        """Uniform linear array along the x axis, element 0 at the origin."""
        x = np.arange(n_elements, dtype=float) * spacing
        pos = np.column_stack([x, np.zeros(n_elements)])
        return cls(pos, speed_of_sound, sample_rate)


@dataclass(frozen=True)
class SampleBatch:
    """One hydrophone batch: `data` has shape (N, M), row n is sample n."""

    data: np.ndarray
    index: int = 0

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.ndim != 2:
            raise BatchShapeError(f"batch must be 2-d (N, M), got ndim {d.ndim}")
        if d.shape[0] % 2 != 0 or d.shape[0] < 2:
            raise BatchShapeError(f"batch length must be even, got {d.shape[0]}")
        object.__setattr__(self, "data", d)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]


def steering_delays(geom: ArrayGeometry, bearing_deg: float) -> np.ndarray:
    """Per-element plane-wave delays in seconds, relative to element 0.

    A far-field source at bearing psi produces wavefronts whose arrival
    time at element m trails element 0 by (p_m - p_0) . u(psi) / c with
    u(psi) = (sin psi, cos psi).
    """
    psi = np.deg2rad(bearing_deg)
    u = np.array([np.sin(psi), np.cos(psi)])
    rel = geom.positions - geom.positions[0]
    return rel @ u / geom.speed_of_sound


def delay_spectrum(tau: float, n_samples: int, sample_rate: float) -> np.ndarray:
    """DFT spectrum of the length-`n_samples` fractional delay by `tau` seconds.

    Requires an even length so the Nyquist bin exists; its factor is the
    real cos(tau pi fs), all other bins get unit-modulus phase ramps.
    """
    n = int(n_samples)
    if n % 2 != 0 or n < 2:
        raise BatchShapeError(f"delay spectrum needs an even length, got {n}")
    shift = tau * sample_rate  # delay in samples
    k = np.arange(n)
    signed = np.where(k <= n // 2, k, k - n)
    gamma = np.exp(-2j * np.pi * signed * shift / n)
    gamma[n // 2] = np.cos(np.pi * shift)
    return gamma


@dataclass(frozen=True)
class SteeringOperator:
    """Frequency-domain steering for one bearing.

    `spectra[m]` is the DFT spectrum of the delay operator for channel m;
    applying the operator to a source batch produces the per-channel
    delayed copies, applying its transpose to received channels aligns
    them back on element 0.
    """

    bearing_deg: float
    sample_rate: float
    spectra: np.ndarray  # (M, N) complex
    delays: np.ndarray = field(repr=False, default=None)

    @property
    def n_channels(self) -> int:
        return self.spectra.shape[0]

    @property
    def n_samples(self) -> int:
        return self.spectra.shape[1]


def make_steering(geom: ArrayGeometry, bearing_deg: float, n_samples: int) -> SteeringOperator:
    """Build the per-channel steering spectra for one bearing."""
    taus = steering_delays(geom, bearing_deg)
    spectra = np.vstack([delay_spectrum(t, n_samples, geom.sample_rate) for t in taus])
    return SteeringOperator(float(bearing_deg), geom.sample_rate, spectra, taus)


def apply_steering(op: SteeringOperator, source: np.ndarray) -> np.ndarray:
    """Propagate a single source batch onto all channels.

    Returns the (N, M) array whose column m is the source delayed by the
    channel-m steering delay. Used by the simulator; the beamformer goes
    the other way.
    """
    src = np.asarray(source, dtype=float)
    if src.ndim != 1 or src.shape[0] != op.n_samples:
        raise BatchShapeError(f"source must be length {op.n_samples}, got {src.shape}")
    spec = np.fft.fft(src)
    out = np.fft.ifft(op.spectra * spec, axis=1).real
    return out.T.copy()


def beamform(op: SteeringOperator, batch: SampleBatch | np.ndarray) -> float:
    """Delay-and-sum energy of `batch` steered to `op.bearing_deg`.

    Each channel is shifted by the negated steering delay (the transpose of
    the per-channel delay operator) and the aligned channels are summed;
    the result is the squared 2-norm of that sum. Computed in the DFT
    domain, where the sum's energy is ||S||^2 / N by Parseval.
    """
    data = batch.data if isinstance(batch, SampleBatch) else np.asarray(batch, dtype=float)
    if data.ndim != 2 or data.shape != (op.n_samples, op.n_channels):
        raise BatchShapeError(
            f"batch shape {data.shape} does not match operator "
            f"({op.n_samples}, {op.n_channels})")
    spec = np.fft.fft(data, axis=0)  # (N, M)
    aligned = (op.spectra.conj().T * spec).sum(axis=1)
    return float((aligned.real ** 2 + aligned.imag ** 2).sum() / op.n_samples)


class BeamformGrid:
    """Reusable beamformer for a fixed bearing grid.

    Precomputes the conjugate steering spectra for every grid bearing so a
    batch costs M FFTs plus one contraction. Rows out of `energies` match
    `bearings_deg` order.
    """

    def __init__(self, geom: ArrayGeometry, bearings_deg: np.ndarray, n_samples: int):
        self.geom = geom
        self.bearings_deg = np.asarray(bearings_deg, dtype=float)
        self.n_samples = int(n_samples)
        ops = [make_steering(geom, b, n_samples) for b in self.bearings_deg]
        # (G, M, N), already conjugated for the receive direction
        self._steer = np.stack([op.spectra.conj() for op in ops])

    @property
    def n_bearings(self) -> int:
        return self.bearings_deg.shape[0]

    def energies(self, batch: np.ndarray) -> np.ndarray:
        """Beamformed energy at every grid bearing for one (N, M) batch."""
        data = batch.data if isinstance(batch, SampleBatch) else np.asarray(batch, dtype=float)
        if data.shape != (self.n_samples, self.geom.n_channels):
            raise BatchShapeError(
                f"batch shape {data.shape} does not match grid "
                f"({self.n_samples}, {self.geom.n_channels})")
        spec = np.fft.fft(data, axis=0)  # (N, M)
        summed = np.einsum("gmn,nm->gn", self._steer, spec)
        return (summed.real ** 2 + summed.imag ** 2).sum(axis=1) / self.n_samples


def btr(batches, geom: ArrayGeometry, bearings_deg: np.ndarray, normalize: bool = False) -> np.ndarray:
    """Bearing-time record: one row of beamformed energies per batch.

    With `normalize=True` the matrix is scaled so its maximum entry is 1;
    an all-zero record is returned unscaled.
    """
    blist = list(batches)
    if not blist:
        return np.zeros((0, len(bearings_deg)))
    first = blist[0].data if isinstance(blist[0], SampleBatch) else np.asarray(blist[0])
    grid = BeamformGrid(geom, bearings_deg, first.shape[0])
    rows = np.vstack([grid.energies(b) for b in blist])
    if normalize:
        peak = rows.max()
        if peak > 0:
            rows = rows / peak
    return rows
