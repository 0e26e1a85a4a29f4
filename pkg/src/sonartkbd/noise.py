"""Vector-autoregressive ambient noise model: fit, whiten, simulate, persist.

The noise model is y_n = sum_i A_i y_{n-i} + w_n with w_n ~ N(0, Sigma_w).
Whitening inverts it sample by sample, w_n = F^-1 (y_n - sum_i A_i y_{n-i}),
with F the lower Cholesky factor of Sigma_w, so the filter is causal and can
stream across batch boundaries.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve, solve_discrete_lyapunov, solve_triangular

_MAGIC = b"SONARVAR"
_VERSION = 1


class FitError(ValueError):
    """Raised when the least-squares problem is unsolvable as posed."""


class InstabilityError(ValueError):
    """Raised when a model with companion spectral radius >= 1 is simulated."""


class ModelFileError(ValueError):
    """Raised on malformed model files."""


@dataclass(frozen=True)
class VarModel:
    """VAR(p) coefficients `coeffs` (p, M, M) and innovation covariance (M, M)."""

    coeffs: np.ndarray
    noise_cov: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.coeffs, dtype=float)
        s = np.asarray(self.noise_cov, dtype=float)
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise FitError(f"coeffs must be (p, M, M), got {a.shape}")
        if s.shape != (a.shape[1], a.shape[1]):
            raise FitError(f"noise_cov must be ({a.shape[1]}, {a.shape[1]}), got {s.shape}")
        object.__setattr__(self, "coeffs", a)
        object.__setattr__(self, "noise_cov", 0.5 * (s + s.T))

    @property
    def order(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_channels(self) -> int:
        return self.noise_cov.shape[0]

    def noise_chol(self) -> np.ndarray:
        """Lower Cholesky factor of the innovation covariance."""
        return cholesky(self.noise_cov, lower=True)

    def companion(self) -> np.ndarray:
        p, m = self.order, self.n_channels
        if p == 0:
            return np.zeros((m, m))
        comp = np.zeros((p * m, p * m))
        comp[:m] = self.coeffs.transpose(1, 0, 2).reshape(m, p * m)
        if p > 1:
            comp[m:, :-m] = np.eye((p - 1) * m)
        return comp

    def spectral_radius(self) -> float:
        if self.order == 0:
            return 0.0
        return float(np.abs(np.linalg.eigvals(self.companion())).max())

    def stationary_cov(self) -> np.ndarray:
        """Lag-0 covariance of the stationary process, solved in companion form."""
        if self.spectral_radius() >= 1.0:
            raise InstabilityError("model is not stable, no stationary covariance")
        p, m = self.order, self.n_channels
        if p == 0:
            return self.noise_cov.copy()
        comp = self.companion()
        q = np.zeros((p * m, p * m))
        q[:m, :m] = self.noise_cov
        full = solve_discrete_lyapunov(comp, q)
        return full[:m, :m]


def fit_var(data: np.ndarray, order: int) -> VarModel:
    """Least-squares fit of a VAR(`order`) model to a (T, M) recording.

    Regresses each sample on its `order` predecessors over n = order..T-1 and
    estimates the innovation covariance from the residuals with divisor
    T - order - 1. The normal equations get a ridge of 1e-10 times their
    trace only if they come back singular.
    """
    y = np.asarray(data, dtype=float)
    if y.ndim != 2:
        raise FitError(f"data must be (T, M), got shape {y.shape}")
    t_total, m = y.shape
    p = int(order)
    if p < 0:
        raise FitError(f"order must be >= 0, got {order}")
    if t_total <= p * m + p + 1:
        raise FitError(
            f"need more than p*M + p + 1 = {p * m + p + 1} samples for order {p}, got {t_total}")
    if p == 0:
        sigma = y.T @ y / (t_total - 1)
        return VarModel(np.zeros((0, m, m)), sigma)
    target = y[p:]
    lagged = np.hstack([y[p - i:t_total - i] for i in range(1, p + 1)])
    gram = lagged.T @ lagged
    rhs = lagged.T @ target
    try:
        beta = solve(gram, rhs, assume_a="pos")
    except np.linalg.LinAlgError:
        ridge = 1e-10 * np.trace(gram)
        beta = solve(gram + ridge * np.eye(gram.shape[0]), rhs, assume_a="pos")
    resid = target - lagged @ beta
    sigma = resid.T @ resid / (t_total - p - 1)
    coeffs = np.stack([beta[i * m:(i + 1) * m].T for i in range(p)])
    return VarModel(coeffs, sigma)


def select_order(data: np.ndarray, max_order: int) -> tuple[int, np.ndarray]:
    """Pick the VAR order in [0, max_order] minimising AIC.

    AIC(p) = T ln det Sigma_w(p) + 2 p M^2. Returns the winning order and
    the full score vector for diagnostics.
    """
    y = np.asarray(data, dtype=float)
    t_total, m = y.shape
    scores = np.empty(max_order + 1)
    for p in range(max_order + 1):
        model = fit_var(y, p)
        sign, logdet = np.linalg.slogdet(model.noise_cov)
        if sign <= 0:
            scores[p] = np.inf
            continue
        scores[p] = t_total * logdet + 2.0 * p * m * m
    best = int(np.argmin(scores))
    return best, scores


@dataclass
class WhitenState:
    """Carry-over between whitening calls: the last p raw samples seen."""

    history: np.ndarray  # (p, M)
    seen: int = 0

    @classmethod
    def fresh(cls, model: VarModel) -> "WhitenState":
        return cls(np.zeros((model.order, model.n_channels)), 0)


def whiten(model: VarModel, samples: np.ndarray, state: WhitenState | None = None
           ) -> tuple[np.ndarray, WhitenState, int]:
    """Stream `samples` (n, M) through the inverted noise model.

    Returns the whitened block, the updated state, and how many leading rows
    of this block are warm-up (computed against zero-padded history because
    fewer than p samples had been seen). Warm-up rows should be excluded
    from likelihood evaluation.
    """
    y = np.asarray(samples, dtype=float)
    m = model.n_channels
    if y.ndim != 2 or y.shape[1] != m:
        raise FitError(f"samples must be (n, {m}), got {y.shape}")
    p = model.order
    if state is None:
        state = WhitenState.fresh(model)
    if state.history.shape != (p, m):
        raise FitError("whiten state does not match the model")
    n = y.shape[0]
    ext = np.vstack([state.history, y]) if p else y
    resid = y.copy()
    for i in range(1, p + 1):
        resid -= ext[p - i:p - i + n] @ model.coeffs[i - 1].T
    white = solve_triangular(model.noise_chol(), resid.T, lower=True).T
    new_hist = ext[n:] if p else state.history
    warmup = int(min(max(p - state.seen, 0), n))
    return white, WhitenState(np.ascontiguousarray(new_hist), state.seen + n), warmup


class NoiseStream:
    """Stateful VAR sample generator with the startup transient removed.

    Draws innovations from `rng`, runs the recursion from a zero state, and
    discards max(10 p, 1000) burn-in samples at construction so the first
    sample handed out is already (approximately) stationary.
    """

    def __init__(self, model: VarModel, rng: np.random.Generator):
        if model.spectral_radius() >= 1.0:
            raise InstabilityError(
                f"companion spectral radius {model.spectral_radius():.4f} >= 1")
        self.model = model
        self.rng = rng
        self._chol = model.noise_chol()
        p, m = model.order, model.n_channels
        # flat history [y_{n-1}, y_{n-2}, ..., y_{n-p}] and matching (M, pM)
        # coefficient matrix, so one matvec advances the recursion
        self._hist = np.zeros(p * m)
        self._coef_flat = model.coeffs.transpose(1, 0, 2).reshape(m, p * m) if p else None
        burn = max(10 * model.order, 1000)
        if burn:
            self.take(burn)

    def take(self, n: int) -> np.ndarray:
        """Next n samples, shape (n, M)."""
        p, m = self.model.order, self.model.n_channels
        innov = self.rng.standard_normal((n, m)) @ self._chol.T
        if p == 0:
            return innov
        out = np.empty((n, m))
        hist, coef = self._hist, self._coef_flat
        for j in range(n):
            sample = innov[j] + coef @ hist
            out[j] = sample
            hist[m:] = hist[:-m]
            hist[:m] = sample
        return out


def simulate_var(model: VarModel, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Generate `n_samples` stationary samples from the model."""
    return NoiseStream(model, rng).take(n_samples)


def save_var(model: VarModel, path) -> None:
    """Write the model to `path`.

    Layout: 8-byte magic "SONARVAR", 1 version byte, little-endian uint32
    order p and channel count M, then p*M*M coefficient float64s (A_1..A_p,
    each row major) followed by M*M covariance float64s, row major.
    """
    p, m = model.order, model.n_channels
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<B", _VERSION))
        fh.write(struct.pack("<II", p, m))
        fh.write(np.ascontiguousarray(model.coeffs, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.noise_cov, dtype="<f8").tobytes())


def load_var(path) -> VarModel:
    """Read a model written by :func:`save_var`, validating the layout."""
    with open(path, "rb") as fh:
        raw = fh.read()
    head = len(_MAGIC) + 1 + 8
    if len(raw) < head or raw[:len(_MAGIC)] != _MAGIC:
        raise ModelFileError(f"{path}: not a VAR model file")
    version = raw[len(_MAGIC)]
    if version != _VERSION:
        raise ModelFileError(f"{path}: unsupported model file version {version}")
    p, m = struct.unpack_from("<II", raw, len(_MAGIC) + 1)
    want = head + 8 * (p * m * m + m * m)
    if len(raw) != want:
        raise ModelFileError(f"{path}: expected {want} bytes, found {len(raw)}")
    body = np.frombuffer(raw, dtype="<f8", offset=head)
    coeffs = body[:p * m * m].reshape(p, m, m)
    sigma = body[p * m * m:].reshape(m, m)
    return VarModel(coeffs.copy(), sigma.copy())
