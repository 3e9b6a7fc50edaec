"""Channel realizations under delayed CSIT with an imperfect current estimate.

The transmitter sees ``Hhat`` while the receivers experience ``H = Hhat + Htilde``
with ``Htilde`` entries i.i.d. CN(0, P^-alpha) independent of ``Hhat``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .slopes import SlopeEstimate, fit_slope


class ConfigError(ValueError):
    """A configuration or grid parameter lies outside its admissible range."""


@dataclass(frozen=True)
class SystemConfig:
    """System parameters shared by every simulation.

    Attributes
    ----------
    K : int
        Number of single-antenna users, ``K >= 2``.
    M : int
        Transmit antennas, ``M >= K``.
    P : float
        SNR on a linear scale, ``P > 1``.
    alpha : float
        CSIT quality exponent in ``[0, 1]``.
    """

    K: int
    M: int
    P: float
    alpha: float

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 2:
            raise ConfigError(f"K must be an integer >= 2, got K={self.K}")
        if int(self.M) != self.M or self.M < self.K:
            raise ConfigError(f"M must be an integer >= K={self.K}, got M={self.M}")
        if not self.P > 1:
            raise ConfigError(f"P must be > 1 (linear scale), got P={self.P}")
        if not 0 <= self.alpha <= 1:
            raise ConfigError(f"alpha must lie in [0, 1], got alpha={self.alpha}")

    @property
    def sigma2(self) -> float:
        """Estimation-error variance ``P^-alpha``."""
        return float(self.P) ** (-float(self.alpha))

    @property
    def P_db(self) -> float:
        return 10.0 * np.log10(float(self.P))

    def at_snr_db(self, snr_db: float) -> "SystemConfig":
        return SystemConfig(self.K, self.M, db_to_linear(snr_db), self.alpha)


@dataclass(frozen=True)
class StreamKey:
    """Counter-based key for a reproducible random stream.

    Distinct ``(stream_id, counter, path)`` triples map to independent streams
    through :class:`numpy.random.SeedSequence` spawn keys, so draws never depend
    on the order in which trials or grid points are evaluated.
    """

    master_seed: int
    stream_id: int = 0
    counter: int = 0
    path: tuple[int, ...] = field(default=())

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=int(self.master_seed) & (2**64 - 1),
            spawn_key=(int(self.stream_id), int(self.counter), *self.path),
        )
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *index: int) -> "StreamKey":
        """Key for a sub-stream, e.g. one grid point or one trial batch."""
        return StreamKey(self.master_seed, self.stream_id, self.counter, self.path + tuple(int(i) for i in index))

    def with_counter(self, counter: int) -> "StreamKey":
        return StreamKey(self.master_seed, self.stream_id, int(counter), self.path)


@dataclass(frozen=True)
class ChannelRealization:
    """True channel, estimate and error; arrays may carry leading batch axes."""

    H: np.ndarray
    Hhat: np.ndarray
    Htilde: np.ndarray

    def reconstruction_error(self) -> float:
        return float(np.max(np.abs(self.H - (self.Hhat + self.Htilde)), initial=0.0))


def db_to_linear(db) -> np.ndarray | float:
    out = 10.0 ** (np.asarray(db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def crandn(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """CN(0, var) samples: real and imaginary parts each N(0, var/2)."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def check_snr_grid(snr_grid_db: Sequence[float], min_points: int = 4, min_span_db: float = 30.0) -> np.ndarray:
    grid = np.asarray(snr_grid_db, dtype=float)
    if grid.ndim != 1 or grid.size < min_points:
        raise ConfigError(f"SNR grid needs at least {min_points} points, got {grid.size}")
    span = float(grid.max() - grid.min())
    if span < min_span_db:
        raise ConfigError(f"SNR grid must span at least {min_span_db} dB, spans {span:g} dB")
    return grid


def sample_channels(config: SystemConfig, key: StreamKey, trials: int | None = None) -> ChannelRealization:
    """Draw ``trials`` independent realizations (batched on axis 0).

    With ``trials=None`` a single ``K x M`` realization is returned.
    """
    rng = key.generator()
    shape = (config.K, config.M) if trials is None else (int(trials), config.K, config.M)
    sigma2 = config.sigma2
    Hhat = crandn(rng, shape, 1.0 - sigma2)
    Htilde = crandn(rng, shape, sigma2)
    return ChannelRealization(H=Hhat + Htilde, Hhat=Hhat, Htilde=Htilde)


def sample_channel(config: SystemConfig, key: StreamKey) -> ChannelRealization:
    """One realization ``H = Hhat + Htilde`` for the given key."""
    return sample_channels(config, key, None)


# -- null-space helpers shared with the precoder construction ---------------

def null_projector(rows: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Orthogonal projector onto the null space of ``rows`` (shape ``(..., r, M)``).

    The null space of the rows ``r_k`` is ``{x : r_k x = 0}``. Rank is decided
    per batch element, so an all-zero estimate (alpha = 0) yields the identity.
    """
    rows = np.asarray(rows)
    M = rows.shape[-1]
    eye = np.eye(M, dtype=complex)
    if rows.shape[-2] == 0:
        return np.broadcast_to(eye, rows.shape[:-2] + (M, M)).copy()
    _, s, vh = np.linalg.svd(rows, full_matrices=False)
    smax = s[..., :1]
    keep = (s > rtol * smax) & (s > 1e-300)
    v_row = vh * keep[..., :, None]
    return eye - np.swapaxes(v_row.conj(), -1, -2) @ v_row


def zf_direction(rows: np.ndarray, seed_vector: np.ndarray) -> np.ndarray:
    """Unit vector orthogonal to every row: the projection of ``seed_vector``.

    Returns shape ``(..., M)``.
    """
    proj = null_projector(rows)
    v = proj @ np.asarray(seed_vector, dtype=complex)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise np.linalg.LinAlgError("degenerate null space: seed vector has no null-space component")
    return v / norm


def zf_residual_exponent(
    config_template: SystemConfig,
    snr_grid_db: Sequence[float],
    trials: int,
    key: StreamKey,
) -> SlopeEstimate:
    """Slope of ``log E|h_i^H u|^2`` against ``log P`` for unit ``u`` with ``hhat_i^H u = 0``.

    Under the model the residual power equals ``P^-alpha`` exactly, so the
    slope should be ``-alpha``. User 1's row is used; ``u`` is the projection of
    the last canonical vector onto the estimated null space.
    """
    grid = check_snr_grid(snr_grid_db)
    if trials < 500:
        raise ConfigError(f"trials must be >= 500, got {trials}")
    M = config_template.M
    seed_vec = np.zeros(M, dtype=complex)
    seed_vec[-1] = 1.0
    log_p, log_res = [], []
    for g, snr_db in enumerate(grid):
        cfg = config_template.at_snr_db(snr_db)
        ch = sample_channels(cfg, key.child(g), trials)
        u = zf_direction(ch.Hhat[:, :1, :], seed_vec)
        resid = np.abs(np.einsum("tm,tm->t", ch.H[:, 0, :], u)) ** 2
        log_p.append(np.log10(cfg.P))
        log_res.append(np.log10(resid.mean()))
    return fit_slope(log_p, log_res)


def mean_zf_residual(config: SystemConfig, trials: int, key: StreamKey) -> float:
    """Mean ``|h_1^H u|^2`` at a single SNR (same construction as the sweep)."""
    seed_vec = np.zeros(config.M, dtype=complex)
    seed_vec[-1] = 1.0
    ch = sample_channels(config, key, trials)
    u = zf_direction(ch.Hhat[:, :1, :], seed_vec)
    return float(np.mean(np.abs(np.einsum("tm,tm->t", ch.H[:, 0, :], u)) ** 2))
