"""Monte Carlo checks of the log-det scaling lemmas behind the outer bound.

Both lemmas are order statements in ``sigma^2 -> 0``. Absolute values carry
unknown constants, so each check regresses a log-det combination on
``log2(1/sigma^2)`` and compares the slope with the claimed pre-log factor.
Every grid point reuses the same normalized error draws (common random
numbers), which keeps slope noise low.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np
from scipy import stats

from .channel import ConfigError, StreamKey, crandn
from .slopes import SlopeEstimate, fit_slope

DEFAULT_SIGMA2_GRID = tuple(10.0 ** -k for k in range(1, 7))
DEFAULT_TRIALS = 2000
SLOPE_MARGIN = 0.05
CHOLESKY_JITTER = 1e-12


@dataclass(frozen=True)
class LogdetEstimate:
    mean: float
    stderr: float
    trials: int


def _check_psd(Kcov: np.ndarray, name: str = "Kcov") -> None:
    if Kcov.ndim != 2 or Kcov.shape[0] != Kcov.shape[1]:
        raise ConfigError(f"{name} must be square, got shape {Kcov.shape}")
    scale = max(1.0, float(np.max(np.abs(Kcov), initial=0.0)))
    if not np.allclose(Kcov, Kcov.conj().T, atol=1e-10 * scale):
        raise ConfigError(f"{name} must be Hermitian")
    if np.linalg.eigvalsh(Kcov).min() < -1e-9 * scale:
        raise ConfigError(f"{name} must be positive semidefinite")


def _logdet2(G: np.ndarray) -> np.ndarray:
    """``log2 det`` of a batch of Hermitian positive definite matrices."""
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        L = np.linalg.cholesky(G + CHOLESKY_JITTER * np.eye(G.shape[-1]))
    return 2.0 * np.sum(np.log2(np.abs(np.diagonal(L, axis1=-2, axis2=-1))), axis=-1)


def _unit_errors(key: StreamKey, trials: int, N: int, M: int) -> np.ndarray:
    return crandn(key.generator(), (trials, N, M))


def mc_logdet(N: int, M: int, Hhat, Kcov, sigma2: float, trials: int, key: StreamKey) -> LogdetEstimate:
    """Monte Carlo ``E log2 det(I + H K H^H)`` with ``H = Hhat + Htilde``.

    Parameters
    ----------
    N, M : int
        Rows and columns of ``H``.
    Hhat : array_like or None
        ``(N, M)`` fixed estimate, ``(trials, N, M)`` for one estimate per
        trial, or ``None`` for an all-zero estimate.
    Kcov : array_like
        ``(M, M)`` Hermitian positive semidefinite covariance.
    sigma2 : float
        Variance of the i.i.d. ``CN(0, sigma2)`` error entries.

    Returns
    -------
    LogdetEstimate
        Sample mean and its standard error. Regularization is applied only if
        a Cholesky factorization fails, so ``Kcov = 0`` gives exactly 0.
    """
    Kcov = np.asarray(Kcov, dtype=complex)
    if Kcov.shape != (M, M):
        raise ConfigError(f"Kcov must be ({M}, {M}), got {Kcov.shape}")
    _check_psd(Kcov)
    if not sigma2 > 0:
        raise ConfigError(f"sigma2 must be positive, got {sigma2}")
    if trials < 2:
        raise ConfigError(f"trials must be >= 2, got {trials}")
    Hhat = np.zeros((N, M), dtype=complex) if Hhat is None else np.asarray(Hhat, dtype=complex)
    if Hhat.shape[-2:] != (N, M) or Hhat.ndim not in (2, 3) or (Hhat.ndim == 3 and Hhat.shape[0] != trials):
        raise ConfigError(f"Hhat must be ({N}, {M}) or ({trials}, {N}, {M}), got {Hhat.shape}")
    return _logdet_from_errors(Hhat, Kcov, np.sqrt(sigma2) * _unit_errors(key, trials, N, M))


def _logdet_from_errors(Hhat, Kcov, Htilde) -> LogdetEstimate:
    H = Hhat + Htilde
    N = H.shape[-2]
    G = np.eye(N) + H @ Kcov @ H.conj().swapaxes(-1, -2)
    vals = _logdet2(G)
    return LogdetEstimate(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(vals.size)), int(vals.size))


def _check_sigma_grid(grid: Sequence[float], min_decades: float = 4.0) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 4:
        raise ConfigError(f"sigma2 grid needs at least 4 points, got {g.size}")
    if np.any(g <= 0) or np.any(g > 1):
        raise ConfigError("sigma2 values must lie in (0, 1]")
    span = np.log10(g.max() / g.min())
    if span < min_decades - 1e-9:
        raise ConfigError(f"sigma2 grid must span at least {min_decades:g} decades, spans {span:.3g}")
    return g


@dataclass
class LemmaOutInstance:
    """Inputs of the normalized log-det difference check.

    ``Hhat2`` plays the role of the trailing receivers, so it is usually the
    last ``N2`` rows of ``Hhat1``. With ``redraw_hhat`` both estimates are
    redrawn i.i.d. ``CN(0, 1)`` per trial (nested the same way) instead of
    being held fixed. ``P`` is optional; when given, ``trace(Kcov) <= P`` is
    enforced.
    """

    N1: int
    N2: int
    M: int
    Hhat1: np.ndarray
    Hhat2: np.ndarray
    Kcov: np.ndarray
    sigma2_grid: tuple[float, ...] = DEFAULT_SIGMA2_GRID
    P: float | None = None
    redraw_hhat: bool = False

    def __post_init__(self):
        if not self.M >= self.N1 >= self.N2 >= 1:
            raise ConfigError(f"need M >= N1 >= N2 >= 1, got M={self.M}, N1={self.N1}, N2={self.N2}")
        self.Kcov = np.asarray(self.Kcov, dtype=complex)
        self.Hhat1 = np.asarray(self.Hhat1, dtype=complex)
        self.Hhat2 = np.asarray(self.Hhat2, dtype=complex)
        if self.Hhat1.shape != (self.N1, self.M) or self.Hhat2.shape != (self.N2, self.M):
            raise ConfigError("Hhat1 and Hhat2 must be N1 x M and N2 x M")
        if self.Kcov.shape != (self.M, self.M):
            raise ConfigError(f"Kcov must be {self.M} x {self.M}")
        _check_psd(self.Kcov)
        if self.P is not None and np.trace(self.Kcov).real > self.P * (1 + 1e-12):
            raise ConfigError(f"trace(Kcov)={np.trace(self.Kcov).real:.6g} exceeds P={self.P:g}")
        _check_sigma_grid(self.sigma2_grid)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.sort(np.linalg.eigvalsh(self.Kcov))[::-1]

    @property
    def bound(self) -> float:
        return (self.N1 - self.N2) / self.N1


@dataclass
class LemmaVerdict:
    slope: SlopeEstimate
    bound: float
    passed: bool
    rows: list[tuple[float, float, float]] = field(repr=False)

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


def lemma_out_slope(inst: LemmaOutInstance, trials: int, key: StreamKey) -> LemmaVerdict:
    """Slope of ``LD1/N1 - LD2/N2`` against ``log2(1/sigma^2)``.

    ``LDk`` is the Monte Carlo ``E log2 det(I + H_k K H_k^H)``. The verdict is
    PASS iff the slope is at most ``(N1 - N2)/N1 + 0.05``.
    """
    grid = _check_sigma_grid(inst.sigma2_grid)
    W1 = _unit_errors(key.child(0), trials, inst.N1, inst.M)
    W2 = _unit_errors(key.child(1), trials, inst.N2, inst.M)
    if inst.redraw_hhat:
        H1 = crandn(key.child(2).generator(), (trials, inst.N1, inst.M))
        H2 = H1[:, inst.N1 - inst.N2:, :]
    else:
        H1, H2 = inst.Hhat1, inst.Hhat2
    x, y, rows = [], [], []
    for s2 in grid:
        e1 = _logdet_from_errors(H1, inst.Kcov, np.sqrt(s2) * W1)
        e2 = _logdet_from_errors(H2, inst.Kcov, np.sqrt(s2) * W2)
        diff = e1.mean / inst.N1 - e2.mean / inst.N2
        se = float(np.hypot(e1.stderr / inst.N1, e2.stderr / inst.N2))
        x.append(np.log2(1.0 / s2))
        y.append(diff)
        rows.append((float(s2), float(diff), se))
    est = fit_slope(x, y)
    return LemmaVerdict(est, inst.bound, bool(est.slope <= inst.bound + SLOPE_MARGIN), rows)


def lemma_caseb_slope(
    n: int,
    m: int,
    Hhat,
    Lambda,
    sigma2_grid: Sequence[float] = DEFAULT_SIGMA2_GRID,
    trials: int = DEFAULT_TRIALS,
    key: StreamKey | None = None,
) -> LemmaVerdict:
    """Check ``E log det(I + H K H^H) >= (n/m) log det Lambda + (n(m-n)/m) log sigma^2 + O(1)``.

    ``K`` is taken as ``diag(Lambda)``. The deficit ``RHS - LHS`` (without the
    O(1) term, in bits) must not grow: PASS iff its slope against
    ``log2(1/sigma^2)`` is at most 0.05. ``Hhat`` may be ``(n, m)``,
    ``(trials, n, m)`` or ``None`` (zero estimate).
    """
    if not n <= m <= 2 * n:
        raise ConfigError(f"need n <= m <= 2n, got n={n}, m={m}")
    lam = np.asarray(Lambda, dtype=float)
    if lam.ndim == 2:
        lam = np.diagonal(lam)
    if lam.shape != (m,):
        raise ConfigError(f"Lambda needs {m} eigenvalues, got {lam.shape}")
    if np.any(lam <= 0) or np.any(np.diff(lam) > 0):
        raise ConfigError("Lambda must be positive and non-increasing")
    grid = _check_sigma_grid(sigma2_grid)
    key = key or StreamKey(0)
    Hhat = np.zeros((n, m), dtype=complex) if Hhat is None else np.asarray(Hhat, dtype=complex)
    W = _unit_errors(key, trials, n, m)
    Kcov = np.diag(lam).astype(complex)
    logdet_lam = float(np.sum(np.log2(lam)))
    x, y, rows = [], [], []
    for s2 in grid:
        e = _logdet_from_errors(Hhat, Kcov, np.sqrt(s2) * W)
        rhs = n / m * logdet_lam + n * (m - n) / m * np.log2(s2)
        x.append(np.log2(1.0 / s2))
        y.append(rhs - e.mean)
        rows.append((float(s2), e.mean, e.stderr))
    est = fit_slope(x, y)
    return LemmaVerdict(est, 0.0, bool(est.slope <= SLOPE_MARGIN), rows)


def haar_covariance(eigenvalues: Sequence[float], key: StreamKey) -> np.ndarray:
    """``V diag(eigenvalues) V^H`` with ``V`` Haar-distributed unitary."""
    lam = np.asarray(eigenvalues, dtype=float)
    V = stats.unitary_group.rvs(lam.size, random_state=key.generator())
    K = (V * lam) @ V.conj().T
    return 0.5 * (K + K.conj().T)


def random_out_instance(
    key: StreamKey,
    N1: int = 3,
    N2: int = 2,
    M: int = 3,
    P: float = 1e4,
    redraw_hhat: bool = False,
    eigen_exponents: Sequence[float] | None = None,
) -> LemmaOutInstance:
    """Random instance with eigenvalues ``P^e`` for exponents ``e`` in [0, 1].

    Without ``eigen_exponents`` the exponents are 1 followed by sorted uniform
    draws, which yields ``(P, P^0.5, 1)``-like spreads.
    """
    rng = key.child(0).generator()
    if eigen_exponents is None:
        eigen_exponents = [1.0, *sorted(rng.uniform(0.0, 1.0, M - 1), reverse=True)]
    lam = np.asarray(P, dtype=float) ** np.asarray(eigen_exponents, dtype=float)
    Kcov = haar_covariance(lam, key.child(1))
    H1 = crandn(key.child(2).generator(), (N1, M))
    return LemmaOutInstance(N1, N2, M, H1, H1[N1 - N2:], Kcov, redraw_hhat=redraw_hhat)


def random_caseb_instance(key: StreamKey, n: int = 2, m: int = 3, max_log10: float = 3.0):
    """``(Hhat, Lambda)`` with Lambda eigenvalues ``10^u``, ``u`` uniform in [0, max_log10]."""
    rng = key.generator()
    lam = np.sort(10.0 ** rng.uniform(0.0, max_log10, m))[::-1]
    return crandn(rng, (n, m)), lam


def write_lemma_csv(verdict: LemmaVerdict, fh: TextIO) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["sigma2", "lhs", "stderr"])
    for s2, lhs, se in verdict.rows:
        writer.writerow([f"{s2:.6g}", f"{lhs:.10g}", f"{se:.6g}"])
