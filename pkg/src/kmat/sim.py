"""Monte Carlo simulation of K-MAT order-j slots and noise-free ALTMAT decoding.

An order-j K-MAT slot superposes three groups of precoded unit-power symbols:

* ``A_j`` (``K-j+1`` columns) carries order-j symbols. Its leading column
  zero-forces the estimated channels of users ``j+1..K``.
* ``A_Kj`` (``j+1`` columns) carries order-(K-j) symbols. Its leading column
  zero-forces users ``1..j``.
* ``U`` (``K`` columns) carries one zero-forced symbol per user at power
  ``P^alpha / K``.

Every routine is batched over a leading trial axis. Users are 0-based in
code, so "users ``1..j``" are rows ``0..j-1``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence, TextIO

import numpy as np
from scipy import linalg as sla

from .channel import (
    ConfigError,
    StreamKey,
    SystemConfig,
    check_snr_grid,
    crandn,
    null_projector,
    sample_channels,
)
from .slopes import SlopeEstimate, fit_slope, nan_slope

GROUPS = ("own_lead", "own_rest", "cross", "own_zf", "other_zf")
SINGULAR_COND = 1e12
EXPONENT_GRID_DB = (20.0, 30.0, 40.0, 50.0, 60.0)
DECODE_GRID_DB = (40.0, 50.0, 60.0, 70.0, 80.0)


def exponent_targets(alpha: float) -> dict[str, float]:
    """Received-power exponents of the five signal groups at any receiver."""
    return dict(zip(GROUPS, (1.0, 1.0 - alpha, 1.0 - alpha, alpha, 0.0)))


# -- precoders ---------------------------------------------------------------

@dataclass(frozen=True)
class PowerBudget:
    """Per-column power of each group; ``*_clamped`` marks a group switched off."""

    lead_j: float
    rest_j: float
    lead_Kj: float
    rest_Kj: float
    zf: float
    clamped_j: bool
    clamped_Kj: bool

    def total(self, K: int, j: int) -> float:
        return (self.lead_j + (K - j) * self.rest_j + self.lead_Kj + j * self.rest_Kj + K * self.zf)


def power_budget(config: SystemConfig, j: int) -> PowerBudget:
    """Column powers of an order-j slot.

    The leading column of each ALTMAT group gets what is left of ``(P - P^a)/2``
    after the other columns take ``P^(1-a)/2`` in total. If that remainder is
    not positive the whole group is switched off and flagged: the slot is then
    below its asymptotic regime.
    """
    K = config.K
    if not 1 <= j <= K - 1:
        raise ConfigError(f"order j must satisfy 1 <= j <= K-1={K - 1}, got {j}")
    P, a = float(config.P), float(config.alpha)
    half = 0.5 * (P - P ** a)
    low = P ** (1.0 - a)

    def group(n_rest):
        lead = half - 0.5 * n_rest / (n_rest + 1) * low
        rest = 0.5 * low / (n_rest + 1)
        if lead <= 0:
            return 0.0, 0.0, True
        return lead, rest, False

    lj, rj, cj = group(K - j)
    lk, rk, ck = group(j)
    return PowerBudget(lj, rj, lk, rk, P ** a / K, cj, ck)


@dataclass
class SlotPrecoders:
    """Precoders of one order-j slot; arrays carry a leading trial axis."""

    config: SystemConfig
    j: int
    A_j: np.ndarray  # (T, M, K-j+1)
    A_Kj: np.ndarray  # (T, M, j+1)
    U: np.ndarray  # (T, M, K)
    budget: PowerBudget

    def group_for(self, rx: int) -> tuple[np.ndarray, np.ndarray, bool, bool]:
        """(own group, cross group, own clamped, cross clamped) seen from ``rx``."""
        b = self.budget
        if rx < self.j:
            return self.A_j, self.A_Kj, b.clamped_j, b.clamped_Kj
        return self.A_Kj, self.A_j, b.clamped_Kj, b.clamped_j

    def transmit_power(self) -> np.ndarray:
        """Realized ``||x||^2`` expectation over unit symbols, per trial."""
        return sum(np.sum(np.abs(G) ** 2, axis=(-2, -1)) for G in (self.A_j, self.A_Kj, self.U))


def _dft(M: int) -> np.ndarray:
    n = np.arange(M)
    return np.exp(2j * np.pi * np.outer(n, n) / M) / np.sqrt(M)


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v, axis=-2, keepdims=True)
    if np.any(norm < 1e-12):
        raise np.linalg.LinAlgError("degenerate null space while building precoders")
    return v / norm


def _group_directions(Hhat: np.ndarray, zf_rows: Sequence[int], ncols: int) -> np.ndarray:
    """Orthonormal ``(T, M, ncols)`` basis whose first column nulls ``zf_rows``.

    Later columns come from DFT candidates orthogonalized (Gram-Schmidt,
    applied twice) against the earlier ones; each picks the candidate with the
    largest residual.
    """
    T, _, M = Hhat.shape
    e1 = np.zeros((M, 1), dtype=complex)
    e1[0] = 1.0
    cols = [_unit(null_projector(Hhat[:, list(zf_rows), :]) @ e1)]
    cand = np.broadcast_to(_dft(M), (T, M, M))
    for _ in range(1, ncols):
        Q = np.concatenate(cols, axis=-1)
        R = cand - Q @ (Q.conj().swapaxes(-1, -2) @ cand)
        R = R - Q @ (Q.conj().swapaxes(-1, -2) @ R)
        pick = np.argmax(np.linalg.norm(R, axis=-2), axis=-1)
        cols.append(_unit(np.take_along_axis(R, pick[:, None, None], axis=-1)))
    return np.concatenate(cols, axis=-1)


def _scale(G: np.ndarray, lead: float, rest: float) -> np.ndarray:
    w = np.full(G.shape[-1], np.sqrt(rest))
    w[0] = np.sqrt(lead)
    return G * w


def build_kmat_slot(config: SystemConfig, j: int, Hhat: np.ndarray) -> SlotPrecoders:
    """Precoders and power allocation of an order-j K-MAT slot.

    Parameters
    ----------
    config : SystemConfig
    j : int
        Slot order, ``1 <= j <= K-1``.
    Hhat : ndarray
        Channel estimate, ``(K, M)`` or batched ``(T, K, M)``.

    Returns
    -------
    SlotPrecoders
        Always batched (a single estimate gives ``T = 1``).
    """
    Hhat = np.asarray(Hhat, dtype=complex)
    if Hhat.ndim == 2:
        Hhat = Hhat[None]
    K, M = config.K, config.M
    if Hhat.shape[1:] != (K, M):
        raise ConfigError(f"Hhat must be (K, M)=({K}, {M}), got {Hhat.shape[1:]}")
    b = power_budget(config, j)
    A_j = _scale(_group_directions(Hhat, range(j, K), K - j + 1), b.lead_j, b.rest_j)
    A_Kj = _scale(_group_directions(Hhat, range(j), j + 1), b.lead_Kj, b.rest_Kj)
    ucols = []
    for i in range(K):
        others = [k for k in range(K) if k != i]
        e = np.zeros((M, 1), dtype=complex)
        e[i] = 1.0
        ucols.append(_unit(null_projector(Hhat[:, others, :]) @ e))
    U = np.concatenate(ucols, axis=-1) * np.sqrt(b.zf)
    return SlotPrecoders(config, j, A_j, A_Kj, U, b)


# -- received power exponents --------------------------------------------------

def _rx_gain(H: np.ndarray, rx: int, G: np.ndarray) -> np.ndarray:
    """``h_rx^H G`` per trial: shape ``(T, ncols)``."""
    return np.einsum("tm,tmc->tc", H[:, rx, :], G)


def power_report(H: np.ndarray, precoders: SlotPrecoders) -> np.ndarray:
    """Mean received power per receiver and signal group, shape ``(K, 5)``.

    Symbols are unit power, so the power of a column ``a`` at receiver ``k``
    is ``|h_k^H a|^2``; the mean runs over the trial axis. Column order
    follows :data:`GROUPS`.
    """
    K = precoders.config.K
    out = np.empty((K, len(GROUPS)))
    for k in range(K):
        own, cross, _, _ = precoders.group_for(k)
        g_own = np.abs(_rx_gain(H, k, own)) ** 2
        g_cross = np.abs(_rx_gain(H, k, cross)) ** 2
        g_zf = np.abs(_rx_gain(H, k, precoders.U)) ** 2
        zf_other = np.delete(g_zf, k, axis=-1)
        out[k] = [
            g_own[:, 0].mean(),
            g_own[:, 1:].sum(-1).mean(),
            g_cross.sum(-1).mean(),
            g_zf[:, k].mean(),
            zf_other.sum(-1).mean(),
        ]
    return out


@dataclass
class ExponentReport:
    """Per-receiver slopes of log mean power against log P."""

    alpha: float
    j: int
    slopes: dict[int, dict[str, SlopeEstimate]]
    rows: list[tuple[float, int, str, float]] = field(repr=False)
    trials: int = 0

    def max_deviation(self, rx: int = 0) -> float:
        tgt = exponent_targets(self.alpha)
        return max(abs(s.slope - tgt[g]) for g, s in self.slopes[rx].items() if np.isfinite(s.slope))


def exponent_sweep(
    config_template: SystemConfig,
    j: int,
    snr_grid_db: Sequence[float],
    trials: int,
    key: StreamKey,
    mapper: Callable = map,
) -> ExponentReport:
    """Fit received-power exponents for the five signal groups at every receiver.

    Grid points where a group is switched off by the power clamp are left out
    of that group's regression; a group with fewer than four usable points
    gets a NaN slope. ``mapper`` evaluates grid points (e.g. an executor's
    ordered ``map``); results do not depend on evaluation order.
    """
    grid = check_snr_grid(snr_grid_db)
    K = config_template.K

    def point(args):
        g, snr_db = args
        cfg = config_template.at_snr_db(snr_db)
        ch = sample_channels(cfg, key.child(g), trials)
        pre = build_kmat_slot(cfg, j, ch.Hhat)
        return np.log10(cfg.P), power_report(ch.H, pre), [pre.group_for(k)[2:] for k in range(K)]

    results = list(mapper(point, enumerate(grid)))
    log_p = np.array([r[0] for r in results])
    powers = np.array([r[1] for r in results])
    clamps = [r[2] for r in results]
    rows = [(float(snr_db), k, name, float(powers[g, k, gi]))
            for g, snr_db in enumerate(grid) for k in range(K) for gi, name in enumerate(GROUPS)]
    slopes: dict[int, dict[str, SlopeEstimate]] = {}
    for k in range(K):
        per = {}
        for gi, name in enumerate(GROUPS):
            # own groups follow the own clamp, the cross group the other one
            keep = np.array([not (clamps[g][k][0] if gi < 2 else clamps[g][k][1] if gi == 2 else False)
                             for g in range(len(grid))])
            with np.errstate(divide="ignore"):
                y = np.log10(powers[keep, k, gi])
            try:
                per[name] = fit_slope(log_p[keep], y)
            except ValueError:
                per[name] = nan_slope()
        slopes[k] = per
    return ExponentReport(float(config_template.alpha), j, slopes, rows, trials)


# -- overheard equations and decoding -------------------------------------------

@dataclass
class SlotSymbols:
    """Unit-power Gaussian symbols of the three groups, batched on axis 0."""

    s_j: np.ndarray
    s_Kj: np.ndarray
    z: np.ndarray

    @classmethod
    def draw(cls, precoders: SlotPrecoders, key: StreamKey) -> "SlotSymbols":
        rng = key.generator()
        T = precoders.A_j.shape[0]
        return cls(
            crandn(rng, (T, precoders.A_j.shape[-1])),
            crandn(rng, (T, precoders.A_Kj.shape[-1])),
            crandn(rng, (T, precoders.U.shape[-1])),
        )


def quantizer_bits(P: float, alpha: float) -> int:
    """Bit budget per complex value: ``round((1 - alpha) log2 P)``."""
    return int(round((1.0 - float(alpha)) * np.log2(float(P))))


@dataclass
class QuantizationResult:
    values: np.ndarray
    distortion: float  # mean |q - v|^2
    bits: int
    bits_re: int
    bits_im: int
    clip_fraction: float


def _uniform(x: np.ndarray, half_range: np.ndarray, bits: int) -> tuple[np.ndarray, np.ndarray]:
    levels = 2 ** bits
    step = 2.0 * half_range / levels
    idx = np.clip(np.floor(x / step), -levels // 2, levels // 2 - 1) if levels > 1 else np.zeros_like(x) - 0.5
    q = (idx + 0.5) * step if levels > 1 else np.zeros_like(x)
    return q, np.abs(x) > half_range


def quantize_equation(values, P: float, alpha: float, std=None, range_sigmas: float = 4.0) -> QuantizationResult:
    """Quantize complex values with ``round((1 - alpha) log2 P)`` bits each.

    The bits are split between the real and imaginary parts (the real part
    takes the extra bit when the budget is odd). Each part goes through a
    uniform mid-rise quantizer covering ``+-range_sigmas`` standard deviations
    and clipped beyond. ``std`` is the standard deviation of each complex value
    (scalar or per value); by default the empirical RMS is used. A budget of
    zero or less leaves the values untouched with zero distortion.
    """
    v = np.asarray(values, dtype=complex)
    bits = quantizer_bits(P, alpha)
    if bits <= 0:
        return QuantizationResult(v.copy(), 0.0, 0, 0, 0, 0.0)
    if std is None:
        std = np.sqrt(np.mean(np.abs(v) ** 2))
    std = np.asarray(std, dtype=float)
    if np.any(std <= 0):
        raise ValueError("quantizer needs a positive standard deviation")
    half = range_sigmas * std / np.sqrt(2.0)
    b_re, b_im = (bits + 1) // 2, bits // 2
    q_re, c_re = _uniform(v.real, half, b_re)
    q_im, c_im = _uniform(v.imag, half, b_im)
    q = q_re + 1j * q_im
    clip = float(np.mean(c_re | c_im)) if v.size else 0.0
    return QuantizationResult(q, float(np.mean(np.abs(q - v) ** 2)), bits, b_re, b_im, clip)


@dataclass
class GenieEquation:
    """An overheard equation ``coeffs . s`` handed to a receiver by the genie."""

    value: np.ndarray  # (T,)
    coeffs: np.ndarray  # (T, ncols): h_i^H times the group's precoder
    order: int
    source_rx: int
    quantized: bool = False
    bits: int = 0
    distortion: float = 0.0


@dataclass
class GenieSet:
    """Equations needed by one receiver: overheard rows of its own group plus
    the value of the cross-group interference it sees."""

    rx: int
    rows: list[GenieEquation]
    interference: GenieEquation


def overheard_equations(
    H: np.ndarray,
    precoders: SlotPrecoders,
    symbols: SlotSymbols,
    rx: int,
    quantize: bool = False,
) -> GenieSet:
    """Genie equations for receiver ``rx`` (0-based).

    For ``rx < j`` these are ``h_i^H A_j s_j`` for ``i >= j`` and the
    interference ``h_rx^H A_Kj s_Kj``; receivers ``rx >= j`` get the mirror
    image. With ``quantize`` every value passes through
    :func:`quantize_equation` using its conditional standard deviation
    ``||coeffs||``.
    """
    cfg, j = precoders.config, precoders.j
    if rx < j:
        own, s_own, cross, s_cross = precoders.A_j, symbols.s_j, precoders.A_Kj, symbols.s_Kj
        sources, own_order, cross_order = range(j, cfg.K), j + 1, cfg.K - j + 1
    else:
        own, s_own, cross, s_cross = precoders.A_Kj, symbols.s_Kj, precoders.A_j, symbols.s_j
        sources, own_order, cross_order = range(j), cfg.K - j + 1, j + 1

    def make(i, G, s, order):
        coeffs = _rx_gain(H, i, G)
        value = np.einsum("tc,tc->t", coeffs, s)
        if not quantize:
            return GenieEquation(value, coeffs, order, i)
        std = np.linalg.norm(coeffs, axis=-1)
        res = quantize_equation(value, cfg.P, cfg.alpha, std=np.where(std > 0, std, 1.0))
        return GenieEquation(res.values, coeffs, order, i, True, res.bits, res.distortion)

    rows = [make(i, own, s_own, own_order) for i in sources]
    return GenieSet(rx, rows, make(rx, cross, s_cross, cross_order))


def received_signal(H, precoders: SlotPrecoders, symbols: SlotSymbols, rx: int, noise_rng=None) -> np.ndarray:
    x = (np.einsum("tmc,tc->tm", precoders.A_j, symbols.s_j)
         + np.einsum("tmc,tc->tm", precoders.A_Kj, symbols.s_Kj)
         + np.einsum("tmc,tc->tm", precoders.U, symbols.z))
    y = np.einsum("tm,tm->t", H[:, rx, :], x)
    if noise_rng is not None:
        y = y + crandn(noise_rng, y.shape)
    return y


@dataclass
class DecodeResult:
    rx: int
    sinr: np.ndarray  # (T, nsym); zero where the system is singular
    decoded: np.ndarray  # (T, nsym)
    cond: np.ndarray  # (T,)

    @property
    def invertible_fraction(self) -> float:
        return float(np.mean(self.cond < SINGULAR_COND))

    def relative_error(self, truth: np.ndarray) -> float:
        ok = self.cond < SINGULAR_COND
        err = np.linalg.norm(self.decoded[ok] - truth[ok], axis=-1) / np.linalg.norm(truth[ok], axis=-1)
        return float(err.max(initial=0.0))


def decode_order_j(
    H: np.ndarray,
    precoders: SlotPrecoders,
    genie: GenieSet,
    symbols: SlotSymbols,
    noise: bool = True,
    key: StreamKey | None = None,
) -> DecodeResult:
    """Recover receiver ``genie.rx``'s group of ALTMAT symbols.

    The receiver's own observation, after removing the genie-supplied
    cross-group interference, is stacked with the overheard rows into a square
    system ``G s = y``. ZF symbols count as noise on the own row (unit symbol
    power assumed), quantization distortion as noise on the genie rows. The
    post-equalization SINR of symbol ``m`` is ``1 / (G^-1 S G^-H)_mm``.
    """
    rx = genie.rx
    cfg = precoders.config
    own, _, _, _ = precoders.group_for(rx)
    rng = (key or StreamKey(0)).generator() if noise else None
    y = received_signal(H, precoders, symbols, rx, rng) - genie.interference.value

    zf_pow = np.sum(np.abs(_rx_gain(H, rx, precoders.U)) ** 2, axis=-1)
    n0 = zf_pow + (1.0 if noise else 0.0) + genie.interference.distortion
    G = np.concatenate([_rx_gain(H, rx, own)[:, None, :]] + [g.coeffs[:, None, :] for g in genie.rows], axis=1)
    ystack = np.stack([y] + [g.value for g in genie.rows], axis=-1)
    sig = np.zeros(G.shape[:2])
    sig[:, 0] = n0
    for r, g in enumerate(genie.rows, start=1):
        sig[:, r] = g.distortion

    T, n, _ = G.shape
    cond = np.linalg.cond(G) if T else np.zeros(0)
    cond = np.where(np.isfinite(cond), cond, np.inf)
    ok = cond < SINGULAR_COND
    decoded = np.full((T, n), np.nan, dtype=complex)
    sinr = np.zeros((T, n))
    if ok.any():
        Ginv = np.linalg.inv(G[ok])
        decoded[ok] = np.einsum("tab,tb->ta", Ginv, ystack[ok])
        err_var = np.einsum("tab,tb->ta", np.abs(Ginv) ** 2, sig[ok])
        with np.errstate(divide="ignore"):
            sinr[ok] = np.where(err_var > 0, 1.0 / err_var, np.inf)
    return DecodeResult(rx, sinr, decoded, cond)


@dataclass
class ZFResult:
    sinr: np.ndarray  # (T, K)
    residual_alt: np.ndarray  # (T, K) ALTMAT energy left after subtraction
    alt_energy: np.ndarray  # (T, K) ALTMAT energy before subtraction


def successive_zf_decode(
    H: np.ndarray,
    precoders: SlotPrecoders,
    symbols: SlotSymbols,
    decoded_alt: tuple[np.ndarray, np.ndarray] | None = None,
    noise: bool = True,
) -> ZFResult:
    """ZF SINR of every user once the ALTMAT groups are subtracted.

    ``decoded_alt`` holds the decoded ``(s_j, s_Kj)``; by default the true
    symbols are used, i.e. the ALTMAT codewords are assumed decoded without
    error. Whatever is left of the ALTMAT signal counts as interference, next
    to the leakage of the other users' ZF symbols and unit-power noise.
    """
    s_j, s_Kj = decoded_alt if decoded_alt is not None else (symbols.s_j, symbols.s_Kj)
    K = precoders.config.K
    T = H.shape[0]
    sinr = np.empty((T, K))
    resid = np.empty((T, K))
    alt = np.empty((T, K))
    for k in range(K):
        gj, gk = _rx_gain(H, k, precoders.A_j), _rx_gain(H, k, precoders.A_Kj)
        true_alt = np.einsum("tc,tc->t", gj, symbols.s_j) + np.einsum("tc,tc->t", gk, symbols.s_Kj)
        est_alt = np.einsum("tc,tc->t", gj, s_j) + np.einsum("tc,tc->t", gk, s_Kj)
        resid[:, k] = np.abs(true_alt - est_alt) ** 2
        alt[:, k] = np.abs(true_alt) ** 2
        g_zf = np.abs(_rx_gain(H, k, precoders.U)) ** 2
        leak = g_zf.sum(-1) - g_zf[:, k]
        sinr[:, k] = g_zf[:, k] / (leak + (1.0 if noise else 0.0) + resid[:, k])
    return ZFResult(sinr, resid, alt)


# -- SNR sweeps ----------------------------------------------------------------

@dataclass
class SinrSweep:
    """Per-symbol slopes of mean ``log10 SINR`` against ``log10 P``.

    ``rate_slopes`` regress the mean rate ``log2(1 + SINR)`` on ``log2 P``;
    both approach the same pre-log factor at high SNR.
    """

    slopes: list[SlopeEstimate]
    rate_slopes: list[SlopeEstimate]
    rows: list[tuple[float, int, float, float]] = field(repr=False)

    @property
    def mean_slope(self) -> float:
        return float(np.mean([s.slope for s in self.slopes]))


def _slot_at(config_template, j, snr_db, trials, key):
    cfg = config_template.at_snr_db(snr_db)
    ch = sample_channels(cfg, key.child(0), trials)
    pre = build_kmat_slot(cfg, j, ch.Hhat)
    sym = SlotSymbols.draw(pre, key.child(1))
    return cfg, ch, pre, sym


def _sweep(grid, per_point, mapper=map) -> SinrSweep:
    log_p, log_s, rates, rows = [], [], [], []
    sinrs = list(mapper(lambda a: per_point(*a), enumerate(grid)))
    for snr_db, sinr in zip(grid, sinrs):  # sinr: (T, nsym)
        with np.errstate(divide="ignore"):
            db = 10.0 * np.log10(sinr)
        mean_db = db.mean(axis=0)
        rate = np.log2(1.0 + sinr).mean(axis=0)
        log_p.append(snr_db / 10.0)
        log_s.append(mean_db / 10.0)
        rates.append(rate)
        rows.extend((float(snr_db), m, float(mean_db[m]), float(rate[m])) for m in range(sinr.shape[1]))
    log_s, rates = np.array(log_s), np.array(rates)
    log2_p = np.array(log_p) * np.log2(10.0)
    return SinrSweep(
        [fit_slope(log_p, log_s[:, m]) for m in range(log_s.shape[1])],
        [fit_slope(log2_p, rates[:, m]) for m in range(rates.shape[1])],
        rows,
    )


def zf_sinr_sweep(config_template: SystemConfig, j: int, snr_grid_db, trials: int, key: StreamKey,
                  noise: bool = True, mapper: Callable = map) -> SinrSweep:
    """ZF SINR exponent after exact ALTMAT subtraction, one slope per user."""
    grid = check_snr_grid(snr_grid_db)

    def point(g, snr_db):
        _, ch, pre, sym = _slot_at(config_template, j, snr_db, trials, key.child(g))
        return successive_zf_decode(ch.H, pre, sym, noise=noise).sinr

    return _sweep(grid, point, mapper)


def decode_sinr_sweep(config_template: SystemConfig, j: int, snr_grid_db, trials: int, key: StreamKey,
                      rx: int = 0, quantize: bool = False, mapper: Callable = map) -> SinrSweep:
    """Post-equalization SINR exponent of the order-j symbols at ``rx``.

    The analog and quantized sweeps share channels and symbols for a given
    key, so their slopes compare pairwise. Unit noise and ZF leakage sit next
    to the own ZF symbol (power ``P^alpha/K``) on the receiver's own row, so
    the slope only settles near ``1 - alpha`` once ``P^alpha`` dominates;
    :data:`DECODE_GRID_DB` starts at 40 dB for that reason.
    """
    grid = check_snr_grid(snr_grid_db)
    if not 0 <= rx < config_template.K:
        raise ConfigError(f"rx must lie in 0..{config_template.K - 1}, got {rx}")

    def point(g, snr_db):
        k = key.child(g)
        _, ch, pre, sym = _slot_at(config_template, j, snr_db, trials, k)
        genie = overheard_equations(ch.H, pre, sym, rx, quantize=quantize)
        return decode_order_j(ch.H, pre, genie, sym, noise=True, key=k.child(2)).sinr

    return _sweep(grid, point, mapper)


def distortion_sweep(config_template: SystemConfig, j: int, snr_grid_db, trials: int,
                     key: StreamKey, mapper: Callable = map) -> tuple[SlopeEstimate, list[tuple[float, int, float]]]:
    """Slope of the mean quantization distortion of overheard equations vs log P.

    Every overheard equation of the slot, at every receiver, is quantized
    with its conditional standard deviation. Returns the slope and rows
    ``(P_db, bits, distortion)``.
    """
    grid = check_snr_grid(snr_grid_db)

    def point(args):
        g, snr_db = args
        cfg, ch, pre, sym = _slot_at(config_template, j, snr_db, trials, key.child(g))
        eqs = [eq for rx in range(cfg.K) for eq in overheard_equations(ch.H, pre, sym, rx, quantize=True).rows]
        return np.log10(cfg.P), eqs[0].bits, float(np.mean([eq.distortion for eq in eqs]))

    results = list(mapper(point, enumerate(grid)))
    with np.errstate(divide="ignore"):
        est = fit_slope([r[0] for r in results], [np.log10(r[2]) for r in results])
    return est, [(float(snr_db), r[1], r[2]) for snr_db, r in zip(grid, results)]


def write_power_csv(report: ExponentReport, seed: int, fh: TextIO) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["P_db", "rx", "group", "mean_power", "trials", "seed"])
    for p_db, rx, group, power in report.rows:
        writer.writerow([f"{p_db:g}", rx + 1, group, f"{power:.10g}", report.trials, seed])


def write_sinr_csv(sweep: SinrSweep, fh: TextIO) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["P_db", "symbol", "sinr_db", "rate_bits"])
    for p_db, m, sinr_db, rate in sweep.rows:
        writer.writerow([f"{p_db:g}", m + 1, f"{sinr_db:.6f}", f"{rate:.6f}"])


# -- noise-free three-user ALTMAT replay ------------------------------------------

@dataclass
class E2EReport:
    n: int
    symbols_total: int
    symbols_recovered: int
    slots: int
    max_rel_error: float
    rank_failures: int


class _Replay:
    """Linear-form bookkeeping: every transmitted quantity is a row over all symbols."""

    def __init__(self, K, M, n_symbols, rng):
        self.K, self.M, self.rng = K, M, rng
        self.S = n_symbols
        self.obs = [[] for _ in range(K)]
        self.next = 0
        self.owner = np.full(n_symbols, -1)
        self.slots = 0

    def fresh(self, user, count):
        forms = np.zeros((count, self.S), dtype=complex)
        for c in range(count):
            forms[c, self.next] = 1.0
            self.owner[self.next] = user
            self.next += 1
        return forms

    def send(self, *groups) -> np.ndarray:
        """One slot. Each group is an ``(m, S)`` stack of forms on antennas ``0..m-1``.

        Returns the slot's channel ``(K, M)``.
        """
        X = np.zeros((self.M, self.S), dtype=complex)
        for forms in groups:
            X[: forms.shape[0]] += forms
        H = crandn(self.rng, (self.K, self.M))
        self.slots += 1
        Y = H @ X
        for i in range(self.K):
            self.obs[i].append(Y[i])
        return H


def _decode_user(R: np.ndarray, desired: np.ndarray, s: np.ndarray) -> tuple[bool, float]:
    y = R @ s
    other = ~desired
    Rn = R[:, other]
    scale = max(np.linalg.norm(R, 2), 1e-300)
    N = sla.null_space(Rn.conj().T, rcond=1e-10) if other.any() else np.eye(R.shape[0])
    A = N.conj().T @ R[:, desired]
    b = N.conj().T @ y
    sv = np.linalg.svd(A, compute_uv=False)
    if sv.size < desired.sum() or sv.min() <= 1e-9 * scale:
        return False, np.inf
    est = np.linalg.lstsq(A, b, rcond=None)[0]
    truth = s[desired]
    return True, float(np.linalg.norm(est - truth) / np.linalg.norm(truth))


def altmat_e2e(n: int, key: StreamKey, K: int = 3) -> E2EReport:
    """Noise-free replay of the three-user ALTMAT schedule with alpha = 0.

    Every slot draws a fresh channel, precoders are identity columns, and
    overheard equations are retransmitted as exact analog values in the slots
    the schedule assigns to them. Each receiver finally cancels all
    interference with a left annihilator and solves for its own symbols.
    """
    if K != 3:
        raise ConfigError("the end-to-end replay follows the three-user schedule; K must be 3")
    if n < 0:
        raise ConfigError(f"n must be >= 0, got {n}")
    total = 12 + 9 * n
    rp = _Replay(K, 3, total, key.generator())
    pairs = [(0, 1), (1, 2), (2, 0)]
    # order-2 stock keyed by the unordered pair that needs it
    stock: dict[frozenset, list[np.ndarray]] = {frozenset(p): [] for p in pairs}
    for a, b in pairs:
        ua, ub = rp.fresh(a, 2), rp.fresh(b, 2)
        H = rp.send(ua, ub)
        # h_a^H u_b is interference at RX a and a second equation for RX b
        stock[frozenset((a, b))] += [H[a, :2] @ ub, H[b, :2] @ ua]
    for _ in range(n):
        order3 = []
        new_stock: dict[frozenset, list[np.ndarray]] = {frozenset(p): [] for p in pairs}
        for r in range(K):
            p, q = (r + 1) % K, (r + 2) % K
            u_r = rp.fresh(r, 3)
            u_pq = np.array(stock[frozenset((p, q))])
            H = rp.send(u_r, u_pq)
            order3.append(H[r, :2] @ u_pq)
            new_stock[frozenset((r, p))].append(H[p, :3] @ u_r)
            new_stock[frozenset((r, q))].append(H[q, :3] @ u_r)
        for o3 in order3:
            rp.send(o3[None])
        stock = new_stock
    for forms in stock.values():
        for f in forms:
            rp.send(f[None])

    s = crandn(key.child(1).generator(), total)
    recovered, worst, failures = 0, 0.0, 0
    for i in range(K):
        ok, err = _decode_user(np.array(rp.obs[i]), rp.owner == i, s)
        if ok:
            recovered += int((rp.owner == i).sum())
            worst = max(worst, err)
        else:
            failures += 1
    return E2EReport(n, total, recovered, rp.slots, worst, failures)
