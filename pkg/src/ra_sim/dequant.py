"""Quantized-backhaul data detection.

Edge satellites quantize the real and imaginary parts of their cleaned
frequency-domain observations with a B-bit uniform quantizer and send the
bin indices plus one scale value to the central node. The detector
iterates three modules: (A) a truncated-Gaussian posterior mean of the
unquantized observation, (B) a regularized LMMSE frequency-domain symbol
estimate, and (C) per-user symbol posteriors over the constellation, whose
means and variances feed back as priors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, logsumexp
from scipy.stats import norm

from .errors import ConfigError
from .frames import QPSK, FrameConfig, symbols_to_bits

_EPS = 1e-12
_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


@dataclass(frozen=True)
class Quantizer:
    """Uniform B-bit scalar quantizer on [-3*scale, 3*scale] per dimension."""

    bits: int
    scale: float

    def __post_init__(self):
        if self.bits < 1 or self.bits > 16:
            raise ConfigError("quantizer bits must be in 1..16")
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise ConfigError("quantizer scale must be positive and finite")

    @property
    def levels(self) -> int:
        return 2 ** self.bits

    @property
    def step(self) -> float:
        return 6.0 * self.scale / self.levels

    @property
    def edges(self) -> np.ndarray:
        """Finite interior thresholds e_1..e_{2^B - 1}."""
        return np.linspace(-3.0 * self.scale, 3.0 * self.scale, self.levels + 1)[1:-1]

    def quantize(self, values: np.ndarray) -> np.ndarray:
        """Bin indices 0..2^B-1 per real value."""
        return np.digitize(np.asarray(values, dtype=np.float64), self.edges)

    def reconstruct(self, indices: np.ndarray) -> np.ndarray:
        """Bin midpoints; edge bins use the midpoint of the clipped cell."""
        return -3.0 * self.scale + (np.asarray(indices) + 0.5) * self.step

    def bounds(self, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(lo, hi) per index with infinite outer bounds."""
        idx = np.asarray(indices)
        lo = -3.0 * self.scale + idx * self.step
        hi = lo + self.step
        lo = np.where(idx == 0, -np.inf, lo)
        hi = np.where(idx == self.levels - 1, np.inf, hi)
        return lo, hi


def pack_payload(quantizer: Quantizer, indices: np.ndarray) -> bytes:
    """Scale as little-endian float64, then B-bit indices packed LSB-first."""
    idx = np.asarray(indices, dtype=np.uint64).ravel()
    b = quantizer.bits
    bits = ((idx[:, None] >> np.arange(b, dtype=np.uint64)) & 1).astype(np.uint8)
    packed = np.packbits(bits.ravel(), bitorder="little")
    return struct.pack("<d", quantizer.scale) + packed.tobytes()


def unpack_payload(payload: bytes, bits: int, count: int) -> tuple[Quantizer, np.ndarray]:
    """Inverse of pack_payload; count is the number of indices."""
    scale = struct.unpack_from("<d", payload, 0)[0]
    raw = np.frombuffer(payload, dtype=np.uint8, offset=8)
    unpacked = np.unpackbits(raw, bitorder="little")[: count * bits]
    weights = (1 << np.arange(bits, dtype=np.uint64))
    idx = (unpacked.reshape(count, bits).astype(np.uint64) * weights).sum(axis=1)
    return Quantizer(bits=bits, scale=scale), idx.astype(np.int64)


def observation_scale(y_freq: np.ndarray) -> float:
    """RMS of the real parts of a cleaned frequency-domain observation."""
    return float(max(np.sqrt(np.mean(y_freq.real ** 2)), _EPS))


def gaussian_ratio(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """(phi(alpha) - phi(beta)) / (Phi(beta) - Phi(alpha)), stable in the tails."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    out = np.zeros(np.broadcast(alpha, beta).shape)
    a = np.broadcast_to(alpha, out.shape)
    b = np.broadcast_to(beta, out.shape)

    lo_inf = np.isneginf(a)
    hi_inf = np.isposinf(b)
    both = lo_inf & hi_inf
    m_lo = lo_inf & ~hi_inf
    m_hi = hi_inf & ~lo_inf
    fin = ~lo_inf & ~hi_inf

    if np.any(m_lo):
        out[m_lo] = -_SQRT_2_OVER_PI / erfcx(-b[m_lo] / np.sqrt(2.0))
    if np.any(m_hi):
        out[m_hi] = _SQRT_2_OVER_PI / erfcx(a[m_hi] / np.sqrt(2.0))
    if np.any(fin):
        af, bf = a[fin], b[fin]
        res = np.empty(af.shape)
        flip = af + bf < 0
        lo2 = np.where(flip, -bf, af)
        hi2 = np.where(flip, -af, bf)
        pos = lo2 >= 0
        if np.any(pos):
            aa, bb = lo2[pos], hi2[pos]
            d = (bb * bb - aa * aa) / 2.0
            em = np.exp(-d)
            res[pos] = (_SQRT_2_OVER_PI * (1.0 - em)
                        / (erfcx(aa / np.sqrt(2.0)) - em * erfcx(bb / np.sqrt(2.0))))
        mid = ~pos
        if np.any(mid):
            aa, bb = lo2[mid], hi2[mid]
            res[mid] = ((norm.pdf(aa) - norm.pdf(bb))
                        / np.maximum(norm.cdf(bb) - norm.cdf(aa), _EPS))
        res[flip] = -res[flip]
        out[fin] = res
    out[both] = 0.0
    return out


def truncated_mean(prior_mean: np.ndarray, std: float,
                   lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Posterior mean of y ~ N(prior_mean, std^2) given y in (lo, hi]."""
    alpha = (lo - prior_mean) / std
    beta = (hi - prior_mean) / std
    return prior_mean + std * gaussian_ratio(alpha, beta)


@dataclass
class BackhaulObservation:
    """What the central node knows about one satellite's observation.

    Exactly one of `exact` (central node's own full-precision (N, N_r)
    observation) or `indices` (quantized bin indices, shape (N, N_r, 2) for
    real/imag) is set.
    """

    exact: np.ndarray = None
    quantizer: Quantizer = None
    indices: np.ndarray = None

    @classmethod
    def from_exact(cls, y_freq: np.ndarray) -> "BackhaulObservation":
        return cls(exact=y_freq)

    @classmethod
    def from_quantized(cls, y_freq: np.ndarray, bits: int) -> "BackhaulObservation":
        q = Quantizer(bits=bits, scale=observation_scale(y_freq))
        idx = np.stack([q.quantize(y_freq.real), q.quantize(y_freq.imag)], axis=-1)
        return cls(quantizer=q, indices=idx)

    def payload(self) -> bytes:
        if self.indices is None:
            raise ConfigError("full-precision observation has no payload")
        return pack_payload(self.quantizer, self.indices)

    def payload_bits(self) -> int:
        if self.indices is None:
            return 0
        return 64 + self.indices.size * self.quantizer.bits

    def reconstruct(self) -> np.ndarray:
        """Midpoint dequantization (what plain LS operates on)."""
        if self.exact is not None:
            return self.exact
        r = self.quantizer.reconstruct(self.indices)
        return r[..., 0] + 1j * r[..., 1]


@dataclass
class DequantResult:
    bits: np.ndarray               # (K_active, bits_per_frame)
    symbol_posteriors: np.ndarray  # (M_s, K_active, |constellation|)
    iterations: int


def _module_a(observations: list[BackhaulObservation], ya: np.ndarray,
              std: np.ndarray, sel: np.ndarray) -> np.ndarray:
    """Posterior mean of the stacked unquantized observation, (|sel|, Q*N_r).

    std is the per-entry prior standard deviation of each real dimension,
    which includes the residual symbol uncertainty on top of the thermal
    noise; without that term the quantized rows are over-shrunk toward the
    prior and mixing them with full-precision rows degrades detection.
    """
    cols = []
    start = 0
    for obs in observations:
        n_r = (obs.exact if obs.exact is not None else obs.indices[..., 0]).shape[1]
        ya_part = ya[:, start : start + n_r]
        std_part = std[:, start : start + n_r]
        if obs.exact is not None:
            cols.append(obs.exact[sel])
        else:
            lo_r, hi_r = obs.quantizer.bounds(obs.indices[sel, :, 0])
            lo_i, hi_i = obs.quantizer.bounds(obs.indices[sel, :, 1])
            yr = ya_part.real + std_part * gaussian_ratio(
                (lo_r - ya_part.real) / std_part, (hi_r - ya_part.real) / std_part)
            yi = ya_part.imag + std_part * gaussian_ratio(
                (lo_i - ya_part.imag) / std_part, (hi_i - ya_part.imag) / std_part)
            cols.append(yr + 1j * yi)
        start += n_r
    return np.concatenate(cols, axis=1)


def symbol_scores(xp_user: np.ndarray, var_p: float, constellation: np.ndarray,
                  means_user: np.ndarray, spread: np.ndarray) -> np.ndarray:
    """General Module C scores for one user under arbitrary mixing.

    Models xp = spread @ s + CN(0, var_p I) and scores each symbol position
    coordinate-wise, holding the other positions at their posterior means.
    With a unitary spread this reduces to the matched-filter shortcut.
    Returns (M_s, |constellation|).
    """
    gram = np.conj(spread.T) @ spread
    t = np.conj(spread.T) @ xp_user
    cross = gram @ means_user - np.diag(gram) * means_user
    eff = t - cross
    g_diag = np.real(np.diag(gram))
    return (-(g_diag[:, None] * np.abs(constellation)[None, :] ** 2
              - 2.0 * np.real(np.conj(eff)[:, None] * constellation[None, :]))
            / var_p)


def run_bayes_dequant_dd(
    observations: list[BackhaulObservation],
    h_freq: np.ndarray,
    noise_var: float,
    cfg: FrameConfig,
    max_iter: int = 20,
    tol: float = 1e-6,
    spread: np.ndarray = None,
) -> DequantResult:
    """Bayesian dequantization detection of one frame at the central node.

    observations: per-satellite cleaned frequency-domain data, exact for the
    central node (if any) and quantized for edge nodes. h_freq: stacked
    per-subcarrier channel (N, Q*N_r, K_active) matching the column order of
    the observations.
    """
    sel = cfg.subcarrier_map
    n_used, n_rows, k_a = sel.size, h_freq.shape[1], h_freq.shape[2]
    if k_a == 0:
        raise ConfigError("no active users to detect")
    h = h_freq[sel]                                   # (Ms, QNr, Ka)
    hh = np.conj(np.transpose(h, (0, 2, 1))) @ h      # (Ms, Ka, Ka)
    h_row_energy = np.sum(np.abs(h) ** 2, axis=2)     # (Ms, QNr)
    constellation = cfg.data_scale * QPSK
    e2 = np.abs(constellation) ** 2

    xa = np.zeros((n_used, k_a), dtype=np.complex128)
    var_a = np.ones(n_used)
    q_prob = np.full((n_used, k_a, constellation.size), 1.0 / constellation.size)
    iters = 0
    for it in range(max_iter):
        iters = it + 1
        ya = (h @ xa[:, :, None])[:, :, 0]
        std = np.sqrt((noise_var + var_a[:, None] * h_row_energy) / 2.0)
        yp = _module_a(observations, ya, std, sel)

        # Module B: per-subcarrier regularized LMMSE around the prior mean
        reg = noise_var / np.clip(var_a, _EPS, None)
        a_mat = hh + reg[:, None, None] * np.eye(k_a)
        rhs = np.conj(np.transpose(h, (0, 2, 1))) @ (yp - ya)[:, :, None]
        a_inv = np.linalg.inv(a_mat)
        xp = xa + (a_inv @ rhs)[:, :, 0]
        var_p = float(max(
            noise_var / n_used * np.sum(np.mean(a_inv.diagonal(axis1=1, axis2=2).real, axis=1)),
            _EPS,
        ))

        # Module C: time-domain symbol posteriors per user
        if spread is None:
            t = np.fft.ifft(xp, axis=0, norm="ortho")     # (Ms, Ka) ~ symbols
            g = (-(e2[None, None, :]
                   - 2.0 * np.real(np.conj(t)[:, :, None]
                                   * constellation[None, None, :])) / var_p)
        else:
            prev_means = q_prob @ constellation
            g = np.stack([
                symbol_scores(xp[:, u], var_p, constellation,
                              prev_means[:, u], spread)
                for u in range(k_a)
            ], axis=1)
        q_new = np.exp(g - logsumexp(g, axis=2, keepdims=True))
        means = q_new @ constellation
        second = q_new @ e2
        variances = np.maximum(second - np.abs(means) ** 2, 0.0)

        xa = np.fft.fft(means, axis=0, norm="ortho")
        var_a = np.mean(variances, axis=1)
        delta = np.max(np.abs(q_new - q_prob))
        q_prob = q_new
        if delta < tol:
            break

    best = np.argmax(q_prob, axis=2)                   # (Ms, Ka)
    decided = constellation[best]
    bits = np.array([symbols_to_bits(decided[:, u]) for u in range(k_a)])
    return DequantResult(bits=bits, symbol_posteriors=q_prob, iterations=iters)


def ls_dequant_dd(
    observations: list[BackhaulObservation],
    h_freq: np.ndarray,
    cfg: FrameConfig,
    rcond: float = 1e-8,
) -> np.ndarray:
    """Plain LS on midpoint-dequantized observations; returns bits."""
    from .detect import per_subcarrier_ls, demap_and_demod

    y = np.concatenate([obs.reconstruct() for obs in observations], axis=1)
    x_f = per_subcarrier_ls(y, h_freq, cfg, rcond=rcond)
    return demap_and_demod(x_f, cfg)
