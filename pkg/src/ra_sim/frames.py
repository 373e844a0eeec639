"""Training-sequence-padded framing, DFT-spread OFDM data blocks, and the
multipath uplink with AWGN.

A frame is a real training sequence of length M followed by an N-sample
DFT-s-OFDM data block. The last G = M - L + 1 samples of each received
training sequence are free of interference from the previous data block and
feed the compressed-sensing model Y = Psi H + noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz

from .errors import ConfigError

QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)
QPSK_BITS_PER_SYMBOL = 2


@dataclass(frozen=True)
class FrameConfig:
    ts_length: int = 152          # M
    data_length: int = 540        # N
    used_subcarriers: int = 540   # M_s
    max_delay: int = 17           # L
    num_frames: int = 1           # P_s
    subcarrier_map: np.ndarray = None  # (M_s,) indices into 0..N-1
    equal_power: bool = True      # scale data block to the TS sample power

    def __post_init__(self):
        if self.max_delay < 1 or self.ts_length < self.max_delay:
            raise ConfigError("need ts_length >= max_delay >= 1")
        if self.used_subcarriers > self.data_length:
            raise ConfigError("used_subcarriers cannot exceed data_length")
        if self.max_delay > self.data_length:
            raise ConfigError("max_delay cannot exceed data_length")
        if self.num_frames < 1:
            raise ConfigError("num_frames must be >= 1")
        if self.subcarrier_map is None:
            object.__setattr__(
                self, "subcarrier_map", np.arange(self.used_subcarriers)
            )
        else:
            m = np.asarray(self.subcarrier_map)
            if m.size != self.used_subcarriers or np.unique(m).size != m.size:
                raise ConfigError("subcarrier_map must be injective of size M_s")
            if m.min() < 0 or m.max() >= self.data_length:
                raise ConfigError("subcarrier_map indices out of range")
            object.__setattr__(self, "subcarrier_map", m)

    @property
    def non_isi_length(self) -> int:
        return self.ts_length - self.max_delay + 1

    @property
    def frame_length(self) -> int:
        return self.ts_length + self.data_length

    @property
    def burst_length(self) -> int:
        return self.frame_length * self.num_frames + self.ts_length

    @property
    def data_scale(self) -> float:
        if self.equal_power:
            return np.sqrt(self.data_length / self.used_subcarriers)
        return 1.0

    @property
    def bits_per_frame(self) -> int:
        return self.used_subcarriers * QPSK_BITS_PER_SYMBOL


def generate_ts_bank(num_users: int, ts_length: int, rng: np.random.Generator) -> np.ndarray:
    """(K, M) bank of i.i.d. standard-normal real training sequences."""
    return rng.standard_normal((num_users, ts_length))


def bits_to_symbols(bits: np.ndarray) -> np.ndarray:
    """Gray-mapped QPSK, unit average power."""
    b = np.asarray(bits).reshape(-1, 2)
    return ((1 - 2 * b[:, 0]) + 1j * (1 - 2 * b[:, 1])) / np.sqrt(2.0)


def symbols_to_bits(symbols: np.ndarray) -> np.ndarray:
    """Hard QPSK decisions back to bits."""
    s = np.asarray(symbols)
    out = np.empty((s.size, 2), dtype=np.int64)
    out[:, 0] = (s.real < 0).astype(np.int64).ravel()
    out[:, 1] = (s.imag < 0).astype(np.int64).ravel()
    return out.reshape(-1)


def modulate(bits: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Assemble one N-sample DFT-s-OFDM data block from payload bits."""
    bits = np.asarray(bits)
    if bits.size != cfg.bits_per_frame:
        raise ConfigError(
            f"expected {cfg.bits_per_frame} bits, got {bits.size}"
        )
    symbols = bits_to_symbols(bits)
    freq = np.zeros(cfg.data_length, dtype=np.complex128)
    freq[cfg.subcarrier_map] = np.fft.fft(symbols, norm="ortho")
    return cfg.data_scale * np.fft.ifft(freq, norm="ortho")


def demodulate(data_time: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Invert `modulate` (noiseless); returns hard bit decisions."""
    freq = np.fft.fft(np.asarray(data_time) / cfg.data_scale, norm="ortho")
    symbols = np.fft.ifft(freq[cfg.subcarrier_map], norm="ortho")
    return symbols_to_bits(symbols)


def transmit(
    ts_bank: np.ndarray,
    data_blocks: np.ndarray,
    cirm_q: np.ndarray,
    noise_var: float,
    cfg: FrameConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Received burst at one satellite.

    ts_bank: (K, M); data_blocks: (K, P_s, N) time-domain blocks;
    cirm_q: (K*L, N_r) stacked channel at this satellite. The burst ends with
    one extra training sequence so the last frame's trailing interference is
    well defined. Returns ((M+N)*P_s + M, N_r) complex samples.
    """
    K, M = ts_bank.shape
    L = cfg.max_delay
    n_r = cirm_q.shape[1]
    S = cfg.burst_length
    out = np.zeros((S, n_r), dtype=np.complex128)

    block_norms = np.linalg.norm(
        cirm_q.reshape(K, L, n_r), axis=(1, 2)
    )
    active = np.flatnonzero(block_norms > 0)
    if active.size:
        streams = np.zeros((active.size, S), dtype=np.complex128)
        for i, k in enumerate(active):
            parts = []
            for t in range(cfg.num_frames):
                parts.append(ts_bank[k])
                parts.append(data_blocks[k, t])
            parts.append(ts_bank[k])
            streams[i] = np.concatenate(parts)
        h = cirm_q.reshape(K, L, n_r)[active]  # (Ka, L, N_r)
        for tap in range(L):
            shifted = np.zeros_like(streams)
            if tap:
                shifted[:, tap:] = streams[:, :-tap]
            else:
                shifted = streams
            out += shifted.T @ h[:, tap, :]
    if noise_var > 0:
        out += np.sqrt(noise_var / 2.0) * (
            rng.standard_normal(out.shape) + 1j * rng.standard_normal(out.shape)
        )
    return out


def extract_nonisi(burst: np.ndarray, cfg: FrameConfig, frame_index: int = 0) -> np.ndarray:
    """Non-ISI window of a frame's training sequence: (G, N_r)."""
    if not 0 <= frame_index < cfg.num_frames:
        raise ConfigError("frame_index out of range")
    start = frame_index * cfg.frame_length + cfg.max_delay - 1
    return burst[start : start + cfg.non_isi_length]


def extract_frame(burst: np.ndarray, cfg: FrameConfig, frame_index: int) -> np.ndarray:
    """Aligned receive frame (M+N, N_r) starting at the non-ISI window."""
    if not 0 <= frame_index < cfg.num_frames:
        raise ConfigError("frame_index out of range")
    start = frame_index * cfg.frame_length + cfg.max_delay - 1
    return burst[start : start + cfg.frame_length]


def build_sensing_matrix(ts_bank: np.ndarray, max_delay: int) -> np.ndarray:
    """Stacked per-user Toeplitz blocks, (G, K*L)."""
    K, M = ts_bank.shape
    L = max_delay
    if M < L:
        raise ConfigError("ts length must be >= max_delay")
    blocks = [
        toeplitz(c[L - 1 :], c[L - 1 :: -1]) for c in ts_bank
    ]
    return np.hstack(blocks)


def noise_var_for_snr_db(snr_db: float) -> float:
    """Per-user receive SNR convention: unit-energy channel, unit symbol power."""
    return 10.0 ** (-snr_db / 10.0)
