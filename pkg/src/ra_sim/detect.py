"""Frequency-domain data detection from training-padded receive frames.

The received frame mixes linear convolution tails across the training
sequence and data block. Subtracting a synthesized training-only pseudo
observation and folding the head/tail rows turns the data part into an
exact N-point cyclic convolution, which diagonalizes under the DFT and is
solved per subcarrier by least squares.
"""

from __future__ import annotations

import numpy as np

from .frames import FrameConfig, symbols_to_bits


def pseudo_observation(ts_bank: np.ndarray, cirm_q: np.ndarray,
                       active: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Training-only interference within one aligned frame window.

    Synthesizes the burst that the estimated channel would produce if every
    detected user sent its training sequences with a zero data block, and
    returns the aligned frame window (M+N, N_r). Identical for every frame
    index by periodicity.
    """
    K, M = ts_bank.shape
    L = cfg.max_delay
    n = cfg.data_length
    n_r = cirm_q.shape[1]
    h = cirm_q.reshape(K, L, n_r)
    window = np.zeros((cfg.frame_length, n_r), dtype=np.complex128)
    idx = np.flatnonzero(np.asarray(active))
    if idx.size == 0:
        return window
    # training-only stream around one frame: [ts, 0_N, ts], windowed the
    # same way extract_frame windows the burst
    stream = np.zeros((idx.size, M + n + M), dtype=np.complex128)
    stream[:, :M] = ts_bank[idx]
    stream[:, M + n :] = ts_bank[idx]
    for tap in range(L):
        shifted = np.zeros_like(stream)
        if tap:
            shifted[:, tap:] = stream[:, :-tap]
        else:
            shifted = stream
        window += shifted[:, L - 1 : L - 1 + cfg.frame_length].T @ h[idx, tap, :]
    return window


def cancel_and_fold(frame: np.ndarray, pseudo: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Remove the training contribution and fold tails into N cyclic rows.

    The aligned frame [rows 0..M+N-1] holds the non-ISI training window
    (rows 0..G-1), the data head overlapping the training tail
    (rows G..G+L-2), the clean middle (rows G+L-1..M+N-L), and the data tail
    overlapping the next training sequence (rows M+N-L+1..M+N-1). Head and
    tail rows add up to the cyclic wrap. Returns (N, N_r).
    """
    g = cfg.non_isi_length
    m_n = cfg.frame_length
    L = cfg.max_delay
    resid = frame - pseudo
    head = resid[g : g + L - 1]
    tail = resid[m_n - L + 1 : m_n]
    mid = resid[g + L - 1 : m_n - L + 1]
    return np.vstack([head + tail, mid])


def frequency_channel(cirm_q: np.ndarray, active: np.ndarray,
                      cfg: FrameConfig) -> np.ndarray:
    """Per-subcarrier channel tensor (N, N_r, K_active).

    Non-unitary N-point DFT of each active user's CIR so that the folded
    observation satisfies Y_f[n] = H_f[n] X_f[n] exactly.
    """
    K = np.asarray(active).size
    L = cfg.max_delay
    n_r = cirm_q.shape[1]
    idx = np.flatnonzero(np.asarray(active))
    h = cirm_q.reshape(K, L, n_r)[idx]               # (Ka, L, N_r)
    hf = np.fft.fft(h, n=cfg.data_length, axis=1)    # (Ka, N, N_r)
    return np.transpose(hf, (1, 2, 0))


def per_subcarrier_ls(y_freq: np.ndarray, h_freq: np.ndarray,
                      cfg: FrameConfig, rcond: float = 1e-8) -> np.ndarray:
    """LS solve of Y_f[n] = H_f[n] X_f[n] on the used subcarriers.

    y_freq: (N, N_r); h_freq: (N, N_r, K_active). Returns (M_s, K_active).
    """
    sel = cfg.subcarrier_map
    h_used = h_freq[sel]
    x = np.linalg.pinv(h_used, rcond=rcond) @ y_freq[sel][:, :, None]
    return x[:, :, 0]


def demap_and_demod(x_freq: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Frequency-domain symbol estimates to hard bit decisions.

    x_freq: (M_s, K_active) mapped-subcarrier values. Returns
    (K_active, bits_per_frame).
    """
    symbols = np.fft.ifft(x_freq / cfg.data_scale, axis=0, norm="ortho")
    return np.array([symbols_to_bits(symbols[:, u]) for u in range(symbols.shape[1])])


def detect_frame(frame: np.ndarray, ts_bank: np.ndarray, cirm_q: np.ndarray,
                 active: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Full single-satellite detection of one frame: bits (K_active, bits)."""
    clean = cancel_and_fold(frame, pseudo_observation(ts_bank, cirm_q, active, cfg), cfg)
    y_f = np.fft.fft(clean, axis=0, norm="ortho")
    h_f = frequency_channel(cirm_q, active, cfg)
    x_f = per_subcarrier_ls(y_f, h_f, cfg)
    return demap_and_demod(x_f, cfg)
