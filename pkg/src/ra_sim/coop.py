"""Multi-satellite fusion: majority-vote activity detection, stacked
least-squares data detection over all satellites, and the two-user channel
correlation study that motivates cooperation.
"""

from __future__ import annotations

import numpy as np

from .frames import FrameConfig
from .detect import cancel_and_fold, frequency_channel, pseudo_observation, \
    per_subcarrier_ls, demap_and_demod
from .scene import AnglePair, steering_vector


def majority_vote(per_sat_activity: np.ndarray) -> np.ndarray:
    """Fuse per-satellite activity flags (Q, K): active when mean >= 0.5."""
    return (np.mean(np.asarray(per_sat_activity), axis=0) >= 0.5).astype(np.int64)


def cooperative_ls_frame(
    frames: list[np.ndarray],
    ts_bank: np.ndarray,
    cirms: list[np.ndarray],
    active: np.ndarray,
    cfg: FrameConfig,
) -> np.ndarray:
    """Joint LS detection of one frame from all satellites' observations.

    Stacks the cleaned frequency-domain observations and per-subcarrier
    channels over satellites (Q*N_r rows) and reuses the per-subcarrier LS
    solver. Returns bits (K_active, bits_per_frame).
    """
    y_parts, h_parts = [], []
    for frame, cirm_q in zip(frames, cirms):
        clean = cancel_and_fold(
            frame, pseudo_observation(ts_bank, cirm_q, active, cfg), cfg
        )
        y_parts.append(np.fft.fft(clean, axis=0, norm="ortho"))
        h_parts.append(frequency_channel(cirm_q, active, cfg))
    y_f = np.concatenate(y_parts, axis=1)
    h_f = np.concatenate(h_parts, axis=1)
    x_f = per_subcarrier_ls(y_f, h_f, cfg)
    return demap_and_demod(x_f, cfg)


def stacked_frequency_observation(
    frames: list[np.ndarray],
    ts_bank: np.ndarray,
    cirms: list[np.ndarray],
    active: np.ndarray,
    cfg: FrameConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Cleaned stacked observation and channel: ((N, Q*N_r), (N, Q*N_r, Ka))."""
    y_parts, h_parts = [], []
    for frame, cirm_q in zip(frames, cirms):
        clean = cancel_and_fold(
            frame, pseudo_observation(ts_bank, cirm_q, active, cfg), cfg
        )
        y_parts.append(np.fft.fft(clean, axis=0, norm="ortho"))
        h_parts.append(frequency_channel(cirm_q, active, cfg))
    return np.concatenate(y_parts, axis=1), np.concatenate(h_parts, axis=1)


def correlation_coefficient(
    gains_1: np.ndarray,
    gains_2: np.ndarray,
    delta_azimuth: float,
    num_antennas: int,
) -> float:
    """Channel correlation of two users over Q satellites.

    gains_*: (Q,) per-satellite aggregate complex gains; the array factor
    |sin(N_r d/2) / (N_r sin(d/2))| accounts for the angle offset between
    the users' steering vectors along one array axis.
    """
    num = np.abs(np.sum(np.conj(gains_1) * gains_2))
    den = np.sqrt(np.sum(np.abs(gains_1) ** 2) * np.sum(np.abs(gains_2) ** 2))
    if delta_azimuth == 0.0:
        af = 1.0
    else:
        d = delta_azimuth
        af = abs(np.sin(num_antennas * d / 2.0)
                 / (num_antennas * np.sin(d / 2.0)))
    return float(num / den * af) if den > 0 else 0.0


def correlation_samples(num_satellites: int, trials: int,
                        rng: np.random.Generator,
                        delta_azimuth: float = 0.0,
                        num_antennas: int = 10) -> np.ndarray:
    """Monte Carlo draws of the two-user correlation coefficient.

    Per-satellite aggregate gains are i.i.d. standard complex normal for
    each user; with one satellite and no angle offset the coefficient is
    exactly 1.
    """
    out = np.empty(trials)
    for t in range(trials):
        g1 = (rng.standard_normal(num_satellites)
              + 1j * rng.standard_normal(num_satellites)) / np.sqrt(2.0)
        g2 = (rng.standard_normal(num_satellites)
              + 1j * rng.standard_normal(num_satellites)) / np.sqrt(2.0)
        out[t] = correlation_coefficient(g1, g2, delta_azimuth, num_antennas)
    return out
