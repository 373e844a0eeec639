"""Activity, channel-estimation, and bit-error metrics."""

from __future__ import annotations

import numpy as np

NMSE_FLOOR_DB = -120.0


def nmse_db(estimates: list[np.ndarray], truths: list[np.ndarray]) -> float:
    """NMSE in dB over the concatenation of all satellites' channels."""
    err = sum(float(np.sum(np.abs(e - t) ** 2)) for e, t in zip(estimates, truths))
    ref = sum(float(np.sum(np.abs(t) ** 2)) for t in truths)
    if ref <= 0:
        return NMSE_FLOOR_DB
    ratio = err / ref
    if ratio <= 10.0 ** (NMSE_FLOOR_DB / 10.0):
        return NMSE_FLOOR_DB
    return float(10.0 * np.log10(ratio))


def aep(estimated: np.ndarray, truth: np.ndarray) -> float:
    """Activity error probability: mean disagreement of activity bits.

    Accepts (K,) fused flags or (Q, K) per-satellite flags; the latter
    averages over both users and satellites.
    """
    a = np.asarray(estimated)
    t = np.broadcast_to(np.asarray(truth), a.shape)
    return float(np.mean(a != t))


def ber(bit_errors_detected: int, detected_active: np.ndarray,
        true_active: np.ndarray, bits_per_user: int) -> float:
    """BER counting every bit of a missed user as lost.

    bit_errors_detected: errors among correctly detected active users;
    missed users (active but undetected) contribute all their bits.
    """
    det = np.asarray(detected_active).astype(bool)
    tru = np.asarray(true_active).astype(bool)
    total = int(tru.sum()) * bits_per_user
    if total == 0:
        return float("nan")
    missed = int(np.sum(tru & ~det)) * bits_per_user
    return (bit_errors_detected + missed) / total
