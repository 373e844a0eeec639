"""Unitary 2D ESPRIT refinement of per-user array responses.

For each detected user the row block of the channel estimate is a noisy
rank-one outer product of delay-tap gains and a uniform-planar-array
steering vector. Spatial smoothing plus a real-valued (unitary) ESPRIT
recovers the two spatial frequencies, from which azimuth and elevation
follow; the tap gains are then re-fit by least squares and the block is
replaced by the clean rank-one reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .scene import AnglePair, steering_vector

_EPS = 1e-12


def unitary_transform(m: int) -> np.ndarray:
    """Sparse left-Pi-real transform Q_m mapping centro-Hermitian to real."""
    k = m // 2
    i_k = np.eye(k)
    pi_k = np.fliplr(i_k)
    if m % 2 == 0:
        top = np.hstack([i_k, 1j * i_k])
        bot = np.hstack([pi_k, -1j * pi_k])
        return np.vstack([top, bot]) / np.sqrt(2.0)
    z = np.zeros((k, 1))
    top = np.hstack([i_k, z, 1j * i_k])
    mid = np.hstack([z.T, [[np.sqrt(2.0)]], z.T])
    bot = np.hstack([pi_k, z, -1j * pi_k])
    return np.vstack([top, mid, bot]) / np.sqrt(2.0)


def _shift_pair(m_sub: int) -> np.ndarray:
    """Second selection matrix J2 (rows 1..m_sub-1) of size (m_sub-1, m_sub)."""
    return np.eye(m_sub)[1:]


def spatial_smooth(block: np.ndarray, n_x: int, n_y: int,
                   g_x: int, g_y: int) -> tuple[np.ndarray, int, int]:
    """Forward spatial smoothing of an (L, N_x*N_y) block.

    Splits the array into overlapping (m_sy, m_sx) subarrays and stacks the
    corresponding snapshot matrices side by side. Antenna index j = iy*N_x+ix.
    Returns (smoothed (m_sy*m_sx, L*G_x*G_y), m_sx, m_sy).
    """
    m_sx = n_x - g_x + 1
    m_sy = n_y - g_y + 1
    if m_sx < 2 or m_sy < 2:
        raise ConfigError("subarray must span at least 2 elements per axis")
    x3 = block.T.reshape(n_y, n_x, block.shape[0])
    panels = []
    for gy in range(g_y):
        for gx in range(g_x):
            sub = x3[gy : gy + m_sy, gx : gx + m_sx, :]
            panels.append(sub.reshape(m_sy * m_sx, -1))
    return np.hstack(panels), m_sx, m_sy


def dominant_left_vector(mat: np.ndarray, tol: float = 1e-10,
                         max_iter: int = 500) -> np.ndarray:
    """Top left singular vector of a real matrix by power iteration on A A^T."""
    gram = mat @ mat.T
    norms = np.linalg.norm(mat, axis=1)
    e = gram[:, int(np.argmax(norms))] if mat.size else np.zeros(gram.shape[0])
    nrm = np.linalg.norm(e)
    if nrm < _EPS:
        e = np.zeros(gram.shape[0])
        e[0] = 1.0
    else:
        e = e / nrm
    for _ in range(max_iter):
        e_new = gram @ e
        nrm = np.linalg.norm(e_new)
        if nrm < _EPS:
            break
        e_new /= nrm
        if np.linalg.norm(e_new - e) < tol:
            e = e_new
            break
        e = e_new
    return e


@dataclass
class EspritResult:
    angles: AnglePair
    mu_x: float
    mu_y: float
    valid: bool


def esprit_2d(block: np.ndarray, n_x: int, n_y: int,
              g_x: int = 3, g_y: int = 3) -> EspritResult:
    """Estimate the spatial frequencies of one user's channel block."""
    smoothed, m_sx, m_sy = spatial_smooth(block, n_x, n_y, g_x, g_y)
    q_big = np.kron(unitary_transform(m_sy), unitary_transform(m_sx))
    y_bar = q_big.conj().T @ smoothed
    e = dominant_left_vector(np.hstack([y_bar.real, y_bar.imag]))

    j2x = _shift_pair(m_sx)
    j2y = _shift_pair(m_sy)
    tx = unitary_transform(m_sx - 1).conj().T @ j2x @ unitary_transform(m_sx)
    ty = unitary_transform(m_sy - 1).conj().T @ j2y @ unitary_transform(m_sy)
    k_mu1 = np.kron(np.eye(m_sy), tx.real)
    k_mu2 = np.kron(np.eye(m_sy), tx.imag)
    k_nu1 = np.kron(ty.real, np.eye(m_sx))
    k_nu2 = np.kron(ty.imag, np.eye(m_sx))

    mu = _half_freq(k_mu1, k_mu2, e)
    nu = _half_freq(k_nu1, k_nu2, e)
    if mu is None or nu is None:
        return EspritResult(AnglePair(0.0, 0.0), 0.0, 0.0, False)

    # steering phases are exp(-j n mu): the real-ESPRIT recursion returns
    # tan(mu/2) of the underlying exp(+j n mu) model, hence the sign flips
    mu_x = -mu
    mu_y = -nu
    radius = np.hypot(mu_x, mu_y) / np.pi
    valid = radius <= 1.0 + 1e-9
    azimuth = float(np.arctan2(mu_y, mu_x))
    elevation = float(np.arcsin(np.clip(radius, 0.0, 1.0)))
    return EspritResult(AnglePair(azimuth, elevation), mu_x, mu_y, valid)


def _half_freq(k1: np.ndarray, k2: np.ndarray, e: np.ndarray):
    num = k1 @ e
    den = float(num @ num)
    if den < _EPS:
        return None
    omega = float((k2 @ e) @ num) / den
    return 2.0 * np.arctan(omega)


def estimate_gains(block: np.ndarray, steering: np.ndarray) -> np.ndarray:
    """Least-squares tap gains for a fixed steering vector: (L,)."""
    denom = float(np.real(steering.conj() @ steering))
    return (block @ steering.conj()) / max(denom, _EPS)


def refine_estimate(
    estimate: np.ndarray,
    row_support: np.ndarray,
    num_users: int,
    max_delay: int,
    n_x: int,
    n_y: int,
    g_x: int = 3,
    g_y: int = 3,
) -> tuple[np.ndarray, dict[int, AnglePair]]:
    """Rank-one angle-domain refinement of the stacked channel estimate.

    Users with no detected rows are zeroed; users whose angle estimate is
    degenerate keep their unrefined rows. Returns the refined matrix and the
    per-user estimated angles.
    """
    refined = np.zeros_like(estimate)
    angles: dict[int, AnglePair] = {}
    sup = row_support.reshape(num_users, max_delay)
    for k in range(num_users):
        taps = np.flatnonzero(sup[k])
        if taps.size == 0:
            continue
        rows = slice(k * max_delay, (k + 1) * max_delay)
        block = estimate[rows][taps]
        res = esprit_2d(block, n_x, n_y, g_x, g_y)
        if not res.valid:
            refined[rows] = estimate[rows]
            continue
        a = steering_vector(res.angles, n_x, n_y)
        gains = estimate_gains(block, a)
        out = np.zeros((max_delay, n_x * n_y), dtype=np.complex128)
        out[taps] = np.outer(gains, a)
        refined[rows] = out
        angles[k] = res.angles
    return refined, angles
