"""Reference recovery schemes: greedy SOMP and a support-oracle LS fit."""

from __future__ import annotations

import numpy as np


def somp(psi: np.ndarray, y: np.ndarray, noise_var: float,
         max_atoms: int, slack: float = 1.05) -> tuple[np.ndarray, np.ndarray]:
    """Simultaneous orthogonal matching pursuit with a joint LS refit.

    Picks columns by the summed correlation magnitude across measurement
    vectors, stops when the residual reaches the expected noise floor or
    `max_atoms` columns are selected. Returns (estimate (KL, N_r), support
    indices).
    """
    g, n = psi.shape
    n_r = y.shape[1]
    col_norm = np.maximum(np.linalg.norm(psi, axis=0), 1e-12)
    floor = np.sqrt(g * n_r * noise_var) * slack
    support: list[int] = []
    resid = y.copy()
    est = np.zeros((n, n_r), dtype=np.complex128)
    for _ in range(min(max_atoms, g, n)):
        if np.linalg.norm(resid) <= floor:
            break
        score = np.sum(np.abs(psi.conj().T @ resid), axis=1) / col_norm
        score[support] = -np.inf
        support.append(int(np.argmax(score)))
        sub = psi[:, support]
        coef, *_ = np.linalg.lstsq(sub, y, rcond=None)
        resid = y - sub @ coef
    if support:
        est[support] = coef
    idx = np.array(sorted(support), dtype=np.int64)
    return est, idx


def oracle_ls(psi: np.ndarray, y: np.ndarray, support: np.ndarray) -> np.ndarray:
    """LS restricted to the true row support; genie-aided benchmark."""
    n = psi.shape[1]
    n_r = y.shape[1]
    est = np.zeros((n, n_r), dtype=np.complex128)
    sup = np.asarray(support, dtype=np.int64)
    if sup.size:
        coef, *_ = np.linalg.lstsq(psi[:, sup], y, rcond=None)
        est[sup] = coef
    return est
