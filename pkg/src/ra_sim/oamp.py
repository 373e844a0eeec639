"""Orthogonal AMP for the multiple-measurement-vector problem.

Recovers the row-sparse stacked channel matrix H (K*L x N_r) from
Y = Psi H + noise with a Bernoulli-Gaussian prior, learning the prior
hyperparameters by EM and sharing row activity probabilities across
antennas. Also provides the energy-based support and active-user
detectors applied to the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .errors import NumericalError

_EPS = 1e-12


@dataclass
class SvdCache:
    """Thin SVD of the sensing matrix, reused across iterations and trials."""

    psi: np.ndarray
    u: np.ndarray       # (G, G)
    s: np.ndarray       # (G,)
    vh: np.ndarray      # (G, K*L)

    @classmethod
    def build(cls, psi: np.ndarray) -> "SvdCache":
        u, s, vh = np.linalg.svd(psi, full_matrices=False)
        return cls(psi=psi, u=u, s=s, vh=vh)


@dataclass
class OampResult:
    estimate: np.ndarray        # (K*L, N_r) posterior mean
    activity_prob: np.ndarray   # (K*L, N_r) per-entry support posterior
    iterations: int
    noise_scale: float          # final signal variance estimate v
    prior_mean: complex
    prior_var: float


def lmmse_matrix(cache: SvdCache, v: float, noise_var: float):
    """Trace-normalized LMMSE linear estimator W and its error traces."""
    s = cache.s
    n = cache.vh.shape[1]
    w_hat = s / (v * s * s + noise_var)
    c = n / np.sum(w_hat * s)
    tr_bb = np.sum((c * w_hat * s) ** 2) - n
    tr_ww = np.sum((c * w_hat) ** 2)
    return c * w_hat, tr_bb, tr_ww


def linear_estimate(cache: SvdCache, d: np.ndarray, y: np.ndarray, w_diag: np.ndarray) -> np.ndarray:
    """R = D + W (Y - Psi D) with W = V diag(w) U^H applied via the SVD."""
    resid = y - cache.psi @ d
    return d + cache.vh.conj().T @ (w_diag[:, None] * (cache.u.conj().T @ resid))


def scalar_posterior(r: np.ndarray, tau: float, rho: np.ndarray,
                     mu: complex, gamma: float):
    """Bernoulli-Gaussian posterior given r = x + CN(0, tau).

    Returns per-entry activity posterior lam, posterior mean xi, and
    posterior variance zeta.
    """
    tau = max(tau, _EPS)
    gamma = max(gamma, _EPS)
    llr = (np.log(tau / (tau + gamma))
           + np.abs(r) ** 2 / tau
           - np.abs(r - mu) ** 2 / (tau + gamma))
    with np.errstate(divide="ignore"):
        lam = expit(llr + logit(np.clip(rho, 0.0, 1.0)))
    a = (mu * tau + r * gamma) / (tau + gamma)
    b = tau * gamma / (tau + gamma)
    xi = lam * a
    zeta = lam * (np.abs(a) ** 2 + b) - np.abs(xi) ** 2
    return lam, xi, zeta


def run_oamp_mmv(
    cache: SvdCache,
    y: np.ndarray,
    noise_var: float,
    rho0: float = 0.1,
    max_iter: int = 50,
    tol: float = 1e-6,
    learn_prior: bool = True,
    damping: float = 0.7,
) -> OampResult:
    """Joint row-support detection and channel estimation on Y (G x N_r)."""
    g, n = cache.psi.shape
    n_r = y.shape[1]
    sum_s2 = float(np.sum(cache.s ** 2))
    col_energy = np.sum(np.abs(y) ** 2, axis=0)

    d = np.zeros((n, n_r), dtype=np.complex128)
    v = 1.0
    rho = np.full((n, n_r), float(np.clip(rho0, 1e-6, 1 - 1e-6)))
    mu = 0.0 + 0.0j
    gamma = float(np.clip(
        np.mean(np.maximum(col_energy - g * noise_var, _EPS)) / (sum_s2 * rho0 / n),
        _EPS, None,
    ))

    lam = np.zeros_like(rho)
    xi = np.zeros_like(d)
    iters = 0
    for it in range(max_iter):
        iters = it + 1
        w_hat, tr_bb, tr_ww = lmmse_matrix(cache, v, noise_var)
        r = linear_estimate(cache, d, y, w_hat)
        tau = max((tr_bb * v + tr_ww * noise_var) / n, _EPS)

        lam, xi, zeta = scalar_posterior(r, tau, rho, mu, gamma)

        # divergence-free nonlinear step, per antenna; the scaling
        # tau/(tau - zeta_bar) is capped to keep early iterations stable
        zeta_bar = np.mean(zeta, axis=0)
        denom = np.maximum(tau - zeta_bar, 0.02 * tau)
        d_new = (tau / denom) * (xi - (zeta_bar / tau) * r)
        d_new = damping * d_new + (1.0 - damping) * d

        resid = y - cache.psi @ d_new
        v_new = float(np.clip(
            (np.mean(np.sum(np.abs(resid) ** 2, axis=0)) - g * noise_var) / sum_s2,
            _EPS, None,
        ))
        v = float(np.exp(damping * np.log(v_new) + (1.0 - damping) * np.log(v)))

        if learn_prior:
            w = np.sum(lam)
            if w > _EPS:
                a = (mu * tau + r * gamma) / (tau + gamma)
                b = tau * gamma / (tau + gamma)
                mu_new = complex(np.sum(lam * a) / w)
                gamma = float(max(np.sum(lam * (np.abs(mu_new - a) ** 2 + b)) / w, _EPS))
                mu = mu_new
        rho = np.repeat(np.mean(lam, axis=1, keepdims=True), n_r, axis=1)

        delta = np.linalg.norm(d_new - d) / max(np.linalg.norm(d), _EPS)
        d = d_new
        if not np.all(np.isfinite(d)):
            raise NumericalError("OAMP state diverged (non-finite estimate)")
        if delta < tol:
            break

    if not np.all(np.isfinite(xi)):
        raise NumericalError("OAMP posterior mean is non-finite")
    return OampResult(estimate=xi, activity_prob=lam, iterations=iters,
                      noise_scale=v, prior_mean=mu, prior_var=gamma)


def detect_support(estimate: np.ndarray, threshold_frac: float = 0.02,
                   vote_threshold: float = 0.5) -> np.ndarray:
    """Row support from the channel estimate's per-antenna energies.

    A row is declared active when more than `vote_threshold` of the antennas
    see magnitude above `threshold_frac` times the peak magnitude.
    """
    mag = np.abs(estimate)
    eps = threshold_frac * mag.max() if mag.size else 0.0
    votes = np.mean(mag > eps, axis=1)
    return (votes > vote_threshold).astype(np.int64)


def detect_aus(row_support: np.ndarray, num_users: int, max_delay: int) -> np.ndarray:
    """Active-user flags: a user is active if any of its L rows is."""
    return (row_support.reshape(num_users, max_delay).sum(axis=1) > 0).astype(np.int64)
