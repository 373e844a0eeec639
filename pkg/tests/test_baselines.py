"""Tests for the SOMP and oracle-LS reference schemes."""

import numpy as np

from ra_sim import baselines, frames, scene


def _mmv_case(rng, K=20, Ka=4, P=2, L=6, G=48, n_r=8, noise_var=0.0):
    params = scene.ChannelParams(num_active=Ka, num_paths=P, max_delay=L)
    geo = scene.GeometryConfig(num_users=K, array_x=2, array_y=4)
    ch = scene.sample_channels(scene.sample_scene(geo, rng), params, rng)
    ts = frames.generate_ts_bank(K, G + L - 1, rng)
    psi = frames.build_sensing_matrix(ts, L)
    y = psi @ ch.cirm[0]
    if noise_var > 0:
        y = y + np.sqrt(noise_var / 2) * (rng.standard_normal(y.shape)
                                          + 1j * rng.standard_normal(y.shape))
    true_rows = np.flatnonzero(ch.true_row_support(0))
    return psi, y, ch, true_rows


class TestSomp:
    def test_noiseless_one_sparse(self):
        rng = np.random.default_rng(0)
        psi = rng.standard_normal((20, 30))
        h = np.zeros((30, 4), dtype=complex)
        h[11] = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        est, sup = baselines.somp(psi, psi @ h, 1e-12, max_atoms=5)
        np.testing.assert_array_equal(sup, [11])
        np.testing.assert_allclose(est, h, atol=1e-10)

    def test_zero_observation_empty_support(self):
        rng = np.random.default_rng(1)
        psi = rng.standard_normal((10, 20))
        est, sup = baselines.somp(psi, np.zeros((10, 3), dtype=complex),
                                  0.1, max_atoms=5)
        assert sup.size == 0
        np.testing.assert_array_equal(est, 0)

    def test_support_recall_high_snr(self):
        hits, total = 0, 0
        for seed in range(60):
            rng = np.random.default_rng(seed)
            psi, y, ch, true_rows = _mmv_case(rng, noise_var=1e-8)
            _, sup = baselines.somp(psi, y, 1e-8, max_atoms=len(true_rows))
            hits += len(set(sup) & set(true_rows))
            total += len(true_rows)
        assert hits / total >= 0.95

    def test_no_duplicates_and_monotone_residual(self):
        rng = np.random.default_rng(2)
        psi, y, _, _ = _mmv_case(rng, noise_var=0.01)
        est, sup = baselines.somp(psi, y, 0.01, max_atoms=12)
        assert len(sup) == len(set(sup.tolist()))
        # residual of the truncated fits shrinks as atoms accumulate
        norms = []
        for m in range(1, len(sup) + 1):
            _, picked = baselines.somp(psi, y, 0.0, max_atoms=m)
            coef, *_ = np.linalg.lstsq(psi[:, picked], y, rcond=None)
            norms.append(np.linalg.norm(y - psi[:, picked] @ coef))
        assert all(a >= b - 1e-9 for a, b in zip(norms, norms[1:]))


class TestOracleLs:
    def test_noiseless_exact(self):
        rng = np.random.default_rng(3)
        psi, y, ch, true_rows = _mmv_case(rng)
        est = baselines.oracle_ls(psi, y, true_rows)
        np.testing.assert_allclose(est, ch.cirm[0], atol=1e-9)

    def test_matches_restricted_pinv(self):
        rng = np.random.default_rng(4)
        psi, y, _, true_rows = _mmv_case(rng, noise_var=0.05)
        est = baselines.oracle_ls(psi, y, true_rows)
        dense = np.linalg.pinv(psi[:, true_rows]) @ y
        np.testing.assert_allclose(est[true_rows], dense, atol=1e-10)

    def test_empty_support_zero(self):
        rng = np.random.default_rng(5)
        psi, y, _, _ = _mmv_case(rng)
        est = baselines.oracle_ls(psi, y, np.array([], dtype=int))
        np.testing.assert_array_equal(est, 0)

    def test_nmse_slope_one_db_per_db(self):
        """LS error energy is proportional to the noise variance."""
        rng = np.random.default_rng(6)
        psi, clean, ch, true_rows = _mmv_case(rng)
        h = ch.cirm[0]
        nmses = []
        for snr_db in (10.0, 20.0, 30.0):
            nv = 10 ** (-snr_db / 10)
            vals = []
            for _ in range(20):
                y = clean + np.sqrt(nv / 2) * (
                    rng.standard_normal(clean.shape)
                    + 1j * rng.standard_normal(clean.shape))
                est = baselines.oracle_ls(psi, y, true_rows)
                vals.append(np.linalg.norm(est - h) ** 2 / np.linalg.norm(h) ** 2)
            nmses.append(10 * np.log10(np.mean(vals)))
        slopes = np.diff(nmses) / 10.0
        np.testing.assert_allclose(slopes, -1.0, atol=0.15)
