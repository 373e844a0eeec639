"""Tests for geometry, channel sampling, and steering vectors."""

import numpy as np
import pytest

from ra_sim.errors import ConfigError
from ra_sim import scene


class TestGeometryConfig:
    def test_defaults(self):
        geo = scene.GeometryConfig()
        assert geo.num_satellites == 3
        assert geo.num_antennas == 100

    def test_rejects_bad_counts(self):
        with pytest.raises(ConfigError):
            scene.GeometryConfig(num_satellites=0)
        with pytest.raises(ConfigError):
            scene.GeometryConfig(array_x=0)
        with pytest.raises(ConfigError):
            scene.GeometryConfig(num_users=-1)


class TestSampleScene:
    def test_shapes_and_altitude(self):
        rng = np.random.default_rng(0)
        geo = scene.GeometryConfig(num_users=25)
        scn = scene.sample_scene(geo, rng)
        assert scn.sat_positions.shape == (3, 3)
        assert scn.user_positions.shape == (25, 3)
        np.testing.assert_allclose(scn.sat_positions[:, 2], 550e3)
        assert scn.azimuth.shape == (25, 3)
        assert scn.elevation.shape == (25, 3)

    def test_users_inside_triangle(self):
        rng = np.random.default_rng(1)
        geo = scene.GeometryConfig(num_users=500, triangle_side_km=500)
        scn = scene.sample_scene(geo, rng)
        # all users within the circumcircle of the service triangle
        radius = 500e3 / np.sqrt(3.0)
        dist = np.linalg.norm(scn.user_positions[:, :2], axis=1)
        assert np.all(dist <= radius + 1e-6)
        assert np.all(scn.user_positions[:, 2] == 0)

    def test_elevations_in_range(self):
        rng = np.random.default_rng(2)
        scn = scene.sample_scene(scene.GeometryConfig(num_users=200), rng)
        assert np.all(scn.elevation >= 0)
        assert np.all(scn.elevation < np.pi / 2)

    def test_more_satellites_supported(self):
        rng = np.random.default_rng(3)
        geo = scene.GeometryConfig(num_satellites=5, num_users=10)
        scn = scene.sample_scene(geo, rng)
        assert scn.sat_positions.shape == (5, 3)


class TestSteeringVector:
    def test_unit_modulus_and_shape(self):
        ang = scene.AnglePair(0.7, 0.4)
        v = scene.steering_vector(ang, 4, 5)
        assert v.shape == (20,)
        np.testing.assert_allclose(np.abs(v), 1.0)

    def test_separable_structure(self):
        """Antenna (ix, iy) phase is the product of the two axis phases."""
        ang = scene.AnglePair(-1.1, 0.9)
        n_x, n_y = 3, 4
        v = scene.steering_vector(ang, n_x, n_y)
        mu_x = np.pi * np.cos(ang.azimuth) * np.sin(ang.elevation)
        mu_y = np.pi * np.sin(ang.azimuth) * np.sin(ang.elevation)
        for iy in range(n_y):
            for ix in range(n_x):
                expect = np.exp(-1j * (ix * mu_x + iy * mu_y))
                assert abs(v[iy * n_x + ix] - expect) < 1e-12

    def test_boresight_is_constant(self):
        v = scene.steering_vector(scene.AnglePair(0.3, 0.0), 4, 4)
        np.testing.assert_allclose(v, 1.0)


class TestChannelSampling:
    def test_activity_exact_count(self):
        rng = np.random.default_rng(4)
        act = scene.sample_activity(50, 7, rng)
        assert act.sum() == 7
        assert set(np.unique(act)) <= {0, 1}

    def test_activity_rejects_excess(self):
        rng = np.random.default_rng(5)
        with pytest.raises(ConfigError):
            scene.sample_activity(5, 6, rng)

    def test_cir_unit_mean_energy(self):
        """Average CIR energy is one: LOS and NLOS variances sum to 1."""
        rng = np.random.default_rng(6)
        params = scene.ChannelParams(num_paths=3, max_delay=17)
        energies = [np.sum(np.abs(scene.sample_cir(params, rng)[2]) ** 2)
                    for _ in range(4000)]
        assert abs(np.mean(energies) - 1.0) < 0.02

    def test_cir_structure(self):
        rng = np.random.default_rng(7)
        params = scene.ChannelParams(num_paths=3, max_delay=17)
        for _ in range(50):
            delays, gains, dense = scene.sample_cir(params, rng)
            assert len(delays) == 3
            assert len(np.unique(delays)) == 3
            # first tap is the line-of-sight one: real, positive, strongest
            assert delays[0] == min(delays)
            assert gains[0].imag == 0
            assert gains[0].real > 0
            assert np.flatnonzero(dense).size == 3

    def test_single_path_unit_tap(self):
        rng = np.random.default_rng(8)
        params = scene.ChannelParams(num_paths=1, max_delay=9)
        _, gains, dense = scene.sample_cir(params, rng)
        np.testing.assert_allclose(np.abs(gains), 1.0)
        np.testing.assert_allclose(np.sum(np.abs(dense) ** 2), 1.0)

    def test_rice_db_conversion(self):
        params = scene.ChannelParams.with_rice_db(rice_db=10.0)
        assert abs(params.rice_factor - 10.0) < 1e-12


class TestChannelRealization:
    def _make(self, seed=9):
        rng = np.random.default_rng(seed)
        geo = scene.GeometryConfig(num_users=12, array_x=3, array_y=3)
        params = scene.ChannelParams(num_active=4, num_paths=2, max_delay=6)
        scn = scene.sample_scene(geo, rng)
        return scene.sample_channels(scn, params, rng), geo, params

    def test_cirm_block_structure(self):
        ch, geo, params = self._make()
        L, n_r = params.max_delay, geo.num_antennas
        for q in range(geo.num_satellites):
            blocks = ch.cirm[q].reshape(geo.num_users, L, n_r)
            inactive = np.flatnonzero(ch.activity == 0)
            np.testing.assert_array_equal(blocks[inactive], 0)
            for k in ch.active_set:
                assert np.linalg.norm(blocks[k]) > 0
                # rank one: tap gains times one steering vector
                mat = blocks[k][np.flatnonzero(ch.true_row_support(q)
                                               [k * L:(k + 1) * L])]
                s = np.linalg.svd(mat, compute_uv=False)
                assert s[1] / s[0] < 1e-10

    def test_row_support_matches_cirm(self):
        ch, geo, params = self._make(10)
        for q in range(geo.num_satellites):
            sup = ch.true_row_support(q)
            norms = np.linalg.norm(ch.cirm[q], axis=1)
            np.testing.assert_array_equal(sup, (norms > 0).astype(int))

    def test_deterministic(self):
        a, _, _ = self._make(11)
        b, _, _ = self._make(11)
        np.testing.assert_array_equal(a.activity, b.activity)
        for q in range(3):
            np.testing.assert_array_equal(a.cirm[q], b.cirm[q])


class TestRealizationIO:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(12)
        geo = scene.GeometryConfig(num_users=6, array_x=2, array_y=2)
        params = scene.ChannelParams(num_active=2, num_paths=2, max_delay=4)
        ch = scene.sample_channels(scene.sample_scene(geo, rng), params, rng)
        path = tmp_path / "real.txt"
        scene.dump_realization(ch, str(path))
        mats = scene.load_realization_matrices(str(path))
        assert len(mats) == geo.num_satellites
        for q in range(geo.num_satellites):
            np.testing.assert_allclose(mats[q], ch.cirm[q], atol=1e-12)
