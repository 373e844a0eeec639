"""Constellation geometry and sparse delay-angle channel generation.

Satellites sit above the vertices of an equilateral ground triangle (evenly
spaced on its circumcircle for satellite counts other than three); users are
dropped uniformly inside the triangle. Each terrestrial-satellite link is a
P-tap Rician channel whose taps all share one angle-of-arrival pair, so the
per-user block of the stacked channel matrix is rank one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_CARRIER_HZ = 14.5e9


@dataclass(frozen=True)
class GeometryConfig:
    num_satellites: int = 3
    altitude_km: float = 550.0
    triangle_side_km: float = 500.0
    num_users: int = 100
    array_x: int = 10
    array_y: int = 10

    def __post_init__(self):
        if self.num_satellites < 1:
            raise ConfigError("num_satellites must be >= 1")
        if self.num_users < 1:
            raise ConfigError("num_users must be >= 1")
        if self.array_x < 1 or self.array_y < 1:
            raise ConfigError("array dimensions must be >= 1")
        if self.altitude_km <= 0:
            raise ConfigError("altitude_km must be positive")
        if self.triangle_side_km <= 0:
            raise ConfigError("triangle_side_km must be positive")

    @property
    def num_antennas(self) -> int:
        return self.array_x * self.array_y


@dataclass(frozen=True)
class ChannelParams:
    num_active: int = 15
    num_paths: int = 3
    rice_factor: float = 10.0  # linear power ratio
    max_delay: int = 17
    carrier_wavelength: float = SPEED_OF_LIGHT / DEFAULT_CARRIER_HZ

    def __post_init__(self):
        if self.num_active < 0:
            raise ConfigError("num_active must be >= 0")
        if not 1 <= self.num_paths <= self.max_delay:
            raise ConfigError("need 1 <= num_paths <= max_delay")
        if self.rice_factor <= 0:
            raise ConfigError("rice_factor must be positive")

    @classmethod
    def with_rice_db(cls, rice_db: float, **kwargs) -> "ChannelParams":
        return cls(rice_factor=10.0 ** (rice_db / 10.0), **kwargs)


@dataclass(frozen=True)
class AnglePair:
    azimuth: float
    elevation: float


@dataclass(frozen=True)
class Scene:
    geometry: GeometryConfig
    sat_positions: np.ndarray   # (Q, 3) metres, ECEF-like local frame
    user_positions: np.ndarray  # (K, 3) metres, z = 0
    azimuth: np.ndarray         # (K, Q) radians, array frame
    elevation: np.ndarray       # (K, Q) radians in [0, pi/2)


def _ground_triangle(side_m: float) -> np.ndarray:
    """Vertices of the equilateral ground triangle, centroid at the origin."""
    radius = side_m / np.sqrt(3.0)
    angles = np.deg2rad([90.0, 210.0, 330.0])
    return np.stack(
        [radius * np.cos(angles), radius * np.sin(angles), np.zeros(3)], axis=1
    )


def _array_frame(sat_pos: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal (x, y, z) axes with z pointing from the satellite to the centroid."""
    z = -sat_pos / np.linalg.norm(sat_pos)
    x = np.cross([0.0, 0.0, 1.0], z)
    nx = np.linalg.norm(x)
    if nx < 1e-12:  # satellite directly above the centroid
        x = np.array([1.0, 0.0, 0.0])
    else:
        x = x / nx
    y = np.cross(z, x)
    return x, y, z


def sample_scene(geom: GeometryConfig, rng: np.random.Generator) -> Scene:
    """Draw satellite/user geometry and the per-link boresight-frame AoAs."""
    side = geom.triangle_side_km * 1e3
    alt = geom.altitude_km * 1e3
    verts = _ground_triangle(side)

    radius = side / np.sqrt(3.0)
    psi = np.deg2rad(90.0) + 2.0 * np.pi * np.arange(geom.num_satellites) / geom.num_satellites
    sats = np.stack(
        [radius * np.cos(psi), radius * np.sin(psi), np.full(geom.num_satellites, alt)],
        axis=1,
    )

    r1 = rng.random(geom.num_users)
    r2 = rng.random(geom.num_users)
    s1 = np.sqrt(r1)
    users = (
        np.outer(1.0 - s1, verts[0])
        + np.outer(s1 * (1.0 - r2), verts[1])
        + np.outer(s1 * r2, verts[2])
    )

    az = np.empty((geom.num_users, geom.num_satellites))
    el = np.empty_like(az)
    for q in range(geom.num_satellites):
        ax, ay, azax = _array_frame(sats[q])
        d = users - sats[q]
        d = d / np.linalg.norm(d, axis=1, keepdims=True)
        cos_el = np.clip(d @ azax, -1.0, 1.0)
        el[:, q] = np.arccos(cos_el)
        az[:, q] = np.arctan2(d @ ay, d @ ax)
    return Scene(geom, sats, users, az, el)


def steering_vector(angles: AnglePair, n_x: int, n_y: int) -> np.ndarray:
    """Unit-modulus UPA response v_y(angles) kron v_x(angles), antenna spacing λ/2."""
    mu_x = np.pi * np.cos(angles.azimuth) * np.sin(angles.elevation)
    mu_y = np.pi * np.sin(angles.azimuth) * np.sin(angles.elevation)
    vx = np.exp(-1j * mu_x * np.arange(n_x))
    vy = np.exp(-1j * mu_y * np.arange(n_y))
    return np.kron(vy, vx)


def sample_activity(num_users: int, num_active: int, rng: np.random.Generator) -> np.ndarray:
    """Binary activity vector with exactly `num_active` ones on a uniform support."""
    if num_active > num_users:
        raise ConfigError("num_active cannot exceed num_users")
    alpha = np.zeros(num_users, dtype=np.int64)
    if num_active:
        alpha[rng.choice(num_users, size=num_active, replace=False)] = 1
    return alpha


def sample_cir(params: ChannelParams, rng: np.random.Generator):
    """One sparse Rician impulse response.

    Returns (tap delays, tap gains, dense length-L vector). The first listed tap
    is the line-of-sight one; its delay is uniform over the slots that leave room
    for the later NLOS taps.
    """
    L, P, kf = params.max_delay, params.num_paths, params.rice_factor
    if P == 1:
        delays = np.array([rng.integers(0, L)])
        gains = np.array([1.0 + 0.0j])
    else:
        los = int(rng.integers(0, L - P + 1))
        nlos = los + 1 + rng.choice(L - 1 - los, size=P - 1, replace=False)
        delays = np.concatenate([[los], np.sort(nlos)])
        sigma2 = 1.0 / ((kf + 1.0) * (P - 1))
        nlos_gains = np.sqrt(sigma2 / 2.0) * (
            rng.standard_normal(P - 1) + 1j * rng.standard_normal(P - 1)
        )
        gains = np.concatenate([[np.sqrt(kf / (kf + 1.0))], nlos_gains])
    h = np.zeros(L, dtype=np.complex128)
    h[delays] = gains
    return delays, gains, h


@dataclass(frozen=True)
class ChannelRealization:
    activity: np.ndarray          # (K,) binary
    active_set: np.ndarray        # sorted active indices
    cirm: list                    # Q arrays, each (K*L, N_r)
    azimuth: np.ndarray           # (K, Q)
    elevation: np.ndarray         # (K, Q)
    tap_delays: dict = field(repr=False)  # (k, q) -> delay array (active users only)
    tap_gains: dict = field(repr=False)   # (k, q) -> gain array
    max_delay: int = 0

    @property
    def num_users(self) -> int:
        return self.activity.size

    @property
    def num_satellites(self) -> int:
        return len(self.cirm)

    def true_row_support(self, q: int) -> np.ndarray:
        """Binary row-support vector of the stacked channel at satellite q."""
        L = self.max_delay
        kappa = np.zeros(self.num_users * L, dtype=np.int64)
        for k in self.active_set:
            kappa[k * L + self.tap_delays[(int(k), q)]] = 1
        return kappa


def build_cirm(
    activity: np.ndarray,
    cirs: np.ndarray,
    steerings: np.ndarray,
) -> np.ndarray:
    """Stack per-user blocks h_k outer a_k into one (K*L, N_r) matrix.

    cirs: (K, L) dense impulse responses; steerings: (K, N_r).
    Inactive users contribute all-zero blocks.
    """
    K, L = cirs.shape
    n_r = steerings.shape[1]
    out = np.zeros((K * L, n_r), dtype=np.complex128)
    for k in np.flatnonzero(activity):
        out[k * L : (k + 1) * L] = np.outer(cirs[k], steerings[k])
    return out


def sample_channels(
    scene: Scene,
    params: ChannelParams,
    rng: np.random.Generator,
    random_angles: bool = False,
) -> ChannelRealization:
    """Full channel realization for every satellite.

    With random_angles=True the AoAs are drawn i.i.d. instead of taken from the
    geometry (useful for unit tests that need angle diversity).
    """
    geom = scene.geometry
    K, Q, L = geom.num_users, geom.num_satellites, params.max_delay
    activity = sample_activity(K, params.num_active, rng)
    active = np.flatnonzero(activity)

    if random_angles:
        az = rng.uniform(-np.pi, np.pi, size=(K, Q))
        el = rng.uniform(0.05, 0.45 * np.pi, size=(K, Q))
    else:
        az, el = scene.azimuth, scene.elevation

    cirm = []
    tap_delays: dict = {}
    tap_gains: dict = {}
    for q in range(Q):
        cirs = np.zeros((K, L), dtype=np.complex128)
        steer = np.zeros((K, geom.num_antennas), dtype=np.complex128)
        for k in active:
            delays, gains, h = sample_cir(params, rng)
            tap_delays[(int(k), q)] = delays
            tap_gains[(int(k), q)] = gains
            cirs[k] = h
            steer[k] = steering_vector(
                AnglePair(az[k, q], el[k, q]), geom.array_x, geom.array_y
            )
        cirm.append(build_cirm(activity, cirs, steer))
    return ChannelRealization(
        activity=activity,
        active_set=active,
        cirm=cirm,
        azimuth=az,
        elevation=el,
        tap_delays=tap_delays,
        tap_gains=tap_gains,
        max_delay=L,
    )


def dump_realization(real: ChannelRealization, path) -> None:
    """Write the stacked channel matrices as text, complex entries as re/im pairs."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"satellites {real.num_satellites}\n")
        fh.write(f"rows {real.cirm[0].shape[0]} cols {real.cirm[0].shape[1]}\n")
        fh.write("activity " + " ".join(str(int(a)) for a in real.activity) + "\n")
        for q, h in enumerate(real.cirm):
            fh.write(f"satellite {q}\n")
            for row in h:
                fh.write(
                    " ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row) + "\n"
                )


def load_realization_matrices(path) -> list:
    """Read back the matrices written by dump_realization."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    n_sat = int(lines[0].split()[1])
    rows, cols = int(lines[1].split()[1]), int(lines[1].split()[3])
    out = []
    idx = 3
    for _ in range(n_sat):
        idx += 1  # satellite header
        block = np.empty((rows, cols), dtype=np.complex128)
        for r in range(rows):
            vals = np.array(lines[idx + r].split(), dtype=np.float64)
            block[r] = vals[0::2] + 1j * vals[1::2]
        idx += rows
        out.append(block)
    return out
