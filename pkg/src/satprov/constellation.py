"""Walker-delta LEO/MEO constellations on circular orbits.

Positions are Earth-centered Cartesian, in meters. The Earth is a sphere and
its frame does not rotate; only relative geometry matters downstream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MU_EARTH = 3.986004418e14  # m^3 / s^2
R_EARTH_KM = 6371.0
R_EARTH = R_EARTH_KM * 1000.0
V_LIGHT = 299792458.0  # m / s
VISIBILITY_MARGIN = 80_000.0  # m above the surface

LEO = "LEO"
MEO = "MEO"


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ShellConfig:
    altitude_km: float
    inclination_deg: float
    num_planes: int
    sats_per_plane: int
    phase_offset: float = 0.0

    def __post_init__(self):
        if not self.altitude_km > 0:
            raise ConfigurationError(f"altitude_km must be > 0, got {self.altitude_km}")
        if not 0.0 <= self.inclination_deg <= 180.0:
            raise ConfigurationError(f"inclination_deg out of [0, 180]: {self.inclination_deg}")
        if self.num_planes < 0 or self.sats_per_plane < 0:
            raise ConfigurationError("plane and satellite counts must be non-negative")
        if not 0.0 <= self.phase_offset < 1.0:
            raise ConfigurationError(f"phase_offset must lie in [0, 1), got {self.phase_offset}")

    @property
    def size(self) -> int:
        return self.num_planes * self.sats_per_plane

    @property
    def radius_m(self) -> float:
        return R_EARTH + self.altitude_km * 1000.0

    @property
    def mean_motion(self) -> float:
        """Angular rate of the circular orbit, rad/s."""
        return angular_rate(self.radius_m)

    def to_dict(self) -> dict:
        return {
            "altitude_km": self.altitude_km,
            "inclination_deg": self.inclination_deg,
            "num_planes": self.num_planes,
            "sats_per_plane": self.sats_per_plane,
            "phase_offset": self.phase_offset,
        }


@dataclass(frozen=True, order=True)
class SatelliteId:
    plane: str  # LEO or MEO
    index: int

    def __post_init__(self):
        if self.plane not in (LEO, MEO):
            raise ValueError(f"unknown satellite role {self.plane!r}")
        if self.index < 0:
            raise ValueError("satellite index must be non-negative")


def angular_rate(radius_m: float) -> float:
    return math.sqrt(MU_EARTH / radius_m**3)


def _split_count(n: int, plane_choices) -> tuple[int, int]:
    for planes in plane_choices:
        if planes <= n and n % planes == 0:
            return planes, n // planes
    return 1, n


def default_shells(n_leo: int, n_meo: int) -> tuple[ShellConfig, ShellConfig]:
    """Reference shells: 550 km / 53 deg LEO and 8000 km / 55 deg MEO.

    Plane counts are picked so that planes x sats hits the requested totals.
    """
    if n_leo < 1 or n_meo < 1:
        raise ConfigurationError("need at least one LEO and one MEO satellite")
    root = int(math.isqrt(n_leo))
    leo_planes, leo_per = _split_count(n_leo, range(root, 0, -1))
    meo_planes, meo_per = _split_count(n_meo, (4, 3, 2))
    leo = ShellConfig(550.0, 53.0, leo_planes, leo_per, 0.5 if leo_planes > 1 else 0.0)
    meo = ShellConfig(8000.0, 55.0, meo_planes, meo_per, 0.0)
    return leo, meo


@dataclass(frozen=True)
class Constellation:
    leo: ShellConfig
    meo: ShellConfig
    # per-satellite orbital elements, LEO rows first then MEO
    raan: np.ndarray = field(repr=False)
    anomaly0: np.ndarray = field(repr=False)
    inclination: np.ndarray = field(repr=False)
    radius: np.ndarray = field(repr=False)
    rate: np.ndarray = field(repr=False)

    @property
    def n_leo(self) -> int:
        return self.leo.size

    @property
    def n_meo(self) -> int:
        return self.meo.size

    @property
    def roster(self) -> list[SatelliteId]:
        return [SatelliteId(LEO, i) for i in range(self.n_leo)] + [
            SatelliteId(MEO, i) for i in range(self.n_meo)
        ]


def _shell_elements(shell: ShellConfig):
    P, S = shell.num_planes, shell.sats_per_plane
    plane = np.repeat(np.arange(P), S)
    slot = np.tile(np.arange(S), P)
    raan = 2.0 * np.pi * plane / P
    anomaly = 2.0 * np.pi * (slot + plane * shell.phase_offset) / S
    n = P * S
    return (
        raan,
        np.mod(anomaly, 2.0 * np.pi),
        np.full(n, math.radians(shell.inclination_deg)),
        np.full(n, shell.radius_m),
        np.full(n, shell.mean_motion),
    )


def build_constellation(leo: ShellConfig, meo: ShellConfig) -> Constellation:
    if leo.size < 1:
        raise ConfigurationError("LEO shell has zero satellites")
    if meo.size < 1:
        raise ConfigurationError("MEO shell has zero satellites")
    parts = [_shell_elements(leo), _shell_elements(meo)]
    arrays = [np.concatenate([p[k] for p in parts]) for k in range(5)]
    return Constellation(leo, meo, *arrays)


@dataclass(frozen=True)
class ConstellationSnapshot:
    slot: int
    slot_duration_s: float
    n_leo: int
    n_meo: int
    positions: np.ndarray = field(repr=False)  # (n_leo + n_meo, 3), meters
    meo_radius: float = field(default=0.0)
    _visibility: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def leo_positions(self) -> np.ndarray:
        return self.positions[: self.n_leo]

    @property
    def meo_positions(self) -> np.ndarray:
        return self.positions[self.n_leo :]

    def row(self, sat: SatelliteId) -> int:
        limit = self.n_leo if sat.plane == LEO else self.n_meo
        if sat.index >= limit:
            raise IndexError(f"{sat} not in roster")
        return sat.index if sat.plane == LEO else self.n_leo + sat.index

    @property
    def visibility(self) -> np.ndarray:
        """Symmetric boolean line-of-sight matrix over all satellites."""
        if self._visibility is None:
            object.__setattr__(self, "_visibility", visibility_matrix(self.positions))
        return self._visibility

    def leo_meo_distances(self) -> np.ndarray:
        """(n_leo, n_meo) slant ranges in meters."""
        diff = self.leo_positions[:, None, :] - self.meo_positions[None, :, :]
        return np.sqrt((diff**2).sum(-1))

    def meo_meo_distances(self) -> np.ndarray:
        diff = self.meo_positions[:, None, :] - self.meo_positions[None, :, :]
        return np.sqrt((diff**2).sum(-1))

    def to_dict(self) -> dict:
        return {
            "slot": self.slot,
            "slot_duration_s": self.slot_duration_s,
            "n_leo": self.n_leo,
            "n_meo": self.n_meo,
            "positions_m": self.positions.tolist(),
        }


def propagate(constellation: Constellation, t: int, slot_duration_s: float = 60.0) -> ConstellationSnapshot:
    if t < 0:
        raise ValueError("slot index must be non-negative")
    c = constellation
    u = c.anomaly0 + c.rate * (t * slot_duration_s)
    cos_u, sin_u = np.cos(u), np.sin(u)
    cos_o, sin_o = np.cos(c.raan), np.sin(c.raan)
    cos_i, sin_i = np.cos(c.inclination), np.sin(c.inclination)
    pos = np.stack(
        [
            cos_o * cos_u - sin_o * sin_u * cos_i,
            sin_o * cos_u + cos_o * sin_u * cos_i,
            sin_u * sin_i,
        ],
        axis=1,
    )
    pos *= c.radius[:, None]
    return ConstellationSnapshot(t, slot_duration_s, c.n_leo, c.n_meo, pos, c.meo.radius_m)


def distance(snapshot: ConstellationSnapshot, a: SatelliteId, b: SatelliteId) -> float:
    pa = snapshot.positions[snapshot.row(a)]
    pb = snapshot.positions[snapshot.row(b)]
    return float(math.sqrt(float(((pa - pb) ** 2).sum())))


def _segment_clear(pa: np.ndarray, pb: np.ndarray, radius: float) -> np.ndarray:
    # min distance from the origin to segment pa-pb, broadcast over leading dims
    d = pb - pa
    dd = (d * d).sum(-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(dd > 0, -(pa * d).sum(-1) / dd, 0.0)
    s = np.clip(s, 0.0, 1.0)
    closest = pa + s[..., None] * d
    return (closest * closest).sum(-1) > radius * radius


def is_visible(snapshot: ConstellationSnapshot, a: SatelliteId, b: SatelliteId) -> bool:
    if a == b:
        return False
    pa = snapshot.positions[snapshot.row(a)]
    pb = snapshot.positions[snapshot.row(b)]
    return bool(_segment_clear(pa, pb, R_EARTH + VISIBILITY_MARGIN))


def visibility_matrix(positions: np.ndarray) -> np.ndarray:
    n = len(positions)
    vis = np.zeros((n, n), dtype=bool)
    for i in range(n - 1):
        # row-wise keeps memory at O(n) per iteration for large rosters
        vis[i, i + 1 :] = _segment_clear(positions[i], positions[i + 1 :], R_EARTH + VISIBILITY_MARGIN)
    return vis | vis.T


def propagation_delay(d):
    """Straight-line light time in seconds for a distance in meters."""
    if np.any(np.asarray(d) < 0):
        raise ValueError("distance must be non-negative")
    return d / V_LIGHT
