"""Far-field, near-field, and hybrid channel models for a uniform linear array.

The array is a ULA of M elements on the y-axis with spacing d. A propagation
path is either far-field (planar wavefront, parameterized by an angle) or
near-field (spherical wavefront, parameterized by angle and scatter distance).
A channel realization is h = A @ g where A stacks the per-path steering
vectors scaled by sqrt(M/L) and g holds i.i.d. circularly-symmetric complex
Gaussian path gains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeding import make_rng, mix_seed

SPEED_OF_LIGHT = 299_792_458.0

_HALF_PI = np.pi / 2.0


@dataclass
class ArrayConfig:
    """Uniform linear array geometry.

    spacing defaults to half a wavelength. spacing == 0 (collocated
    elements) is degenerate but well defined and kept constructible.
    carrier_freq is informational; it defaults to c / wavelength.
    """

    num_antennas: int
    wavelength: float
    spacing: float | None = None
    carrier_freq: float | None = None

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ValueError(f"num_antennas must be >= 1, got {self.num_antennas}")
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be > 0, got {self.wavelength}")
        if self.spacing is None:
            self.spacing = self.wavelength / 2.0
        if self.spacing < 0:
            raise ValueError(f"spacing must be >= 0, got {self.spacing}")
        if self.carrier_freq is None:
            self.carrier_freq = SPEED_OF_LIGHT / self.wavelength
        if not self.carrier_freq > 0:
            raise ValueError(f"carrier_freq must be > 0, got {self.carrier_freq}")


@dataclass
class PathSet:
    """Path parameters of one channel realization.

    far_angles holds the L_f far-field angles. near_angles / near_distances
    hold the L_n near-field (angle, distance) pairs. All angles are radians
    in [-pi/2, pi/2]; distances are meters > 0. At least one path total.
    """

    far_angles: np.ndarray
    near_angles: np.ndarray
    near_distances: np.ndarray
    gain_variance: float = 1.0

    def __post_init__(self):
        self.far_angles = np.atleast_1d(np.asarray(self.far_angles, dtype=np.float64))
        self.near_angles = np.atleast_1d(np.asarray(self.near_angles, dtype=np.float64))
        self.near_distances = np.atleast_1d(
            np.asarray(self.near_distances, dtype=np.float64)
        )
        if self.near_angles.shape != self.near_distances.shape:
            raise ValueError(
                "near_angles and near_distances must pair up, got shapes "
                f"{self.near_angles.shape} and {self.near_distances.shape}"
            )
        if self.num_paths < 1:
            raise ValueError("a PathSet needs at least one path")
        for name, arr in (("far", self.far_angles), ("near", self.near_angles)):
            if arr.size and (np.any(arr < -_HALF_PI) or np.any(arr > _HALF_PI)):
                raise ValueError(f"{name} angles must lie in [-pi/2, pi/2]")
        if self.near_distances.size and not np.all(self.near_distances > 0):
            raise ValueError("near-field distances must be > 0")
        if not self.gain_variance > 0:
            raise ValueError(f"gain_variance must be > 0, got {self.gain_variance}")

    @property
    def num_far(self) -> int:
        return int(self.far_angles.size)

    @property
    def num_near(self) -> int:
        return int(self.near_angles.size)

    @property
    def num_paths(self) -> int:
        return self.num_far + self.num_near


@dataclass
class ChannelRealization:
    """One clean channel draw plus everything needed to reproduce it."""

    h: np.ndarray
    paths: PathSet
    gains: np.ndarray
    seed: int


@dataclass
class ScenarioSpec:
    """Sampling distribution for channel realizations.

    far_paths / near_paths are either a fixed count or an inclusive
    (low, high) range for a uniform integer draw. Draws where both counts
    come out zero are resampled, so at least one of the two specs must be
    able to produce a nonzero count.
    """

    far_paths: int | tuple[int, int] = 0
    near_paths: int | tuple[int, int] = 0
    angle_range: tuple[float, float] = (-_HALF_PI, _HALF_PI)
    distance_range: tuple[float, float] = (10.0, 80.0)
    gain_variance: float = 1.0

    def __post_init__(self):
        for name in ("far_paths", "near_paths"):
            val = getattr(self, name)
            if isinstance(val, int):
                if val < 0:
                    raise ValueError(f"{name} must be >= 0, got {val}")
            else:
                lo, hi = val
                if lo < 0 or hi < lo:
                    raise ValueError(f"{name} range must satisfy 0 <= low <= high")
        if self._max_count("far_paths") + self._max_count("near_paths") == 0:
            raise ValueError("scenario can never draw a path; L_f + L_n would be 0")
        lo, hi = self.angle_range
        if not (-_HALF_PI <= lo <= hi <= _HALF_PI):
            raise ValueError("angle_range must lie within [-pi/2, pi/2]")
        lo, hi = self.distance_range
        if not (0 < lo <= hi):
            raise ValueError("distance_range must satisfy 0 < low <= high")
        if not self.gain_variance > 0:
            raise ValueError(f"gain_variance must be > 0, got {self.gain_variance}")

    def _max_count(self, name: str) -> int:
        val = getattr(self, name)
        return val if isinstance(val, int) else val[1]


def rayleigh_distance(cfg: ArrayConfig) -> float:
    """Boundary between the near-field and far-field regions, in meters."""
    return 0.5 * cfg.num_antennas**2 * cfg.wavelength


def far_steering_vector(cfg: ArrayConfig, phi: float) -> np.ndarray:
    """Unit-norm plane-wave steering vector for angle phi.

    Element m (m = 0..M-1) is (1/sqrt(M)) * exp(+1j * 2*pi * (d/lam) * m *
    sin(phi)). The phase sign is fixed by requiring that the spherical-wave
    vector of near_steering_vector converge to this one as the scatter
    distance grows.
    """
    if not -_HALF_PI <= phi <= _HALF_PI:
        raise ValueError(f"phi must lie in [-pi/2, pi/2], got {phi}")
    m = np.arange(cfg.num_antennas)
    phase = 2.0 * np.pi * (cfg.spacing / cfg.wavelength) * np.sin(phi) * m
    return np.exp(1j * phase) / np.sqrt(cfg.num_antennas)


def _element_offsets(num_antennas: int) -> np.ndarray:
    # delta_m = (2m - M - 1) / 2 for m = 1..M, symmetric about the array center
    m = np.arange(1, num_antennas + 1)
    return (2 * m - num_antennas - 1) / 2.0


def _near_distance_terms(cfg: ArrayConfig, r: float, phi: float):
    """Per-element scatter distances r_m and the differences r_m - r.

    The difference is evaluated as (r_m^2 - r^2) / (r_m + r) to avoid
    catastrophic cancellation at large r, where r_m - r is tiny against r.
    """
    delta_d = _element_offsets(cfg.num_antennas) * cfg.spacing
    t = delta_d * (delta_d - 2.0 * r * np.sin(phi))  # r_m^2 - r^2
    r_m = np.sqrt(r * r + t)
    return r_m, t / (r_m + r)


def near_element_distance(cfg: ArrayConfig, r: float, phi: float, m: int) -> float:
    """Distance from a scatter at (phi, r) to antenna m (one-based index).

    Evaluates sqrt(r^2 + delta_m^2 d^2 - 2 r delta_m d sin(phi)) with
    delta_m = (2m - M - 1)/2.
    """
    if not r > 0:
        raise ValueError(f"scatter distance r must be > 0, got {r}")
    if not 1 <= m <= cfg.num_antennas:
        raise ValueError(f"antenna index m must lie in 1..{cfg.num_antennas}, got {m}")
    r_m, _ = _near_distance_terms(cfg, r, phi)
    return float(r_m[m - 1])


def near_steering_vector(cfg: ArrayConfig, phi: float, r: float) -> np.ndarray:
    """Unit-norm spherical-wave steering vector for a scatter at (phi, r).

    Element m is (1/sqrt(M)) * exp(-1j * (2*pi/lam) * (r_m - r)) where r_m
    is the per-element scatter distance.
    """
    if not -_HALF_PI <= phi <= _HALF_PI:
        raise ValueError(f"phi must lie in [-pi/2, pi/2], got {phi}")
    if not r > 0:
        raise ValueError(f"scatter distance r must be > 0, got {r}")
    _, diff = _near_distance_terms(cfg, r, phi)
    phase = -(2.0 * np.pi / cfg.wavelength) * diff
    return np.exp(1j * phase) / np.sqrt(cfg.num_antennas)


def build_steering_matrix(cfg: ArrayConfig, paths: PathSet) -> np.ndarray:
    """M x L steering matrix: far columns first, then near, scaled sqrt(M/L).

    The scaling makes each column's squared norm M/L, so the matrix has
    Frobenius norm sqrt(M) regardless of the path split.
    """
    cols = [far_steering_vector(cfg, phi) for phi in paths.far_angles]
    cols += [
        near_steering_vector(cfg, phi, r)
        for phi, r in zip(paths.near_angles, paths.near_distances)
    ]
    scale = np.sqrt(cfg.num_antennas / paths.num_paths)
    return scale * np.column_stack(cols)


_MAX_RESAMPLE = 10_000


def _draw_count(rng: np.random.Generator, spec: int | tuple[int, int]) -> int:
    if isinstance(spec, int):
        return spec
    lo, hi = spec
    return int(rng.integers(lo, hi + 1))


def sample_channel(
    cfg: ArrayConfig, scenario: ScenarioSpec, seed: int
) -> ChannelRealization:
    """Draw one channel realization, fully determined by (cfg, scenario, seed).

    Draw order is part of the reproducibility contract: path counts (with
    resampling while both are zero), far angles, near angles, near
    distances, then gains. Gains are i.i.d. circularly-symmetric complex
    Gaussian with per-component variance gain_variance, so E[||h||^2] =
    gain_variance * M under the sqrt(M/L) steering scale.
    """
    rng = make_rng(seed)
    for _ in range(_MAX_RESAMPLE):
        num_far = _draw_count(rng, scenario.far_paths)
        num_near = _draw_count(rng, scenario.near_paths)
        if num_far + num_near > 0:
            break
    else:  # unreachable: ScenarioSpec guarantees a nonzero draw is possible
        raise RuntimeError("path-count resampling did not terminate")

    lo_a, hi_a = scenario.angle_range
    lo_r, hi_r = scenario.distance_range
    paths = PathSet(
        far_angles=rng.uniform(lo_a, hi_a, size=num_far),
        near_angles=rng.uniform(lo_a, hi_a, size=num_near),
        near_distances=rng.uniform(lo_r, hi_r, size=num_near),
        gain_variance=scenario.gain_variance,
    )
    matrix = build_steering_matrix(cfg, paths)
    num_paths = paths.num_paths
    scale = np.sqrt(scenario.gain_variance / 2.0)
    gains = scale * (
        rng.standard_normal(num_paths) + 1j * rng.standard_normal(num_paths)
    )
    return ChannelRealization(h=matrix @ gains, paths=paths, gains=gains, seed=seed)


def sample_channels(
    cfg: ArrayConfig, scenario: ScenarioSpec, base_seed: int, count: int
) -> list[ChannelRealization]:
    """Draw `count` realizations under per-sample seeds mix_seed(base_seed, i)."""
    return [
        sample_channel(cfg, scenario, mix_seed(base_seed, i)) for i in range(count)
    ]
