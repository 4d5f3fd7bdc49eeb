"""
Clustered THz MIMO channel: one LoS cluster plus reflected NLoS clusters,
each made of diffused rays around a mean direction.

Path-gain magnitudes follow spreading loss, molecular absorption and the
per-bounce reflection coefficient; phases are i.i.d. uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .absorption import (
    MediumConditions,
    SpectralLineCatalog,
    SurfaceSpec,
    equivalent_reflection,
    k_abs as absorption_coefficient,
    load_sample_catalog,
    load_sample_materials,
    reflection_coefficient,
)
from .constants import SPEED_OF_LIGHT
from .errors import ConfigError, DomainError, TotalReflectionError

__all__ = [
    "ArrayGeometry",
    "Ray",
    "PathCluster",
    "ChannelRealization",
    "ChannelConfig",
    "array_response",
    "antenna_gain_linear",
    "spreading_loss",
    "los_gain_magnitude",
    "nlos_gain_magnitude",
    "sample_clusters",
    "assemble_channel",
    "generate_channel",
]


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array."""

    n_elements: int
    spacing: float
    wavelength: float

    def __post_init__(self):
        if self.n_elements < 1:
            raise DomainError("an array needs at least one element")
        if not self.spacing > 0 or not self.wavelength > 0:
            raise DomainError("spacing and wavelength must be positive")

    @classmethod
    def ula(cls, n_elements, f_hz, spacing_in_wavelengths=0.5):
        lam = SPEED_OF_LIGHT / f_hz
        return cls(n_elements, spacing_in_wavelengths * lam, lam)


def array_response(geom, phi):
    """ULA steering vector(s) with unit 2-norm.

    ``phi`` may be a scalar (returns shape ``(N,)``) or an array of
    angles (returns one column per angle).
    """
    phi = np.asarray(phi, dtype=float)
    k = np.arange(geom.n_elements)
    phase = -2j * np.pi / geom.wavelength * geom.spacing * np.multiply.outer(k, np.cos(phi))
    return np.exp(phase) / np.sqrt(geom.n_elements)


def antenna_gain_linear(gain_db, convention="power"):
    """Per-side multiplier applied inside the channel amplitude sum.

    ``"power"`` inserts the linear power gain 10^(dB/10) directly as the
    multiplier; ``"amplitude"`` uses 10^(dB/20).
    """
    if convention == "power":
        return 10.0 ** (gain_db / 10.0)
    if convention == "amplitude":
        return 10.0 ** (gain_db / 20.0)
    raise ConfigError(f"unknown antenna-gain convention {convention!r}")


def spreading_loss(f, d):
    if not f > 0:
        raise DomainError("frequency must be positive")
    if not d > 0:
        raise DomainError("distance must be positive (spreading loss is singular at d = 0)")
    return (SPEED_OF_LIGHT / (4.0 * math.pi * f * d)) ** 2


def los_gain_magnitude(f, d, k_abs):
    """|alpha| of a direct ray: sqrt(L_spread * L_abs)."""
    if k_abs < 0:
        raise DomainError("absorption coefficient must be non-negative")
    return math.sqrt(spreading_loss(f, d) * math.exp(-k_abs * d))


def nlos_gain_magnitude(f, d, k_abs, bounce_gammas: Sequence[float]):
    """|alpha| of a reflected ray; the bounces multiply."""
    for g in bounce_gammas:
        if abs(g) > 1.0:
            raise DomainError("reflection coefficients must satisfy |Gamma| <= 1")
    return abs(equivalent_reflection(bounce_gammas)) * los_gain_magnitude(f, d, k_abs)


@dataclass(frozen=True)
class Ray:
    aod: float
    aoa: float
    gain_mag: float
    phase: float

    @property
    def gain(self):
        return self.gain_mag * np.exp(1j * self.phase)


@dataclass(frozen=True)
class PathCluster:
    kind: str  # "LoS" or "NLoS"
    reflection_order: int
    mean_aod: float
    mean_aoa: float
    rays: Tuple[Ray, ...]

    def __post_init__(self):
        if (self.reflection_order == 0) != (self.kind == "LoS"):
            raise DomainError("reflection order 0 must coincide with the LoS cluster")
        for r in self.rays:
            if r.gain_mag < 0:
                raise DomainError("gain magnitudes must be non-negative")
            if not -math.pi < r.phase <= math.pi:
                raise DomainError("ray phase must lie in (-pi, pi]")


@dataclass
class ChannelRealization:
    H: np.ndarray
    clusters: List[PathCluster]
    f: float
    d: float
    gains: Tuple[float, float]
    H_los: Optional[np.ndarray] = None
    H_nlos: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.H.shape

    @property
    def n_rays(self):
        return sum(len(c.rays) for c in self.clusters)


@dataclass
class ChannelConfig:
    """Parameters of the clustered channel generator.

    ``k_abs`` overrides the catalog evaluation when given.
    """

    f_hz: float = 0.3e12
    d_m: float = 10.0
    n_tx: int = 16
    n_rx: int = 16
    spacing_in_wavelengths: float = 0.5
    n_nlos: int = 4
    n_ray: int = 1
    reflection_orders: Tuple[int, ...] = (1, 1, 1, 2)
    gains_db: float = 25.0
    gain_convention: str = "power"
    angular_spread: float = 0.1
    surfaces: Tuple[SurfaceSpec, ...] = field(
        default_factory=lambda: tuple(load_sample_materials().values()))
    k_abs: Optional[float] = None
    medium: MediumConditions = field(default_factory=MediumConditions)
    catalog: Optional[SpectralLineCatalog] = None

    def __post_init__(self):
        self.reflection_orders = tuple(int(o) for o in self.reflection_orders)
        if len(self.reflection_orders) != self.n_nlos:
            raise ConfigError(
                f"{self.n_nlos} NLoS clusters need as many reflection orders, "
                f"got {self.reflection_orders}")
        if any(o < 1 for o in self.reflection_orders):
            raise ConfigError("NLoS reflection orders must be >= 1")
        if self.n_ray < 1:
            raise ConfigError("n_ray must be >= 1")
        if self.n_nlos > 0 and not self.surfaces:
            raise ConfigError("NLoS clusters need at least one surface")
        if not self.f_hz > 0 or not self.d_m > 0:
            raise ConfigError("f_hz and d_m must be positive")

    def absorption(self):
        if self.k_abs is not None:
            return float(self.k_abs)
        catalog = self.catalog if self.catalog is not None else load_sample_catalog()
        return float(absorption_coefficient(catalog, self.medium, self.f_hz))

    def geometries(self):
        tx = ArrayGeometry.ula(self.n_tx, self.f_hz, self.spacing_in_wavelengths)
        rx = ArrayGeometry.ula(self.n_rx, self.f_hz, self.spacing_in_wavelengths)
        return tx, rx

    def antenna_gains(self):
        g = antenna_gain_linear(self.gains_db, self.gain_convention)
        return g, g


def _uniform_phase(rng, size):
    # (-pi, pi]
    return np.pi - rng.uniform(0.0, 2.0 * np.pi, size)


def _bounce_gamma(config, rng):
    surface = config.surfaces[rng.integers(len(config.surfaces))]
    theta_in = rng.uniform(0.0, np.pi / 2)
    try:
        return reflection_coefficient(surface, config.f_hz, theta_in).coefficient
    except TotalReflectionError:
        return 0.0  # blocked path


def sample_clusters(config, rng, k_abs=None):
    """Draw the LoS cluster followed by ``config.n_nlos`` NLoS clusters."""
    if k_abs is None:
        k_abs = config.absorption()
    f, d = config.f_hz, config.d_m
    los_mag = los_gain_magnitude(f, d, k_abs)
    clusters = []
    for order in (0,) + config.reflection_orders:
        mean_aod, mean_aoa = rng.uniform(0.0, np.pi, 2)
        if order == 0:
            mag = los_mag
        else:
            gammas = [_bounce_gamma(config, rng) for _ in range(order)]
            mag = nlos_gain_magnitude(f, d, k_abs, gammas)
        aod = mean_aod + config.angular_spread * rng.standard_normal(config.n_ray)
        aoa = mean_aoa + config.angular_spread * rng.standard_normal(config.n_ray)
        phases = _uniform_phase(rng, config.n_ray)
        rays = tuple(Ray(float(t), float(r), float(mag), float(p))
                     for t, r, p in zip(aod, aoa, phases))
        clusters.append(PathCluster("LoS" if order == 0 else "NLoS", order,
                                    float(mean_aod), float(mean_aoa), rays))
    return clusters


def _cluster_sum(cluster, tx_geom, rx_geom, scale):
    aod = np.array([r.aod for r in cluster.rays])
    aoa = np.array([r.aoa for r in cluster.rays])
    gains = np.array([r.gain for r in cluster.rays])
    At = array_response(tx_geom, aod)
    Ar = array_response(rx_geom, aoa)
    return scale * (Ar * gains) @ At.conj().T


def assemble_channel(clusters, tx_geom, rx_geom, gains=(1.0, 1.0), f=None, d=None):
    """Sum the ray outer products into the N_R x N_T channel matrix.

    The LoS sum is scaled by sqrt(N_T N_R / N_ray) and the NLoS sum by
    sqrt(N_T N_R / (N_NLoS N_ray)), with N_NLoS the number of NLoS clusters.
    """
    if not clusters:
        raise DomainError("cannot assemble a channel from an empty cluster list")
    nt, nr = tx_geom.n_elements, rx_geom.n_elements
    g = gains[0] * gains[1]
    n_nlos = sum(1 for c in clusters if c.kind == "NLoS")
    H_los = np.zeros((nr, nt), dtype=complex)
    H_nlos = np.zeros((nr, nt), dtype=complex)
    for c in clusters:
        n_ray = len(c.rays)
        if c.kind == "LoS":
            H_los += _cluster_sum(c, tx_geom, rx_geom, g * np.sqrt(nt * nr / n_ray))
        else:
            H_nlos += _cluster_sum(c, tx_geom, rx_geom,
                                   g * np.sqrt(nt * nr / (n_nlos * n_ray)))
    return ChannelRealization(H_los + H_nlos, list(clusters), f, d, tuple(gains),
                              H_los, H_nlos)


def generate_channel(config, rng, k_abs=None):
    """Draw clusters and assemble one channel realization."""
    clusters = sample_clusters(config, rng, k_abs)
    tx, rx = config.geometries()
    return assemble_channel(clusters, tx, rx, config.antenna_gains(),
                            config.f_hz, config.d_m)
