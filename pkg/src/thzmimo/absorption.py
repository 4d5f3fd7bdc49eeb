"""
Molecular absorption and rough-surface reflection at terahertz frequencies.

The absorption coefficient is a line-by-line sum over a spectral-line
catalog using a Van Vleck-Weisskopf line shape with a thermal (tanh)
correction. Reflection combines a Fresnel coefficient with a Rayleigh
roughness penalty.

Units are SI throughout except pressure, which is given in atm.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Iterable, Union

import numpy as np

from .constants import (
    ATM,
    AVOGADRO,
    BOLTZMANN,
    FREE_SPACE_IMPEDANCE,
    GAS_CONSTANT,
    PLANCK,
    SPEED_OF_LIGHT,
)
from .errors import CatalogError, DomainError, TotalReflectionError

__all__ = [
    "SpectralLine",
    "SpectralLineCatalog",
    "MediumConditions",
    "SurfaceSpec",
    "Reflection",
    "CATALOG_COLUMNS",
    "MATERIAL_COLUMNS",
    "load_line_catalog",
    "load_sample_catalog",
    "load_materials",
    "load_sample_materials",
    "lorentz_halfwidth",
    "shifted_center",
    "van_vleck_weisskopf",
    "line_shape",
    "k_abs",
    "reflection_coefficient",
    "equivalent_reflection",
    "rayleigh_roughness",
]

CATALOG_COLUMNS = (
    "gas_id",
    "iso_id",
    "fc0_cm1",
    "delta_cm1_per_atm",
    "S_si",
    "alpha0_air_hz",
    "alpha0_self_hz",
    "gamma_T",
    "q",
)
MATERIAL_COLUMNS = ("name", "Z_ohms", "sigma_m")

# wavenumber (1/cm) -> frequency (Hz)
_CM1_TO_HZ = 100.0 * SPEED_OF_LIGHT


@dataclass(frozen=True)
class SpectralLine:
    """One absorption line of one isotopologue.

    Frequencies and half-widths are stored in Hz, ``delta`` in Hz/atm.
    """

    gas_id: str
    isotopologue_id: str
    f_c0: float
    delta: float
    S: float
    alpha0_air: float
    alpha0_self: float
    gamma_T: float
    q: float

    def __post_init__(self):
        if not self.f_c0 > 0:
            raise CatalogError(f"f_c0 must be positive, got {self.f_c0}")
        if not self.S >= 0:
            raise CatalogError(f"line intensity must be non-negative, got {self.S}")
        if not 0.0 <= self.q <= 1.0:
            raise CatalogError(f"mixing ratio must lie in [0, 1], got {self.q}")
        if not (self.alpha0_air > 0 and self.alpha0_self > 0):
            raise CatalogError("broadening half-widths must be positive")


@dataclass(frozen=True)
class SpectralLineCatalog:
    lines: tuple = ()

    def __len__(self):
        return len(self.lines)

    def __iter__(self):
        return iter(self.lines)

    def __add__(self, other):
        return SpectralLineCatalog(tuple(self.lines) + tuple(other.lines))

    def subset(self, indices):
        return SpectralLineCatalog(tuple(self.lines[i] for i in indices))


@dataclass(frozen=True)
class MediumConditions:
    """Pressure (atm) and temperature (K) of the propagation medium."""

    pressure: float = 1.0
    temperature: float = 296.0
    reference_pressure: float = 1.0
    reference_temperature: float = 296.0
    t_stp: float = 273.15

    def __post_init__(self):
        for name in ("pressure", "temperature", "reference_pressure",
                     "reference_temperature", "t_stp"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be strictly positive")


def _field(row, lineno, column, convert=float):
    try:
        value = row[column]
    except KeyError:
        raise CatalogError(f"row {lineno}: missing column {column!r}") from None
    if value is None:
        raise CatalogError(f"row {lineno}: missing column {column!r}")
    try:
        return convert(value.strip())
    except ValueError:
        raise CatalogError(
            f"row {lineno}, column {column!r}: cannot parse {value!r}") from None


def _as_text(source):
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", newline="", encoding="utf-8")
    if isinstance(source, io.TextIOBase):
        return source
    # binary stream
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def load_line_catalog(source, fmt="csv"):
    """Parse a spectral-line table.

    Parameters
    ----------
    source : bytes, path or file object
        CSV with header ``CATALOG_COLUMNS``. Line positions and pressure
        shifts are given in wavenumbers and converted to Hz on load.
    fmt : str
        Only ``"csv"`` is supported.

    Returns
    -------
    SpectralLineCatalog

    Raises
    ------
    CatalogError
        On a missing column, an unparseable field (the message names row
        and column) or a line violating the physical invariants.
    """
    if fmt != "csv":
        raise CatalogError(f"unsupported catalog format {fmt!r}")
    stream = _as_text(source)
    try:
        reader = csv.DictReader(stream)
        header = reader.fieldnames or []
        missing = [c for c in CATALOG_COLUMNS if c not in header]
        if missing:
            raise CatalogError(f"catalog header lacks columns {missing}")
        lines = []
        # header is row 1
        for lineno, row in enumerate(reader, start=2):
            try:
                line = SpectralLine(
                    gas_id=_field(row, lineno, "gas_id", str),
                    isotopologue_id=_field(row, lineno, "iso_id", str),
                    f_c0=_field(row, lineno, "fc0_cm1") * _CM1_TO_HZ,
                    delta=_field(row, lineno, "delta_cm1_per_atm") * _CM1_TO_HZ,
                    S=_field(row, lineno, "S_si"),
                    alpha0_air=_field(row, lineno, "alpha0_air_hz"),
                    alpha0_self=_field(row, lineno, "alpha0_self_hz"),
                    gamma_T=_field(row, lineno, "gamma_T"),
                    q=_field(row, lineno, "q"),
                )
            except CatalogError as exc:
                if str(exc).startswith("row "):
                    raise
                raise CatalogError(f"row {lineno}: {exc}") from None
            lines.append(line)
    finally:
        if isinstance(source, (str, os.PathLike)):
            stream.close()
    return SpectralLineCatalog(tuple(lines))


def load_sample_catalog():
    """Bundled water-vapour sample catalog (1 % mixing ratio)."""
    data = resources.files("thzmimo.data").joinpath("sample_lines.csv").read_bytes()
    return load_line_catalog(data)


def shifted_center(line, cond):
    """Pressure-shifted resonance frequency in Hz."""
    return line.f_c0 + line.delta * cond.pressure / cond.reference_pressure


def lorentz_halfwidth(line, cond):
    """Lorentz half-width in Hz at the given pressure and temperature."""
    mix = (1.0 - line.q) * line.alpha0_air + line.q * line.alpha0_self
    return (mix * (cond.pressure / cond.reference_pressure)
            * (cond.reference_temperature / cond.temperature) ** line.gamma_T)


def _check_freq(f):
    f = np.asarray(f, dtype=float)
    if np.any(~(f > 0)):
        raise DomainError("frequency must be strictly positive")
    return f


def van_vleck_weisskopf(line, cond, f):
    """Two-term Van Vleck-Weisskopf profile F(f).

    The leading ``100 c`` factor is kept as written for wavenumber-based
    catalogs; its normalization is absorbed into the catalog intensities.
    """
    f = _check_freq(f)
    fc = shifted_center(line, cond)
    a = lorentz_halfwidth(line, cond)
    terms = 1.0 / ((f - fc) ** 2 + a ** 2) + 1.0 / ((f + fc) ** 2 + a ** 2)
    out = _CM1_TO_HZ * f * a / (math.pi * fc) * terms
    return out if out.ndim else float(out)


def _thermal_ratio(f, fc, temperature):
    # tanh(h f / 2 k T) / tanh(h f_c / 2 k T); reduces to f/f_c at low frequency
    scale = PLANCK / (2.0 * BOLTZMANN * temperature)
    return np.tanh(scale * f) / np.tanh(scale * fc)


def line_shape(line, cond, f):
    """Spectral line shape G(f) including the thermal correction factor."""
    f = _check_freq(f)
    fc = shifted_center(line, cond)
    g = (f / fc) * _thermal_ratio(f, fc, cond.temperature) * np.asarray(
        van_vleck_weisskopf(line, cond, f))
    return g if g.ndim else float(g)


def _volumetric_density(q, cond):
    # molecules per m^3 of the absorbing isotopologue
    return cond.pressure * ATM / (GAS_CONSTANT * cond.temperature) * q * AVOGADRO


def k_abs(catalog, cond, f, per_line=False):
    """Molecular absorption coefficient in 1/m.

    Parameters
    ----------
    catalog : SpectralLineCatalog
    cond : MediumConditions
    f : float or array_like
        Frequency in Hz.
    per_line : bool
        Also return the per-line contributions, shape ``(len(catalog),) + f.shape``.
    """
    f = _check_freq(f)
    lead = (cond.pressure / cond.reference_pressure) * (cond.t_stp / cond.temperature)
    contrib = np.zeros((len(catalog),) + f.shape)
    for n, line in enumerate(catalog):
        contrib[n] = lead * _volumetric_density(line.q, cond) * line.S * np.asarray(
            line_shape(line, cond, f))
    total = contrib.sum(axis=0)
    if total.ndim == 0:
        total = float(total)
    if per_line:
        return total, contrib
    return total


# ----------------------------------------------------------------------------
# reflection
# ----------------------------------------------------------------------------

Impedance = Union[float, Callable[[float], float], tuple]


@dataclass(frozen=True)
class SurfaceSpec:
    """Reflecting material.

    ``impedance`` is a constant in ohms, a callable ``Z(f)``, or a
    ``(freqs, values)`` table that is linearly interpolated.
    """

    impedance: Impedance
    roughness_sigma: float = 0.0
    name: str = ""
    z0: float = field(default=FREE_SPACE_IMPEDANCE)

    def __post_init__(self):
        if self.roughness_sigma < 0:
            raise DomainError("roughness_sigma must be non-negative")

    def impedance_at(self, f):
        z = self.impedance
        if callable(z):
            return float(z(f))
        if isinstance(z, tuple):
            freqs, values = z
            return float(np.interp(f, freqs, values))
        return float(z)


@dataclass(frozen=True)
class Reflection:
    fresnel: float
    roughness: float

    @property
    def coefficient(self):
        return self.fresnel * self.roughness

    def __iter__(self):
        yield self.fresnel
        yield self.roughness
        yield self.coefficient


def rayleigh_roughness(f, sigma, theta_in):
    """Rayleigh roughness factor in (0, 1]."""
    x = 4.0 * math.pi * f * sigma * math.cos(theta_in) / SPEED_OF_LIGHT
    return math.exp(-0.5 * x * x)


def reflection_coefficient(surface, f, theta_in):
    """Fresnel coefficient, roughness factor and their product.

    Raises
    ------
    TotalReflectionError
        When ``sin(theta_in) Z(f) / Z0`` falls outside [-1, 1].
    """
    if not 0.0 <= theta_in < math.pi / 2:
        raise DomainError(f"incidence angle must lie in [0, pi/2), got {theta_in}")
    if not f > 0:
        raise DomainError("frequency must be strictly positive")
    z = surface.impedance_at(f)
    arg = math.sin(theta_in) * z / surface.z0
    if abs(arg) > 1.0:
        raise TotalReflectionError(
            f"no real refraction angle: sin(theta_in) Z/Z0 = {arg:.4f}")
    theta_ref = math.asin(arg)
    num = z * math.cos(theta_in) - surface.z0 * math.cos(theta_ref)
    den = z * math.cos(theta_in) + surface.z0 * math.cos(theta_ref)
    gamma = num / den
    rho = rayleigh_roughness(f, surface.roughness_sigma, theta_in)
    return Reflection(gamma, rho)


def equivalent_reflection(coefficients: Iterable[float]) -> float:
    """Reflection coefficient of a multi-bounce path (product of bounces)."""
    out = 1.0
    for c in coefficients:
        out *= c
    return out


def load_materials(source) -> dict:
    """Parse a ``name,Z_ohms,sigma_m`` material table into SurfaceSpecs."""
    stream = _as_text(source)
    try:
        reader = csv.DictReader(stream)
        header = reader.fieldnames or []
        missing = [c for c in MATERIAL_COLUMNS if c not in header]
        if missing:
            raise CatalogError(f"material header lacks columns {missing}")
        out = {}
        for lineno, row in enumerate(reader, start=2):
            name = _field(row, lineno, "name", str)
            try:
                out[name] = SurfaceSpec(
                    impedance=_field(row, lineno, "Z_ohms"),
                    roughness_sigma=_field(row, lineno, "sigma_m"),
                    name=name,
                )
            except DomainError as exc:
                raise CatalogError(f"row {lineno}: {exc}") from None
    finally:
        if isinstance(source, (str, os.PathLike)):
            stream.close()
    return out


def load_sample_materials() -> dict:
    data = resources.files("thzmimo.data").joinpath("materials.csv").read_bytes()
    return load_materials(data)
