"""Noise-source basis, linearized field representation and variance evaluation.

A field at one edge of a network is stored as a table ``source id -> C_s``
where ``C_s`` has shape ``(N, 2, 2)``: one complex 2x2 matrix per frequency
point. Rows are the field's (amplitude, phase) quadratures, columns the
source's (amplitude, phase) quadratures. Sources are mutually independent and
carry diagonal spectra, so the variance of a quadrature row ``r`` is

    V = sum_s |r_s[0]|^2 V+_s + |r_s[1]|^2 V-_s

in shot-noise units (vacuum = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Callable, Mapping, Optional, Union

import numpy as np


class SqznetError(Exception):
    """Base class for all simulator errors."""


class UnknownSourceError(SqznetError, KeyError):
    def __init__(self, source_id: str):
        super().__init__(source_id)
        self.source_id = source_id

    def __str__(self) -> str:
        return f"unknown noise source '{self.source_id}'"


class ConsistencyError(SqznetError):
    """Raised when a computed quantity violates an internal invariant."""


class DomainError(SqznetError, ValueError):
    pass


class GridMismatchError(SqznetError, ValueError):
    pass


# ---------------------------------------------------------------------------
# Frequency grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Ordered, strictly positive sideband frequencies in rad/s."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).ravel()
        if pts.size == 0:
            raise DomainError("frequency grid is empty")
        if not np.all(np.isfinite(pts)):
            raise DomainError("frequency grid contains non-finite values")
        if np.any(pts <= 0):
            raise DomainError("frequency grid points must be > 0")
        if np.any(np.diff(pts) <= 0):
            raise DomainError("frequency grid must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_hz(cls, freqs_hz) -> "FrequencyGrid":
        return cls(2 * np.pi * np.asarray(freqs_hz, dtype=float))

    @classmethod
    def linear_hz(cls, fmin: float, fmax: float, n: int) -> "FrequencyGrid":
        _check_span(fmin, fmax, n)
        return cls.from_hz(np.linspace(fmin, fmax, n))

    @classmethod
    def log_hz(cls, fmin: float, fmax: float, n: int) -> "FrequencyGrid":
        _check_span(fmin, fmax, n)
        return cls.from_hz(np.geomspace(fmin, fmax, n))

    @property
    def hz(self) -> np.ndarray:
        return self.points / (2 * np.pi)

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, FrequencyGrid):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    __hash__ = None


def _check_span(fmin, fmax, n):
    if n < 1:
        raise DomainError("grid needs at least one point")
    if not (fmin > 0):
        raise DomainError("fmin must be > 0")
    if n > 1 and not (fmin < fmax):
        raise DomainError("fmin must be smaller than fmax")


# ---------------------------------------------------------------------------
# Noise sources
# ---------------------------------------------------------------------------


class SourceKind(Enum):
    VACUUM = "vacuum"
    CLASSICAL = "classical"


Spectrum = Callable[[np.ndarray], np.ndarray]


def _unit_spectrum(omega):
    return np.ones(np.shape(omega))


@dataclass(frozen=True)
class NoiseSource:
    """An independent fluctuation origin.

    Classical sources carry *excess* noise only; the vacuum floor of the port
    they enter is a separate vacuum source.
    """

    id: str
    kind: SourceKind
    spectrum_plus: Spectrum = _unit_spectrum
    spectrum_minus: Spectrum = _unit_spectrum

    @classmethod
    def vacuum(cls, source_id: str) -> "NoiseSource":
        return cls(source_id, SourceKind.VACUUM)

    @classmethod
    def classical(cls, source_id: str, plus: Spectrum, minus: Spectrum | None = None):
        return cls(source_id, SourceKind.CLASSICAL, plus, plus if minus is None else minus)

    @classmethod
    def white(cls, source_id: str, level: float) -> "NoiseSource":
        if not (level >= 0 and math.isfinite(level)):
            raise DomainError(f"white noise level must be finite and >= 0, got {level}")

        def spec(omega, _level=float(level)):
            return np.full(np.shape(omega), _level)

        return cls(source_id, SourceKind.CLASSICAL, spec, spec)

    def spectra(self, omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.kind is SourceKind.VACUUM:
            ones = np.ones(np.shape(omega))
            return ones, ones
        vp = np.broadcast_to(np.asarray(self.spectrum_plus(omega), float), np.shape(omega))
        vm = np.broadcast_to(np.asarray(self.spectrum_minus(omega), float), np.shape(omega))
        if not (np.all(np.isfinite(vp)) and np.all(np.isfinite(vm))):
            raise ConsistencyError(f"classical source '{self.id}' has non-finite spectrum")
        if np.any(vp < 0) or np.any(vm < 0):
            raise ConsistencyError(f"classical source '{self.id}' has negative spectrum")
        return vp, vm


SourceRegistry = Mapping[str, NoiseSource]


# ---------------------------------------------------------------------------
# Field modes
# ---------------------------------------------------------------------------

Coeffs = Mapping[str, np.ndarray]

_EMPTY: Mapping = MappingProxyType({})


@dataclass(frozen=True, eq=False)
class FieldMode:
    """Linearized field on one network edge, sampled on ``omega``.

    ``coeffs`` holds the spatial mode that interferes at combiners.
    ``unmatched`` holds orthogonal spatial-mode channels created by imperfect
    visibility, keyed by channel label.
    """

    omega: np.ndarray
    coeffs: Coeffs
    unmatched: Mapping[str, Coeffs] = _EMPTY
    carrier_power: float = 0.0
    carrier_phase: float = 0.0

    @property
    def n(self) -> int:
        return np.shape(self.omega)[0]

    @classmethod
    def from_source(cls, omega, source_id: str, carrier_power=0.0, carrier_phase=0.0):
        return cls(omega, {source_id: identity(len(omega))}, _EMPTY, carrier_power, carrier_phase)

    def channels(self):
        yield None, self.coeffs
        yield from self.unmatched.items()

    def scaled(self, k: float) -> "FieldMode":
        return FieldMode(
            self.omega,
            {s: k * c for s, c in self.coeffs.items()},
            {ch: {s: k * c for s, c in cs.items()} for ch, cs in self.unmatched.items()},
            self.carrier_power * k * k,
            self.carrier_phase,
        )


def identity(n: int) -> np.ndarray:
    out = np.zeros((n, 2, 2), dtype=complex)
    out[:, 0, 0] = 1.0
    out[:, 1, 1] = 1.0
    return out


def quadrature_row(c: np.ndarray, quadrature) -> np.ndarray:
    """Select the (N, 2) coefficient row for ``"plus"``, ``"minus"`` or an angle."""
    if quadrature == "plus":
        return c[:, 0, :]
    if quadrature == "minus":
        return c[:, 1, :]
    theta = float(quadrature)
    if not math.isfinite(theta):
        raise DomainError("quadrature angle must be finite")
    if theta == 0.0:
        return c[:, 0, :]
    return math.cos(theta) * c[:, 0, :] + math.sin(theta) * c[:, 1, :]


Quadrature = Union[str, float]


def _spectra_cached(sources: SourceRegistry, omega, cache: Optional[dict]):
    def get(sid):
        if cache is not None and sid in cache:
            return cache[sid]
        try:
            src = sources[sid]
        except KeyError:
            raise UnknownSourceError(sid) from None
        vals = src.spectra(omega)
        if cache is not None:
            cache[sid] = vals
        return vals

    return get


def coeffs_variance(
    coeffs: Coeffs,
    sources: SourceRegistry,
    omega: np.ndarray,
    quadrature: Quadrature = "plus",
    _cache: Optional[dict] = None,
) -> np.ndarray:
    get = _spectra_cached(sources, omega, _cache)
    total = np.zeros(np.shape(omega)[0])
    for sid in sorted(coeffs):
        row = quadrature_row(coeffs[sid], quadrature)
        vp, vm = get(sid)
        total = total + np.abs(row[:, 0]) ** 2 * vp + np.abs(row[:, 1]) ** 2 * vm
    if np.any(total < 0):
        raise ConsistencyError("negative variance computed")
    return total


def variance_of(
    field: FieldMode,
    sources: SourceRegistry,
    grid: FrequencyGrid | None = None,
    quadrature: Quadrature = "plus",
) -> np.ndarray:
    """Variance of one quadrature of the field's main spatial mode.

    ``quadrature`` is ``"plus"``, ``"minus"`` or a homodyne angle in radians
    (angle 0 is the amplitude quadrature, pi/2 the phase quadrature).
    """
    omega = field.omega
    if grid is not None and not np.array_equal(grid.points, omega):
        raise GridMismatchError("field was not evaluated on the requested grid")
    return coeffs_variance(field.coeffs, sources, omega, quadrature)


def to_db(v):
    """Convert a shot-noise-normalized variance to dB."""
    arr = np.asarray(v, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("dB conversion needs strictly positive variance")
    out = 10.0 * np.log10(arr)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    grid: FrequencyGrid
    v_plus: np.ndarray
    v_minus: np.ndarray
    v_theta: Optional[np.ndarray] = None
    angle: Optional[float] = None
    carrier_power: float = 0.0
    meta: Mapping[str, object] = field(default_factory=dict)

    @property
    def db_plus(self) -> np.ndarray:
        return to_db(self.v_plus)

    @property
    def db_minus(self) -> np.ndarray:
        return to_db(self.v_minus)

    @property
    def db_theta(self) -> Optional[np.ndarray]:
        return None if self.v_theta is None else to_db(self.v_theta)


def field_spectrum(field: FieldMode, sources: SourceRegistry, grid: FrequencyGrid,
                   angle: Optional[float] = None) -> SpectrumResult:
    """Undetected (ideal) spectrum of the field's main mode."""
    vp = variance_of(field, sources, grid, "plus")
    vm = variance_of(field, sources, grid, "minus")
    vt = None if angle is None else variance_of(field, sources, grid, angle)
    return SpectrumResult(grid, vp, vm, vt, angle, field.carrier_power)
