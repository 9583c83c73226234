"""Optical elements acting on :class:`~sqznet.core.FieldMode` objects.

Every element is a pure function of its parameters, its input fields and the
frequency samples carried by those fields. Elements that need fresh vacuum
(loss, mode cleaner, imperfect overlap at a combiner) register it in the
``sources`` dict they are handed, under ids derived from ``name``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import MutableMapping, Optional

import numpy as np

from .core import (
    Coeffs,
    DomainError,
    FieldMode,
    NoiseSource,
    SpectrumResult,
    FrequencyGrid,
    SqznetError,
    SourceRegistry,
    coeffs_variance,
    identity,
)


class ParameterError(SqznetError, ValueError):
    pass


class ThresholdError(SqznetError, ValueError):
    """OPA nonlinearity at or above the oscillation threshold."""


LEAKAGE_CONVENTIONS = ("one-minus-v", "one-minus-v2")


def _finite(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value}")
    return value


def _unit_interval(name, value):
    value = _finite(name, value)
    if not 0.0 <= value <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {value}")
    return value


def _nonneg(name, value):
    value = _finite(name, value)
    if value < 0:
        raise ParameterError(f"{name} must be >= 0, got {value}")
    return value


# ---------------------------------------------------------------------------
# Parameter records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OpaParams:
    """Decay rates and real nonlinearity of a below-threshold OPA (rad/s).

    The sign of ``upsilon`` encodes the pump phase: negative values
    deamplify (squeeze) the amplitude quadrature.
    """

    gamma_ic: float
    gamma_oc: float
    gamma_l: float
    upsilon: float

    def __post_init__(self):
        for name in ("gamma_ic", "gamma_oc", "gamma_l"):
            object.__setattr__(self, name, _nonneg(name, getattr(self, name)))
        object.__setattr__(self, "upsilon", _finite("upsilon", self.upsilon))
        if not self.gamma > 0:
            raise ParameterError("total OPA decay rate must be > 0")
        if abs(self.upsilon) >= self.gamma:
            raise ThresholdError(
                f"|upsilon| = {abs(self.upsilon):g} reaches the oscillation threshold "
                f"gamma = {self.gamma:g}"
            )

    @property
    def gamma(self) -> float:
        return self.gamma_ic + self.gamma_oc + self.gamma_l

    def carrier_gain(self) -> float:
        """Seed-to-output power gain at zero detuning."""
        return 4 * self.gamma_ic * self.gamma_oc / (self.gamma - self.upsilon) ** 2


@dataclass(frozen=True)
class BeamSplitterParams:
    ratio: float = 0.5
    phase: float = 0.0
    visibility: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "ratio", _unit_interval("ratio", self.ratio))
        object.__setattr__(self, "phase", _finite("phase", self.phase))
        object.__setattr__(self, "visibility", _unit_interval("visibility", self.visibility))


@dataclass(frozen=True)
class LaserNoiseParams:
    """Classical intensity/phase noise of a solid-state laser.

    Excess noise model (shot-noise units)::

        floor + A G^2 w_r^2 / ((w^2 - w_r^2)^2 + G^2 w^2) + (w_c / w)^k

    The low-frequency term is active only when both ``lf_exponent`` and
    ``lf_corner`` are positive.
    """

    relax_freq: float = 0.0
    relax_height: float = 0.0
    relax_width: float = 0.0
    lf_exponent: float = 0.0
    lf_corner: float = 0.0
    floor: float = 0.0
    power: float = 0.0

    def __post_init__(self):
        for name in ("relax_freq", "relax_height", "relax_width", "lf_exponent",
                     "lf_corner", "floor", "power"):
            object.__setattr__(self, name, _nonneg(name, getattr(self, name)))
        if self.relax_height > 0 and not (self.relax_freq > 0 and self.relax_width > 0):
            raise ParameterError("relaxation peak needs relax_freq > 0 and relax_width > 0")

    def excess(self, omega) -> np.ndarray:
        w = np.asarray(omega, dtype=float)
        out = np.full(w.shape, self.floor)
        if self.relax_height > 0:
            wr, g = self.relax_freq, self.relax_width
            out = out + self.relax_height * g**2 * wr**2 / ((w**2 - wr**2) ** 2 + g**2 * w**2)
        if self.lf_exponent > 0 and self.lf_corner > 0:
            with np.errstate(divide="ignore"):
                out = out + (self.lf_corner / w) ** self.lf_exponent
        return out

    def spectrum(self, omega) -> np.ndarray:
        return 1.0 + self.excess(omega)


@dataclass(frozen=True)
class HomodyneParams:
    """Homodyne detector.

    ``visibility`` is the overlap with the matched spatial mode (efficiency is
    its square); ``unmatched_visibility`` applies to channels that missed a
    combiner's mode overlap. ``lo_suppression`` scales residual LO noise.
    """

    visibility: float = 1.0
    angle: Optional[float] = None
    unmatched_visibility: float = 0.0
    lo_suppression: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "visibility", _unit_interval("visibility", self.visibility))
        object.__setattr__(self, "unmatched_visibility",
                           _unit_interval("unmatched_visibility", self.unmatched_visibility))
        object.__setattr__(self, "lo_suppression",
                           _unit_interval("lo_suppression", self.lo_suppression))
        if self.angle is not None:
            object.__setattr__(self, "angle", _finite("angle", self.angle))

    @property
    def efficiency(self) -> float:
        return self.visibility**2

    @property
    def unmatched_efficiency(self) -> float:
        return self.unmatched_visibility**2


# ---------------------------------------------------------------------------
# Coefficient algebra
# ---------------------------------------------------------------------------


def _mul(m, c: np.ndarray) -> np.ndarray:
    """Scale (N,2,2) coefficients by a scalar, a per-frequency scalar (N,) or
    a per-frequency diagonal (N,2)."""
    if np.ndim(m) == 0:
        return m * c
    m = np.asarray(m)
    if m.ndim == 1:
        return m[:, None, None] * c
    return m[:, :, None] * c


def _rotate(theta: float, c: np.ndarray) -> np.ndarray:
    if theta == 0.0:
        return c
    cs, sn = math.cos(theta), math.sin(theta)
    out = np.empty_like(c)
    out[:, 0, :] = cs * c[:, 0, :] - sn * c[:, 1, :]
    out[:, 1, :] = sn * c[:, 0, :] + cs * c[:, 1, :]
    return out


def _combine(*terms) -> dict:
    """Sum of ``(multiplier, coeffs)`` terms; ``coeffs`` may carry rotation as
    ``(multiplier, coeffs, theta)``."""
    out: dict = {}
    for term in terms:
        m, cs = term[0], term[1]
        theta = term[2] if len(term) > 2 else 0.0
        for sid, c in cs.items():
            v = _mul(m, _rotate(theta, c))
            out[sid] = out[sid] + v if sid in out else v
    return out


def _vacuum(sources: MutableMapping, sid: str, n: int) -> dict:
    if sid not in sources:
        sources[sid] = NoiseSource.vacuum(sid)
    return {sid: identity(n)}


def leakage_fraction(visibility: float, convention: str = "one-minus-v") -> float:
    """Power fraction of each input that misses the interfering mode."""
    if convention == "one-minus-v":
        return 1.0 - visibility
    if convention == "one-minus-v2":
        return 1.0 - visibility**2
    raise ParameterError(f"unknown leakage convention '{convention}'")


# ---------------------------------------------------------------------------
# Elements
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OpaTransfer:
    """Per-port (amplitude, phase) quadrature transfer of an OPA, each (N, 2)."""

    ic: np.ndarray
    l: np.ndarray
    oc: np.ndarray


def opa_transfer(params: OpaParams, omega) -> OpaTransfer:
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    if np.any(w < 0):
        raise DomainError("OPA transfer needs omega >= 0")
    g, goc = params.gamma, params.gamma_oc
    ups = np.array([params.upsilon, -params.upsilon])
    den = 1j * w[:, None] - ups[None, :] + g
    t_ic = 2 * math.sqrt(goc * params.gamma_ic) / den
    t_l = 2 * math.sqrt(goc * params.gamma_l) / den
    t_oc = 2 * goc / den - 1
    return OpaTransfer(t_ic, t_l, t_oc)


def opa(seed: FieldMode, oc: FieldMode, loss: FieldMode, params: OpaParams) -> FieldMode:
    """Output field of an OPA. Unmatched channels of the inputs are rejected by
    the resonator."""
    t = opa_transfer(params, seed.omega)
    coeffs = _combine((t.ic, seed.coeffs), (t.l, loss.coeffs), (t.oc, oc.coeffs))
    return FieldMode(seed.omega, coeffs, {}, seed.carrier_power * params.carrier_gain(),
                     seed.carrier_phase)


def _carrier(field: FieldMode) -> complex:
    return math.sqrt(field.carrier_power) * complex(math.cos(field.carrier_phase),
                                                  math.sin(field.carrier_phase))


def _polar(power: float, amp: complex) -> tuple[float, float]:
    return power, (math.atan2(amp.imag, amp.real) if amp != 0 else 0.0)


def beam_splitter(
    in1: FieldMode,
    in2: FieldMode,
    params: BeamSplitterParams,
    sources: MutableMapping,
    name: str = "bs",
    convention: str = "one-minus-v",
) -> tuple[FieldMode, FieldMode]:
    """Two-port combiner.

    ``o1 = sqrt(R) a + sqrt(1-R) P(phase) b``, ``o2 = sqrt(1-R) a - sqrt(R) P(phase) b``
    where ``P`` is a carrier phase rotation. With visibility < 1 each input
    keeps amplitude ``sqrt(1-L)`` in the interfering mode; the rest travels in
    an orthogonal channel labelled ``"<name>.a"`` / ``"<name>.b"``.
    """
    R, th = params.ratio, params.phase
    r, t = math.sqrt(R), math.sqrt(1.0 - R)
    n = in1.n
    L = leakage_fraction(params.visibility, convention)

    if L > 0:
        m, u = math.sqrt(1.0 - L), math.sqrt(L)
        va = _vacuum(sources, f"{name}:mode.a", n)
        vb = _vacuum(sources, f"{name}:mode.b", n)
        m1 = _combine((m, in1.coeffs), (u, va))
        m2 = _combine((m, in2.coeffs), (u, vb))
        p1 = _combine((u, in1.coeffs), (-m, va))
        p2 = _combine((u, in2.coeffs), (-m, vb))
    else:
        m1, m2 = in1.coeffs, in2.coeffs

    o1 = _combine((r, m1), (t, m2, th))
    o2 = _combine((t, m1), (-r, m2, th))

    un1: dict = {}
    un2: dict = {}
    labels = sorted(set(in1.unmatched) | set(in2.unmatched))
    for label in labels:
        a = in1.unmatched.get(label) or _vacuum(sources, f"{name}:fill.a.{label}", n)
        b = in2.unmatched.get(label) or _vacuum(sources, f"{name}:fill.b.{label}", n)
        un1[label] = _combine((r, a), (t, b, th))
        un2[label] = _combine((t, a), (-r, b, th))
    if L > 0:
        fa = _vacuum(sources, f"{name}:perp.a", n)
        fb = _vacuum(sources, f"{name}:perp.b", n)
        un1[f"{name}.a"] = _combine((r, p1), (t, fa))
        un2[f"{name}.a"] = _combine((t, p1), (-r, fa))
        un1[f"{name}.b"] = _combine((t, p2, th), (r, fb))
        un2[f"{name}.b"] = _combine((-r, p2, th), (t, fb))

    a1, a2 = _carrier(in1), _carrier(in2)
    rot = complex(math.cos(th), math.sin(th))
    amp1 = r * a1 + t * rot * a2
    amp2 = t * a1 - r * rot * a2
    pw1 = (1 - L) * abs(amp1) ** 2 + L * (R * in1.carrier_power + (1 - R) * in2.carrier_power)
    pw2 = (1 - L) * abs(amp2) ** 2 + L * ((1 - R) * in1.carrier_power + R * in2.carrier_power)
    out1 = FieldMode(in1.omega, o1, un1, *_polar(pw1, amp1))
    out2 = FieldMode(in1.omega, o2, un2, *_polar(pw2, amp2))
    return out1, out2


def loss_element(field: FieldMode, efficiency: float, sources: MutableMapping,
                 name: str = "loss") -> FieldMode:
    eta = _unit_interval("efficiency", efficiency)
    a, b = math.sqrt(eta), math.sqrt(1.0 - eta)
    n = field.n
    main = _combine((a, field.coeffs), (b, _vacuum(sources, f"{name}:vac", n)))
    un = {
        ch: _combine((a, cs), (b, _vacuum(sources, f"{name}:vac.{ch}", n)))
        for ch, cs in field.unmatched.items()
    }
    return FieldMode(field.omega, main, un, field.carrier_power * eta, field.carrier_phase)


def phase_shift(field: FieldMode, theta: float) -> FieldMode:
    """Rotate the quadrature frame by ``theta``: X+ -> cos X+ - sin X-."""
    theta = _finite("angle", theta)
    main = _combine((1.0, field.coeffs, theta))
    un = {ch: _combine((1.0, cs, theta)) for ch, cs in field.unmatched.items()}
    return FieldMode(field.omega, main, un, field.carrier_power, field.carrier_phase + theta)


def mode_cleaner(field: FieldMode, pole: float, sources: MutableMapping,
                 name: str = "mc") -> FieldMode:
    """Single-pole filter cavity; the rejected sideband power is replaced by
    vacuum. Only the cavity's own spatial mode is transmitted."""
    pole = _finite("pole", pole)
    if not pole > 0:
        raise ParameterError("mode-cleaner pole must be > 0")
    h = 1.0 / (1.0 + 1j * np.asarray(field.omega) / pole)
    fill = np.sqrt(np.clip(1.0 - np.abs(h) ** 2, 0.0, None))
    main = _combine((h, field.coeffs), (fill, _vacuum(sources, f"{name}:vac", field.n)))
    return FieldMode(field.omega, main, {}, field.carrier_power, field.carrier_phase)


def laser_source(params: LaserNoiseParams, omega, sources: MutableMapping,
                 name: str = "laser", vacuum_id: str | None = None) -> FieldMode:
    """Laser output: own vacuum plus a classical source ``name`` carrying the
    excess noise (same spectrum in both quadratures)."""
    if name not in sources:
        sources[name] = NoiseSource.classical(name, params.excess)
    vid = vacuum_id or f"{name}:vac"
    n = len(omega)
    coeffs = {vid: identity(n), name: identity(n)}
    if vid not in sources:
        sources[vid] = NoiseSource.vacuum(vid)
    return FieldMode(np.asarray(omega, float), coeffs, {}, params.power, 0.0)


def _detected(field: FieldMode, params: HomodyneParams, sources: SourceRegistry,
              q, lo: Optional[FieldMode], cache: dict) -> np.ndarray:
    eta, eta_u = params.efficiency, params.unmatched_efficiency
    w = field.omega
    v = eta * coeffs_variance(field.coeffs, sources, w, q, cache) + (1.0 - eta)
    if eta_u > 0:
        for label in sorted(field.unmatched):
            v = v + eta_u * (coeffs_variance(field.unmatched[label], sources, w, q, cache) - 1.0)
    if lo is not None and params.lo_suppression > 0:
        v = v + params.lo_suppression * (coeffs_variance(lo.coeffs, sources, w, "plus", cache) - 1.0)
    return v


def homodyne_measure(field: FieldMode, params: HomodyneParams, sources: SourceRegistry,
                     grid: FrequencyGrid | None = None,
                     lo: Optional[FieldMode] = None) -> SpectrumResult:
    """Detected spectrum: ``eta V_theta + (1 - eta) + lo_suppression (V_LO - 1)``,
    plus the excess of unmatched channels at efficiency ``unmatched_visibility**2``."""
    if grid is None:
        grid = FrequencyGrid(field.omega)
    elif not np.array_equal(grid.points, field.omega):
        raise DomainError("field and grid differ")
    cache: dict = {}
    vp = _detected(field, params, sources, "plus", lo, cache)
    vm = _detected(field, params, sources, "minus", lo, cache)
    vt = None
    if params.angle is not None:
        vt = _detected(field, params, sources, params.angle, lo, cache)
    return SpectrumResult(grid, vp, vm, vt, params.angle, field.carrier_power)


__all__ = [
    "OpaParams", "BeamSplitterParams", "LaserNoiseParams", "HomodyneParams",
    "OpaTransfer", "opa_transfer", "opa", "beam_splitter", "loss_element",
    "phase_shift", "mode_cleaner", "laser_source", "homodyne_measure",
    "leakage_fraction", "ParameterError", "ThresholdError", "LEAKAGE_CONVENTIONS",
    "Coeffs",
]
