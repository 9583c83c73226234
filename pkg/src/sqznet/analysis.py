"""Closed-form oracle, splitter balancing, EPR inseparability and suppression
levels for evaluated networks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .components import OpaParams, opa_transfer
from .core import FieldMode, GridMismatchError, SourceRegistry, coeffs_variance, FrequencyGrid
from .network import Network, NetworkError, TopologyError, propagate


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def single_opa_v_out(params: OpaParams, v_in, omega, quadrature: str = "plus"):
    """Output variance of one OPA seeded through its input coupler with
    variance ``v_in``; output-coupler and loss inputs are vacuum."""
    w = np.asarray(omega, dtype=float)
    ups = params.upsilon if quadrature == "plus" else -params.upsilon
    g, goc, gic, gl = params.gamma, params.gamma_oc, params.gamma_ic, params.gamma_l
    num = 4 * goc * (gic * np.asarray(v_in, float) + gl) + w**2 + (2 * goc + ups - g) ** 2
    return num / (w**2 + (ups - g) ** 2)


def closed_form_v_out(params1: OpaParams, params2: OpaParams, v_in_plus, omega,
                      quadrature: str = "plus", v_in_minus=None):
    """Variances ``(V_out1, V_out2)`` of the intense and vacuum ports of the
    balanced (50/50, in-phase) two-OPA Mach-Zehnder.

    Port 1 of the first splitter carries the laser (variance ``v_in_plus`` in
    the amplitude quadrature, ``v_in_minus`` in the phase quadrature), port 2
    vacuum. Identical OPAs reduce to the single-OPA expression for each port.
    """
    v_in = v_in_plus if quadrature == "plus" else (v_in_plus if v_in_minus is None else v_in_minus)
    w = np.asarray(omega, dtype=float)
    if params1 == params2:
        return (single_opa_v_out(params1, v_in, w, quadrature),
                single_opa_v_out(params1, 1.0, w, quadrature))
    col = 0 if quadrature == "plus" else 1
    t1 = opa_transfer(params1, np.atleast_1d(w))
    t2 = opa_transfer(params2, np.atleast_1d(w))
    a1, a2 = t1.ic[:, col], t2.ic[:, col]
    vac = (np.abs(t1.l[:, col]) ** 2 + np.abs(t2.l[:, col]) ** 2
           + np.abs(t1.oc[:, col]) ** 2 + np.abs(t2.oc[:, col]) ** 2) / 2
    s = np.abs(a1 + a2) ** 2 / 4
    d = np.abs(a1 - a2) ** 2 / 4
    v1 = s * v_in + d + vac
    v2 = d * v_in + s + vac
    if np.ndim(omega) == 0:
        return float(v1[0]), float(v2[0])
    return v1, v2


# ---------------------------------------------------------------------------
# Coupling of a source to a detector
# ---------------------------------------------------------------------------


def laser_source_ids(net: Network) -> list:
    return [c.name for c in net.components if c.kind == "laser"]


def _weighted_rows(field: FieldMode, detector_params, source_ids, angle) -> np.ndarray:
    """Stack of sqrt(efficiency)-weighted coefficient rows on ``source_ids``;
    shape (N, M). The squared norm of each row is the detected coupling."""
    q = 0.0 if angle is None else angle
    cols = []
    eff = [(math.sqrt(detector_params.efficiency), field.coeffs)]
    ue = math.sqrt(detector_params.unmatched_efficiency)
    if ue > 0:
        eff += [(ue, field.unmatched[k]) for k in sorted(field.unmatched)]
    for weight, coeffs in eff:
        for sid in source_ids:
            c = coeffs.get(sid)
            if c is None:
                continue
            row = math.cos(q) * c[:, 0, :] + math.sin(q) * c[:, 1, :] if q else c[:, 0, :]
            cols.append(weight * row)
    if not cols:
        return np.zeros((field.n, 0), dtype=complex)
    return np.concatenate(cols, axis=1)


def detector_coupling(net: Network, omega, detector: str, source_ids=None,
                      convention: str = "one-minus-v") -> np.ndarray:
    """Detected power coupling ``sum |coefficient|^2`` of the given sources
    (default: all lasers) at ``detector``."""
    rows = _coupling_rows(net, omega, detector, source_ids, convention)
    return np.sum(np.abs(rows) ** 2, axis=1)


def _coupling_rows(net, omega, detector, source_ids, convention):
    if source_ids is None:
        source_ids = laser_source_ids(net)
    prop = propagate(net, np.atleast_1d(omega), convention)
    hp = net.component(detector).build()
    return _weighted_rows(prop.fields[(detector, "in")], hp, source_ids, hp.angle)


# ---------------------------------------------------------------------------
# Balancing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BalanceResult:
    splitter: str
    detector: str
    ratio: float
    omega_target: float
    residual: float  # coefficient magnitude left at the optimum
    leakage: float  # detected power coupling at the optimum
    leakage_reference: float  # same, at the reference ratio
    reference_ratio: float
    bandwidth_hz: Optional[tuple] = None
    grid_hz: Optional[np.ndarray] = None
    suppression_db: Optional[np.ndarray] = None

    @property
    def reduction_db(self) -> float:
        if self.leakage == 0:
            return math.inf if self.leakage_reference > 0 else 0.0
        return 10 * math.log10(self.leakage_reference / self.leakage)


def find_input_splitter(net: Network) -> tuple:
    """(splitter name, laser name) of the beam splitter fed directly by a laser."""
    by_name = {c.name: c for c in net.components}
    lasers = laser_source_ids(net)
    if not lasers:
        raise TopologyError("no laser in network")
    for e in sorted(net.edges):
        if e.src in lasers and by_name[e.dst].kind == "bs":
            return e.dst, e.src
    raise TopologyError("no beam splitter is fed directly by a laser; nothing to balance")


def _optimal_ratio(P: np.ndarray, Q: np.ndarray) -> tuple:
    """Minimise |x P + y Q|^2 over x, y >= 0 with x^2 + y^2 = 1; returns (R, min)."""
    pp = float(np.vdot(P, P).real)
    qq = float(np.vdot(Q, Q).real)
    pq = float(np.vdot(Q, P).real)
    m = np.array([[pp, pq], [pq, qq]])
    vals, vecs = np.linalg.eigh(m)
    x, y = vecs[:, 0]
    if x < 0 or (x == 0 and y < 0):
        x, y = -x, -y
    candidates = [(1.0, pp), (0.0, qq)]
    if x >= 0 and y >= 0:
        # direct evaluation is more accurate than the eigenvalue near a null
        val = float(np.sum(np.abs(x * P + y * Q) ** 2))
        candidates.insert(0, (float(x * x), val))
    return min(candidates, key=lambda rv: rv[1])


def balance_input_splitter(net: Network, omega_target: float = 0.0, detector: str | None = None,
                           grid: FrequencyGrid | None = None, reference_ratio: float = 0.5,
                           convention: str = "one-minus-v",
                           bandwidth_db: float = 40.0) -> BalanceResult:
    """Input splitter ratio that nulls laser noise at ``detector`` at ``omega_target``.

    The laser's contribution downstream of the splitter is linear in
    ``(sqrt(R), sqrt(1-R))``, so two evaluations (R = 1 and R = 0) fix the
    detected leakage as a quadratic form; its minimum over the quarter circle
    gives the optimum exactly.
    """
    splitter, laser = find_input_splitter(net)
    if not net.detectors:
        raise TopologyError("network has no detectors")
    key = f"{splitter}.ratio"
    w = np.array([float(omega_target)])
    if detector is None:
        detector = min(net.detectors, key=lambda d: float(
            detector_coupling(net.with_overrides({key: reference_ratio}), w, d, [laser], convention)[0]))
    elif detector not in net.detectors:
        raise NetworkError(f"unknown detector '{detector}'")
    P = _coupling_rows(net.with_overrides({key: 1.0}), w, detector, [laser], convention)[0]
    Q = _coupling_rows(net.with_overrides({key: 0.0}), w, detector, [laser], convention)[0]
    if not np.any(P) and not np.any(Q):
        raise TopologyError(f"laser '{laser}' does not reach detector '{detector}'")
    ratio, _ = _optimal_ratio(P, Q)
    balanced = net.with_overrides({key: ratio})
    reference = net.with_overrides({key: reference_ratio})
    leak = float(detector_coupling(balanced, w, detector, [laser], convention)[0])
    leak_ref = float(detector_coupling(reference, w, detector, [laser], convention)[0])
    if leak_ref <= leak:
        # rounding can leave the eigen-solution marginally worse than the reference
        ratio, balanced, leak = reference_ratio, reference, leak_ref

    band = fz = sup = None
    if grid is not None:
        lb = detector_coupling(balanced, grid.points, detector, [laser], convention)
        lr = detector_coupling(reference, grid.points, detector, [laser], convention)
        with np.errstate(divide="ignore", invalid="ignore"):
            sup = np.where(lb == 0, np.inf, 10 * np.log10(lr / lb))
        fz = grid.hz
        band = suppression_band(fz, sup, bandwidth_db, omega_target / (2 * math.pi))
    return BalanceResult(splitter, detector, ratio, float(omega_target), math.sqrt(leak), leak,
                         leak_ref, reference_ratio, band, fz, sup)


def suppression_band(freqs_hz: np.ndarray, sup_db: np.ndarray, threshold_db: float,
                     target_hz: float) -> Optional[tuple]:
    """Contiguous frequency run where ``sup_db >= threshold_db``, containing the
    grid point nearest ``target_hz``."""
    ok = sup_db >= threshold_db
    i = int(np.argmin(np.abs(freqs_hz - target_hz)))
    if not ok[i]:
        return None
    lo = i
    while lo > 0 and ok[lo - 1]:
        lo -= 1
    hi = i
    while hi < len(ok) - 1 and ok[hi + 1]:
        hi += 1
    return float(freqs_hz[lo]), float(freqs_hz[hi])


# ---------------------------------------------------------------------------
# Optical suppression with imperfect mode matching
# ---------------------------------------------------------------------------


def optical_suppression(net: Network, omega, detector: str = "DET_VAC",
                        reference: tuple = ("OPA1", "out"),
                        convention: str = "one-minus-v") -> np.ndarray:
    """Laser-noise suppression (dB) at ``detector`` relative to the laser noise
    that one arm (``reference`` output port) carries when detected with the
    same matched efficiency."""
    lasers = laser_source_ids(net)
    w = np.atleast_1d(np.asarray(omega, float))
    prop = propagate(net, w, convention)
    hp = net.component(detector).build()
    rows = _weighted_rows(prop.fields[(detector, "in")], hp, lasers, hp.angle)
    leak = np.sum(np.abs(rows) ** 2, axis=1)
    ref_field = prop.fields[tuple(reference)]
    ref_rows = _weighted_rows(FieldMode(ref_field.omega, ref_field.coeffs), hp, lasers, hp.angle)
    ref = np.sum(np.abs(ref_rows) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        return 10 * np.log10(ref / leak)


# ---------------------------------------------------------------------------
# EPR inseparability
# ---------------------------------------------------------------------------


def _pair_variance(f1: FieldMode, f2: FieldMode, q: int, sign: float, sources, omega, cache):
    rows = {}
    for sid in set(f1.coeffs) | set(f2.coeffs):
        n = f1.n
        a = f1.coeffs[sid][:, q, :] if sid in f1.coeffs else np.zeros((n, 2), complex)
        b = f2.coeffs[sid][:, q, :] if sid in f2.coeffs else np.zeros((n, 2), complex)
        r = (a + sign * b) / math.sqrt(2)
        c = np.zeros((n, 2, 2), complex)
        c[:, 0, :] = r
        rows[sid] = c
    return coeffs_variance(rows, sources, omega, "plus", cache)


def epr_metric(field1: FieldMode, field2: FieldMode, sources: SourceRegistry) -> np.ndarray:
    """Sum-criterion inseparability
    ``min_s V((X+_1 + s X+_2)/sqrt2) + V((X-_1 - s X-_2)/sqrt2)``; values below
    2 certify entanglement of Gaussian states. Ties pick ``s = +1``."""
    if not np.array_equal(field1.omega, field2.omega):
        raise GridMismatchError("fields were evaluated on different grids")
    w = field1.omega
    cache: dict = {}
    plus = (_pair_variance(field1, field2, 0, 1.0, sources, w, cache)
            + _pair_variance(field1, field2, 1, -1.0, sources, w, cache))
    minus = (_pair_variance(field1, field2, 0, -1.0, sources, w, cache)
             + _pair_variance(field1, field2, 1, 1.0, sources, w, cache))
    return np.where(minus < plus, minus, plus)


__all__ = [
    "single_opa_v_out", "closed_form_v_out", "balance_input_splitter", "BalanceResult",
    "find_input_splitter", "detector_coupling", "optical_suppression", "epr_metric",
    "suppression_band", "laser_source_ids",
]
