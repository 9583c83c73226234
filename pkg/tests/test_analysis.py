import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import WORKED, dual_opa
from sqznet.analysis import (
    balance_input_splitter,
    closed_form_v_out,
    detector_coupling,
    epr_metric,
    find_input_splitter,
    optical_suppression,
    single_opa_v_out,
    suppression_band,
)
from sqznet.components import BeamSplitterParams, OpaParams, ThresholdError, beam_splitter, phase_shift
from sqznet.core import FieldMode, FrequencyGrid, GridMismatchError, NoiseSource
from sqznet.network import Component, Edge, Network, TopologyError
from sqznet.scenarios import MEASURED_VISIBILITIES, scenario


class TestClosedForm:
    def test_worked_point(self):
        p = OpaParams(**WORKED)
        v1, v2 = closed_form_v_out(p, p, 1.0, 0.0)
        assert v2 == pytest.approx(0.28889, abs=5e-6)
        assert v1 == pytest.approx(v2)

    def test_threshold_limit(self):
        p = OpaParams(0.0, 1.0, 0.0, -0.999)
        vp = single_opa_v_out(p, 1.0, 0.0)
        vm = single_opa_v_out(p, 1.0, 0.0, "minus")
        assert vp == pytest.approx(2.5025e-7, abs=1e-11)
        assert vm == pytest.approx(3.996e6, rel=1e-4)
        assert vp * vm == pytest.approx(1.0, abs=1e-9)

    def test_no_pump_is_shot_noise(self):
        p = OpaParams(0.3, 0.5, 0.2, 0.0)
        w = np.linspace(0, 10, 50)
        for q in ("plus", "minus"):
            v1, v2 = closed_form_v_out(p, p, 1.0, w, q)
            assert np.allclose(v1, 1.0, atol=1e-14) and np.allclose(v2, 1.0, atol=1e-14)

    def test_mismatched_reduces_to_identical(self):
        # the general two-OPA composition approaches the identical-OPA expression
        p = OpaParams(**WORKED)
        w = np.array([0.0, 0.4, 3.0])
        a = closed_form_v_out(p, p, 7.0, w)
        b = closed_form_v_out(p, OpaParams(0.15, 0.8, 0.05, -0.5000000001), 7.0, w)
        assert np.allclose(a[0], b[0], rtol=1e-8) and np.allclose(a[1], b[1], rtol=1e-8)

    def test_threshold_error(self):
        with pytest.raises(ThresholdError):
            OpaParams(0.1, 0.8, 0.1, -1.0)


def _leak(net, key, r, w):
    return float(detector_coupling(net.with_overrides({key: r}), [w], "DET_VAC")[0])


def _grid_search(net, w=0.0):
    """Fine grid search for the leakage minimum, refined by golden sections."""
    rs = np.linspace(0, 1, 2001)
    vals = [_leak(net, "BS1.ratio", r, w) for r in rs]
    i = int(np.argmin(vals))
    lo, hi = rs[max(i - 1, 0)], rs[min(i + 1, len(rs) - 1)]
    g = (math.sqrt(5) - 1) / 2
    for _ in range(80):
        a, b = hi - g * (hi - lo), lo + g * (hi - lo)
        if _leak(net, "BS1.ratio", a, w) < _leak(net, "BS1.ratio", b, w):
            hi = b
        else:
            lo = a
    return 0.5 * (lo + hi)


class TestBalance:
    def test_identical_is_half(self):
        res = balance_input_splitter(dual_opa())
        assert res.ratio == pytest.approx(0.5, abs=1e-12)
        assert res.residual <= 1e-9

    def test_upsilon_mismatch(self):
        net = dual_opa(WORKED, dict(WORKED, upsilon=-0.45))
        res = balance_input_splitter(net, 0.0)
        expected = 1.5**2 / (1.5**2 + 1.45**2)  # null: sqrt(R/(1-R)) = (g-u1)/(g-u2)
        assert res.ratio == pytest.approx(expected, abs=1e-12)
        assert res.ratio == pytest.approx(0.51694, abs=1e-5)
        assert res.residual <= 1e-9
        assert res.reduction_db >= 120
        assert _grid_search(net) == pytest.approx(res.ratio, abs=1e-6)

    def test_coupler_mismatch_against_grid_search(self):
        net = dual_opa(WORKED, dict(WORKED, gamma_oc=0.78))
        res = balance_input_splitter(net, 0.0)
        assert res.residual <= 1e-9
        assert _grid_search(net) == pytest.approx(res.ratio, abs=1e-6)

    def test_nonzero_target(self):
        net = dual_opa(WORKED, dict(WORKED, upsilon=-0.45))
        res = balance_input_splitter(net, 0.7)
        assert _grid_search(net, 0.7) == pytest.approx(res.ratio, abs=1e-6)

    def test_bandwidth_report(self):
        net = dual_opa(WORKED, dict(WORKED, upsilon=-0.45))
        grid = FrequencyGrid.from_hz(np.geomspace(1e-6, 1.0, 200))
        res = balance_input_splitter(net, 0.0, grid=grid)
        lo, hi = res.bandwidth_hz
        assert lo == pytest.approx(1e-6)
        assert 1e-4 < hi < 1.0
        assert np.all(res.suppression_db[res.grid_hz <= hi] >= 40)

    def test_no_splitter(self):
        with pytest.raises(TopologyError):
            balance_input_splitter(scenario("single_opa"))

    def test_find_input_splitter(self):
        assert find_input_splitter(scenario("ring_opa")) == ("BS1", "L")

    def test_suppression_band_helper(self):
        f = np.array([1.0, 2.0, 3.0, 4.0])
        assert suppression_band(f, np.array([50, 45, 30, 50]), 40, 1.0) == (1.0, 2.0)
        assert suppression_band(f, np.array([10, 45, 30, 50]), 40, 0.0) is None


@settings(max_examples=30, deadline=None)
@given(du=st.floats(-0.2, 0.3), dg=st.floats(-0.1, 0.3))
def test_balance_beats_any_ratio(du, dg):
    net = dual_opa(WORKED, dict(WORKED, upsilon=-0.5 + du, gamma_oc=0.8 + dg))
    res = balance_input_splitter(net, 0.0)
    for r in np.linspace(0, 1, 11):
        assert res.leakage <= _leak(net, "BS1.ratio", r, 0.0) + 1e-15


class TestOpticalSuppression:
    def test_default_convention(self):
        net = scenario("dual_opa_mz", MEASURED_VISIBILITIES)
        s = optical_suppression(net, [2 * math.pi * 1e3])[0]
        # oracle: leakage fraction times relative detection efficiency
        want = -10 * math.log10((1 - 0.986) * (0.28 / 0.96) ** 2)
        assert s == pytest.approx(want, abs=1e-3)
        assert s == pytest.approx(29.2, abs=0.1)

    def test_alternate_convention(self):
        net = scenario("dual_opa_mz", MEASURED_VISIBILITIES)
        s = optical_suppression(net, [2 * math.pi * 1e3], convention="one-minus-v2")[0]
        want = -10 * math.log10((1 - 0.986**2) * (0.28 / 0.96) ** 2)
        assert s == pytest.approx(want, abs=1e-3)
        assert s == pytest.approx(26.3, abs=0.1)

    def test_perfect_visibility_is_unbounded(self):
        assert optical_suppression(scenario("dual_opa_mz"), [1.0])[0] == math.inf


# -- EPR --------------------------------------------------------------------------


def _sq(omega, sid, vp, vm):
    n = len(omega)
    c = np.zeros((n, 2, 2), complex)
    c[:, 0, 0], c[:, 1, 1] = math.sqrt(vp), math.sqrt(vm)
    return FieldMode(omega, {sid: c})


def _cov_oracle(f1, f2, sources, k=0):
    """Covariance matrix of (X1+, X1-, X2+, X2-) at grid index k, from the
    coefficient rows (real-valued inputs only)."""
    ids = sorted(set(f1.coeffs) | set(f2.coeffs))
    rows = []
    for f in (f1, f2):
        for q in (0, 1):
            row = []
            for sid in ids:
                c = f.coeffs.get(sid)
                row.extend([0.0, 0.0] if c is None else c[k, q, :].real)
            rows.append(row)
    a = np.array(rows)
    d = []
    for sid in ids:
        p, m = sources[sid].spectra(f1.omega[k:k + 1])
        d += [p[0], m[0]]
    return a @ np.diag(d) @ a.T


def _sum_criterion(cov):
    best = None
    for s in (1.0, -1.0):
        u = np.array([1, 0, s, 0]) / math.sqrt(2)
        v = np.array([0, 1, 0, -s]) / math.sqrt(2)
        val = u @ cov @ u + v @ cov @ v
        best = val if best is None or val < best else best
    return best


class TestEpr:
    W = np.array([1.0, 2.0])

    def test_two_vacua(self):
        src = {k: NoiseSource.vacuum(k) for k in "ab"}
        a, b = FieldMode.from_source(self.W, "a"), FieldMode.from_source(self.W, "b")
        assert np.allclose(epr_metric(a, b, src), 2.0)

    def test_quarter_turn_recombination(self):
        src = {k: NoiseSource.vacuum(k) for k in "ab"}
        a = _sq(self.W, "a", 0.5, 2.0)
        b = phase_shift(_sq(self.W, "b", 0.5, 2.0), math.pi / 2)
        o1, o2 = beam_splitter(a, b, BeamSplitterParams(), src)
        got = epr_metric(o1, o2, src)
        assert np.allclose(got, 1.0, atol=1e-12)
        assert got[0] == pytest.approx(_sum_criterion(_cov_oracle(o1, o2, src)), abs=1e-12)

    def test_no_correlation(self):
        src = {k: NoiseSource.vacuum(k) for k in "ab"}
        a = FieldMode.from_source(self.W, "a")
        b = _sq(self.W, "b", 0.5, 2.0)
        got = epr_metric(a, b, src)
        assert np.all(got >= 2.0 - 1e-12)
        assert got[0] == pytest.approx(_sum_criterion(_cov_oracle(a, b, src)), abs=1e-12)

    def test_grid_mismatch(self):
        a = FieldMode.from_source(self.W, "a")
        b = FieldMode.from_source(self.W * 2, "b")
        with pytest.raises(GridMismatchError):
            epr_metric(a, b, {})

    def test_dual_opa_quarter_phase_entangles(self):
        from sqznet.network import propagate

        net = dual_opa(**{"PH.angle": math.pi / 2})
        prop = propagate(net, np.array([1e-3, 0.3]))
        i = epr_metric(prop.field("DET_INT", "in"), prop.field("DET_VAC", "in"), prop.sources)
        assert np.all(i < 2.0)


@settings(max_examples=100, deadline=None)
@given(v1=st.floats(0.05, 20), v2=st.floats(0.05, 20), th=st.floats(-4, 4), r=st.floats(0, 1))
def test_epr_matches_covariance_oracle(v1, v2, th, r):
    w = np.array([1.0])
    src = {k: NoiseSource.vacuum(k) for k in "ab"}
    a = _sq(w, "a", v1, 1 / v1)
    b = phase_shift(_sq(w, "b", v2, 1 / v2), th)
    o1, o2 = beam_splitter(a, b, BeamSplitterParams(r), src)
    assert epr_metric(o1, o2, src)[0] == pytest.approx(_sum_criterion(_cov_oracle(o1, o2, src)),
                                                       rel=1e-10, abs=1e-12)
