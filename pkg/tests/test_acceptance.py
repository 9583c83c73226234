"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import contextlib
import io
import math
import random
import re
import time
from importlib import resources

import numpy as np
import pytest

from conftest import WORKED, dual_opa, opa_overrides
from netgen import mutate, random_network
from sqznet.analysis import closed_form_v_out, optical_suppression
from sqznet.cli import main
from sqznet.components import OpaParams
from sqznet.core import FrequencyGrid
from sqznet.netlist import NetlistError, load, position_in_bounds, serialize
from sqznet.network import Component, Edge, Network, evaluate
from sqznet.scenarios import MEASURED_VISIBILITIES, RELAXATION_NOISE, SCENARIOS, scenario

TWO_PI = 2 * math.pi
GRID_400 = FrequencyGrid.log_hz(220e3, 2.1e6, 400)


@pytest.fixture
def criterion(capsys):
    """Run a criterion body and print one PASS/FAIL line for it."""

    @contextlib.contextmanager
    def _run(number, title):
        detail = {}
        try:
            yield detail
        except BaseException as exc:
            with capsys.disabled():
                print(f"\nFAIL criterion {number}: {title} ({type(exc).__name__}: {exc})")
            raise
        extra = ", ".join(f"{k}={v}" for k, v in detail.items())
        with capsys.disabled():
            print(f"\nPASS criterion {number}: {title}" + (f" [{extra}]" if extra else ""))

    return _run


def _passive_network(rng):
    comps = [Component("laser", "L", {"power": 1e-3}), Component("vacuum", "V")]
    free = [("L", "out"), ("V", "out")]
    edges = []
    for i in range(rng.randint(1, 6)):
        if rng.random() < 0.6:
            name = f"B{i}"
            comps.append(Component("bs", name, {"ratio": rng.random(), "phase": rng.uniform(-3, 3)}))
            for port in ("a", "b"):
                if free and rng.random() < 0.8:
                    src = free.pop(rng.randrange(len(free)))
                    edges.append(Edge(src[0], src[1], name, port))
            free += [(name, "o1"), (name, "o2")]
        else:
            name = f"P{i}"
            comps.append(Component("phase", name, {"angle": rng.uniform(-3, 3)}))
            if free:
                src = free.pop(rng.randrange(len(free)))
                edges.append(Edge(src[0], src[1], name, "in"))
            free.append((name, "out"))
    dets = []
    for j, (src, port) in enumerate(free):
        comps.append(Component("homodyne", f"D{j}", {"angle": rng.uniform(-3, 3)}))
        edges.append(Edge(src, port, f"D{j}", "in"))
        dets.append(f"D{j}")
    return Network(comps, edges, dets)


def test_criterion_01_shot_noise_identity(criterion):
    with criterion(1, "passive lossless networks give V+ = V- = 1 within 1e-12") as d:
        rng = random.Random(11)
        worst, slowest = 0.0, 0.0
        for _ in range(25):
            net = _passive_network(rng)
            t0 = time.perf_counter()
            res = evaluate(net, GRID_400, threads=1)
            slowest = max(slowest, time.perf_counter() - t0)
            for r in res.values():
                worst = max(worst, np.max(np.abs(r.v_plus - 1)), np.max(np.abs(r.v_minus - 1)),
                            np.max(np.abs(r.v_theta - 1)))
        d["max_dev"] = f"{worst:.1e}"
        d["max_runtime_s"] = f"{slowest:.3f}"
        assert worst <= 1e-12
        assert slowest < 1.0


def test_criterion_02_closed_form_equivalence(criterion):
    with criterion(2, "engine matches the two-OPA closed form within 1e-10 relative") as d:
        rng = np.random.default_rng(2)
        worst = 0.0
        t0 = time.perf_counter()
        for _ in range(100):
            ps = []
            for _ in range(2):
                gic, goc, gl = TWO_PI * 1e6 * rng.uniform(0, 10, 3)
                goc += TWO_PI * 1e4
                ups = rng.uniform(-0.99, 0.99) * (gic + goc + gl)
                ps.append(dict(gamma_ic=gic, gamma_oc=goc, gamma_l=gl, upsilon=ups))
            floor = float(rng.choice([0.0, rng.uniform(0, 1e6)]))
            res = evaluate(dual_opa(ps[0], ps[1], **{"L.floor": floor}), GRID_400)
            v1, v2 = closed_form_v_out(OpaParams(**ps[0]), OpaParams(**ps[1]), 1 + floor, GRID_400.points)
            worst = max(worst, np.max(np.abs(res["DET_INT"].v_plus / v1 - 1)),
                        np.max(np.abs(res["DET_VAC"].v_plus / v2 - 1)))
        elapsed = time.perf_counter() - t0
        d["max_rel_err"] = f"{worst:.1e}"
        d["runtime_s"] = f"{elapsed:.2f}"
        assert worst <= 1e-10
        assert elapsed < 10.0


def test_criterion_03_threshold_limit(criterion):
    with criterion(3, "lossless OPA at 0.999 threshold: V+ = 2.5025e-7, V+V- = 1") as d:
        g = TWO_PI * 10e6
        net = scenario("single_opa", opa_overrides("OPA", 0.0, g, 0.0, -0.999 * g))
        grid = FrequencyGrid.from_hz([1.0, 10.0, 100.0])
        r = evaluate(net, grid)["DET"]
        vp, vm = r.v_plus[0], r.v_minus[0]
        d["V+"] = f"{vp:.6e}"
        d["V+V-"] = f"{vp * vm:.9f}"
        assert abs(vp - 2.5025e-7) <= 1e-11
        assert abs(vp * vm - 1) <= 1e-6
        assert vm == pytest.approx(3.996e6, rel=1e-4)


def test_criterion_04_uncertainty_product(criterion):
    with criterion(4, "1000 random vacuum-driven networks keep V+V- >= 1 - 1e-9") as d:
        grid = FrequencyGrid.log_hz(1e3, 1e8, 40)
        worst = math.inf
        for seed in range(1000):
            net = random_network(seed, classical=False)
            for r in evaluate(net, grid).values():
                worst = min(worst, float(np.min(r.v_plus * r.v_minus)))
        d["min_product"] = f"{worst:.15f}"
        assert worst >= 1 - 1e-9


def test_criterion_05_classical_noise_immunity(criterion):
    with criterion(5, "+60 dB laser noise leaves the vacuum port unchanged within 1e-9") as d:
        base = {**opa_overrides("OPA1", **WORKED), **opa_overrides("OPA2", **WORKED)}
        grid = FrequencyGrid(np.geomspace(1e-4, 10.0, 400))
        quiet = evaluate(scenario("dual_opa_mz", base), grid)["DET_VAC"]
        loud = evaluate(scenario("dual_opa_mz", {**base, "L.floor": 1e6}), grid)["DET_VAC"]
        dev = float(np.max(np.abs(loud.v_plus / quiet.v_plus - 1)))
        q2 = evaluate(scenario("dual_opa_mz"), GRID_400)["DET_VAC"]
        l2 = evaluate(scenario("dual_opa_mz", {"L.floor": 1e6}), GRID_400)["DET_VAC"]
        dev_default = float(np.max(np.abs(l2.v_plus / q2.v_plus - 1)))
        d["max_rel_dev"] = f"{max(dev, dev_default):.1e}"
        assert dev <= 1e-9 and dev_default <= 1e-9


def test_criterion_06_balancing(criterion):
    with criterion(6, "balance with 10% pump mismatch: R* = 0.51694, >= 120 dB reduction") as d:
        argv = ["balance", "--scenario", "dual_opa_mz"]
        for k, v in {**opa_overrides("OPA1", **WORKED),
                     **opa_overrides("OPA2", **dict(WORKED, upsilon=-0.45))}.items():
            argv += ["--set", f"{k}={v!r}"]
        out = io.StringIO()
        assert main(argv + ["--fmin", "1e-6", "--fmax", "1"], out) == 0
        text = out.getvalue()
        r_star = float(re.search(r"R\* = (\S+)", text).group(1))
        reduction = float(re.search(r"at 0 Hz: (\S+) dB", text).group(1))
        d["R*"] = r_star
        d["reduction_dB"] = reduction
        assert abs(r_star - 0.51694) <= 1e-5
        assert reduction >= 120


def test_criterion_07_suppression_level(criterion):
    with criterion(7, "optical suppression 29.2 dB (alternate convention 26.3 dB)") as d:
        net = scenario("dual_opa_mz", MEASURED_VISIBILITIES)
        w = GRID_400.points
        s1 = optical_suppression(net, w)
        s2 = optical_suppression(net, w, convention="one-minus-v2")
        d["default_dB"] = f"{s1.mean():.2f}"
        d["alternate_dB"] = f"{s2.mean():.2f}"
        assert np.all(np.abs(s1 - 29.2) <= 1.0)
        assert np.all(np.abs(s2 - 26.3) <= 1.0)


def test_criterion_08_ring_cancellation(criterion):
    with criterion(8, "ring OPA common-mode +40 dB noise cancels at the vacuum port") as d:
        quiet = evaluate(scenario("ring_opa"), GRID_400)["DET_VAC"]
        loud = evaluate(scenario("ring_opa", {"NOISE.excess": 1e4}), GRID_400)["DET_VAC"]
        dev = float(np.max(np.abs(loud.v_plus - quiet.v_plus) / quiet.v_plus))
        d["max_rel_excess"] = f"{dev:.1e}"
        assert dev <= 1e-9


def test_criterion_09_qualitative_traces(criterion):
    with criterion(9, "relaxation peak lifts the vacuum port above shot noise within 640-870 kHz") as d:
        net = scenario("dual_opa_mz", {**MEASURED_VISIBILITIES, **RELAXATION_NOISE})
        grid = FrequencyGrid.log_hz(220e3, 2.1e6, 400)
        res = evaluate(net, grid)
        hz = grid.hz
        vac, intense = res["DET_VAC"].v_plus, res["DET_INT"].v_plus
        band = (hz >= 640e3) & (hz <= 870e3)
        d["V_vac(220kHz)"] = f"{vac[0]:.3f}"
        d["max V_vac(640-870kHz)"] = f"{vac[band].max():.3f}"
        d["max V_int(<1.9MHz)"] = f"{intense[hz < 1.9e6].max():.1f}"
        assert vac[0] < 1
        assert vac[band].max() > 1
        assert intense[(hz < 1.9e6) & band].max() > 1


def _shipped():
    names = ("dual_opa_mz.sqz", "ring_opa.sqz", "dual_opa_measured.sqz")
    return [resources.files("sqznet").joinpath("netlists", n).read_text(encoding="utf-8") for n in names]


def test_criterion_10_parser_robustness(criterion):
    with criterion(10, "scenario round-trips and 1e5-input fuzz without crashes") as d:
        for sid in SCENARIOS:
            net = scenario(sid)
            assert load(serialize(net)).structurally_equal(net), sid
        seeds = _shipped() + [serialize(scenario(s)) for s in SCENARIOS]
        rng = random.Random(20240510)
        rejected = accepted = 0
        slowest = 0.0
        for i in range(100_000):
            if i % 50 == 0:
                text = bytes(rng.randrange(256) for _ in range(rng.randint(0, 120)))
            else:
                text = mutate(rng.choice(seeds), rng)
            t0 = time.perf_counter()
            try:
                load(text)
                accepted += 1
            except NetlistError as exc:
                rejected += 1
                assert exc.diagnostics
                for diag in exc.diagnostics:
                    assert position_in_bounds(text, diag), (text, diag)
            slowest = max(slowest, time.perf_counter() - t0)
        d["accepted"] = accepted
        d["rejected"] = rejected
        d["slowest_s"] = f"{slowest:.3f}"
        assert slowest < 1.0
