"""Built-in networks.

Default OPA parameters describe a hemilithic resonator with a 4 % output
coupler: gamma_oc = 2pi x 9.5 MHz, intracavity loss 2pi x 1 MHz, a weak
input coupler 2pi x 0.1 MHz and a pump at half threshold (upsilon = -gamma/2).
The default laser is quiet; classical noise is switched on through overrides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

from .network import Component, Edge, FrequencySweep, Network

TWO_PI = 2 * math.pi

GAMMA_OC = TWO_PI * 9.5e6
GAMMA_L = TWO_PI * 1.0e6
GAMMA_IC = TWO_PI * 0.1e6
UPSILON = -0.5 * (GAMMA_OC + GAMMA_L + GAMMA_IC)

DEFAULT_SWEEP = FrequencySweep(220e3, 2.1e6, "log", 400)


def _opa(name: str) -> Component:
    return Component("opa", name, {
        "gamma_ic_rate": GAMMA_IC,
        "gamma_oc_rate": GAMMA_OC,
        "gamma_l_rate": GAMMA_L,
        "upsilon_rate": UPSILON,
    })


def single_opa() -> Network:
    comps = [
        Component("laser", "L", {"power": 1e-3}),
        _opa("OPA"),
        Component("homodyne", "DET", {}),
    ]
    edges = [Edge("L", "out", "OPA", "seed"), Edge("OPA", "out", "DET", "in")]
    return Network(comps, edges, ("DET",), DEFAULT_SWEEP)


def _mach_zehnder(arm1: str, arm2: str, extra=(), extra_edges=()) -> Network:
    comps = [
        Component("laser", "L", {"power": 1e-3}),
        Component("vacuum", "VIN", {}),
        Component("bs", "BS1", {"ratio": 0.5}),
        _opa(arm1),
        _opa(arm2),
        Component("phase", "PH", {"angle": 0.0}),
        Component("bs", "BS2", {"ratio": 0.5}),
        Component("homodyne", "DET_INT", {}),
        Component("homodyne", "DET_VAC", {}),
        *extra,
    ]
    edges = [
        Edge("L", "out", "BS1", "a"),
        Edge("VIN", "out", "BS1", "b"),
        Edge("BS1", "o1", arm1, "seed"),
        Edge("BS1", "o2", arm2, "seed"),
        Edge(arm1, "out", "BS2", "a"),
        Edge(arm2, "out", "PH", "in"),
        Edge("PH", "out", "BS2", "b"),
        Edge("BS2", "o1", "DET_INT", "in"),
        Edge("BS2", "o2", "DET_VAC", "in"),
        *extra_edges,
    ]
    return Network(comps, edges, ("DET_INT", "DET_VAC"), DEFAULT_SWEEP)


def dual_opa_mz() -> Network:
    """Laser split on BS1 seeds two OPAs whose outputs recombine on BS2.

    BS2.o1 carries the intense squeezed beam (DET_INT), BS2.o2 the squeezed
    vacuum (DET_VAC). PH sets the recombination phase.
    """
    return _mach_zehnder("OPA1", "OPA2")


def ring_opa() -> Network:
    """Both directional modes of one ring resonator, modelled as two OPAs whose
    loss ports share the cavity noise source NOISE."""
    noise = Component("vacuum", "NOISE", {"excess": 0.0})
    return _mach_zehnder(
        "CW", "CCW", extra=(noise,),
        extra_edges=(Edge("NOISE", "out", "CW", "loss"), Edge("NOISE", "out", "CCW", "loss")),
    )


@dataclass(frozen=True)
class ScenarioInfo:
    id: str
    build: Callable[[], Network]
    description: str
    reproduces: str


SCENARIOS: dict[str, ScenarioInfo] = {
    s.id: s
    for s in [
        ScenarioInfo("single_opa", single_opa,
                     "one laser-seeded OPA read out by a homodyne detector",
                     "reference case: single seeded OPA"),
        ScenarioInfo("dual_opa_mz", dual_opa_mz,
                     "two OPAs in a Mach-Zehnder; laser noise cancels on the vacuum port",
                     "noise-cancellation topology, apparatus and intense/vacuum squeezing traces"),
        ScenarioInfo("ring_opa", ring_opa,
                     "counter-propagating modes of a ring OPA with common-mode cavity noise",
                     "proposed ring resonator for cancelling intracavity noise"),
    ]
}


def scenario(scenario_id: str, overrides: Optional[Mapping[str, float]] = None) -> Network:
    try:
        info = SCENARIOS[scenario_id]
    except KeyError:
        raise KeyError(f"unknown scenario '{scenario_id}'") from None
    net = info.build()
    return net.with_overrides(overrides) if overrides else net


# Visibilities and the relaxation-oscillation model used to reproduce the
# measured traces qualitatively.
MEASURED_VISIBILITIES = {
    "BS2.visibility": 0.986,
    "DET_INT.visibility": 0.96,
    "DET_VAC.visibility": 0.96,
    "DET_INT.unmatched_visibility": 0.28,
    "DET_VAC.unmatched_visibility": 0.28,
}

RELAXATION_NOISE = {
    "L.relax_freq": TWO_PI * 755e3,
    "L.relax_width": TWO_PI * 90e3,
    "L.relax_height": 1.2e5,
}
