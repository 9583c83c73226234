"""Component graph, validation and frequency-domain propagation."""

from __future__ import annotations

import graphlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import components as comp
from .core import (
    FieldMode,
    FrequencyGrid,
    NoiseSource,
    SpectrumResult,
    SqznetError,
    identity,
)
from .components import ParameterError


class NetworkError(SqznetError, ValueError):
    pass


class CycleError(NetworkError):
    pass


class TopologyError(NetworkError):
    pass


# ---------------------------------------------------------------------------
# Component kinds
# ---------------------------------------------------------------------------

FREQ, RATE, PLAIN = "freq", "rate", "plain"
REQUIRED = object()
OPTIONAL = object()


@dataclass(frozen=True)
class ParamSpec:
    key: str
    default: object = 0.0
    unit: str = PLAIN


@dataclass(frozen=True)
class KindSpec:
    kind: str
    inputs: tuple
    outputs: tuple
    params: tuple
    # inputs that silently default to vacuum
    quiet_inputs: tuple = ()
    # inputs left empty (not vacuum) when unconnected
    optional_inputs: tuple = ()
    description: str = ""

    def param(self, key) -> Optional[ParamSpec]:
        for p in self.params:
            if p.key == key:
                return p
        return None

    @property
    def is_source(self) -> bool:
        return not self.inputs


KINDS: dict[str, KindSpec] = {
    k.kind: k
    for k in [
        KindSpec("laser", (), ("out",), (
            ParamSpec("power", 1e-3),
            ParamSpec("relax_freq", 0.0, FREQ),
            ParamSpec("relax_height", 0.0),
            ParamSpec("relax_width", 0.0, FREQ),
            ParamSpec("lf_exponent", 0.0),
            ParamSpec("lf_corner", 0.0, FREQ),
            ParamSpec("floor", 0.0),
        ), description="laser with classical excess noise"),
        KindSpec("vacuum", (), ("out",), (ParamSpec("excess", 0.0),),
                 description="vacuum input, optionally with white classical excess"),
        KindSpec("bs", ("a", "b"), ("o1", "o2"), (
            ParamSpec("ratio", 0.5),
            ParamSpec("phase", 0.0),
            ParamSpec("visibility", 1.0),
        ), description="beam splitter / combiner"),
        KindSpec("opa", ("seed", "oc", "loss"), ("out",), (
            ParamSpec("gamma_ic_rate", 0.0, RATE),
            ParamSpec("gamma_oc_rate", REQUIRED, RATE),
            ParamSpec("gamma_l_rate", 0.0, RATE),
            ParamSpec("upsilon_rate", 0.0, RATE),
        ), quiet_inputs=("oc", "loss"), description="optical parametric amplifier"),
        KindSpec("loss", ("in",), ("out",), (ParamSpec("efficiency", 1.0),),
                 description="attenuation with vacuum admixture"),
        KindSpec("phase", ("in",), ("out",), (ParamSpec("angle", 0.0),),
                 description="carrier phase shift"),
        KindSpec("mc", ("in",), ("out",), (ParamSpec("pole", REQUIRED, FREQ),),
                 description="single-pole mode cleaner"),
        KindSpec("homodyne", ("in", "lo"), (), (
            ParamSpec("visibility", 1.0),
            ParamSpec("angle", OPTIONAL),
            ParamSpec("unmatched_visibility", 0.0),
            ParamSpec("lo_suppression", 1.0),
        ), optional_inputs=("lo",), description="homodyne detector"),
    ]
}


@dataclass(frozen=True)
class Component:
    kind: str
    name: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        spec = KINDS.get(self.kind)
        if spec is None:
            raise ParameterError(f"unknown component kind '{self.kind}'")
        given = dict(self.params)
        resolved = {}
        for p in spec.params:
            if p.key in given:
                value = float(given.pop(p.key))
                if not math.isfinite(value):
                    raise ParameterError(f"{self.name}.{p.key} must be finite")
                resolved[p.key] = value
            elif p.default is REQUIRED:
                raise ParameterError(f"{self.name}: missing required parameter '{p.key}'")
            elif p.default is not OPTIONAL:
                resolved[p.key] = float(p.default)
        if given:
            raise ParameterError(
                f"{self.name}: unknown parameter '{sorted(given)[0]}' for kind '{self.kind}'")
        object.__setattr__(self, "params", MappingProxyType(resolved))
        self.build()  # validate ranges early; threshold is checked at evaluation

    @property
    def spec(self) -> KindSpec:
        return KINDS[self.kind]

    def with_params(self, **updates) -> "Component":
        return Component(self.kind, self.name, {**self.params, **updates})

    def build(self, check_threshold: bool = False):
        """Typed parameter record for this component."""
        p = self.params
        k = self.kind
        if k == "laser":
            return comp.LaserNoiseParams(p["relax_freq"], p["relax_height"], p["relax_width"],
                                         p["lf_exponent"], p["lf_corner"], p["floor"], p["power"])
        if k == "vacuum":
            if p["excess"] < 0:
                raise ParameterError(f"{self.name}.excess must be >= 0")
            return None
        if k == "bs":
            return comp.BeamSplitterParams(p["ratio"], p["phase"], p["visibility"])
        if k == "opa":
            try:
                return comp.OpaParams(p["gamma_ic_rate"], p["gamma_oc_rate"],
                                      p["gamma_l_rate"], p["upsilon_rate"])
            except comp.ThresholdError as exc:
                if check_threshold:
                    raise comp.ThresholdError(f"{self.name}: {exc}") from None
                return None
        if k == "loss":
            comp._unit_interval("efficiency", p["efficiency"])
            return p["efficiency"]
        if k == "phase":
            return p["angle"]
        if k == "mc":
            if not p["pole"] > 0:
                raise ParameterError(f"{self.name}.pole must be > 0")
            return p["pole"]
        if k == "homodyne":
            return comp.HomodyneParams(p["visibility"], p.get("angle"),
                                       p["unmatched_visibility"], p["lo_suppression"])
        raise AssertionError(k)

    def __eq__(self, other):
        if not isinstance(other, Component):
            return NotImplemented
        return (self.kind, self.name, dict(self.params)) == (other.kind, other.name, dict(other.params))

    def __hash__(self):
        return hash((self.kind, self.name, tuple(sorted(self.params.items()))))


@dataclass(frozen=True, order=True)
class Edge:
    src: str
    src_port: str
    dst: str
    dst_port: str

    def __str__(self):
        return f"{self.src}.{self.src_port} -> {self.dst}.{self.dst_port}"


@dataclass(frozen=True)
class FrequencySweep:
    """Frequency grid declaration (Hz)."""

    fmin: float
    fmax: float
    spacing: str = "log"
    points: int = 400

    def __post_init__(self):
        if self.spacing not in ("lin", "log"):
            raise ParameterError(f"sweep spacing must be 'lin' or 'log', got '{self.spacing}'")
        if not (self.fmin > 0 and self.fmin < self.fmax and math.isfinite(self.fmax)):
            raise ParameterError("sweep needs 0 < fmin < fmax")
        if self.points < 2:
            raise ParameterError("sweep needs at least 2 points")

    def grid(self) -> FrequencyGrid:
        make = FrequencyGrid.log_hz if self.spacing == "log" else FrequencyGrid.linear_hz
        return make(self.fmin, self.fmax, self.points)


@dataclass(frozen=True)
class Network:
    components: tuple
    edges: tuple
    detectors: tuple
    sweep: Optional[FrequencySweep] = None

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "detectors", tuple(self.detectors))
        validate(self)

    def component(self, name: str) -> Component:
        for c in self.components:
            if c.name == name:
                return c
        raise NetworkError(f"unknown component '{name}'")

    def names(self) -> list:
        return [c.name for c in self.components]

    def incoming(self) -> dict:
        return {(e.dst, e.dst_port): e for e in self.edges}

    def with_overrides(self, overrides: Mapping[str, float]) -> "Network":
        """Copy with ``{"COMPONENT.param": value}`` overrides applied."""
        by_name = {c.name: c for c in self.components}
        updates: dict = {}
        for key, value in overrides.items():
            cname, _, pkey = key.partition(".")
            if cname not in by_name or not pkey or by_name[cname].spec.param(pkey) is None:
                raise KeyError(f"unknown override key '{key}'")
            updates.setdefault(cname, {})[pkey] = value
        comps = tuple(c.with_params(**updates[c.name]) if c.name in updates else c
                      for c in self.components)
        return replace(self, components=comps)

    def structurally_equal(self, other: "Network", rtol: float = 0.0) -> bool:
        if set(self.edges) != set(other.edges) or set(self.detectors) != set(other.detectors):
            return False
        if self.sweep != other.sweep:
            return False
        a = {c.name: c for c in self.components}
        b = {c.name: c for c in other.components}
        if a.keys() != b.keys():
            return False
        for name, ca in a.items():
            cb = b[name]
            if ca.kind != cb.kind or ca.params.keys() != cb.params.keys():
                return False
            for k, va in ca.params.items():
                vb = cb.params[k]
                if va != vb and not math.isclose(va, vb, rel_tol=rtol, abs_tol=0.0):
                    return False
        return True


def validate(net: Network) -> None:
    names = [c.name for c in net.components]
    seen = set()
    for n in names:
        if n in seen:
            raise NetworkError(f"duplicate component name '{n}'")
        seen.add(n)
    by_name = {c.name: c for c in net.components}
    used_in = {}
    used_out = {}
    for e in net.edges:
        for cname in (e.src, e.dst):
            if cname not in by_name:
                raise NetworkError(f"unknown component '{cname}' in connection {e}")
        s, d = by_name[e.src].spec, by_name[e.dst].spec
        if e.src_port not in s.outputs:
            raise NetworkError(f"'{e.src_port}' is not an output port of {s.kind} '{e.src}'")
        if e.dst_port not in d.inputs:
            raise NetworkError(f"'{e.dst_port}' is not an input port of {d.kind} '{e.dst}'")
        key = (e.dst, e.dst_port)
        if key in used_in:
            raise NetworkError(f"input port {e.dst}.{e.dst_port} has more than one incoming edge")
        used_in[key] = e
        okey = (e.src, e.src_port)
        if okey in used_out and not s.is_source:
            raise NetworkError(
                f"output port {e.src}.{e.src_port} drives more than one input; "
                "only laser/vacuum outputs may be shared")
        used_out[okey] = e
    topological_order(net)
    for d in net.detectors:
        if d not in by_name:
            raise NetworkError(f"unknown detector '{d}'")
        if by_name[d].kind != "homodyne":
            raise NetworkError(f"detector '{d}' is not a homodyne component")
        if (d, "in") not in used_in:
            raise TopologyError(f"detector '{d}' is not reachable: its input is unconnected")
    if len(set(net.detectors)) != len(net.detectors):
        raise NetworkError("duplicate detector")


def topological_order(net: Network) -> list:
    ts = graphlib.TopologicalSorter()
    for c in net.components:
        ts.add(c.name)
    for e in net.edges:
        ts.add(e.dst, e.src)
    try:
        order = list(ts.static_order())
    except graphlib.CycleError as exc:
        cyc = exc.args[1] if len(exc.args) > 1 else []
        raise CycleError("optical path forms a cycle: " + " -> ".join(map(str, cyc))) from None
    return order


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------


@dataclass
class Propagation:
    """All fields of one network evaluation on ``omega``."""

    omega: np.ndarray
    fields: dict
    sources: dict
    lo_fields: dict

    def field(self, component: str, port: str) -> FieldMode:
        return self.fields[(component, port)]


def _source_field(c: Component, consumer: tuple, omega, sources: dict) -> FieldMode:
    vid = f"{c.name}>{consumer[0]}.{consumer[1]}"
    if c.kind == "laser":
        return comp.laser_source(c.build(), omega, sources, c.name, vacuum_id=vid)
    n = len(omega)
    sources.setdefault(vid, NoiseSource.vacuum(vid))
    coeffs = {vid: identity(n)}
    excess = c.params["excess"]
    if excess > 0:
        sources.setdefault(c.name, NoiseSource.white(c.name, excess))
        coeffs[c.name] = identity(n)
    return FieldMode(omega, coeffs)


def propagate(net: Network, omega, convention: str = "one-minus-v") -> Propagation:
    """Propagate fields through ``net`` at the angular frequencies ``omega``
    (rad/s, >= 0)."""
    omega = np.asarray(omega, dtype=float).ravel()
    if convention not in comp.LEAKAGE_CONVENTIONS:
        raise ParameterError(f"unknown leakage convention '{convention}'")
    by_name = {c.name: c for c in net.components}
    incoming = net.incoming()
    sources: dict = {}
    fields: dict = {}
    lo_fields: dict = {}
    n = omega.size

    def input_field(c: Component, port: str):
        e = incoming.get((c.name, port))
        if e is None:
            if port in c.spec.optional_inputs:
                return None
            sid = f"{c.name}.{port}"
            sources.setdefault(sid, NoiseSource.vacuum(sid))
            return FieldMode(omega, {sid: identity(n)})
        src = by_name[e.src]
        if src.spec.is_source:
            return _source_field(src, (c.name, port), omega, sources)
        return fields[(e.src, e.src_port)]

    for name in topological_order(net):
        c = by_name[name]
        k = c.kind
        if c.spec.is_source:
            continue
        ins = {p: input_field(c, p) for p in c.spec.inputs}
        if k == "bs":
            o1, o2 = comp.beam_splitter(ins["a"], ins["b"], c.build(), sources, name, convention)
            fields[(name, "o1")], fields[(name, "o2")] = o1, o2
        elif k == "opa":
            p = c.build(check_threshold=True)
            fields[(name, "out")] = comp.opa(ins["seed"], ins["oc"], ins["loss"], p)
        elif k == "loss":
            fields[(name, "out")] = comp.loss_element(ins["in"], c.params["efficiency"], sources, name)
        elif k == "phase":
            fields[(name, "out")] = comp.phase_shift(ins["in"], c.params["angle"])
        elif k == "mc":
            fields[(name, "out")] = comp.mode_cleaner(ins["in"], c.params["pole"], sources, name)
        elif k == "homodyne":
            fields[(name, "in")] = ins["in"]
            lo_fields[name] = ins["lo"]
    return Propagation(omega, fields, sources, lo_fields)


def _detect(net: Network, omega: np.ndarray, convention: str) -> dict:
    prop = propagate(net, omega, convention)
    out = {}
    for d in net.detectors:
        c = net.component(d)
        res = comp.homodyne_measure(prop.fields[(d, "in")], c.build(), prop.sources,
                                    FrequencyGrid(omega), prop.lo_fields[d])
        out[d] = res
    return out


def evaluate(net: Network, grid: FrequencyGrid, convention: str = "one-minus-v",
             threads: Optional[int] = None) -> dict:
    """Detected spectra, ``{detector name: SpectrumResult}``.

    With ``threads > 1`` the grid is split into contiguous chunks evaluated
    concurrently; the results are identical to a single-threaded run.
    """
    if not net.detectors:
        raise TopologyError("network has no detectors")
    omega = grid.points
    threads = threads or 1
    nchunks = max(1, min(int(threads), omega.size // 32 or 1))
    if nchunks == 1:
        parts = [_detect(net, omega, convention)]
    else:
        chunks = np.array_split(omega, nchunks)
        with ThreadPoolExecutor(max_workers=nchunks) as pool:
            parts = list(pool.map(lambda w: _detect(net, w, convention), chunks))
    results = {}
    for d in net.detectors:
        segs = [p[d] for p in parts]
        vt = None if segs[0].v_theta is None else np.concatenate([s.v_theta for s in segs])
        results[d] = SpectrumResult(
            grid,
            np.concatenate([s.v_plus for s in segs]),
            np.concatenate([s.v_minus for s in segs]),
            vt,
            segs[0].angle,
            segs[0].carrier_power,
        )
    return results


def default_threads() -> int:
    return os.cpu_count() or 1


def sweep(net: Network, path: str, values: Sequence[float], grid: FrequencyGrid,
          convention: str = "one-minus-v", threads: Optional[int] = None) -> list:
    """Evaluate ``net`` once per value of the parameter ``path``
    (``"COMPONENT.param"``); order follows ``values``."""
    cname, _, key = path.partition(".")
    try:
        c = net.component(cname)
    except NetworkError:
        raise KeyError(f"unresolvable parameter path '{path}'") from None
    if c.spec.param(key) is None:
        raise KeyError(f"unresolvable parameter path '{path}'")
    return [evaluate(net.with_overrides({path: v}), grid, convention, threads) for v in values]


__all__ = [
    "KINDS", "KindSpec", "ParamSpec", "Component", "Edge", "Network", "FrequencySweep",
    "NetworkError", "CycleError", "TopologyError", "Propagation", "propagate", "evaluate",
    "sweep", "topological_order", "validate", "FREQ", "RATE", "PLAIN", "REQUIRED", "OPTIONAL",
    "default_threads",
]
