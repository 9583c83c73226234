"""Frequency-domain quadrature noise simulator for linearized quantum-optical
networks: lasers, beam splitters, OPAs, losses, mode cleaners and homodyne
detectors."""

from .analysis import (
    BalanceResult,
    balance_input_splitter,
    closed_form_v_out,
    detector_coupling,
    epr_metric,
    optical_suppression,
    single_opa_v_out,
)
from .components import (
    BeamSplitterParams,
    HomodyneParams,
    LaserNoiseParams,
    OpaParams,
    ParameterError,
    ThresholdError,
    beam_splitter,
    homodyne_measure,
    laser_source,
    loss_element,
    mode_cleaner,
    opa,
    opa_transfer,
    phase_shift,
)
from .core import (
    FieldMode,
    FrequencyGrid,
    NoiseSource,
    SourceKind,
    SpectrumResult,
    SqznetError,
    field_spectrum,
    to_db,
    variance_of,
)
from .netlist import NetlistError, elaborate, load, parse, serialize
from .network import Component, Edge, FrequencySweep, Network, evaluate, propagate, sweep
from .scenarios import SCENARIOS, scenario

__version__ = "0.1.0"
