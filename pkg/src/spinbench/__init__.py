"""Deterministic simulation toolkit for single-qubit Clifford randomized
benchmarking of an electron-spin ensemble: pulse distortion and correction,
Lindblad spin-packet propagation, inhomogeneous-ensemble averaging, spin
packet selection, and analytic incoherent-error decay."""

from .qcore import (
    DepolarizingChannel,
    apply_depolarizing,
    bloch_from_state,
    error_strength_and_p,
    gate_fidelity_hs,
    rotation_unitary,
    state_from_bloch,
)
from .pulse import (
    AmplifierModel,
    GrapeResult,
    Plant,
    PtcResult,
    PulseShape,
    ResonatorModel,
    amplifier_settle,
    grape_optimize,
    make_gaussian,
    ptc_correct,
    read_waveform,
    resonator_filter,
    write_waveform,
)
from .dynamics import (
    B1Table,
    EnsembleModel,
    EnsembleSpec,
    GaussianB1,
    LorentzianOffsets,
    NoiseModel,
    OffsetTable,
    RabiTrace,
    build_ensemble,
    ensemble_average,
    estimate_b1_distribution,
    free_evolve,
    propagate_lindblad,
    propagate_unitary,
    simulate_rabi,
)
from .rb import (
    CliffordGate,
    DecayCurve,
    FitResult,
    RBConfig,
    RBSequence,
    ReadoutConfig,
    clifford_table,
    compute_recovery,
    fit_decay,
    generate_suite,
    read_decay,
    simulate_rb,
    track_pauli,
    write_decay,
)
from .incoherent import (
    ERROR_TYPE_TABLE,
    TYPE_COUNTS,
    TYPE_WEIGHTS,
    analytic_decay,
    classify_pair,
    p_epsilon,
    p_epsilon_grid,
)
from .selection import SelectionConfig, linewidth, make_selection_pulse, run_selection

__version__ = "0.1.0"
