"""Monte Carlo and closed-form model of two-pulse QND spin squeezing in a spin-1 ensemble."""

from .config import ConfigError, ExperimentConfig, config_to_text, parse_config
from .dynamics import (
    MeasurementOutcome,
    NoiseModel,
    aoc_measurement,
    apply_decoherence,
    condition_on_mixed,
    dispersive_alignment_signal,
    free_precession,
    probe_rotation_update,
    qnd_pair_measurement,
    readout_noise_variance,
    tx_from_dispersive,
)
from .estimators import (
    ConditionalEstimator,
    NoiseScalingFit,
    QuadraticNoiseRegressor,
    SqueezingReport,
    chi_estimator,
    conditional_variance,
    entanglement_witness,
    quadratic_noise_fit,
    squeezing_report,
    wineland_xi2,
)
from .experiments import (
    RunSummary,
    TrialRecord,
    TrialRecords,
    calibrate_alignment,
    run_aoc_ramsey,
    run_independent_preparations,
    run_readout_only,
    run_squeezing_sequence,
    run_trap_loss_sweep,
    summarize,
)
from .model import (
    CollectiveSpinState,
    Couplings,
    DecoherenceParams,
    FieldEnvironment,
    ProbePulse,
    PulseMode,
    make_css,
    mixing_angle,
)
from ._validation import DegenerateInputError, InvalidArgumentError

__version__ = "0.1.0"
