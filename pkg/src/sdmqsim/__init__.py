"""Photon-level Monte Carlo toolkit for multilevel time-bin/phase quantum
transmission over a mode-division-multiplexed few-mode fiber link."""

__version__ = "0.1.0"

from .config import (
    ConfigError,
    FrameAmplitudes,
    Phase,
    RandomSource,
    SignalAssignment,
    SimConfig,
    TimeBin,
    ValidatedConfig,
    validate_config,
)
from .encoder import FrameSchedule, make_phase_frame, make_time_bin_frame, schedule
from .channel import (
    AssignmentError,
    ChannelModel,
    CrosstalkMatrix,
    GroupFlux,
    InsertionLossTable,
    PhotonEvent,
    equipartition,
    load_link_tables,
    measure_insertion_loss,
    propagate,
    sample_photons,
)
from .receiver import (
    DetectionRecord,
    DetectorConfig,
    Histogram,
    InterferometerConfig,
    accumulate,
    detect,
    interfere,
    time_window_filter,
)
from .analysis import (
    MetricsReport,
    capacity,
    capacity_from_counts,
    counts_per_second,
    crosstalk_db,
    error_budget,
    extinction_ratio_db,
    fit_visibility,
    prob_from_db,
    snr_db,
    tomography,
)
from .protocol import (
    BasisChoice,
    BobSetting,
    KeyRateParams,
    alice_prepare,
    bob_measure,
    eve_intercept,
    frame_mux,
    key_rate,
    sift,
    simulate_bb84,
)
from .scenarios import Scenario, load_scenario
from .pipeline import RunResult, run_scenario

__all__ = [name for name in dir() if not name.startswith("_")]
