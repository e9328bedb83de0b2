"""Shared domain types, configuration and the seeded random-stream contract.

All times are carried as integer picoseconds.  The 25 ps histogram bins and
1540 ps pulse periods are exactly representable, so histogram binning never
accumulates float drift.  Random numbers come from counter-based Philox
streams keyed by (seed, role, signal, batch) so that per-frame work is
order-independent and reproducible under any batching.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

__all__ = [
    "ConfigError",
    "SimConfig",
    "ValidatedConfig",
    "validate_config",
    "RandomSource",
    "TimeBin",
    "Phase",
    "FrameKind",
    "FrameAmplitudes",
    "SignalAssignment",
    "DELTA_T1",
    "DELTA_T2",
]

# Time-window labels for the two halves of the frame period.
DELTA_T1 = "dt1"
DELTA_T2 = "dt2"


class ConfigError(ValueError):
    """Raised when a configuration violates one of its invariants."""


@dataclass(frozen=True)
class SimConfig:
    """Top-level simulation parameters.

    Parameters
    ----------
    d : int
        Pulse slots per frame.
    pulse_period_ps : int
        Pulse period T_p in picoseconds.
    frame_window_ps : int
        Duration of the occupied half-frame (the signal interval).
    frame_period_ps : int
        Full frame period; must equal twice the frame window.
    frame_rate_hz : float
        Frame rate; must equal 1 / frame_period.
    mu_in : float
        Mean photons per frame at the configured reference plane.
    eta : float
        Detector efficiency.
    dead_time_ps : int
        Detector dead time.
    hist_res_ps : int
        Histogram bin width; must divide the frame period.
    p_tb : float
        Fraction of frames carrying time-bin data (the rest are phase frames).
    im_extinction : float
        Intensity-modulator extinction ratio, linear scale (> 1).
    jitter_sigma_ps : float
        Gaussian detection timing jitter (1 sigma).
    seed : int
        Root seed for all random streams.
    """

    d: int = 64
    pulse_period_ps: int = 1540
    frame_window_ps: int = 100_000
    frame_period_ps: int = 200_000
    frame_rate_hz: float = 5.0e6
    mu_in: float = 1.0
    eta: float = 0.15
    dead_time_ps: int = 100_000
    hist_res_ps: int = 25
    p_tb: float = 1.0
    im_extinction: float = 674.0
    jitter_sigma_ps: float = 100.0
    seed: int = 1


@dataclass(frozen=True)
class ValidatedConfig(SimConfig):
    """A :class:`SimConfig` whose invariants have been checked.

    Adds the derived quantities used throughout the pipeline.
    """

    n_bins: int = 0
    slot_centers_ps: tuple = ()

    @property
    def slot_center(self):
        """Slot-center offsets (ps) within the occupied window, index 0..d-1."""
        return np.asarray(self.slot_centers_ps, dtype=np.int64)


def validate_config(cfg: SimConfig) -> ValidatedConfig:
    """Check every invariant of ``cfg`` and precompute derived quantities.

    Raises
    ------
    ConfigError
        Naming the violated invariant.
    """
    if cfg.d < 2:
        raise ConfigError(f"d must be >= 2, got {cfg.d}")
    if cfg.pulse_period_ps <= 0:
        raise ConfigError("pulse_period_ps must be positive")
    if cfg.d * cfg.pulse_period_ps > cfg.frame_window_ps:
        raise ConfigError(
            f"pulse train does not fit the frame window: "
            f"d*T_p = {cfg.d * cfg.pulse_period_ps} ps > "
            f"frame_window = {cfg.frame_window_ps} ps"
        )
    if cfg.frame_period_ps != 2 * cfg.frame_window_ps:
        raise ConfigError(
            f"frame_period ({cfg.frame_period_ps} ps) must equal "
            f"2 * frame_window ({2 * cfg.frame_window_ps} ps)"
        )
    implied_rate = 1.0e12 / cfg.frame_period_ps
    if not math.isclose(cfg.frame_rate_hz, implied_rate, rel_tol=1e-9):
        raise ConfigError(
            f"frame_rate_hz ({cfg.frame_rate_hz:g}) inconsistent with "
            f"1/frame_period ({implied_rate:g} Hz)"
        )
    if not 0.0 <= cfg.eta <= 1.0:
        raise ConfigError(f"eta must be in [0, 1], got {cfg.eta}")
    if not 0.0 <= cfg.p_tb <= 1.0:
        raise ConfigError(f"p_tb must be in [0, 1], got {cfg.p_tb}")
    if cfg.dead_time_ps < 0:
        raise ConfigError("dead_time_ps must be non-negative")
    if cfg.hist_res_ps <= 0 or cfg.frame_period_ps % cfg.hist_res_ps != 0:
        raise ConfigError(
            f"hist_res_ps ({cfg.hist_res_ps}) must divide "
            f"frame_period ({cfg.frame_period_ps})"
        )
    if cfg.mu_in <= 0:
        raise ConfigError("mu_in must be positive")
    if cfg.im_extinction <= 1.0 and not math.isinf(cfg.im_extinction):
        raise ConfigError("im_extinction must be > 1 (linear ratio)")
    if cfg.jitter_sigma_ps < 0:
        raise ConfigError("jitter_sigma_ps must be non-negative")

    centers = tuple(
        m * cfg.pulse_period_ps + cfg.pulse_period_ps // 2 for m in range(cfg.d)
    )
    return ValidatedConfig(
        **{f: getattr(cfg, f) for f in SimConfig.__dataclass_fields__},
        n_bins=cfg.frame_period_ps // cfg.hist_res_ps,
        slot_centers_ps=centers,
    )


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

# Stable role identifiers; part of the stream key, never reordered.
ROLE_SCHEDULE = 0
ROLE_PHOTONS = 1
ROLE_DETECT = 2
ROLE_ALICE = 3
ROLE_EVE = 4
ROLE_BOB = 5
ROLE_DARK = 6
ROLE_MONITOR = 7


@dataclass(frozen=True)
class RandomSource:
    """Counter-based random stream factory.

    Identical ``(seed, stream_id)`` pairs always produce identical draw
    sequences; distinct stream ids give statistically independent streams.
    Stream ids are tuples of small ints, conventionally
    ``(role, signal_index, batch_index)``.
    """

    seed: int
    stream_id: tuple = (0,)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream_id)
        return np.random.Generator(np.random.Philox(seed=ss))

    def stream(self, *ids: int) -> "RandomSource":
        return RandomSource(self.seed, self.stream_id[:0] + tuple(ids))


def stream_generator(seed: int, *ids: int) -> np.random.Generator:
    """Shorthand for ``RandomSource(seed, ids).generator()``."""
    return RandomSource(seed, tuple(ids)).generator()


# ---------------------------------------------------------------------------
# Frame representation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeBin:
    """Time-bin frame: a single pulse in slot ``m``."""

    m: int


@dataclass(frozen=True)
class Phase:
    """Phase frame: a d-pulse train with differential phase ``phi_a``."""

    phi_a: float


FrameKind = Union[TimeBin, Phase]


@dataclass(frozen=True)
class FrameAmplitudes:
    """Complex amplitude per slot for one frame, plus uniform floor.

    ``sum(|slots|^2) + floor_rate`` is the mean photon number of the frame;
    the normalization is the single source of mu.  ``offset_ps`` is the frame
    start offset within the frame period (0 for the first half-window,
    ``frame_window`` for delayed signals).
    """

    slots: np.ndarray
    floor_rate: float
    offset_ps: int
    kind: FrameKind

    @property
    def mean_photons(self) -> float:
        return float(np.sum(np.abs(self.slots) ** 2) + self.floor_rate)

    @property
    def slot_intensity(self) -> np.ndarray:
        return np.abs(self.slots) ** 2

    def __post_init__(self):
        object.__setattr__(
            self, "slots", np.asarray(self.slots, dtype=np.complex128)
        )


@dataclass(frozen=True)
class SignalAssignment:
    """Mapping of one transmitted signal onto the multiplexed link.

    ``input_mode`` is the Hermite-Gaussian index (n, p); ``input_group`` the
    quasi-degenerate mode group (1..Q).  ``delayed`` signals are shifted by
    one frame window so they occupy the second half of the frame period.
    ``excess_db`` is a per-signal coupling correction on top of the table
    loss (<= 0 for excess loss); ``im_extinction`` optionally overrides the
    global modulator extinction for this signal; ``fixed_slot`` pins the
    time-bin slot used by measurement scenarios (None = uniform random).
    """

    signal_id: str
    input_mode: tuple = (0, 0)
    input_group: int = 1
    delayed: bool = False
    excess_db: float = 0.0
    im_extinction: float | None = None
    fixed_slot: int | None = None

    def offset_ps(self, cfg: SimConfig) -> int:
        return cfg.frame_window_ps if self.delayed else 0


def default_signals() -> list[SignalAssignment]:
    """The three-signal arrangement used by the reference link scenarios."""
    return [
        SignalAssignment("A", input_mode=(0, 0), input_group=1, delayed=False),
        SignalAssignment("B", input_mode=(1, 1), input_group=3, delayed=True),
        SignalAssignment("C", input_mode=(2, 2), input_group=5, delayed=False),
    ]


def with_seed(cfg: SimConfig, seed: int) -> SimConfig:
    return replace(cfg, seed=seed)
