"""Transmitter side: attenuated time-bin and phase frames, frame scheduling.

Frames are generated directly as amplitude vectors; there is no modulator
transfer-function model.  Leakage from the finite intensity-modulator
extinction appears as a uniform Poisson floor over the occupied frame
window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import (
    FrameAmplitudes,
    Phase,
    RandomSource,
    ROLE_SCHEDULE,
    SignalAssignment,
    TimeBin,
    ValidatedConfig,
)

__all__ = [
    "make_time_bin_frame",
    "make_phase_frame",
    "floor_fraction",
    "FrameSchedule",
    "schedule",
]


def floor_fraction(d: int, im_extinction: float) -> float:
    """Fraction of the frame's photons that leak into the uniform floor.

    With a modulator extinction ratio ``r`` (linear) and one bright slot out
    of ``d``, the leaked power relative to the total is
    ``f = (d - 1) / (d - 1 + r)``.
    """
    if math.isinf(im_extinction):
        return 0.0
    return (d - 1) / (d - 1 + im_extinction)


def make_time_bin_frame(
    m: int,
    mu: float,
    im_extinction: float,
    d: int = 64,
    offset_ps: int = 0,
) -> FrameAmplitudes:
    """Build a time-bin frame: one bright pulse in slot ``m`` plus floor.

    The bright slot carries ``mu * (1 - f)`` photons and the floor
    ``mu * f`` photons spread uniformly over the occupied window, with
    ``f = (d-1) / (d-1 + im_extinction)``.
    """
    if not 0 <= m < d:
        raise ValueError(f"slot index {m} out of range 0..{d - 1}")
    if mu <= 0:
        raise ValueError("mu must be positive")
    if im_extinction <= 1:
        raise ValueError("im_extinction must be > 1")
    f = floor_fraction(d, im_extinction)
    slots = np.zeros(d, dtype=np.complex128)
    slots[m] = math.sqrt(mu * (1.0 - f))
    return FrameAmplitudes(
        slots=slots, floor_rate=mu * f, offset_ps=offset_ps, kind=TimeBin(m)
    )


def make_phase_frame(
    phi_a: float,
    mu: float,
    d: int = 64,
    floor_fraction: float = 0.0,
    offset_ps: int = 0,
) -> FrameAmplitudes:
    """Build a phase frame: d equal-intensity pulses with a linear phase ramp.

    Slot ``m`` carries amplitude ``sqrt(mu * (1 - floor_fraction) / d) *
    exp(i * m * phi_a)``.  Slots are 0-based; the ramp is equivalent to the
    1-based convention up to a global phase.  ``floor_fraction`` moves part
    of the photon budget into the uniform floor (modulator leakage between
    pulses); the default 0 gives the ideal train.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if not 0.0 <= floor_fraction < 1.0:
        raise ValueError("floor_fraction must be in [0, 1)")
    amp = math.sqrt(mu * (1.0 - floor_fraction) / d)
    m = np.arange(d)
    slots = amp * np.exp(1j * m * phi_a)
    return FrameAmplitudes(
        slots=slots,
        floor_rate=mu * floor_fraction,
        offset_ps=offset_ps,
        kind=Phase(phi_a),
    )


@dataclass(frozen=True)
class FrameSchedule:
    """Per-signal frame plan in compact array form.

    ``tb_flags[i]`` marks frame ``i`` as time-bin; ``slots[i]`` is its pulse
    slot (-1 for phase frames); ``phi_a[i]`` the differential phase of phase
    frames (NaN for time-bin frames).  ``offset_ps`` applies to every frame
    of the signal.
    """

    signal: SignalAssignment
    tb_flags: np.ndarray
    slots: np.ndarray
    phi_a: np.ndarray
    offset_ps: int
    mu: float
    im_extinction: float
    phase_floor: float = 0.0

    @property
    def n_frames(self) -> int:
        return len(self.tb_flags)

    def frame(self, i: int, d: int) -> FrameAmplitudes:
        """Materialize frame ``i`` as a FrameAmplitudes value."""
        if self.tb_flags[i]:
            return make_time_bin_frame(
                int(self.slots[i]), self.mu, self.im_extinction, d, self.offset_ps
            )
        return make_phase_frame(
            float(self.phi_a[i]), self.mu, d, self.phase_floor, self.offset_ps
        )


def schedule(
    signal: SignalAssignment,
    n_frames: int,
    cfg: ValidatedConfig,
    rng: RandomSource,
    phi_a: float = math.pi,
    phase_floor: float = 0.0,
    signal_index: int = 0,
) -> FrameSchedule:
    """Draw the frame sequence for one signal.

    Each frame is independently time-bin with probability ``cfg.p_tb``
    (slot drawn uniformly unless the assignment pins ``fixed_slot``),
    otherwise a phase frame at differential phase ``phi_a``.  Delayed
    signals carry ``offset = frame_window`` on every frame.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    gen = rng.stream(ROLE_SCHEDULE, signal_index).generator()
    if cfg.p_tb >= 1.0:
        tb = np.ones(n_frames, dtype=bool)
    elif cfg.p_tb <= 0.0:
        tb = np.zeros(n_frames, dtype=bool)
    else:
        tb = gen.random(n_frames) < cfg.p_tb
    if signal.fixed_slot is not None:
        if not 0 <= signal.fixed_slot < cfg.d:
            raise ValueError(f"fixed_slot {signal.fixed_slot} out of range")
        slots = np.full(n_frames, signal.fixed_slot, dtype=np.int64)
    else:
        slots = gen.integers(0, cfg.d, size=n_frames, dtype=np.int64)
    slots[~tb] = -1
    phases = np.where(tb, np.nan, phi_a)
    ext = signal.im_extinction if signal.im_extinction is not None else cfg.im_extinction
    return FrameSchedule(
        signal=signal,
        tb_flags=tb,
        slots=slots,
        phi_a=phases,
        offset_ps=signal.offset_ps(cfg),
        mu=cfg.mu_in,
        im_extinction=ext,
        phase_floor=phase_floor,
    )


def assert_balanced(budgets: dict[str, float], margin: float = 0.05) -> None:
    """Check that per-signal input photon budgets agree within ``margin``."""
    values = list(budgets.values())
    lo, hi = min(values), max(values)
    if lo <= 0 or (hi - lo) / hi > margin:
        raise ValueError(
            f"input photon budgets unbalanced beyond {margin:.0%}: {budgets}"
        )
