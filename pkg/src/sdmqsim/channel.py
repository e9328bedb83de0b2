"""The mode-multiplexed fiber link.

Maps per-signal frames to per-output-group mean photon flux (group-wise
insertion loss plus a column-stochastic crosstalk matrix), then samples
photon arrival events.  Crosstalk acts on intensities, not amplitudes:
random mode coupling over the span destroys inter-signal coherence, so
contributions from different signals add incoherently.

The measured tables ship as a plain-text data file so alternative channels
can be swapped in (see ``data/fmf_link_tables.txt`` for the format).
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .config import (
    FrameAmplitudes,
    RandomSource,
    SignalAssignment,
    ValidatedConfig,
)

__all__ = [
    "AssignmentError",
    "InsertionLossTable",
    "CrosstalkMatrix",
    "ChannelModel",
    "GroupFlux",
    "ModeFlux",
    "PhotonEvent",
    "load_link_tables",
    "propagate",
    "equipartition",
    "sample_photons",
    "measure_insertion_loss",
    "db_to_linear",
    "linear_to_db",
]

N_GROUPS = 5
DISTANCES = ("40m", "8km")


class AssignmentError(ValueError):
    """Raised when signal-to-group assignments are inconsistent."""


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(linear):
    return 10.0 * np.log10(np.asarray(linear, dtype=float))


@dataclass(frozen=True)
class InsertionLossTable:
    """Group-wise end-to-end insertion loss (dB, negative) per fiber length."""

    loss_db: dict

    def __post_init__(self):
        if set(self.loss_db) != set(DISTANCES):
            raise AssignmentError(
                f"insertion-loss table must cover {DISTANCES}, got {set(self.loss_db)}"
            )
        for dist, row in self.loss_db.items():
            arr = np.asarray(row, dtype=float)
            if arr.shape != (N_GROUPS,):
                raise AssignmentError(
                    f"insertion-loss row for {dist} must have {N_GROUPS} entries"
                )
            if np.any(arr > 0):
                raise AssignmentError("insertion-loss entries must be <= 0 dB")
            object.__setattr__(
                self, "loss_db", {**self.loss_db, dist: tuple(arr.tolist())}
            )

    def db(self, group: int, distance: str) -> float:
        return self.loss_db[distance][group - 1]

    def linear(self, group: int, distance: str) -> float:
        return float(db_to_linear(self.db(group, distance)))


@dataclass(frozen=True)
class CrosstalkMatrix:
    """Column-stochastic linear power-transfer matrix between mode groups.

    ``linear[h, g]`` is the probability that a photon entering group ``g+1``
    exits in group ``h+1``.  Built from dB entries; the raw linear column
    sums land within ~1% of unity (measurement residual) and are
    renormalized to exactly 1.
    """

    linear: np.ndarray
    raw_column_sums: np.ndarray

    @classmethod
    def from_db(cls, matrix_db) -> "CrosstalkMatrix":
        db = np.asarray(matrix_db, dtype=float)
        if db.shape != (N_GROUPS, N_GROUPS):
            raise AssignmentError(
                f"crosstalk matrix must be {N_GROUPS}x{N_GROUPS}, got {db.shape}"
            )
        raw = db_to_linear(db)
        colsums = raw.sum(axis=0)
        lin = raw / colsums
        mat = cls(linear=lin, raw_column_sums=colsums)
        mat.validate()
        return mat

    def validate(self) -> None:
        if np.any(self.linear <= 0) or np.any(self.linear >= 1):
            raise AssignmentError("crosstalk entries must lie strictly in (0, 1)")
        if not np.allclose(self.linear.sum(axis=0), 1.0, atol=1e-12):
            raise AssignmentError("crosstalk columns must sum to 1 after renormalization")
        for g in range(N_GROUPS):
            col = self.linear[:, g]
            off = np.delete(col, g)
            if not np.all(col[g] > off):
                raise AssignmentError(f"crosstalk column {g + 1} is not diagonal-dominant")

    def fraction(self, out_group: int, in_group: int) -> float:
        return float(self.linear[out_group - 1, in_group - 1])

    def column(self, in_group: int) -> np.ndarray:
        return self.linear[:, in_group - 1].copy()


def _builtin_table_path() -> Path:
    return Path(resources.files("sdmqsim").joinpath("data/fmf_link_tables.txt"))


def load_link_tables(path: str | Path | None = None):
    """Parse the link data file into (InsertionLossTable, CrosstalkMatrix).

    ``path=None`` loads the packaged measured tables.
    """
    p = _builtin_table_path() if path is None else Path(path)
    il_rows: dict[str, list[float]] = {}
    xt_rows: list[list[float]] = []
    section = None
    for raw_line in p.read_text().splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1]
            continue
        parts = line.split()
        if section == "insertion_loss":
            il_rows[parts[0]] = [float(x) for x in parts[1:]]
        elif section == "crosstalk_8km":
            xt_rows.append([float(x) for x in parts])
        else:
            raise AssignmentError(f"unknown section {section!r} in {p}")
    il = InsertionLossTable(loss_db=il_rows)
    xt = CrosstalkMatrix.from_db(xt_rows)
    return il, xt


@dataclass(frozen=True)
class ChannelModel:
    """Link conventions on top of the measured tables.

    ``mu_reference`` selects the plane where the scenario's mu is defined:

    * ``"mux_input"`` -- mu at the input multiplexer; the table loss applies
      in full.
    * ``"fmf_input"`` -- mu at the fiber input; the input-multiplexer
      contribution (``input_mdm_exclusion_db``, positive) is backed out of
      the table loss.

    ``uniform_il_db`` (if set) replaces the table with a flat loss and an
    identity crosstalk matrix -- used for idealized single-signal budgets.
    """

    il: InsertionLossTable
    xt: CrosstalkMatrix
    distance: str = "8km"
    mu_reference: str = "mux_input"
    input_mdm_exclusion_db: float = 4.2
    uniform_il_db: float | None = None

    def __post_init__(self):
        if self.distance not in DISTANCES:
            raise AssignmentError(
                f"distance must be one of {DISTANCES} (no interpolation model)"
            )
        if self.mu_reference not in ("mux_input", "fmf_input"):
            raise AssignmentError("mu_reference must be 'mux_input' or 'fmf_input'")

    def transmission(self, signal: SignalAssignment) -> float:
        """Linear end-to-end transmission for one signal (loss factors only)."""
        if self.uniform_il_db is not None:
            base = self.uniform_il_db
        else:
            base = self.il.db(signal.input_group, self.distance)
            if self.mu_reference == "fmf_input":
                base += self.input_mdm_exclusion_db
        return float(db_to_linear(base + signal.excess_db))

    def group_fractions(self, in_group: int) -> np.ndarray:
        """Output-group distribution for photons launched into ``in_group``."""
        if self.uniform_il_db is not None:
            frac = np.zeros(N_GROUPS)
            frac[in_group - 1] = 1.0
            return frac
        return self.xt.column(in_group)

    def collection_fraction(self, in_group: int, groups) -> float:
        frac = self.group_fractions(in_group)
        return float(sum(frac[g - 1] for g in groups))


@dataclass(frozen=True)
class GroupContribution:
    """One signal's intensity landing in one output group."""

    origin: str
    out_group: int
    slot_intensity: np.ndarray
    floor: float
    offset_ps: int

    @property
    def total(self) -> float:
        return float(self.slot_intensity.sum() + self.floor)


@dataclass(frozen=True)
class GroupFlux:
    """Per-output-group mean photon flux, offsets preserved per contributor."""

    contributions: tuple

    def total_photons(self) -> float:
        return sum(c.total for c in self.contributions)

    def group_total(self, group: int) -> float:
        return sum(c.total for c in self.contributions if c.out_group == group)


@dataclass(frozen=True)
class ModeContribution:
    origin: str
    out_group: int
    out_mode: int
    slot_intensity: np.ndarray
    floor: float
    offset_ps: int

    @property
    def total(self) -> float:
        return float(self.slot_intensity.sum() + self.floor)


@dataclass(frozen=True)
class ModeFlux:
    contributions: tuple

    def total_photons(self) -> float:
        return sum(c.total for c in self.contributions)


@dataclass(frozen=True)
class PhotonEvent:
    """A sampled photon arrival at the receiver plane.

    ``t_ps`` is within the frame period; ``origin`` is diagnostic only.
    """

    t_ps: int
    out_group: int
    out_mode: int
    frame_idx: int
    origin: str

    def __post_init__(self):
        if self.t_ps < 0:
            raise AssignmentError(f"t_ps {self.t_ps} outside the frame period")
        if self.out_group < 1 or self.out_group > N_GROUPS:
            raise AssignmentError(f"out_group {self.out_group} invalid")
        if not 0 <= self.out_mode < self.out_group:
            raise AssignmentError(
                f"out_mode {self.out_mode} invalid for group {self.out_group} "
                f"(group j has j modes)"
            )


def propagate(
    frames: dict[str, FrameAmplitudes],
    signals: dict[str, SignalAssignment],
    channel: ChannelModel,
) -> GroupFlux:
    """Propagate one frame per signal through the link.

    Each signal's slot intensities and floor are scaled by its transmission
    and spread over output groups by the crosstalk column of its input
    group; contributions from different signals add incoherently.
    """
    groups_used = [signals[s].input_group for s in frames]
    if len(set(groups_used)) != len(groups_used):
        raise AssignmentError("two signals assigned to the same input group")
    contribs = []
    for sid, frame in frames.items():
        sig = signals[sid]
        trans = channel.transmission(sig)
        fractions = channel.group_fractions(sig.input_group)
        for h in range(1, N_GROUPS + 1):
            w = trans * fractions[h - 1]
            if w == 0.0:
                continue
            contribs.append(
                GroupContribution(
                    origin=sid,
                    out_group=h,
                    slot_intensity=frame.slot_intensity * w,
                    floor=frame.floor_rate * w,
                    offset_ps=frame.offset_ps,
                )
            )
    return GroupFlux(contributions=tuple(contribs))


def equipartition(flux: GroupFlux) -> ModeFlux:
    """Split each group's flux equally among its modes (group j has j modes)."""
    contribs = []
    for c in flux.contributions:
        n_modes = c.out_group
        for mode in range(n_modes):
            contribs.append(
                ModeContribution(
                    origin=c.origin,
                    out_group=c.out_group,
                    out_mode=mode,
                    slot_intensity=c.slot_intensity / n_modes,
                    floor=c.floor / n_modes,
                    offset_ps=c.offset_ps,
                )
            )
    return ModeFlux(contributions=tuple(contribs))


def sample_photons(
    flux: ModeFlux,
    frame_idx: int,
    cfg: ValidatedConfig,
    rng: RandomSource | np.random.Generator,
) -> list[PhotonEvent]:
    """Sample photon arrivals for one frame from per-mode mean intensities.

    Per (mode, slot) the photon count is Poisson with the slot's mean;
    timestamps are slot center + offset + Gaussian jitter, clamped to the
    frame period.  Floor photons arrive uniformly over the contributing
    signal's occupied window.
    """
    gen = rng if isinstance(rng, np.random.Generator) else rng.generator()
    events: list[PhotonEvent] = []
    period = cfg.frame_period_ps
    for c in flux.contributions:
        if np.any(c.slot_intensity < 0) or c.floor < 0:
            raise ValueError("flux values must be >= 0")
        counts = gen.poisson(c.slot_intensity)
        for m in np.nonzero(counts)[0]:
            for _ in range(int(counts[m])):
                t = c.offset_ps + int(cfg.slot_centers_ps[m])
                if cfg.jitter_sigma_ps > 0:
                    t += int(round(gen.normal(0.0, cfg.jitter_sigma_ps)))
                t = min(max(t, 0), period - 1)
                events.append(
                    PhotonEvent(t, c.out_group, c.out_mode, frame_idx, c.origin)
                )
        n_floor = gen.poisson(c.floor)
        if n_floor:
            ts = gen.integers(
                c.offset_ps, c.offset_ps + cfg.frame_window_ps, size=n_floor
            )
            for t in ts:
                events.append(
                    PhotonEvent(int(t), c.out_group, c.out_mode, frame_idx, c.origin)
                )
    events.sort(key=lambda e: e.t_ps)
    return events


def measure_insertion_loss(
    signal: SignalAssignment,
    channel: ChannelModel,
    mu: float = 1.0,
) -> float:
    """Insertion-loss estimate (dB) for a single-signal scenario.

    Ratio of total receiver-plane flux (all output groups) to the injected
    flux.  Deterministic: evaluates the channel expectation, so it
    reproduces the configured table exactly.
    """
    if mu <= 0:
        raise ValueError("injected flux must be positive")
    out = mu * channel.transmission(signal)  # columns are stochastic
    return float(linear_to_db(out / mu))
