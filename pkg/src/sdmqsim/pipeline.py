"""End-to-end scenario runners.

Each runner simulates frames in fixed-size batches with per-(detector,
signal, batch) random streams, so results are independent of execution
order and reproducible from the scenario seed alone.  Photon sampling is
efficiency-thinned at the source (Poisson splitting), which is
statistically identical to sampling raw photons and thinning at the
detector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis
from .channel import ChannelModel, load_link_tables
from .config import (
    DELTA_T1,
    DELTA_T2,
    ConfigError,
    RandomSource,
    ROLE_PHOTONS,
    ROLE_SCHEDULE,
    SignalAssignment,
    ValidatedConfig,
)
from .encoder import floor_fraction
from .protocol import KeyRateParams, key_rate, simulate_bb84
from .receiver import Histogram, dead_time_mask, gate_mask, histogram_from_times
from .scenarios import Scenario

__all__ = [
    "build_channel",
    "expected_collection_rate",
    "DetectorResult",
    "RunResult",
    "run_scenario",
]

BATCH = 1 << 16


def build_channel(scenario: Scenario) -> ChannelModel:
    il, xt = load_link_tables(scenario.channel.tables_path)
    return ChannelModel(
        il=il,
        xt=xt,
        distance=scenario.channel.distance,
        mu_reference=scenario.channel.mu_reference,
        input_mdm_exclusion_db=scenario.channel.input_mdm_exclusion_db,
        uniform_il_db=scenario.channel.uniform_il_db,
    )


def expected_collection_rate(
    scenario: Scenario,
    channel: ChannelModel,
    sid: str,
    groups,
    include_excess: bool = True,
) -> float:
    """Analytic detected count rate (cps) of one signal into a collection.

    Photon-level expectation (mu * transmission * collection fraction *
    eta * R_f); detector pile-up within a gate lowers the clicked rate by
    under ~1.5% at the reference fluxes.
    """
    sig = scenario.signal(sid)
    if not include_excess:
        sig = replace(sig, excess_db=0.0)
    cfg = scenario.cfg
    flux = cfg.mu_in * channel.transmission(sig)
    frac = channel.collection_fraction(sig.input_group, groups)
    return flux * frac * cfg.eta * cfg.frame_rate_hz


# ---------------------------------------------------------------------------
# Batched event generation
# ---------------------------------------------------------------------------


@dataclass
class DetectorResult:
    """Accepted clicks of one detector over the whole run."""

    name: str
    t_within: np.ndarray
    frame_idx: np.ndarray
    origin: np.ndarray  # index into origins
    origins: tuple
    n_frames: int

    def histogram(self, vcfg: ValidatedConfig) -> Histogram:
        return histogram_from_times(self.t_within, vcfg, self.n_frames)

    def counts_in(self, lo_ps: int, hi_ps: int, origin: str | None = None) -> int:
        mask = (self.t_within >= lo_ps) & (self.t_within < hi_ps)
        if origin is not None:
            mask &= self.origin == self.origins.index(origin)
        return int(np.sum(mask))


@dataclass
class RunResult:
    """Report plus exportable artifacts of one scenario run."""

    report: analysis.MetricsReport
    histograms: dict = field(default_factory=dict)
    sweep_points: list = field(default_factory=list)
    group_rates: dict = field(default_factory=dict)
    er_by_group: dict = field(default_factory=dict)
    bb84: object = None


def _signal_slots(
    scenario: Scenario, vcfg: ValidatedConfig, sid: str, sig_idx: int, n_frames: int
) -> np.ndarray:
    """Per-frame time-bin slot of one signal (shared by all detectors)."""
    sig = scenario.signal(sid)
    if sig.fixed_slot is not None:
        return np.full(n_frames, sig.fixed_slot, dtype=np.int64)
    rng = RandomSource(vcfg.seed).stream(ROLE_SCHEDULE, sig_idx)
    return rng.generator().integers(0, vcfg.d, size=n_frames, dtype=np.int64)


def _jitter(gen, n, sigma):
    if sigma <= 0 or n == 0:
        return np.zeros(n, dtype=np.int64)
    return np.rint(gen.normal(0.0, sigma, size=n)).astype(np.int64)


def _simulate_timebin_detector(
    scenario: Scenario,
    vcfg: ValidatedConfig,
    channel: ChannelModel,
    det_idx: int,
    groups,
    gate: str,
    enabled: list[str],
    slots_by_signal: dict,
    n_frames: int,
) -> DetectorResult:
    """All clicks of one gated detector watching a group collection."""
    origins = tuple(enabled)
    pieces_t, pieces_f, pieces_o = [], [], []
    root = RandomSource(vcfg.seed)
    for sig_pos, sid in enumerate(enabled):
        sig = scenario.signal(sid)
        ext = sig.im_extinction if sig.im_extinction is not None else vcfg.im_extinction
        f = floor_fraction(vcfg.d, ext)
        lam = (
            vcfg.mu_in
            * channel.transmission(sig)
            * channel.collection_fraction(sig.input_group, groups)
            * vcfg.eta
        )
        lam_pulse, lam_floor = lam * (1 - f), lam * f
        offset = sig.offset_ps(vcfg)
        slots = slots_by_signal[sid]
        centers = vcfg.slot_center
        for b0 in range(0, n_frames, BATCH):
            nb = min(BATCH, n_frames - b0)
            gen = root.stream(ROLE_PHOTONS, det_idx, sig_pos, b0 // BATCH).generator()
            counts = gen.poisson(lam_pulse, size=nb)
            idx = np.repeat(np.arange(nb), counts)
            if len(idx):
                t = (
                    offset
                    + centers[slots[b0 + idx]]
                    + _jitter(gen, len(idx), vcfg.jitter_sigma_ps)
                )
                np.clip(t, 0, vcfg.frame_period_ps - 1, out=t)
                pieces_t.append(t)
                pieces_f.append(b0 + idx)
                pieces_o.append(np.full(len(idx), sig_pos, dtype=np.int8))
            fcounts = gen.poisson(lam_floor, size=nb)
            fidx = np.repeat(np.arange(nb), fcounts)
            if len(fidx):
                ft = offset + gen.integers(0, vcfg.frame_window_ps, size=len(fidx))
                pieces_t.append(ft.astype(np.int64))
                pieces_f.append(b0 + fidx)
                pieces_o.append(np.full(len(fidx), sig_pos, dtype=np.int8))
    name = "g" + "+".join(map(str, groups))
    return _finish_detector(
        name, pieces_t, pieces_f, pieces_o, origins, vcfg, gate, n_frames
    )


def _finish_detector(name, pieces_t, pieces_f, pieces_o, origins, vcfg, gate, n_frames):
    if pieces_t:
        t = np.concatenate(pieces_t)
        fr = np.concatenate(pieces_f).astype(np.int64)
        orig = np.concatenate(pieces_o)
    else:
        t = np.zeros(0, dtype=np.int64)
        fr = np.zeros(0, dtype=np.int64)
        orig = np.zeros(0, dtype=np.int8)
    t_abs = fr * vcfg.frame_period_ps + t
    order = np.argsort(t_abs, kind="stable")
    t, fr, orig, t_abs = t[order], fr[order], orig[order], t_abs[order]
    keep = gate_mask(t, gate, vcfg.frame_window_ps)
    t, fr, orig, t_abs = t[keep], fr[keep], orig[keep], t_abs[keep]
    keep = dead_time_mask(t_abs, vcfg.dead_time_ps)
    return DetectorResult(
        name=name,
        t_within=t[keep],
        frame_idx=fr[keep],
        origin=orig[keep],
        origins=origins,
        n_frames=n_frames,
    )


def _simulate_phase_detector(
    scenario: Scenario,
    vcfg: ValidatedConfig,
    channel: ChannelModel,
    det_idx: int,
    groups,
    gate: str,
    enabled: list[str],
    n_frames: int,
    phi_total: float,
    port: str,
    arm: str,
    run_tag: int,
) -> DetectorResult:
    """Clicks of one detector behind the delay interferometer.

    ``phi_total`` is phi_a + phi_b; every contributing train carries the
    same transmitted differential phase, and each photon self-interferes
    across its own train regardless of which signal it leaked from.
    """
    v = scenario.experiment.visibility_cap
    f_ph = scenario.experiment.phase_floor
    d = vcfg.d
    tp = vcfg.pulse_period_ps
    sign = 1.0 if port == "p" else -1.0
    origins = tuple(enabled)
    pieces_t, pieces_f, pieces_o = [], [], []
    root = RandomSource(vcfg.seed)
    for sig_pos, sid in enumerate(enabled):
        sig = scenario.signal(sid)
        lam = (
            vcfg.mu_in
            * channel.transmission(sig)
            * channel.collection_fraction(sig.input_group, groups)
            * vcfg.eta
        )
        i_in = lam * (1 - f_ph) / d
        if arm == "none":
            lam_int = (d - 1) * (i_in / 2.0) * (1.0 + sign * v * math.cos(phi_total))
            lam_e0 = lam_ed = i_in / 4.0
            lam_floor = lam * f_ph / 2.0
        else:
            lam_int = (d - 1) * i_in / 4.0
            lam_e0 = i_in / 4.0 if arm == "delay" else 0.0
            lam_ed = i_in / 4.0 if arm == "direct" else 0.0
            lam_floor = lam * f_ph / 4.0
        offset = sig.offset_ps(vcfg)
        for b0 in range(0, n_frames, BATCH):
            nb = min(BATCH, n_frames - b0)
            gen = root.stream(
                ROLE_PHOTONS, run_tag, det_idx, sig_pos, b0 // BATCH
            ).generator()
            k_int = gen.poisson(lam_int, size=nb)
            idx = np.repeat(np.arange(nb), k_int)
            if len(idx):
                pos = gen.integers(1, d, size=len(idx))  # equal interior weights
                t = (
                    offset
                    + pos * tp
                    + tp // 2
                    + _jitter(gen, len(idx), vcfg.jitter_sigma_ps)
                )
                np.clip(t, 0, vcfg.frame_period_ps - 1, out=t)
                pieces_t.append(t)
                pieces_f.append(b0 + idx)
                pieces_o.append(np.full(len(idx), sig_pos, dtype=np.int8))
            for lam_edge, pos_j in ((lam_e0, 0), (lam_ed, d)):
                if lam_edge <= 0:
                    continue
                k_e = gen.poisson(lam_edge, size=nb)
                idx = np.repeat(np.arange(nb), k_e)
                if len(idx):
                    t = (
                        offset
                        + pos_j * tp
                        + tp // 2
                        + _jitter(gen, len(idx), vcfg.jitter_sigma_ps)
                    )
                    np.clip(t, 0, vcfg.frame_period_ps - 1, out=t)
                    pieces_t.append(t)
                    pieces_f.append(b0 + idx)
                    pieces_o.append(np.full(len(idx), sig_pos, dtype=np.int8))
            k_f = gen.poisson(lam_floor, size=nb)
            idx = np.repeat(np.arange(nb), k_f)
            if len(idx):
                t = offset + gen.integers(0, vcfg.frame_window_ps, size=len(idx))
                if arm == "none":
                    t = t + tp * (gen.random(len(idx)) < 0.5)
                elif arm == "direct":
                    t = t + tp  # only the delayed arm is open
                t = np.minimum(t.astype(np.int64), vcfg.frame_period_ps - 1)
                pieces_t.append(t)
                pieces_f.append(b0 + idx)
                pieces_o.append(np.full(len(idx), sig_pos, dtype=np.int8))
    name = "g" + "+".join(map(str, groups)) + f":{port}"
    return _finish_detector(
        name, pieces_t, pieces_f, pieces_o, origins, vcfg, gate, n_frames
    )


# ---------------------------------------------------------------------------
# Window helpers
# ---------------------------------------------------------------------------


def _slot_window(vcfg, offset_ps, slot):
    tp = vcfg.pulse_period_ps
    return offset_ps + slot * tp, offset_ps + (slot + 1) * tp


def _interior_window(vcfg, offset_ps):
    tp = vcfg.pulse_period_ps
    return offset_ps + tp, offset_ps + vcfg.d * tp


def _gated_phase_counts(det: DetectorResult, vcfg, offset_ps) -> float:
    """Pulse-gated, background-subtracted counts over interior positions.

    On-gates are +-375 ps around each interior position center; equal-width
    off-gates between positions estimate the uniform floor, which is
    subtracted.
    """
    tp = vcfg.pulse_period_ps
    rel = det.t_within.astype(np.int64) - offset_ps
    j = rel // tp
    interior = (j >= 1) & (j <= vcfg.d - 1)
    within = rel - j * tp
    dist = np.abs(within - tp // 2)
    n_sig = int(np.sum(interior & (dist <= 375)))
    n_bkg = int(np.sum(interior & (dist > tp // 2 - 375)))
    return float(n_sig - n_bkg)


def _require_fixed_slots(scenario: Scenario, sids) -> None:
    if scenario.cfg.p_tb != 1.0:
        raise ConfigError(
            f"{scenario.experiment.kind} simulates a pure time-bin stream; "
            f"set p_tb = 1 (data/security interleaving is protocol bookkeeping)"
        )
    for sid in sids:
        if scenario.signal(sid).fixed_slot is None:
            raise ConfigError(
                f"{scenario.experiment.kind} requires fixed_slot on signal {sid}"
            )


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------


def run_scenario(scenario: Scenario) -> RunResult:
    """Dispatch to the experiment-specific runner."""
    kind = scenario.experiment.kind
    runner = {
        "timebin_B": _run_timebin,
        "timebin_xt": _run_timebin,
        "capacity": _run_capacity,
        "phase_er": _run_phase_er,
        "phase_sweep": _run_phase_sweep,
        "bb84": _run_bb84,
        "bb84_eve": _run_bb84,
    }[kind]
    return runner(scenario)


def _enabled_signals(scenario) -> list[str]:
    return [s.signal_id for s in scenario.signals]


def monitor_input_balance(scenario: Scenario, vcfg: ValidatedConfig, n_frames: int) -> dict:
    """Input-flux monitor: per-signal counts at the multiplexer input.

    An always-gated unit detector samples each signal's pre-multiplexer
    photon stream; the counts must agree within the 5% balance margin.
    """
    from .encoder import assert_balanced
    from .config import ROLE_MONITOR

    counts = {}
    for i, sig in enumerate(scenario.signals):
        gen = RandomSource(vcfg.seed).stream(ROLE_MONITOR, i).generator()
        counts[sig.signal_id] = float(gen.poisson(vcfg.mu_in * n_frames))
    assert_balanced(counts, margin=0.05)
    return counts


def _analytic_group_rates(scenario, vcfg, channel) -> dict:
    """Model expectation of each signal's rate into each output group."""
    rates = {}
    for sig in scenario.signals:
        flux = vcfg.mu_in * channel.transmission(sig)
        frac = channel.group_fractions(sig.input_group)
        rates[sig.signal_id] = {
            g: flux * frac[g - 1] * vcfg.eta * vcfg.frame_rate_hz
            for g in range(1, 6)
        }
    return rates


def _run_timebin(scenario: Scenario) -> RunResult:
    vcfg = scenario.validated()
    channel = build_channel(scenario)
    exp = scenario.experiment
    n = exp.n_frames
    enabled = _enabled_signals(scenario)
    _require_fixed_slots(scenario, exp.collections.keys())
    monitor = monitor_input_balance(scenario, vcfg, n)
    slots = {
        sid: _signal_slots(scenario, vcfg, sid, i, n) for i, sid in enumerate(enabled)
    }
    detectors: dict[str, DetectorResult] = {}
    for det_idx, (sid, groups) in enumerate(sorted(exp.collections.items())):
        gate = exp.gates.get(sid, "always")
        detectors[sid] = _simulate_timebin_detector(
            scenario, vcfg, channel, det_idx, groups, gate, enabled, slots, n
        )

    cps = {}
    snr_by_signal = {}
    rho = {}
    rho_kk = {}
    xt_db: dict[str, float] = {}
    extra: dict = {}
    histograms = {}
    for sid, det in detectors.items():
        sig = scenario.signal(sid)
        offset = sig.offset_ps(vcfg)
        cps[sid] = analysis.counts_per_second(
            det.counts_in(offset, offset + vcfg.frame_window_ps), n, vcfg.frame_rate_hz
        )
        hist = det.histogram(vcfg)
        histograms[f"{sid}_{det.name}"] = hist
        # other signals' pulses sharing this half-window are known spikes,
        # not floor: exclude their slots from the floor estimate
        exclude = tuple(
            scenario.signal(o).fixed_slot
            for o in enabled
            if o != sid and scenario.signal(o).offset_ps(vcfg) == offset
        )
        res = analysis.snr_db(
            hist, sig.fixed_slot, vcfg, offset_ps=offset, exclude_slots=exclude
        )
        snr_by_signal[sid] = res.snr_db
        lo, hi = _slot_window(vcfg, offset, sig.fixed_slot)
        c_j = det.counts_in(lo, hi)
        cf_j = det.counts_in(offset, offset + vcfg.d * vcfg.pulse_period_ps) - c_j
        for s_ex in exclude:
            lo_e, hi_e = _slot_window(vcfg, offset, s_ex)
            cf_j -= det.counts_in(lo_e, hi_e)
        tomo = analysis.tomography(c_j, cf_j, vcfg.d)
        rho[sid] = tomo.rho_jj
        rho_kk[sid] = tomo.rho_kk

    if exp.kind == "timebin_B" and "B" in detectors:
        det_b = detectors["B"]
        sig_b = scenario.signal("B")
        lo2, hi2 = _slot_window(vcfg, sig_b.offset_ps(vcfg), sig_b.fixed_slot)
        c2 = det_b.counts_in(lo2, hi2)
        c1 = 0
        for other in enabled:
            if other == "B":
                continue
            so = scenario.signal(other)
            lo1, hi1 = _slot_window(vcfg, so.offset_ps(vcfg), so.fixed_slot)
            c1 += det_b.counts_in(lo1, hi1)
        xt_db["AC_to_B"] = math.inf if c1 == 0 else analysis.crosstalk_db(c2, c1)
        extra["ac_counts_in_dt2_on_B"] = sum(
            det_b.counts_in(vcfg.frame_window_ps, vcfg.frame_period_ps, origin=o)
            for o in enabled
            if o != "B"
        )
    if exp.kind == "timebin_xt" and {"A", "C"} <= set(detectors):
        sig_a, sig_c = scenario.signal("A"), scenario.signal("C")
        for sid in ("A", "C"):
            det = detectors[sid]
            lo2, hi2 = _slot_window(vcfg, sig_a.offset_ps(vcfg), sig_a.fixed_slot)
            lo1, hi1 = _slot_window(vcfg, sig_c.offset_ps(vcfg), sig_c.fixed_slot)
            xt_db[f"at_{sid}_collection"] = analysis.crosstalk_db(
                det.counts_in(lo2, hi2), det.counts_in(lo1, hi1)
            )

    snr_mean = sum(snr_by_signal.values()) / len(snr_by_signal)
    finite_xt = [abs(v) for v in xt_db.values() if math.isfinite(v)]
    p_xt = analysis.prob_from_db(min(finite_xt)) if finite_xt else None
    report = analysis.MetricsReport(
        experiment=exp.kind,
        seed=vcfg.seed,
        n_frames=n,
        cps_per_collection=cps,
        xt_db=xt_db or None,
        snr_db=snr_mean,
        snr_db_per_signal=snr_by_signal,
        rho_diag=rho,
        p_xt=p_xt,
        p_snr=analysis.prob_from_db(snr_mean),
        extra={**extra, "rho_kk": rho_kk, "input_monitor_counts": monitor},
    )
    return RunResult(
        report=report,
        histograms=histograms,
        group_rates=_analytic_group_rates(scenario, vcfg, channel),
    )


def _run_capacity(scenario: Scenario) -> RunResult:
    vcfg = scenario.validated()
    if vcfg.p_tb != 1.0:
        raise ConfigError("capacity scenarios simulate a pure time-bin stream; set p_tb = 1")
    channel = build_channel(scenario)
    exp = scenario.experiment
    n = exp.n_frames

    # Part 1: idealized single-signal budget at a flat insertion loss.
    theory_cps = (
        exp.theory_mu
        * vcfg.eta
        * vcfg.frame_rate_hz
        * float(10 ** (exp.theory_il_db / 10.0))
    )
    theory_scenario = replace(
        scenario,
        cfg=replace(scenario.cfg, mu_in=exp.theory_mu),
        signals=(SignalAssignment("S", input_group=1, delayed=False, fixed_slot=20),),
        channel=replace(scenario.channel, uniform_il_db=exp.theory_il_db),
    )
    tvcfg = theory_scenario.validated()
    ch1 = build_channel(theory_scenario)
    slots1 = {"S": _signal_slots(theory_scenario, tvcfg, "S", 0, n)}
    det1 = _simulate_timebin_detector(
        theory_scenario, tvcfg, ch1, 90, (1,), DELTA_T1, ["S"], slots1, n
    )
    mc_theory_cps = analysis.counts_per_second(
        det1.counts_in(0, tvcfg.frame_window_ps), n, tvcfg.frame_rate_hz
    )

    # Part 2: three signals through the measured tables, reassigned groups.
    monitor_input_balance(scenario, vcfg, n)
    # Each collection rate is taken with co-windowed companions disconnected
    # (the arrangement the reported rates come from); signals occupying the
    # other half-window stay connected since gating removes them anyway.
    cps = {}
    histograms = {}
    for det_idx, (sid, groups) in enumerate(sorted(exp.collections.items())):
        sig = scenario.signal(sid)
        sub = replace(
            scenario,
            signals=tuple(
                s
                for s in scenario.signals
                if s.signal_id == sid or s.delayed != sig.delayed
            ),
        )
        enabled = _enabled_signals(sub)
        slots = {
            s: _signal_slots(sub, vcfg, s, i, n) for i, s in enumerate(enabled)
        }
        gate = exp.gates.get(sid, "always")
        det = _simulate_timebin_detector(
            sub, vcfg, channel, det_idx, groups, gate, enabled, slots, n
        )
        off = sig.offset_ps(vcfg)
        cps[sid] = analysis.counts_per_second(
            det.counts_in(off, off + vcfg.frame_window_ps), n, vcfg.frame_rate_hz
        )
        histograms[f"{sid}_{det.name}"] = det.histogram(vcfg)
    total = sum(cps.values())
    cap = analysis.capacity_from_counts(total, vcfg.d)
    analytic = {
        sid: expected_collection_rate(scenario, channel, sid, groups)
        for sid, groups in exp.collections.items()
    }
    report = analysis.MetricsReport(
        experiment="capacity",
        seed=vcfg.seed,
        n_frames=n,
        cps_per_collection=cps,
        capacity_qubits_per_s=cap,
        extra={
            "theory_single_signal_cps": theory_cps,
            "mc_single_signal_cps": mc_theory_cps,
            "total_cps": total,
            "analytic_collection_cps": analytic,
            "capacity_eta1_qubits_per_s": cap / vcfg.eta,
        },
    )
    return RunResult(
        report=report,
        histograms=histograms,
        group_rates=_analytic_group_rates(scenario, vcfg, channel),
    )


def _run_phase_er(scenario: Scenario) -> RunResult:
    """Extinction ratios per output group.

    The delayed signal is measured on its groups in the second half-window
    (main arrangement).  For the other two signals the first one is delayed
    and the middle one disconnected, so their groups are measured without
    co-windowed crosstalk: the collected signal in its own window, the
    other gated out.  Each group is evaluated interfering and with either
    arm blocked; the non-interfering reference is the arm average.
    """
    vcfg = scenario.validated()
    channel = build_channel(scenario)
    exp = scenario.experiment
    n = exp.n_frames
    phi_total = exp.phi_a + exp.phi_b

    plans = []
    for sid, groups in sorted(exp.collections.items()):
        for g in groups:
            plans.append((g, sid))
    er_by_group = {}
    p_phi_by_group = {}
    histograms = {}
    run_tag = 0
    for g, sid in plans:
        if sid == "B":
            enabled = ["B"]
            sub = scenario
        else:
            sub = replace(
                scenario,
                signals=tuple(
                    replace(s, delayed=(s.signal_id == "A"))
                    for s in scenario.signals
                    if s.signal_id != "B"
                ),
            )
            enabled = [s.signal_id for s in sub.signals]
        sub_sig = sub.signal(sid)
        gate = DELTA_T2 if sub_sig.delayed else DELTA_T1
        offset = sub_sig.offset_ps(vcfg)
        counts = {}
        for arm in ("none", "delay", "direct"):
            det = _simulate_phase_detector(
                sub, vcfg, channel, g, (g,), gate, enabled, n,
                phi_total, "p", arm, run_tag,
            )
            counts[arm] = det.counts_in(*_interior_window(vcfg, offset))
            if arm in ("none", "delay"):
                label = "interfering" if arm == "none" else "blocked"
                histograms[f"g{g}_{sid}_{label}"] = det.histogram(vcfg)
            run_tag += 1
        c0 = 0.5 * (counts["delay"] + counts["direct"])
        er_by_group[g] = analysis.extinction_ratio_db(c0, counts["none"])
        p_phi_by_group[g] = counts["none"] / (2.0 * c0)
    finite = [v for v in er_by_group.values() if math.isfinite(v)]
    er_mean = sum(finite) / len(finite)
    collected_by = {g: sid for g, sid in plans}
    report = analysis.MetricsReport(
        experiment="phase_er",
        seed=vcfg.seed,
        n_frames=n,
        er_db_per_group={g: er_by_group[g] for g in sorted(er_by_group)},
        er_db_mean=er_mean,
        p_phi=analysis.prob_from_db(er_mean),
        extra={"p_phi_by_group": p_phi_by_group},
    )
    return RunResult(
        report=report,
        histograms=histograms,
        er_by_group={g: (collected_by[g], er_by_group[g]) for g in sorted(er_by_group)},
    )


def _run_phase_sweep(scenario: Scenario) -> RunResult:
    """Counts vs total phase on the interfering port, with the sinusoid fit.

    Per phase point, counts are pulse-gated and background-subtracted over
    the interior positions, so the fitted visibility reflects the fringe
    contrast rather than the uniform floor.
    """
    vcfg = scenario.validated()
    channel = build_channel(scenario)
    exp = scenario.experiment
    n = exp.n_frames
    enabled = _enabled_signals(scenario)
    fits = {}
    points_out = []
    run_tag = 0
    for det_idx, (sid, groups) in enumerate(sorted(exp.collections.items())):
        sig = scenario.signal(sid)
        gate = exp.gates.get(sid, DELTA_T2 if sig.delayed else DELTA_T1)
        offset = sig.offset_ps(vcfg)
        pts = []
        for phi_b in exp.sweep_phi_b:
            det = _simulate_phase_detector(
                scenario, vcfg, channel, det_idx, groups, gate,
                enabled, n, exp.phi_a + phi_b, "p", "none", run_tag,
            )
            run_tag += 1
            c = _gated_phase_counts(det, vcfg, offset)
            pts.append((exp.phi_a + phi_b, c))
            points_out.append((sid, exp.phi_a + phi_b, c))
        fit = analysis.fit_visibility(pts)
        fits[sid] = {
            "i0": fit.i0,
            "visibility": fit.visibility,
            "residual": fit.residual,
        }
    report = analysis.MetricsReport(
        experiment="phase_sweep",
        seed=vcfg.seed,
        n_frames=n,
        visibility=fits,
    )
    return RunResult(report=report, sweep_points=points_out)


def _run_bb84(scenario: Scenario) -> RunResult:
    vcfg = scenario.validated()
    channel = build_channel(scenario)
    exp = scenario.experiment
    sid = _enabled_signals(scenario)[0]
    sig = scenario.signal(sid)
    groups = exp.collections.get(sid, (sig.input_group,))
    flux = (
        vcfg.mu_in
        * channel.transmission(sig)
        * channel.collection_fraction(sig.input_group, groups)
    )
    res = simulate_bb84(
        n_frames=exp.n_frames,
        flux=flux,
        eta=vcfg.eta,
        cfg=vcfg,
        rng=RandomSource(vcfg.seed),
        visibility_cap=exp.visibility_cap,
        eve=exp.kind == "bb84_eve",
        phase_floor=exp.phase_floor,
    )
    params = KeyRateParams()
    report = analysis.MetricsReport(
        experiment=exp.kind,
        seed=vcfg.seed,
        n_frames=exp.n_frames,
        qber_sifted=res.qber,
        key_rate=key_rate(params),
        extra={
            "n_detected": res.n_detected,
            "n_sifted": res.n_sifted,
            "flux_per_frame": flux,
            "key_rate_params_n": params.n,
        },
    )
    return RunResult(report=report, bb84=res if exp.transcript else None)
