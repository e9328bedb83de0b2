"""Differential-phase BB84 over phase frames.

Alice encodes one qubit per frame in the differential phase of the pulse
train (X basis: {0, pi}; Z basis: {pi/2, 3pi/2}); Bob measures with a
one-pulse-delay interferometer whose extra phase selects his basis
(phi_b = 0 measures X, pi/2 measures Z).  A frame-level click on one of the
two output ports is the measurement outcome; double or missing clicks give
a null bit.  Clicks in the two edge positions of the train carry no phase
information and are discarded before the bit decision.

Port convention: port P carries the ``1 + V cos(phi_a + phi_b)`` lobe.  A
matched-basis bit 0 therefore lights port P in the X basis but port P' in
the Z basis, so the port-to-bit decode table is basis dependent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import (
    FrameAmplitudes,
    Phase,
    RandomSource,
    ROLE_ALICE,
    ROLE_BOB,
    ROLE_EVE,
    ValidatedConfig,
)
from .encoder import make_phase_frame
from .receiver import InterferometerConfig, interfere

__all__ = [
    "BASIS_X",
    "BASIS_Z",
    "BasisChoice",
    "BobSetting",
    "SiftOutcome",
    "KeyRateParams",
    "phase_for",
    "basis_of_phase",
    "alice_prepare",
    "bob_measure",
    "eve_intercept",
    "sift",
    "key_rate",
    "frame_mux",
    "Bb84Result",
    "simulate_bb84",
    "write_transcript",
]

BASIS_X = "X"
BASIS_Z = "Z"
NULL_BIT = -1  # array representation of a null outcome

# bit -> differential phase, per basis
_PHASE_TABLE = {
    BASIS_X: (0.0, math.pi),
    BASIS_Z: (math.pi / 2, 3 * math.pi / 2),
}
# Bob's interferometer phase per measured basis
_PHI_B = {BASIS_X: 0.0, BASIS_Z: math.pi / 2}
# port -> bit, per basis (see module docstring)
_DECODE = {BASIS_X: {"p": 0, "p_prime": 1}, BASIS_Z: {"p": 1, "p_prime": 0}}


def phase_for(basis: str, bit: int) -> float:
    """Differential phase encoding (basis, bit)."""
    return _PHASE_TABLE[basis][bit]


def basis_of_phase(phi_a: float) -> str:
    """Recover the encoding basis of a prepared phase (mod 2 pi)."""
    quarter = round((phi_a % (2 * math.pi)) / (math.pi / 2)) % 4
    return BASIS_X if quarter % 2 == 0 else BASIS_Z


@dataclass(frozen=True)
class BasisChoice:
    basis: str
    bit: int

    @property
    def phi_a(self) -> float:
        return phase_for(self.basis, self.bit)


@dataclass(frozen=True)
class BobSetting:
    basis: str

    @property
    def phi_b(self) -> float:
        return _PHI_B[self.basis]


@dataclass(frozen=True)
class SiftOutcome:
    alice_bit: int
    alice_basis: str
    bob_basis: str
    bob_bit: int  # NULL_BIT when no conclusive click


@dataclass(frozen=True)
class KeyRateParams:
    """Inputs of the finite-key secret-fraction bound.

    ``eps_sec``/``eps_corr`` are the secrecy and correctness failure
    probabilities, ``q_tol`` the channel error tolerance, ``n`` the raw key
    bits, ``k`` the parameter-estimation bits (defaults to n), ``q`` the
    preparation quality (1 for ideal BB84 states), ``eps_rob`` the
    robustness (probability the protocol aborts with no eavesdropper) and
    ``f_ec`` the error-correction inefficiency.
    """

    n: int = 1_000_000
    k: int | None = None
    eps_sec: float = 1e-14
    eps_corr: float = 1e-14
    q_tol: float = 0.01
    q: float = 1.0
    eps_rob: float = 0.18
    f_ec: float = 1.1

    @property
    def k_eff(self) -> int:
        return self.n if self.k is None else self.k

    def validate(self) -> None:
        if self.n < 1 or self.k_eff < 1:
            raise ValueError("n and k must be >= 1")
        for name in ("eps_sec", "eps_corr"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must be in (0, 1)")
        if not 0 <= self.q_tol <= 0.5:
            raise ValueError("q_tol must be in [0, 0.5]")
        if not 0 <= self.eps_rob < 1:
            raise ValueError("eps_rob must be in [0, 1)")
        if not 0 < self.q <= 1:
            raise ValueError("q must be in (0, 1]")
        if self.f_ec < 1:
            raise ValueError("f_ec must be >= 1")


def _h2(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def key_rate(params: KeyRateParams) -> float:
    """Expected secret bits per raw key bit from the finite-key bound.

    Implements the key-length bound of Tomamichel, Lim, Gisin & Renner,
    "Tight finite-key analysis for quantum cryptography", Nat. Commun. 3,
    634 (2012), term by term:

    * ``n (q - h2(q_tol + mu))`` -- smooth min-entropy of the raw key given
      the adversary, from the entropic uncertainty relation; ``q`` is the
      preparation quality (1 for ideal BB84) and ``mu`` the statistical
      fluctuation between the k sampled and n unsampled positions
      (Serfling-type bound for sampling without replacement):
      ``mu = sqrt((n + k)(k + 1) / (n k^2) * ln(1/eps_pe) / 2)``.
    * ``leak_ec = f_ec * n * h2(q_tol)`` -- error-correction leakage model.
    * ``log2(2 / (eps_corr * eps_bar^2))`` -- correctness verification plus
      leftover-hash privacy-amplification cost.
    * The secrecy budget is split ``eps_sec = 2 eps_bar + eps_pe`` with
      ``eps_bar = eps_pe = eps_sec / 3``.
    * The expected rate is scaled by ``(1 - eps_rob)``: with probability
      ``eps_rob`` the protocol aborts even without an eavesdropper and
      yields no key.

    Returns 0 when the bound is non-positive (abort regime).
    """
    params.validate()
    n, k = params.n, params.k_eff
    eps_bar = eps_pe = params.eps_sec / 3.0
    mu = math.sqrt(
        (n + k) * (k + 1) / (n * k * k) * math.log(1.0 / eps_pe) / 2.0
    )
    q_err = params.q_tol + mu
    if q_err >= 0.5:
        return 0.0
    leak_ec = params.f_ec * n * _h2(params.q_tol)
    ell = (
        n * (params.q - _h2(q_err))
        - leak_ec
        - math.log2(2.0 / (params.eps_corr * eps_bar * eps_bar))
    )
    if ell <= 0:
        return 0.0
    return (1.0 - params.eps_rob) * ell / n


# ---------------------------------------------------------------------------
# Protocol steps
# ---------------------------------------------------------------------------


def alice_prepare(
    n_frames: int,
    rng: RandomSource,
    mu: float,
    d: int = 64,
    floor_fraction: float = 0.0,
):
    """Draw uniform bits/bases and the matching phase-frame parameters.

    Returns ``(bits, bases, phi_a)`` as arrays; frame ``i`` is the phase
    frame at differential phase ``phi_a[i]``.
    """
    gen = rng.stream(ROLE_ALICE).generator()
    bits = gen.integers(0, 2, size=n_frames, dtype=np.int8)
    bases = np.where(gen.random(n_frames) < 0.5, BASIS_X, BASIS_Z)
    phi = np.array(
        [phase_for(b, int(a)) for b, a in zip(bases, bits)], dtype=float
    )
    return bits, bases, phi


def eve_intercept(
    frames: list[FrameAmplitudes], rng: RandomSource
) -> list[FrameAmplitudes]:
    """Intercept-resend attack on a sequence of phase frames.

    Eve measures each frame in a random basis and re-prepares it with her
    inferred differential phase.  When her basis matches Alice's she infers
    the phase correctly and the frame is unchanged; otherwise her outcome is
    uniform over her own basis pair, so the re-sent information matches
    Alice's only with probability 1/2.
    """
    gen = rng.stream(ROLE_EVE).generator()
    out = []
    for frame in frames:
        if not isinstance(frame.kind, Phase):
            out.append(frame)
            continue
        alice_basis = basis_of_phase(frame.kind.phi_a)
        eve_basis = BASIS_X if gen.random() < 0.5 else BASIS_Z
        if eve_basis == alice_basis:
            out.append(frame)
            continue
        eve_bit = int(gen.integers(0, 2))
        phi_e = phase_for(eve_basis, eve_bit)
        d = len(frame.slots)
        mu = frame.mean_photons
        fl = frame.floor_rate / mu if mu > 0 else 0.0
        out.append(make_phase_frame(phi_e, mu, d, fl, frame.offset_ps))
    return out


def bob_measure(
    frame: FrameAmplitudes,
    setting: BobSetting,
    eta: float,
    cfg: ValidatedConfig,
    rng: RandomSource | np.random.Generator,
    visibility_cap: float = 0.93,
) -> int:
    """Measure one phase frame; returns 0, 1 or NULL_BIT.

    The frame passes the delay interferometer at Bob's phase; each port's
    clicks are Poisson-thinned by ``eta``.  Edge-position clicks are
    discarded (no phase information); with dead time only the earliest
    click per port survives, and a conclusive outcome needs an interior
    click on exactly one port.
    """
    if not isinstance(frame.kind, Phase):
        raise ValueError("bob_measure requires a phase frame")
    gen = rng if isinstance(rng, np.random.Generator) else rng.generator()
    icfg = InterferometerConfig(
        delay_ps=cfg.pulse_period_ps,
        phi_b=setting.phi_b,
        visibility_cap=visibility_cap,
    )
    out = interfere(frame, icfg, cfg.pulse_period_ps)
    usable = {}
    for port, inten, floor in (
        ("p", out.port_p, out.floor_p),
        ("p_prime", out.port_p_prime, out.floor_p_prime),
    ):
        usable[port] = _port_has_usable_click(inten, floor, eta, cfg, gen)
    if usable["p"] == usable["p_prime"]:
        return NULL_BIT
    port = "p" if usable["p"] else "p_prime"
    return _DECODE[setting.basis][port]


def _port_has_usable_click(inten, floor, eta, cfg, gen) -> bool:
    """True when the port's earliest click falls in an interior position."""
    d = len(inten) - 1
    tp = cfg.pulse_period_ps
    counts = gen.poisson(eta * inten)
    n_floor = gen.poisson(eta * floor)
    times = []
    for j in np.nonzero(counts)[0]:
        for _ in range(int(counts[j])):
            times.append((j * tp + tp // 2, 1 <= j <= d - 1))
    for _ in range(int(n_floor)):
        t = int(gen.integers(0, cfg.frame_window_ps))
        times.append((t, tp <= t < d * tp))
    if not times:
        return False
    times.sort()
    return times[0][1]  # dead time: only the earliest click survives


def sift(a, b, b_prime, bob_bits, k_fraction: float = 1.0):
    """Keep basis-matched, conclusive frames; estimate the error rate.

    Returns ``(key_a, key_b, qber_est)``.  ``qber_est`` is the mismatch
    fraction over the first ``k_fraction`` share of the sifted positions
    (parameter-estimation sample; 1.0 = use everything).
    """
    a = np.asarray(a)
    b = np.asarray(b)
    b_prime = np.asarray(b_prime)
    bob_bits = np.asarray(bob_bits)
    if not (len(a) == len(b) == len(b_prime) == len(bob_bits)):
        raise ValueError("sequence lengths differ")
    keep = (b == b_prime) & (bob_bits != NULL_BIT)
    key_a = a[keep].astype(np.int8)
    key_b = bob_bits[keep].astype(np.int8)
    n_pe = max(1, int(round(k_fraction * len(key_a)))) if len(key_a) else 0
    qber = float(np.mean(key_a[:n_pe] != key_b[:n_pe])) if n_pe else math.nan
    return key_a, key_b, qber


def frame_mux(data_frames: list, phase_frames: list, p_tb: float, rng: RandomSource):
    """Interleave data (time-bin) and security (phase) frames.

    Each emitted slot is a data frame with probability ``p_tb``.  When one
    pool runs dry the remainder comes from the other.  Returns the
    interleaved stream plus bookkeeping: the effective data capacity is the
    time-bin capacity scaled by exactly ``p_tb``.
    """
    if not 0.0 <= p_tb <= 1.0:
        raise ValueError("p_tb must be in [0, 1]")
    gen = rng.stream(ROLE_ALICE, 1).generator()
    stream = []
    di = pi = 0
    n_total = len(data_frames) + len(phase_frames)
    flags = gen.random(n_total) < p_tb
    for want_data in flags:
        if want_data and di < len(data_frames) or pi >= len(phase_frames):
            if di >= len(data_frames):
                break
            stream.append(("timebin", data_frames[di]))
            di += 1
        else:
            stream.append(("phase", phase_frames[pi]))
            pi += 1
    realized = sum(1 for kind, _ in stream if kind == "timebin") / max(1, len(stream))
    info = {
        "p_tb": p_tb,
        "realized_tb_fraction": realized,
        "capacity_scale": p_tb,
    }
    return stream, info


# ---------------------------------------------------------------------------
# Vectorized BB84 session
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bb84Result:
    n_frames: int
    n_detected: int
    n_sifted: int
    qber: float
    key_a: np.ndarray
    key_b: np.ndarray
    alice_bits: np.ndarray | None = None
    alice_bases: np.ndarray | None = None
    bob_bases: np.ndarray | None = None
    bob_bits: np.ndarray | None = None

    def outcomes(self):
        """Per-frame public-channel view of the exchange."""
        for a, ba, bb, o in zip(
            self.alice_bits, self.alice_bases, self.bob_bases, self.bob_bits
        ):
            yield SiftOutcome(
                alice_bit=int(a),
                alice_basis=str(ba),
                bob_basis=str(bb),
                bob_bit=int(o),
            )


def write_transcript(path, result: Bb84Result) -> None:
    """Dump the announced bases and detection outcomes (audit log).

    One row per frame: the bit column is what Bob would announce having
    detected ('-' for an inconclusive frame); sifted marks basis-matched
    conclusive positions.
    """
    lines = ["frame,alice_basis,alice_bit,bob_basis,bob_bit,sifted"]
    for i, rec in enumerate(result.outcomes()):
        bob = "-" if rec.bob_bit == NULL_BIT else str(rec.bob_bit)
        sifted = int(rec.alice_basis == rec.bob_basis and rec.bob_bit != NULL_BIT)
        lines.append(
            f"{i},{rec.alice_basis},{rec.alice_bit},{rec.bob_basis},{bob},{sifted}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def simulate_bb84(
    n_frames: int,
    flux: float,
    eta: float,
    cfg: ValidatedConfig,
    rng: RandomSource,
    visibility_cap: float = 0.93,
    eve: bool = False,
    phase_floor: float = 0.0,
) -> Bb84Result:
    """Run a full BB84 exchange over phase frames (vectorized).

    ``flux`` is the received mean photons per frame at Bob's input.  The
    click model matches :func:`bob_measure`: Poisson statistics per port,
    dead time keeps only the earliest click, edge clicks are discarded.
    """
    d = cfg.d
    gen_a = rng.stream(ROLE_ALICE).generator()
    bits = gen_a.integers(0, 2, size=n_frames, dtype=np.int8)
    bases_x = gen_a.random(n_frames) < 0.5  # True -> X
    phi_a = np.where(
        bases_x,
        np.where(bits == 0, 0.0, math.pi),
        np.where(bits == 0, math.pi / 2, 3 * math.pi / 2),
    )

    phi_send = phi_a
    if eve:
        gen_e = rng.stream(ROLE_EVE).generator()
        eve_x = gen_e.random(n_frames) < 0.5
        eve_bits = gen_e.integers(0, 2, size=n_frames, dtype=np.int8)
        eve_phi = np.where(
            eve_x,
            np.where(eve_bits == 0, 0.0, math.pi),
            np.where(eve_bits == 0, math.pi / 2, 3 * math.pi / 2),
        )
        matched = eve_x == bases_x
        phi_send = np.where(matched, phi_a, eve_phi)

    gen_b = rng.stream(ROLE_BOB).generator()
    bob_x = gen_b.random(n_frames) < 0.5
    phi_b = np.where(bob_x, 0.0, math.pi / 2)

    cos_t = np.cos(phi_send + phi_b)
    pulse = flux * (1.0 - phase_floor)
    i_in = pulse / d
    lam_int_p = eta * (d - 1) * (i_in / 2.0) * (1.0 + visibility_cap * cos_t)
    lam_int_pp = eta * (d - 1) * (i_in / 2.0) * (1.0 - visibility_cap * cos_t)
    lam_edge = eta * i_in / 2.0  # both edge positions together, per port
    lam_floor = eta * flux * phase_floor / 2.0

    usable_p = _usable_clicks_vec(lam_int_p, lam_edge, lam_floor, cfg, gen_b)
    usable_pp = _usable_clicks_vec(lam_int_pp, lam_edge, lam_floor, cfg, gen_b)

    conclusive = usable_p ^ usable_pp
    # decode: port P means bit 0 in X and bit 1 in Z
    bob_bits = np.full(n_frames, NULL_BIT, dtype=np.int8)
    p_clicked = conclusive & usable_p
    pp_clicked = conclusive & usable_pp
    bob_bits[p_clicked & bob_x] = 0
    bob_bits[p_clicked & ~bob_x] = 1
    bob_bits[pp_clicked & bob_x] = 1
    bob_bits[pp_clicked & ~bob_x] = 0

    keep = (bob_x == bases_x) & (bob_bits != NULL_BIT)
    key_a = bits[keep]
    key_b = bob_bits[keep]
    qber = float(np.mean(key_a != key_b)) if len(key_a) else math.nan
    return Bb84Result(
        n_frames=n_frames,
        n_detected=int(np.sum(bob_bits != NULL_BIT)),
        n_sifted=int(len(key_a)),
        qber=qber,
        key_a=key_a,
        key_b=key_b,
        alice_bits=bits,
        alice_bases=np.where(bases_x, BASIS_X, BASIS_Z),
        bob_bases=np.where(bob_x, BASIS_X, BASIS_Z),
        bob_bits=bob_bits,
    )


def _usable_clicks_vec(lam_int, lam_edge, lam_floor, cfg, gen) -> np.ndarray:
    """Vectorized port model: does the earliest click land interior?

    Fast path for frames with at most one click; the rare multi-click
    frames are resolved exactly by sampling click times.
    """
    n = len(lam_int)
    k_int = gen.poisson(lam_int)
    k_edge = gen.poisson(lam_edge, size=n)
    if lam_floor == 0.0:
        k_floor = np.zeros(n, dtype=np.int64)
    else:
        k_floor = gen.poisson(lam_floor, size=n)
    total = k_int + k_edge + k_floor
    usable = np.zeros(n, dtype=bool)

    single = total == 1
    usable[single & (k_int == 1)] = True
    # a lone floor click counts as interior when it lands in the interior span
    lone_floor = single & (k_floor == 1)
    if np.any(lone_floor):
        frac = (cfg.d - 1) * cfg.pulse_period_ps / cfg.frame_window_ps
        usable[lone_floor] = gen.random(int(np.sum(lone_floor))) < frac

    multi = np.nonzero(total >= 2)[0]
    tp = cfg.pulse_period_ps
    d = cfg.d
    for i in multi:
        times = []
        for _ in range(int(k_int[i])):
            j = int(gen.integers(1, d))  # interior positions 1..d-1
            times.append((j * tp + tp // 2, True))
        for _ in range(int(k_edge[i])):
            j = 0 if gen.random() < 0.5 else d
            times.append((j * tp + tp // 2, False))
        for _ in range(int(k_floor[i])):
            t = int(gen.integers(0, cfg.frame_window_ps))
            times.append((t, tp <= t < d * tp))
        times.sort()
        usable[i] = times[0][1]
    return usable
