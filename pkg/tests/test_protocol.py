import itertools
import math

import numpy as np
import pytest
from sdmqsim.config import RandomSource, SimConfig, validate_config
from sdmqsim.encoder import make_phase_frame, make_time_bin_frame
from sdmqsim.protocol import (
    BASIS_X,
    BASIS_Z,
    BasisChoice,
    BobSetting,
    KeyRateParams,
    NULL_BIT,
    alice_prepare,
    basis_of_phase,
    bob_measure,
    eve_intercept,
    frame_mux,
    key_rate,
    phase_for,
    sift,
    simulate_bb84,
)


@pytest.fixture(scope="module")
def cfg():
    return validate_config(SimConfig())


class TestEncodingMaps:
    def test_phase_table(self):
        assert phase_for(BASIS_X, 0) == 0.0
        assert phase_for(BASIS_X, 1) == math.pi
        assert phase_for(BASIS_Z, 0) == math.pi / 2
        assert phase_for(BASIS_Z, 1) == 3 * math.pi / 2

    def test_basis_choice_wrapper(self):
        assert BasisChoice(BASIS_Z, 1).phi_a == 3 * math.pi / 2

    def test_bob_setting_phases(self):
        assert BobSetting(BASIS_X).phi_b == 0.0
        assert BobSetting(BASIS_Z).phi_b == math.pi / 2

    def test_basis_recovery(self):
        for basis in (BASIS_X, BASIS_Z):
            for bit in (0, 1):
                assert basis_of_phase(phase_for(basis, bit)) == basis


class TestAlicePrepare:
    def test_mapping_and_balance(self):
        bits, bases, phi = alice_prepare(1_000_000, RandomSource(12), mu=1.0)
        # uniform basis balance within 3 sigma (0.0015 at n=1e6)
        assert abs(np.mean(bases == BASIS_X) - 0.5) < 0.0015
        assert abs(bits.mean() - 0.5) < 0.0015
        # every frame's phase matches its (basis, bit)
        expect = np.array([phase_for(b, int(a)) for b, a in zip(bases, bits)])
        assert np.array_equal(phi, expect)


class TestBobMeasure:
    def test_requires_phase_frame(self, cfg):
        tb = make_time_bin_frame(0, 1.0, 100.0, d=64)
        with pytest.raises(ValueError, match="phase frame"):
            bob_measure(tb, BobSetting(BASIS_X), 1.0, cfg, RandomSource(1))

    def test_matched_basis_deterministic_bit(self, cfg):
        # X basis, bit 1: destructive on port P, so conclusive outcomes are
        # always 1 at unit visibility
        gen = RandomSource(2).generator()
        outcomes = []
        for _ in range(400):
            fr = make_phase_frame(math.pi, 10.0, d=64)
            b = bob_measure(fr, BobSetting(BASIS_X), 0.5, cfg, gen, visibility_cap=1.0)
            outcomes.append(b)
        conclusive = [b for b in outcomes if b != NULL_BIT]
        assert len(conclusive) > 50
        assert set(conclusive) == {1}

    def test_matched_basis_bit0_both_bases(self, cfg):
        gen = RandomSource(3).generator()
        for basis in (BASIS_X, BASIS_Z):
            outcomes = []
            for _ in range(300):
                fr = make_phase_frame(phase_for(basis, 0), 10.0, d=64)
                outcomes.append(
                    bob_measure(fr, BobSetting(basis), 0.5, cfg, gen, visibility_cap=1.0)
                )
            conclusive = {b for b in outcomes if b != NULL_BIT}
            assert conclusive == {0}

    def test_matched_basis_wrong_port_floor(self, cfg):
        # wrong-port click probability per conclusive outcome is (1 - V)/2
        gen = RandomSource(5).generator()
        v = 0.93
        wrong = total = 0
        for _ in range(6000):
            fr = make_phase_frame(math.pi, 1.0, d=64)
            b = bob_measure(fr, BobSetting(BASIS_X), 0.9, cfg, gen, visibility_cap=v)
            if b != NULL_BIT:
                total += 1
                wrong += b == 0  # correct bit is 1
        expect = (1 - v) / 2
        assert total > 400
        assert abs(wrong / total - expect) < 3 * math.sqrt(expect * (1 - expect) / total)

    def test_mismatched_basis_uniform(self, cfg):
        gen = RandomSource(4).generator()
        outcomes = []
        for _ in range(3000):
            fr = make_phase_frame(phase_for(BASIS_Z, 0), 5.0, d=64)
            b = bob_measure(fr, BobSetting(BASIS_X), 0.5, cfg, gen, visibility_cap=1.0)
            if b != NULL_BIT:
                outcomes.append(b)
        assert len(outcomes) > 500
        frac = np.mean(outcomes)
        assert abs(frac - 0.5) < 3 * math.sqrt(0.25 / len(outcomes))


class TestEveIntercept:
    def _frames(self, n, rng):
        bits, bases, phi = alice_prepare(n, rng, mu=1.0)
        frames = [make_phase_frame(p, 1.0, d=64) for p in phi]
        return bits, bases, phi, frames

    def test_half_of_frames_resent_in_other_basis(self):
        n = 4000
        bits, bases, phi, frames = self._frames(n, RandomSource(21))
        out = eve_intercept(frames, RandomSource(22))
        changed = 0
        for fin, fout, basis in zip(frames, out, bases):
            phi_in = fin.kind.phi_a
            phi_out = fout.kind.phi_a
            if phi_out != phi_in:
                changed += 1
                # a changed frame is always re-prepared in the other basis
                assert basis_of_phase(phi_out) != basis
            else:
                assert fout is fin or np.allclose(fout.slots, fin.slots)
        # Eve's basis matches Alice's half the time; only mismatches change
        # the frame (her outcome is then uniform over the other basis pair)
        assert abs(changed / n - 0.5) < 3 * math.sqrt(0.25 / n)

    def test_timebin_frames_pass_through(self):
        tb = make_time_bin_frame(3, 1.0, 100.0, d=64)
        out = eve_intercept([tb], RandomSource(1))
        assert out[0] is tb


class TestSift:
    def test_all_matched_noiseless(self):
        a = np.array([0, 1, 1, 0])
        b = np.array(["X", "Z", "X", "Z"])
        key_a, key_b, q = sift(a, b, b.copy(), a.copy())
        assert np.array_equal(key_a, a)
        assert np.array_equal(key_b, a)
        assert q == 0.0

    def test_null_bits_dropped(self):
        a = np.array([0, 1, 1])
        b = np.array(["X", "X", "Z"])
        bob = np.array([0, NULL_BIT, 1])
        key_a, key_b, q = sift(a, b, b.copy(), bob)
        assert list(key_a) == [0, 1]
        assert list(key_b) == [0, 1]

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="lengths"):
            sift([0], ["X"], ["X", "Z"], [0, 1])

    def test_random_bases_sift_half(self):
        n = 200_000
        gen = RandomSource(31).generator()
        a = gen.integers(0, 2, n)
        b = np.where(gen.random(n) < 0.5, "X", "Z")
        b2 = np.where(gen.random(n) < 0.5, "X", "Z")
        key_a, _, _ = sift(a, b, b2, a.copy())
        assert abs(len(key_a) / n - 0.5) < 3 * math.sqrt(0.25 / n)

    def test_exhaustive_small_against_brute_force(self):
        # every (basis, basis', bob_bit) combination over 3 frames
        opts_b = ["X", "Z"]
        opts_bob = [0, 1, NULL_BIT]
        for b in itertools.product(opts_b, repeat=3):
            for b2 in itertools.product(opts_b, repeat=3):
                for bob in itertools.product(opts_bob, repeat=3):
                    a = [0, 1, 0]
                    key_a, key_b, _ = sift(a, list(b), list(b2), list(bob))
                    ref_a, ref_b = [], []
                    for i in range(3):
                        if b[i] == b2[i] and bob[i] != NULL_BIT:
                            ref_a.append(a[i])
                            ref_b.append(bob[i])
                    assert list(key_a) == ref_a
                    assert list(key_b) == ref_b


class TestKeyRate:
    def test_reference_point(self):
        assert key_rate(KeyRateParams(n=10**6)) >= 0.64

    def test_maximal_error_tolerance_aborts(self):
        assert key_rate(KeyRateParams(n=10**6, q_tol=0.5)) == 0.0

    def test_small_block_below_target(self):
        assert key_rate(KeyRateParams(n=10**3)) < 0.64

    def test_monotone_in_n(self):
        rates = [key_rate(KeyRateParams(n=n)) for n in (10**3, 10**4, 10**5, 10**6, 10**7)]
        assert all(r1 >= r0 for r0, r1 in zip(rates, rates[1:]))

    def test_monotone_in_q_tol(self):
        rates = [
            key_rate(KeyRateParams(n=10**6, q_tol=q))
            for q in (0.005, 0.01, 0.02, 0.05, 0.1, 0.3, 0.5)
        ]
        assert all(r1 <= r0 for r0, r1 in zip(rates, rates[1:]))

    def test_robustness_scales_expected_rate(self):
        r0 = key_rate(KeyRateParams(n=10**6, eps_rob=0.0))
        r = key_rate(KeyRateParams(n=10**6, eps_rob=0.18))
        assert r == pytest.approx(0.82 * r0, rel=1e-12)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            key_rate(KeyRateParams(n=0))
        with pytest.raises(ValueError):
            key_rate(KeyRateParams(eps_sec=0.0))
        with pytest.raises(ValueError):
            key_rate(KeyRateParams(f_ec=0.9))


class TestFrameMux:
    def _frames(self, n, kind):
        if kind == "tb":
            return [make_time_bin_frame(0, 1.0, 100.0, d=64) for _ in range(n)]
        return [make_phase_frame(0.0, 1.0, d=64) for _ in range(n)]

    def test_pure_data(self):
        stream, info = frame_mux(self._frames(20, "tb"), [], 1.0, RandomSource(1))
        assert all(kind == "timebin" for kind, _ in stream)
        assert info["capacity_scale"] == 1.0

    def test_pure_security(self):
        stream, info = frame_mux([], self._frames(20, "ph"), 0.0, RandomSource(1))
        assert all(kind == "phase" for kind, _ in stream)
        assert info["capacity_scale"] == 0.0

    def test_capacity_scales_exactly_with_ptb(self):
        _, info = frame_mux(
            self._frames(90, "tb"), self._frames(10, "ph"), 0.9, RandomSource(2)
        )
        assert info["capacity_scale"] == 0.9

    def test_interleave_fraction(self):
        stream, info = frame_mux(
            self._frames(800, "tb"), self._frames(800, "ph"), 0.5, RandomSource(3)
        )
        frac = info["realized_tb_fraction"]
        assert abs(frac - 0.5) < 0.06

    def test_invalid_ptb(self):
        with pytest.raises(ValueError):
            frame_mux([], [], 1.5, RandomSource(1))


class TestSimulateBb84:
    def test_no_eve_wrong_port_floor(self, cfg):
        res = simulate_bb84(
            n_frames=300_000, flux=0.5, eta=0.15, cfg=cfg,
            rng=RandomSource(41), visibility_cap=0.93,
        )
        assert res.n_sifted > 5000
        expect = (1 - 0.93) / 2
        tol = 3 * math.sqrt(expect * (1 - expect) / res.n_sifted)
        assert abs(res.qber - expect) < tol

    def test_ideal_matched_noiseless_zero_qber(self, cfg):
        res = simulate_bb84(
            n_frames=100_000, flux=0.5, eta=0.15, cfg=cfg,
            rng=RandomSource(42), visibility_cap=1.0,
        )
        assert res.n_sifted > 1000
        assert res.qber == 0.0

    def test_intercept_resend_signature(self, cfg):
        res = simulate_bb84(
            n_frames=400_000, flux=0.5, eta=0.15, cfg=cfg,
            rng=RandomSource(43), visibility_cap=1.0, eve=True,
        )
        assert res.n_sifted >= 10_000
        tol = 3 * math.sqrt(0.25 * 0.75 / res.n_sifted)
        assert abs(res.qber - 0.25) < tol

    def test_eve_with_imperfect_visibility(self, cfg):
        # full oracle: 1/2 * (1-V)/2 + 1/2 * 1/2
        v = 0.93
        res = simulate_bb84(
            n_frames=400_000, flux=0.5, eta=0.15, cfg=cfg,
            rng=RandomSource(44), visibility_cap=v, eve=True,
        )
        expect = 0.5 * (1 - v) / 2 + 0.25
        tol = 3 * math.sqrt(expect * (1 - expect) / res.n_sifted)
        assert abs(res.qber - expect) < tol
