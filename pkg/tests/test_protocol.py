import itertools
import math

import numpy as np
import pytest

from qkdlab import qstate
from qkdlab.adversary import CARRIER, EVE, Strategy
from qkdlab.analysis import OracleStateId, paper_state_oracle
from qkdlab.errors import ConfigurationError
from qkdlab.protocol import (
    DetectionReport,
    Mode,
    ProtocolConfig,
    RoundTranscript,
    SessionResult,
    detection_phase,
    init_session,
    random_key,
    run_round,
    run_session,
    stream,
)

PI4 = math.pi / 4


class TestInit:
    def test_honest_state_is_bell_pair(self):
        s = init_session(ProtocolConfig(strategy=Strategy.NONE))
        assert s.state.labels == ("A", "B")
        np.testing.assert_allclose(s.state.amps, qstate.make_bell_pair().amps)

    def test_attack_adds_ancilla_in_zero(self):
        s = init_session(ProtocolConfig(strategy=Strategy.S2))
        assert s.state.labels == ("A", "B", EVE)
        assert qstate.reduced_density(s.state, [EVE])[0, 0] == pytest.approx(1)

    @pytest.mark.parametrize("bad", [
        dict(rounds=0), dict(check_fraction=1.0), dict(check_fraction=-0.1),
        dict(theta=float("nan")), dict(seed=-1), dict(strategy="s2"),
    ])
    def test_rejects_bad_config(self, bad):
        with pytest.raises(ConfigurationError):
            init_session(ProtocolConfig(**bad))


class TestRounds:
    @pytest.mark.parametrize("theta", np.linspace(0, math.pi, 9))
    @pytest.mark.parametrize("bit", [0, 1])
    def test_honest_round_decodes(self, theta, bit):
        s = init_session(ProtocolConfig(theta=theta, rounds=1, seed=3))
        for _ in range(5):
            t = run_round(s, bit)
            assert t.received == bit and not t.error

    def test_carrier_not_left_behind(self):
        s = init_session(ProtocolConfig(strategy=Strategy.S2))
        run_round(s, 1)
        assert CARRIER not in s.state.labels

    @pytest.mark.parametrize("psi1,psi3", list(itertools.product((0, 1), repeat=2)))
    def test_s2_third_round_extracts(self, psi1, psi3):
        s = init_session(ProtocolConfig(strategy=Strategy.S2, rounds=3, seed=11))
        run_round(s, psi1)
        run_round(s, 0)
        t = run_round(s, psi3)
        assert t.received == psi3
        assert t.eve_record == (3, psi3 ^ psi1)

    def test_first_round_matches_closed_form(self):
        # after round 1 the pair is entangled with Eve as (|0,0,psi1> + |1,1,~psi1>)/sqrt(2)
        for psi1 in (0, 1):
            s = init_session(ProtocolConfig(strategy=Strategy.S2, seed=0))
            run_round(s, psi1)
            ref = paper_state_oracle(OracleStateId(1, "phi11", (psi1,)))
            assert qstate.phase_invariant_fidelity(s.state, ref) == pytest.approx(1, abs=1e-12)

    def test_exact_mode_reports_probability(self):
        cfg = ProtocolConfig(strategy=Strategy.S1, rounds=2, mode=Mode.EXACT)
        s = init_session(cfg)
        assert run_round(s, 0).error_probability == 0
        assert run_round(s, 0).error_probability == pytest.approx(0.5, abs=1e-12)

    def test_s1_round_two_error_frequency(self):
        n = 10_000
        errs = 0
        for seed in range(n):
            res = run_session(ProtocolConfig(strategy=Strategy.S1, rounds=2, seed=seed), [0, 1])
            errs += res.transcripts[1].error
        assert abs(errs / n - 0.5) <= 0.02

    def test_bad_key_bit(self):
        with pytest.raises(ConfigurationError):
            run_round(init_session(ProtocolConfig()), 2)


class TestSession:
    KEY = [int(c) for c in "101101001"]

    def test_s2_nine_rounds(self):
        res = run_session(ProtocolConfig(strategy=Strategy.S2, rounds=9, seed=5), self.KEY)
        assert res.qber == 0
        assert res.eve_records == [(r, self.KEY[r - 1] ^ self.KEY[0]) for r in (3, 5, 7, 9)]

    @pytest.mark.parametrize("theta", [0.0, 0.3, PI4, 1.1])
    def test_honest_session_error_free(self, theta):
        key = random_key(50, 9)
        res = run_session(ProtocolConfig(theta=theta, rounds=50, seed=9), key)
        assert res.qber == 0 and res.eve_records == []

    def test_s2_off_angle_is_noticed(self):
        noticed = 0
        for seed in range(10):
            key = random_key(101, seed)
            res = run_session(ProtocolConfig(theta=math.pi / 8, rounds=101, seed=seed,
                                             strategy=Strategy.S2), key)
            noticed += res.qber > 0
        assert noticed == 10

    def test_error_flags_are_xor(self):
        key = random_key(40, 1)
        res = run_session(ProtocolConfig(theta=0.5, rounds=40, seed=1, strategy=Strategy.S2), key)
        assert all(t.error == bool(t.sent ^ t.received) for t in res.transcripts)
        assert res.qber == sum(t.sent != t.received for t in res.transcripts) / 40

    def test_key_length_checked(self):
        with pytest.raises(ConfigurationError):
            run_session(ProtocolConfig(rounds=3), [0, 1])

    def test_reproducible(self):
        key = random_key(30, 4)
        cfg = ProtocolConfig(theta=0.4, rounds=30, seed=4, strategy=Strategy.S2, check_fraction=0.2)
        a, b = run_session(cfg, key), run_session(cfg, key)
        assert [t.received for t in a.transcripts] == [t.received for t in b.transcripts]
        assert a.detection == b.detection

    def test_cycle_closes_every_four_rounds(self):
        key = random_key(21, 8)
        s = init_session(ProtocolConfig(strategy=Strategy.S2, rounds=21, seed=8))
        for r, bit in enumerate(key, start=1):
            run_round(s, bit)
            if r >= 5 and (r - 1) % 4 == 0:
                ref = paper_state_oracle(OracleStateId(1, "phi11", (key[0],)))
                assert qstate.phase_invariant_fidelity(s.state, ref) == pytest.approx(1, abs=1e-12)


def _result(sent, received, frac):
    ts = [RoundTranscript(i + 1, s, r, s != r) for i, (s, r) in enumerate(zip(sent, received))]
    cfg = ProtocolConfig(rounds=len(sent), check_fraction=frac)
    return SessionResult(cfg, list(sent), ts, sum(t.error for t in ts) / len(ts), [])


class TestDetection:
    def test_zero_fraction(self):
        rep = detection_phase(_result([0, 1, 1], [0, 1, 1], 0.0), stream(0, 1))
        assert rep == DetectionReport([], 0, [])

    def test_counts_exactly_checked_errors(self):
        rng = np.random.default_rng(3)
        sent = rng.integers(0, 2, 60).tolist()
        received = [b ^ int(rng.random() < 0.3) for b in sent]
        res = _result(sent, received, 0.25)
        rep = detection_phase(res, stream(6, 1))
        assert len(rep.check_indices) == math.ceil(0.25 * 60)
        assert len(set(rep.check_indices)) == len(rep.check_indices)
        assert all(1 <= i <= 60 for i in rep.check_indices)
        assert rep.mismatches == sum(sent[i - 1] != received[i - 1] for i in rep.check_indices)
        assert rep.leaked_bits == [(i, sent[i - 1]) for i in rep.check_indices]

    def test_attack_invisible_at_quarter_pi(self):
        key = random_key(101, 2)
        res = run_session(ProtocolConfig(strategy=Strategy.S2, rounds=101, seed=2,
                                         check_fraction=0.5), key)
        assert res.detection.mismatches == 0 and len(res.detection.check_indices) == 51
