from __future__ import annotations

import io
import math
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowlang.errors import FormatError
from flowlang.flows import FlowRecord, Label
from flowlang.language import (
    Sequence,
    SessionPolicy,
    TokenScheme,
    Vocabulary,
    density_bucket,
    log2_bin,
    read_sequences,
    sessionize,
    tokenize,
    write_sequences,
)

TOKEN_GRAMMAR = re.compile(r"^[a-z0-9]+_(b|d)([0-9]+|z)$")


def flow(ts, src="10.0.0.1", dst="10.0.0.2", label=Label.UNLABELED,
         orig_bytes=100, resp_bytes=200, orig_pkts=1, resp_pkts=1,
         protocol="tcp", src_port=1000, dst_port=80):
    return FlowRecord(ts=ts, src_ip=src, src_port=src_port, dst_ip=dst,
                      dst_port=dst_port, protocol=protocol,
                      orig_bytes=orig_bytes, resp_bytes=resp_bytes,
                      orig_pkts=orig_pkts, resp_pkts=resp_pkts,
                      duration=0.1, label=label)


class TestConfigs:
    def test_scheme_validation(self):
        TokenScheme(kind="proto-density", bucket_width=5)
        with pytest.raises(ValueError):
            TokenScheme(kind="nope")
        with pytest.raises(ValueError):
            TokenScheme(bucket_width=0)

    def test_policy_validation(self):
        SessionPolicy(kind="gap", gap_seconds=60.0)
        with pytest.raises(ValueError):
            SessionPolicy(kind="fortnight")
        with pytest.raises(ValueError):
            SessionPolicy(kind="gap", gap_seconds=0.0)
        with pytest.raises(ValueError):
            SessionPolicy(kind="gap", gap_seconds=math.inf)


class TestVocabulary:
    def test_add_is_idempotent(self):
        vocab = Vocabulary()
        assert vocab.add("tcp_b3") == 0
        assert vocab.add("udp_b1") == 1
        assert vocab.add("tcp_b3") == 0
        assert len(vocab) == 2

    def test_lookup(self):
        vocab = Vocabulary(["a_b1", "a_b2"])
        assert vocab.id_of("a_b2") == 1
        assert vocab.id_of("missing") is None
        assert vocab.token_of(0) == "a_b1"
        assert "a_b1" in vocab
        with pytest.raises(ValueError):
            vocab.token_of(2)

    def test_rejects_bad_token_text(self):
        vocab = Vocabulary()
        with pytest.raises(ValueError):
            vocab.add("")
        with pytest.raises(ValueError):
            vocab.add("has space")
        with pytest.raises(ValueError):
            vocab.add("tab\tch")

    def test_equality_is_by_token_order(self):
        assert Vocabulary(["x", "y"]) == Vocabulary(["x", "y"])
        assert Vocabulary(["x", "y"]) != Vocabulary(["y", "x"])


class TestSequenceType:
    def test_invariants(self):
        seq = Sequence(ip_low="10.0.0.1", ip_high="10.0.0.2",
                       window_start=0.0, token_ids=(0, 1))
        assert seq.n_flows == 2
        with pytest.raises(ValueError):
            Sequence(ip_low="b", ip_high="a", window_start=0.0, token_ids=(0,))
        with pytest.raises(ValueError):
            Sequence(ip_low="a", ip_high="b", window_start=0.0, token_ids=())


class TestBucketing:
    def test_log2_bin_table(self):
        assert log2_bin(1) == 0
        assert log2_bin(1024) == 10
        assert log2_bin(1500) == 10
        assert log2_bin(0) == "z"

    def test_log2_bin_rejects_negative(self):
        with pytest.raises(ValueError):
            log2_bin(-1)

    @given(st.integers(min_value=1, max_value=10**30))
    def test_log2_bin_matches_bit_length(self, v):
        b = log2_bin(v)
        assert 2 ** b <= v < 2 ** (b + 1)

    def test_density_bucket_table(self):
        assert density_bucket(1000, 10, 10) == 10
        assert density_bucket(55, 2, 10) == 2
        assert density_bucket(500, 0, 10) == "z"

    def test_density_bucket_rejects_bad_input(self):
        with pytest.raises(ValueError):
            density_bucket(1, 1, 0)
        with pytest.raises(ValueError):
            density_bucket(-1, 1, 10)

    def test_tokenize_examples(self):
        f = flow(0.0, orig_bytes=100, resp_bytes=200)
        assert tokenize(f, TokenScheme()) == "tcp_b8"
        g = flow(0.0, orig_bytes=0, resp_bytes=0, protocol="udp")
        assert tokenize(g, TokenScheme()) == "udp_bz"
        h = flow(0.0, orig_bytes=1000, resp_bytes=0, orig_pkts=10, resp_pkts=0)
        assert tokenize(h, TokenScheme(kind="proto-density", bucket_width=10)) == "tcp_d10"

    @given(
        st.integers(min_value=0, max_value=2**30),
        st.integers(min_value=0, max_value=2**30),
        st.integers(min_value=0, max_value=10**4),
        st.integers(min_value=0, max_value=10**4),
        st.sampled_from(["tcp", "udp", "icmp", "other"]),
        st.sampled_from([TokenScheme(), TokenScheme(kind="proto-density")]),
    )
    def test_token_grammar(self, ob, rb, op, rp, proto, scheme):
        f = flow(0.0, orig_bytes=ob, resp_bytes=rb, orig_pkts=op,
                 resp_pkts=rp, protocol=proto)
        assert TOKEN_GRAMMAR.match(tokenize(f, scheme))


class TestSessionize:
    def test_empty_input(self):
        sequences, vocab = sessionize([], TokenScheme(), SessionPolicy())
        assert sequences == []
        assert len(vocab) == 0

    def test_hour_boundary_example(self):
        flows = [flow(100.0), flow(200.0), flow(3700.0)]
        sequences, _ = sessionize(flows, TokenScheme(), SessionPolicy(kind="hour"))
        assert [s.window_start for s in sequences] == [0.0, 3600.0]
        assert [s.n_flows for s in sequences] == [2, 1]

    def test_any_attack_label_wins(self):
        flows = [flow(1.0, label=Label.NORMAL), flow(2.0, label=Label.ATTACK)]
        (seq,), _ = sessionize(flows, TokenScheme(), SessionPolicy())
        assert seq.label is Label.ATTACK

    def test_normal_beats_unlabeled(self):
        flows = [flow(1.0), flow(2.0, label=Label.NORMAL)]
        (seq,), _ = sessionize(flows, TokenScheme(), SessionPolicy())
        assert seq.label is Label.NORMAL

    def test_gap_splits_only_when_strictly_exceeded(self):
        policy = SessionPolicy(kind="gap", gap_seconds=1800.0)
        flows = [flow(0.0), flow(1800.0), flow(3601.0)]
        sequences, _ = sessionize(flows, TokenScheme(), policy)
        assert [s.n_flows for s in sequences] == [2, 1]
        assert [s.window_start for s in sequences] == [0.0, 3601.0]

    def test_unordered_pair_grouping(self):
        flows = [flow(1.0, src="10.0.0.9", dst="10.0.0.2"),
                 flow(2.0, src="10.0.0.2", dst="10.0.0.9")]
        (seq,), _ = sessionize(flows, TokenScheme(), SessionPolicy())
        assert seq.n_flows == 2
        assert seq.ip_low == "10.0.0.2"
        assert seq.ip_high == "10.0.0.9"

    def test_min_length_filter(self):
        flows = [flow(100.0), flow(200.0), flow(3700.0)]
        sequences, _ = sessionize(flows, TokenScheme(), SessionPolicy(),
                                  min_length=2)
        assert [s.n_flows for s in sequences] == [2]
        with pytest.raises(ValueError):
            sessionize(flows, TokenScheme(), SessionPolicy(), min_length=0)

    def test_tokens_resolve_through_vocab(self):
        flows = [flow(1.0, orig_bytes=0, resp_bytes=0),
                 flow(2.0, orig_bytes=1000, resp_bytes=24)]
        (seq,), vocab = sessionize(flows, TokenScheme(), SessionPolicy())
        texts = [vocab.token_of(i) for i in seq.token_ids]
        assert texts == ["tcp_bz", "tcp_b10"]

    def test_vocab_can_be_extended(self):
        vocab = Vocabulary(["pre_b1"])
        _, vocab2 = sessionize([flow(1.0)], TokenScheme(), SessionPolicy(),
                               vocab=vocab)
        assert vocab2.token_of(0) == "pre_b1"
        assert len(vocab2) == 2


small_flows = st.builds(
    flow,
    ts=st.floats(min_value=0, max_value=20000, allow_nan=False),
    src=st.sampled_from(["10.0.0.1", "10.0.0.2", "10.0.0.3"]),
    dst=st.sampled_from(["10.0.0.1", "10.0.0.4"]),
    orig_bytes=st.integers(0, 4096),
    label=st.sampled_from(list(Label)),
    src_port=st.integers(1, 4),
)


class TestSessionizeProperties:
    @settings(max_examples=100)
    @given(st.lists(small_flows, max_size=40), st.randoms(use_true_random=False))
    def test_partition_and_permutation_invariance(self, flows, rng):
        scheme = TokenScheme()
        policy = SessionPolicy(kind="hour")
        sequences, vocab = sessionize(flows, scheme, policy)
        assert sum(s.n_flows for s in sequences) == len(flows)

        shuffled = list(flows)
        rng.shuffle(shuffled)
        sequences2, vocab2 = sessionize(shuffled, scheme, policy)
        assert sequences == sequences2
        assert vocab == vocab2

    @settings(max_examples=100)
    @given(st.lists(small_flows, max_size=40))
    def test_hour_window_coherence(self, flows):
        sequences, _ = sessionize(flows, TokenScheme(), SessionPolicy(kind="hour"))
        starts = {}
        for f in flows:
            pair = tuple(sorted((f.src_ip, f.dst_ip)))
            window = math.floor(f.ts / 3600.0) * 3600.0
            starts.setdefault((pair, window), 0)
            starts[pair, window] += 1
        got = {((s.ip_low, s.ip_high), s.window_start): s.n_flows
               for s in sequences}
        assert got == starts

    @settings(max_examples=60)
    @given(st.lists(small_flows, max_size=30), st.integers(0, 29))
    def test_label_monotone_under_added_attack(self, flows, at):
        policy = SessionPolicy(kind="hour")
        if not flows:
            return
        victim = flows[at % len(flows)]
        extra = flow(victim.ts, src=victim.src_ip, dst=victim.dst_ip,
                     label=Label.ATTACK)
        sequences, _ = sessionize(flows + [extra], TokenScheme(), policy)
        pair = tuple(sorted((victim.src_ip, victim.dst_ip)))
        window = math.floor(victim.ts / 3600.0) * 3600.0
        hit = [s for s in sequences
               if (s.ip_low, s.ip_high) == pair and s.window_start == window]
        assert len(hit) == 1
        assert hit[0].label is Label.ATTACK


sequence_lists = st.lists(
    st.builds(
        Sequence,
        ip_low=st.just("10.0.0.1"),
        ip_high=st.sampled_from(["10.0.0.2", "10.0.0.3"]),
        window_start=st.floats(min_value=0, max_value=1e9, allow_nan=False),
        token_ids=st.lists(st.integers(0, 3), min_size=1, max_size=8).map(tuple),
        label=st.sampled_from(list(Label)),
    ),
    max_size=15,
)


class TestSequenceFile:
    def roundtrip(self, sequences, vocab):
        buf = io.StringIO()
        write_sequences(sequences, vocab, buf, comment="unit test")
        return read_sequences(io.StringIO(buf.getvalue()))

    @settings(max_examples=150)
    @given(sequence_lists)
    def test_round_trip_identity(self, sequences):
        vocab = Vocabulary([f"t{i}_b{i}" for i in range(4)])
        got_sequences, got_vocab = self.roundtrip(sequences, vocab)
        assert got_sequences == sequences
        assert got_vocab == vocab

    def test_empty_file_is_empty_corpus(self):
        sequences, vocab = read_sequences([])
        assert sequences == []
        assert len(vocab) == 0
        sequences, vocab = read_sequences(["# only a comment\n", "\n"])
        assert sequences == []
        assert len(vocab) == 0

    def test_unknown_token_id_is_format_error(self):
        text = "#vocab 1\n0\ttok_b1\nnormal\ta\tb\t0.0\t0 7\n"
        with pytest.raises(FormatError, match="line 3"):
            read_sequences(io.StringIO(text))

    def test_data_before_vocab_directive(self):
        with pytest.raises(FormatError, match="line 1"):
            read_sequences(["normal\ta\tb\t0.0\t0\n"])

    def test_malformed_vocab_directive(self):
        with pytest.raises(FormatError):
            read_sequences(["#vocab x\n"])

    def test_truncated_vocab_block(self):
        with pytest.raises(FormatError):
            read_sequences(["#vocab 2\n", "0\ttok_b1\n"])

    def test_wrong_field_count(self):
        text = "#vocab 1\n0\ttok_b1\nnormal\ta\tb\t0.0\n"
        with pytest.raises(FormatError, match="line 3"):
            read_sequences(io.StringIO(text))

    def test_bad_window_start(self):
        text = "#vocab 1\n0\ttok_b1\nnormal\ta\tb\tnope\t0\n"
        with pytest.raises(FormatError, match="line 3"):
            read_sequences(io.StringIO(text))
