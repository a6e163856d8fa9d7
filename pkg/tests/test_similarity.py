import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsds.errors import ArgumentError, StructuralError
from bsds.metrics import LabeledPool
from bsds.similarity import (
    Fingerprint,
    FingerprintSet,
    diversity_score,
    knowledge_base,
    retrieval_score,
    retrieval_scores,
    sample_knowledge_base,
    tanimoto,
)

from oracles import tanimoto_bits

bits64 = st.lists(st.booleans(), min_size=64, max_size=64)


def test_identity_and_disjoint():
    a = Fingerprint.from_bits([1, 0, 1, 1, 0, 0, 0, 0])
    b = Fingerprint.from_bits([0, 1, 0, 0, 1, 0, 0, 0])
    assert tanimoto(a, a) == 1.0
    assert tanimoto(a, b) == 0.0


def test_empty_conventions():
    zero = Fingerprint.from_bits([0] * 16)
    one = Fingerprint.from_bits([1] + [0] * 15)
    assert tanimoto(zero, zero) == 1.0
    assert tanimoto(zero, one) == 0.0


def test_width_mismatch():
    with pytest.raises(StructuralError):
        tanimoto(Fingerprint.from_bits([1] * 8), Fingerprint.from_bits([1] * 16))
    fs = FingerprintSet.from_bits(np.ones((2, 8), bool))
    with pytest.raises(StructuralError):
        fs.similarity(other=FingerprintSet.from_bits(np.ones((2, 16), bool)))


@given(bits64, bits64)
def test_matches_bit_loop_and_is_symmetric(a, b):
    fa, fb = Fingerprint.from_bits(a), Fingerprint.from_bits(b)
    expected = tanimoto_bits(a, b)
    assert tanimoto(fa, fb) == expected == tanimoto(fb, fa)
    assert 0.0 <= expected <= 1.0
    batch = FingerprintSet.from_bits(np.array([a, b])).similarity()
    assert batch[0, 1] == expected and batch[1, 0] == expected


def test_hex_round_trip_msb_first():
    fp = Fingerprint.from_hex("8001")
    assert fp.width == 16
    assert fp.bits[0] and fp.bits[15] and fp.popcount == 2
    assert fp.to_hex() == "8001"
    fs = FingerprintSet.from_hex(["a5f", "000"], width=12)
    assert fs.to_hex() == ["a5f", "000"]
    assert fs[0].bits.tolist() == [1, 0, 1, 0, 0, 1, 0, 1, 1, 1, 1, 1]


def test_ragged_hex_rejected():
    with pytest.raises(StructuralError):
        FingerprintSet.from_hex(["abcd", "abc"], width=16)
    with pytest.raises(StructuralError):
        FingerprintSet.from_hex(["zzzz"], width=16)


def random_set(rng, n, width=64, density=0.2):
    bits = rng.random((n, width)) < density
    return bits, FingerprintSet.from_bits(bits)


def test_retrieval_matches_double_loop():
    rng = np.random.default_rng(1)
    bits, fs = random_set(rng, 100)
    members = rng.choice(100, 20, replace=False)
    kb = knowledge_base(fs, members)
    batch = retrieval_scores(fs, kb)
    for i in range(100):
        expected = max(tanimoto_bits(bits[i], bits[k]) for k in members)
        assert batch[i] == expected
        if i < 10:
            assert retrieval_score(fs[i], kb) == expected


def test_retrieval_examples():
    rng = np.random.default_rng(2)
    bits, fs = random_set(rng, 10)
    kb = knowledge_base(fs, [3])
    assert retrieval_score(fs[3], kb) == 1.0
    assert retrieval_score(fs[5], kb) == tanimoto(fs[5], fs[3])
    with pytest.raises(ArgumentError):
        retrieval_score(fs[0], knowledge_base(fs, []))


def test_retrieval_monotone_in_kb_growth():
    rng = np.random.default_rng(3)
    _, fs = random_set(rng, 60)
    small = retrieval_scores(fs, knowledge_base(fs, [1, 2]))
    large = retrieval_scores(fs, knowledge_base(fs, [1, 2, 7, 30]))
    assert (large >= small).all()


def test_diversity():
    rng = np.random.default_rng(4)
    bits, fs = random_set(rng, 30)
    assert diversity_score(fs[0], []) == 0.0
    assert diversity_score(fs[0], [fs[0]]) == -1.0
    chosen = []
    previous = 0.0
    for j in range(1, 12):
        chosen.append(fs[j])
        value = diversity_score(fs[0], chosen)
        assert value == -max(tanimoto_bits(bits[0], bits[k]) for k in range(1, j + 1))
        assert value <= previous
        previous = value


def hit_pool(n_hits, n):
    labels = np.zeros(n, dtype=np.int8)
    labels[:n_hits] = 1
    return LabeledPool.from_labels(labels)


def test_kb_size_and_membership():
    n = 2000
    pool = hit_pool(1443, n)
    fs = FingerprintSet.from_bits(np.zeros((n, 8), bool))
    kb = sample_knowledge_base(pool, fs, 0.10, np.random.default_rng(0))
    assert len(kb) == 144
    assert (pool.labels[kb.member_indices] == 1).all()
    everyone = sample_knowledge_base(pool, fs, 1.0, np.random.default_rng(0))
    assert everyone.member_indices.tolist() == list(range(1443))


def test_kb_respects_training_portion_and_replays():
    pool = hit_pool(40, 100)
    fs = FingerprintSet.from_bits(np.zeros((100, 8), bool))
    mask = np.zeros(100, bool)
    mask[::2] = True
    a = sample_knowledge_base(pool, fs, 0.5, np.random.default_rng(9), mask)
    b = sample_knowledge_base(pool, fs, 0.5, np.random.default_rng(9), mask)
    assert np.array_equal(a.member_indices, b.member_indices)
    assert (a.member_indices % 2 == 0).all() and len(a) == 10
    with pytest.raises(ArgumentError):
        sample_knowledge_base(pool, fs, 0.5, np.random.default_rng(0), np.zeros(100, bool))


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_similarity_matrix_is_symmetric_with_unit_diagonal(seed):
    rng = np.random.default_rng(seed)
    bits, fs = random_set(rng, 12, width=32, density=0.3)
    m = fs.similarity()
    assert np.array_equal(m, m.T)
    assert (np.diag(m) == 1.0).all()
    assert ((m >= 0) & (m <= 1)).all()
