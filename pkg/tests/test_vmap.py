import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import leaf_depths, reference_root, sha
from synchronic.errors import DuplicateKeyError, EncodingError, KeyFormatError, NotFoundError
from synchronic.vmap import (
    get_proof,
    get_root,
    get_tree,
    get_tree_parallel,
    proof_from_bytes,
    proof_from_json,
    proof_to_bytes,
    proof_to_json,
)

digest = st.binary(min_size=32, max_size=32)


def random_entries(n, seed):
    rng = random.Random(seed)
    return {rng.randbytes(32): rng.randbytes(32) for _ in range(n)}


def test_empty_tree_root_is_empty_digest():
    assert get_tree({}).root == b""
    assert get_tree({}).entry_count == 0


def test_single_entry_root_is_leaf_digest():
    k, v = b"\x01" * 32, b"value"
    tree = get_tree({k: v})
    assert tree.root == sha(k + v)
    assert get_proof(tree, k) == []
    assert get_root(k, v, []) == tree.root


def test_two_entries_split_on_first_bit():
    k0, k1 = b"\x00" * 32, b"\x80" + b"\x00" * 31
    v0, v1 = b"a", b"b"
    tree = get_tree({k1: v1, k0: v0})
    assert tree.root == sha(sha(k0 + v0) + sha(k1 + v1))
    assert get_proof(tree, k0) == [sha(k1 + v1)]
    assert get_proof(tree, k1) == [sha(k0 + v0)]


def test_keys_differing_in_last_bit_give_full_depth_proof():
    k0 = b"\x5a" * 31 + b"\x00"
    k1 = b"\x5a" * 31 + b"\x01"
    tree = get_tree({k0: b"x", k1: b"y"})
    proof = get_proof(tree, k0)
    assert len(proof) == 256
    assert proof[:255] == [b""] * 255
    assert proof[255] == sha(k1 + b"y")
    expected = sha(sha(k0 + b"x") + sha(k1 + b"y"))
    for depth in range(254, -1, -1):
        bit = (k0[depth // 8] >> (7 - depth % 8)) & 1
        expected = sha(b"" + expected) if bit else sha(expected + b"")
    assert tree.root == expected
    assert get_root(k0, b"x", proof) == tree.root


@pytest.mark.parametrize("n", [0, 1, 2, 3, 17, 256, 4096])
def test_roundtrip_and_reference_root(n):
    entries = random_entries(n, seed=n)
    tree = get_tree(entries)
    assert tree.root == reference_root(entries)
    for k, v in entries.items():
        assert get_root(k, v, get_proof(tree, k)) == tree.root


def test_proof_lengths_match_lcp_oracle():
    entries = random_entries(1000, seed=42)
    tree = get_tree(entries)
    assert sorted(len(get_proof(tree, k)) for k in entries) == sorted(leaf_depths(entries))


def test_order_independence():
    entries = random_entries(200, seed=1)
    pairs = list(entries.items())
    random.Random(2).shuffle(pairs)
    assert get_tree(pairs).root == get_tree(entries).root


@pytest.mark.parametrize("workers", [1, 2, 3, 8])
def test_parallel_matches_sequential(workers):
    entries = random_entries(3000, seed=workers)
    seq = get_tree(entries)
    par = get_tree_parallel(entries, workers)
    assert par.root == seq.root
    for k in list(entries)[:50]:
        assert get_proof(par, k) == get_proof(seq, k)


def test_parallel_handles_tiny_inputs():
    for n in (0, 1, 2, 5):
        entries = random_entries(n, seed=n)
        assert get_tree_parallel(entries, 8).root == get_tree(entries).root


def test_tamper_detection():
    entries = random_entries(300, seed=8)
    tree = get_tree(entries)
    rng = random.Random(13)
    keys = list(entries)
    for _ in range(1000):
        k = rng.choice(keys)
        v = entries[k]
        proof = get_proof(tree, k)
        target = rng.randrange(3)
        if target == 0:
            kk = bytearray(k)
            kk[rng.randrange(32)] ^= 1 << rng.randrange(8)
            assert get_root(bytes(kk), v, proof) != tree.root
        elif target == 1:
            vv = bytearray(v)
            vv[rng.randrange(len(vv))] ^= 1 << rng.randrange(8)
            assert get_root(k, bytes(vv), proof) != tree.root
        else:
            i = rng.randrange(len(proof))
            sib = bytearray(proof[i] or rng.randbytes(32))
            if proof[i]:
                sib[rng.randrange(32)] ^= 1 << rng.randrange(8)
            assert get_root(k, v, proof[:i] + [bytes(sib)] + proof[i + 1:]) != tree.root


def test_absent_key_has_no_proof():
    tree = get_tree(random_entries(10, seed=0))
    with pytest.raises(NotFoundError):
        get_proof(tree, b"\xff" * 32)


def test_bad_keys_rejected():
    with pytest.raises(KeyFormatError):
        get_tree({b"short": b"v"})
    k = b"\x01" * 32
    with pytest.raises(DuplicateKeyError):
        get_tree([(k, b"a"), (k, b"b")])


def test_get_root_is_total_on_overlong_proof():
    k = b"\x00" * 32
    assert get_root(k, b"v", [b""] * 300) not in (b"", get_tree({}).root)


def test_empty_sibling_differs_from_zero_digest():
    k0, k1 = b"\x00" * 32, b"\x80" + b"\x00" * 31
    assert get_root(k0, b"v", [b""]) != get_root(k0, b"v", [bytes(32)])
    assert get_root(k1, b"v", [b""]) == sha(sha(k1 + b"v"))


def test_proof_serialization_roundtrip():
    entries = random_entries(64, seed=4)
    tree = get_tree(entries)
    for k in entries:
        proof = get_proof(tree, k)
        assert proof_from_bytes(proof_to_bytes(proof)) == proof
        assert proof_from_json(proof_to_json(proof)) == proof
    assert proof_to_json([b"", b"\x01" * 32]) == ["", "01" * 32]


def test_proof_deserialization_rejects_bad_input():
    with pytest.raises(EncodingError):
        proof_from_bytes(b"\x00" * 7)
    with pytest.raises(EncodingError):
        proof_from_bytes((1).to_bytes(8, "big") + b"\x05abcde")
    with pytest.raises(EncodingError):
        proof_from_json(["abc"])
    with pytest.raises(EncodingError):
        proof_from_json("notalist")


@settings(max_examples=60)
@given(st.dictionaries(digest, st.binary(max_size=16), max_size=40))
def test_property_every_entry_proves(entries):
    tree = get_tree(entries)
    assert tree.root == reference_root(entries)
    for k, v in entries.items():
        assert get_root(k, v, get_proof(tree, k)) == tree.root


@settings(max_examples=60)
@given(st.lists(st.integers(min_value=0, max_value=255), min_size=2, max_size=12, unique=True), digest)
def test_property_clustered_keys(offsets, base):
    # keys sharing long prefixes exercise empty siblings
    entries = {base[:31] + bytes([o]): bytes([o]) for o in offsets}
    tree = get_tree(entries)
    assert tree.root == reference_root(entries)
    for k, v in entries.items():
        proof = get_proof(tree, k)
        assert len(proof) >= 249
        assert get_root(k, v, proof) == tree.root


@settings(max_examples=40)
@given(st.dictionaries(digest, st.binary(max_size=8), min_size=1, max_size=20), st.permutations(range(20)))
def test_property_determinism_under_permutation(entries, perm):
    pairs = list(entries.items())
    shuffled = [pairs[i] for i in perm if i < len(pairs)]
    assert get_tree(shuffled).root == get_tree(entries).root
