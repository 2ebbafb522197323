import hashlib
import random

import pytest
from hypothesis import given, strategies as st

from synchronic.crypto import (
    EMPTY_DIGEST,
    decode,
    encode,
    from_hex,
    hash_bytes,
    keygen,
    public_key_of,
    sign_unique,
    verify_unique,
)
from synchronic.errors import EncodingError, KeyFormatError

field = st.one_of(
    st.integers(min_value=0, max_value=2**64 - 1),
    st.binary(max_size=64),
    st.text(max_size=32),
)


def test_hash_known_vectors():
    assert hash_bytes(b"").hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    assert hash_bytes(b"abc").hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_empty_digest_is_neutral_under_concatenation():
    x = b"\x07" * 32
    assert EMPTY_DIGEST + x == x == x + EMPTY_DIGEST


def test_hash_distinct_over_many_inputs():
    rng = random.Random(3)
    inputs = {rng.randbytes(rng.randrange(1, 48)) for _ in range(100_000)}
    assert len({hash_bytes(x) for x in inputs}) == len(inputs)


def test_encode_single_uint_layout():
    assert encode([5]) == bytes([0x01]) + (8).to_bytes(8, "big") + (5).to_bytes(8, "big")


def test_encode_bytes_and_str_are_distinguished():
    assert encode([b"ab"]) != encode(["ab"])
    assert encode([b"ab", b"c"]) != encode([b"a", b"bc"])
    assert encode([]) == b""


def test_encode_rejects_unsupported_values():
    for bad in ([-1], [2**64], [True], [1.5], [None]):
        with pytest.raises(EncodingError):
            encode(bad)


@given(st.lists(field, max_size=6))
def test_decode_inverts_encode(fields):
    assert decode(encode(fields)) == fields


@given(st.lists(field, max_size=5), st.lists(field, max_size=5))
def test_encode_injective(a, b):
    if a != b:
        assert encode(a) != encode(b)


def test_encode_injective_random_sweep():
    rng = random.Random(11)

    def rand_fields():
        out = []
        for _ in range(rng.randrange(4)):
            kind = rng.randrange(3)
            if kind == 0:
                out.append(rng.randrange(4))
            elif kind == 1:
                out.append(rng.randbytes(rng.randrange(3)))
            else:
                out.append("".join(rng.choice("ab") for _ in range(rng.randrange(3))))
        return out

    seen = {}
    for _ in range(10_000):
        fields = rand_fields()
        enc = encode(fields)
        if enc in seen:
            assert seen[enc] == fields
        seen[enc] = fields


def test_decode_rejects_garbage():
    with pytest.raises(EncodingError):
        decode(b"\x01\x00")
    with pytest.raises(EncodingError):
        decode(b"\x09" + bytes(8))


def test_from_hex_accepts_empty_and_digests_only():
    assert from_hex("") == b""
    assert from_hex("ab" * 32) == b"\xab" * 32
    with pytest.raises(EncodingError):
        from_hex("abcd")
    with pytest.raises(EncodingError):
        from_hex("zz" * 32)


def test_keygen_deterministic():
    a, b = keygen(b"seed-1"), keygen(b"seed-1")
    assert a.secret_key == b.secret_key and a.public_key == b.public_key
    assert public_key_of(a.secret_key) == a.public_key


def test_keygen_distinct_for_distinct_seeds():
    rng = random.Random(5)
    seeds = {rng.randbytes(16) for _ in range(100)}
    assert len({keygen(s).public_key for s in seeds}) == len(seeds)


def test_keygen_rejects_empty_seed():
    with pytest.raises(KeyFormatError):
        keygen(b"")


def test_signature_unique_and_verifies(alice_keys, bob_keys):
    msg = encode([1, b"pk", "https://a/"])
    tag = sign_unique(msg, alice_keys.secret_key)
    assert tag == sign_unique(msg, alice_keys.secret_key)
    assert verify_unique(msg, tag, alice_keys.public_key)
    assert not verify_unique(msg, tag, bob_keys.public_key)
    assert not verify_unique(msg + b"x", tag, alice_keys.public_key)


def test_signature_every_bit_flip_rejected(alice_keys):
    msg = b"flip me"
    tag = sign_unique(msg, alice_keys.secret_key)
    for bit in range(len(tag) * 8):
        mutated = bytearray(tag)
        mutated[bit // 8] ^= 1 << (bit % 8)
        assert not verify_unique(msg, bytes(mutated), alice_keys.public_key)


def test_signature_length_changes_rejected(alice_keys):
    msg = b"pad"
    tag = sign_unique(msg, alice_keys.secret_key)
    # a leading zero byte still denotes the same integer; it must not pass
    assert not verify_unique(msg, b"\x00" + tag, alice_keys.public_key)
    assert not verify_unique(msg, tag[1:], alice_keys.public_key)
    assert not verify_unique(msg, b"", alice_keys.public_key)


def test_random_tags_rejected(alice_keys):
    rng = random.Random(9)
    msg = b"m"
    for _ in range(1000):
        assert not verify_unique(msg, rng.randbytes(256), alice_keys.public_key)


def test_verify_is_total_on_malformed_keys():
    assert verify_unique(b"m", b"t", b"") is False
    assert verify_unique(b"m", b"t", b"not a key") is False
    assert verify_unique(b"m", b"t", None) is False


def test_sign_rejects_malformed_secret():
    with pytest.raises(KeyFormatError):
        sign_unique(b"m", b"garbage")


def test_pkcs1_matches_independent_rsa(alice_keys):
    # recompute the tag with raw modular exponentiation and the DER prefix
    from cryptography.hazmat.primitives.serialization import load_der_private_key

    nums = load_der_private_key(alice_keys.secret_key, None).private_numbers()
    n, d = nums.public_numbers.n, nums.d
    k = (n.bit_length() + 7) // 8
    digest_info = bytes.fromhex("3031300d060960864801650304020105000420") + hashlib.sha256(b"x").digest()
    em = b"\x00\x01" + b"\xff" * (k - len(digest_info) - 3) + b"\x00" + digest_info
    expected = pow(int.from_bytes(em, "big"), d, n).to_bytes(k, "big")
    assert sign_unique(b"x", alice_keys.secret_key) == expected


def test_mutated_real_tags_rejected(alice_keys):
    rng = random.Random(17)
    msg = b"mutate the genuine tag"
    tag = sign_unique(msg, alice_keys.secret_key)
    for _ in range(1000):
        mutated = bytearray(tag)
        for _ in range(rng.randrange(1, 4)):
            mutated[rng.randrange(len(mutated))] ^= rng.randrange(1, 256)
        assert not verify_unique(msg, bytes(mutated), alice_keys.public_key)
