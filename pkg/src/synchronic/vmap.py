"""Collapsed binary trie over 32-byte keys with compact inclusion proofs.

A subtree holding a single entry collapses into a leaf whose digest is
``H(key || value)``; an empty subtree has the zero-length digest; every other
node hashes the concatenation of its children's digests. Keys are routed
MSB-first: bit ``d`` of the key picks the child at depth ``d``.
"""

from __future__ import annotations

import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from synchronic.crypto import DIGEST_SIZE, EMPTY_DIGEST, from_hex, hash_bytes, is_digest
from synchronic.errors import DuplicateKeyError, EncodingError, KeyFormatError, NotFoundError

KEY_BITS = DIGEST_SIZE * 8

InclusionProof = list  # list[bytes]; index d holds the sibling at depth d
Entries = Union[Mapping[bytes, bytes], Iterable[tuple[bytes, bytes]]]


def key_bit(key: bytes, depth: int) -> int:
    return (key[depth >> 3] >> (7 - (depth & 7))) & 1


@dataclass(slots=True)
class MapNode:
    digest: bytes
    left: Optional["MapNode"] = None
    right: Optional["MapNode"] = None
    leaf_key: Optional[bytes] = None

    @property
    def children(self) -> Optional[tuple["MapNode", "MapNode"]]:
        if self.left is None:
            return None
        return self.left, self.right

    @property
    def is_leaf(self) -> bool:
        return self.leaf_key is not None


_EMPTY_NODE = MapNode(EMPTY_DIGEST)


@dataclass
class VerifiableMap:
    root_node: MapNode
    entries: dict[bytes, bytes] = field(repr=False)

    @property
    def root(self) -> bytes:
        return self.root_node.digest

    @property
    def entry_count(self) -> int:
        return len(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: object) -> bool:
        return key in self.entries

    def get(self, key: bytes) -> Optional[bytes]:
        return self.entries.get(key)

    def proof(self, key: bytes) -> InclusionProof:
        return get_proof(self, key)


def _check_entries(entries: Entries) -> dict[bytes, bytes]:
    pairs = entries.items() if isinstance(entries, Mapping) else entries
    checked: dict[bytes, bytes] = {}
    for key, value in pairs:
        if not is_digest(key):
            raise KeyFormatError(f"keys must be {DIGEST_SIZE}-byte digests")
        if not isinstance(value, bytes):
            raise KeyFormatError("values must be bytes")
        if key in checked:
            raise DuplicateKeyError(f"duplicate key {key.hex()}")
        checked[key] = value
    return checked


def _build(items: list[tuple[bytes, bytes]], depth: int) -> MapNode:
    # items are (key, leaf digest)
    if not items:
        return _EMPTY_NODE
    if len(items) == 1:
        key, leaf = items[0]
        return MapNode(leaf, leaf_key=key)
    assert depth < KEY_BITS, "distinct 256-bit keys cannot share a 256-bit prefix"
    byte, shift = depth >> 3, 7 - (depth & 7)
    zeros, ones = [], []
    for item in items:
        (ones if (item[0][byte] >> shift) & 1 else zeros).append(item)
    left = _build(zeros, depth + 1)
    right = _build(ones, depth + 1)
    return MapNode(hash_bytes(left.digest + right.digest), left, right)


def _leaves(entries: dict[bytes, bytes]) -> list[tuple[bytes, bytes]]:
    return [(k, hash_bytes(k + v)) for k, v in entries.items()]


def get_tree(entries: Entries) -> VerifiableMap:
    """Build the verifiable map for ``entries`` (a mapping or (key, value) pairs)."""
    checked = _check_entries(entries)
    return VerifiableMap(_build(_leaves(checked), 0), checked)


def _build_job(job: tuple[list[tuple[bytes, bytes]], int]) -> MapNode:
    return _build(*job)


def get_tree_parallel(entries: Entries, workers: int) -> VerifiableMap:
    """Same root as :func:`get_tree`, with disjoint subtrees built in worker processes.

    The top ``split`` levels are expanded in the calling process exactly as the
    sequential recursion would expand them; whatever remains at the split
    depth is handed to the pool.
    """
    if workers < 1:
        raise ValueError("workers must be positive")
    checked = _check_entries(entries)
    items = _leaves(checked)
    if workers == 1 or len(items) < 2 * workers:
        return VerifiableMap(_build(items, 0), checked)

    split = (workers - 1).bit_length() + 1
    jobs: list[tuple[list[tuple[bytes, bytes]], int]] = []

    def plan(group: list[tuple[bytes, bytes]], depth: int):
        if len(group) <= 1 or depth == split:
            jobs.append((group, depth))
            return len(jobs) - 1
        zeros = [it for it in group if not key_bit(it[0], depth)]
        ones = [it for it in group if key_bit(it[0], depth)]
        return (plan(zeros, depth + 1), plan(ones, depth + 1))

    shape = plan(items, 0)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        built = list(pool.map(_build_job, jobs))

    def assemble(node) -> MapNode:
        if isinstance(node, int):
            return built[node]
        left, right = assemble(node[0]), assemble(node[1])
        return MapNode(hash_bytes(left.digest + right.digest), left, right)

    return VerifiableMap(assemble(shape), checked)


def get_proof(tree: VerifiableMap, key: bytes) -> InclusionProof:
    """Sibling digests from the root down to ``key``'s leaf."""
    if key not in tree.entries:
        raise NotFoundError(f"key {key.hex() if isinstance(key, bytes) else key!r} not in map")
    node = tree.root_node
    proof: InclusionProof = []
    for depth in range(KEY_BITS):
        if node.left is None:
            break
        if key_bit(key, depth):
            proof.append(node.left.digest)
            node = node.right
        else:
            proof.append(node.right.digest)
            node = node.left
    assert node.leaf_key == key
    return proof


def get_root(key: bytes, value: bytes, proof: Sequence[bytes]) -> bytes:
    """Root implied by ``(key, value)`` and ``proof``, recombining leaf-upward."""
    step = hash_bytes(key + value)
    width = 8 * len(key)
    for depth in range(len(proof) - 1, -1, -1):
        sibling = proof[depth]
        # past the key width no real tree exists; keep going so the result is still a digest
        if depth < width and key_bit(key, depth):
            step = hash_bytes(sibling + step)
        else:
            step = hash_bytes(step + sibling)
    return step


def proof_to_bytes(proof: Sequence[bytes]) -> bytes:
    out = bytearray(struct.pack(">Q", len(proof)))
    for sibling in proof:
        if len(sibling) not in (0, DIGEST_SIZE):
            raise EncodingError("sibling must be 0 or 32 bytes")
        out.append(len(sibling))
        out += sibling
    return bytes(out)


def proof_from_bytes(data: bytes) -> InclusionProof:
    if len(data) < 8:
        raise EncodingError("truncated proof")
    (count,) = struct.unpack_from(">Q", data, 0)
    if count > KEY_BITS:
        raise EncodingError(f"proof longer than {KEY_BITS}")
    pos, proof = 8, []
    for _ in range(count):
        if pos >= len(data):
            raise EncodingError("truncated proof")
        size = data[pos]
        if size not in (0, DIGEST_SIZE) or pos + 1 + size > len(data):
            raise EncodingError("bad sibling length")
        proof.append(bytes(data[pos + 1 : pos + 1 + size]))
        pos += 1 + size
    if pos != len(data):
        raise EncodingError("trailing bytes after proof")
    return proof


def proof_to_json(proof: Sequence[bytes]) -> list[str]:
    return [sibling.hex() for sibling in proof]


def proof_from_json(items: object) -> InclusionProof:
    if not isinstance(items, list) or len(items) > KEY_BITS:
        raise EncodingError("proof must be a list of at most 256 hex strings")
    return [from_hex(item) for item in items]

