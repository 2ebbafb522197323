"""The notary: batches global commits per index, seals blocks, serves proofs."""

from __future__ import annotations

import os
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from synchronic.crypto import (
    EMPTY_DIGEST,
    AuthKeypair,
    decode,
    encode,
    from_hex,
    hash_bytes,
    is_digest,
    sign_unique,
    verify_unique,
)
from synchronic.errors import (
    ConflictError,
    EncodingError,
    GoneError,
    KeyFormatError,
    NotFoundError,
    OrderError,
    PendingError,
    RetentionError,
    ThrottledError,
    TooEarlyError,
    TooLateError,
)
from synchronic.vmap import InclusionProof, VerifiableMap, get_proof, get_tree, get_tree_parallel

DEFAULT_RETENTION = 1024
DEFAULT_RATE_LIMIT = 100
FUTURE_HORIZON = 1 << 10
# below this many entries a process pool costs more than it saves
PARALLEL_THRESHOLD = 50_000


@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: bytes
    payload: bytes
    quorum_signatures: tuple[tuple[str, bytes], ...] = ()

    @property
    def hash(self) -> bytes:
        return block_hash(self.index, self.prev_hash, self.payload)

    def with_signatures(self, signatures: Iterable[tuple[str, bytes]]) -> "Block":
        return Block(self.index, self.prev_hash, self.payload, tuple(signatures))

    def to_json(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "prevHash": self.prev_hash.hex(),
            "payload": self.payload.hex(),
            "hash": self.hash.hex(),
            "quorumSignatures": [{"notary": n, "tag": t.hex()} for n, t in self.quorum_signatures],
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "Block":
        try:
            block = cls(
                index=int(obj["index"]),
                prev_hash=from_hex(obj["prevHash"]),
                payload=from_hex(obj["payload"]),
                quorum_signatures=tuple(
                    (str(s["notary"]), bytes.fromhex(s["tag"])) for s in obj.get("quorumSignatures", [])
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EncodingError(f"malformed block: {exc}") from exc
        if "hash" in obj and obj["hash"] != block.hash.hex():
            raise EncodingError("block hash does not match its fields")
        return block

    def to_record(self) -> bytes:
        fields: list = [self.index, self.prev_hash, self.payload, len(self.quorum_signatures)]
        for notary_id, tag in self.quorum_signatures:
            fields += [notary_id, tag]
        return encode(fields)

    @classmethod
    def from_record(cls, data: bytes) -> "Block":
        fields = decode(data)
        try:
            index, prev_hash, payload, count = fields[:4]
            sigs = fields[4:]
            if len(sigs) != 2 * count:
                raise EncodingError("signature count mismatch")
            pairs = tuple((sigs[i], sigs[i + 1]) for i in range(0, len(sigs), 2))
            return cls(index, prev_hash, payload, pairs)
        except (ValueError, TypeError) as exc:
            raise EncodingError(f"malformed block record: {exc}") from exc


def block_hash(index: int, prev_hash: bytes, payload: bytes) -> bytes:
    return hash_bytes(encode([index, prev_hash, payload]))


GENESIS = Block(0, EMPTY_DIGEST, EMPTY_DIGEST)


def verify_chain(blocks: Sequence[Block]) -> bool:
    """Consecutive indices, intact hash links, and a well-formed genesis if present."""
    if not blocks:
        return True
    first = blocks[0]
    if first.index == 0 and (first.prev_hash != EMPTY_DIGEST or first.payload != EMPTY_DIGEST):
        return False
    for prev, cur in zip(blocks, blocks[1:]):
        if cur.index != prev.index + 1 or cur.prev_hash != prev.hash:
            return False
    return True


def verify_block_signatures(block: Block, public_keys: Mapping[str, bytes], quorum: int) -> bool:
    """At least ``quorum`` distinct known notaries signed the block hash."""
    signers = set()
    for notary_id, tag in block.quorum_signatures:
        key = public_keys.get(notary_id)
        if key is not None and verify_unique(block.hash, tag, key):
            signers.add(notary_id)
    return len(signers) >= quorum


@dataclass(frozen=True)
class Promise:
    notary_id: str
    index: int
    global_key: bytes
    global_value: bytes
    signature: bytes

    @property
    def message(self) -> bytes:
        return promise_message(self.notary_id, self.index, self.global_key, self.global_value)

    def verify(self, public_key: bytes) -> bool:
        return verify_unique(self.message, self.signature, public_key)

    def to_json(self) -> dict[str, Any]:
        return {
            "notaryId": self.notary_id,
            "index": self.index,
            "key": self.global_key.hex(),
            "value": self.global_value.hex(),
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "Promise":
        try:
            return cls(
                notary_id=str(obj["notaryId"]),
                index=int(obj["index"]),
                global_key=from_hex(obj["key"]),
                global_value=from_hex(obj["value"]),
                signature=bytes.fromhex(obj["signature"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EncodingError(f"malformed promise: {exc}") from exc


@dataclass(frozen=True)
class Evidence:
    """A signed promise plus the finalized block that failed to honor it."""

    promise: Promise
    block: Block

    @property
    def accused(self) -> str:
        return self.promise.notary_id

    def to_json(self) -> dict[str, Any]:
        return {"promise": self.promise.to_json(), "block": self.block.to_json()}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "Evidence":
        try:
            return cls(Promise.from_json(obj["promise"]), Block.from_json(obj["block"]))
        except (KeyError, TypeError) as exc:
            raise EncodingError(f"malformed evidence: {exc}") from exc


def promise_message(notary_id: str, index: int, global_key: bytes, global_value: bytes) -> bytes:
    return encode([notary_id, index, global_key, global_value])


@dataclass
class PendingBatch:
    index: int
    entries: dict[bytes, bytes] = field(default_factory=dict)
    sealed: bool = False


@dataclass
class NotaryConfig:
    notary_id: str
    keypair: AuthKeypair
    retention_blocks: int = DEFAULT_RETENTION
    # seconds in service mode; ignored by the in-process and simulated notaries
    block_interval: float = 10.0
    rate_limit: int = DEFAULT_RATE_LIMIT
    workers: int = 1
    auto_prune: bool = True

    def __post_init__(self):
        if self.retention_blocks < 1:
            raise ValueError("retention must be at least one block")
        if self.rate_limit < 1:
            raise ValueError("rate limit must be positive")


class RateLimiter:
    """Per-source allowance of ``capacity`` requests, refilled whenever a block seals."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._used: dict[str, int] = {}

    def take(self, source: str) -> bool:
        used = self._used.get(source, 0)
        if used >= self.capacity:
            return False
        self._used[source] = used + 1
        return True

    def refill(self) -> None:
        self._used.clear()


class BlockLog:
    """Append-only file of length-prefixed canonical block records."""

    def __init__(self, path: os.PathLike | str):
        self.path = Path(path)

    def append(self, block: Block) -> None:
        record = block.to_record()
        with open(self.path, "ab") as fh:
            fh.write(struct.pack(">Q", len(record)) + record)
            fh.flush()
            os.fsync(fh.fileno())

    def load(self) -> list[Block]:
        if not self.path.exists():
            return []
        data = self.path.read_bytes()
        blocks, pos = [], 0
        while pos < len(data):
            if pos + 8 > len(data):
                raise EncodingError(f"{self.path}: truncated record header")
            (size,) = struct.unpack_from(">Q", data, pos)
            pos += 8
            if pos + size > len(data):
                raise EncodingError(f"{self.path}: truncated record")
            blocks.append(Block.from_record(data[pos : pos + size]))
            pos += size
        return blocks

    # chain-source interface for offline verification
    def block_root(self, index: int) -> bytes:
        return self.get_block(index).payload

    def get_block(self, index: int) -> Block:
        blocks = self.load()
        if not 0 <= index < len(blocks) or blocks[index].index != index:
            raise NotFoundError(f"no block {index} in {self.path}")
        return blocks[index]


class Notary:
    """A single notary's state machine.

    Used directly as a standalone service, and by the consensus simulation,
    which drives :meth:`propose` / :meth:`append_block` instead of
    :meth:`seal_block`.
    """

    def __init__(self, config: NotaryConfig, block_log: Optional[BlockLog] = None):
        self.config = config
        self.block_log = block_log
        self._lock = threading.RLock()
        self._blocks: list[Block] = []
        self._batches: dict[int, PendingBatch] = {}
        self._maps: dict[int, VerifiableMap] = {}
        self._limiter = RateLimiter(config.rate_limit)

        restored = block_log.load() if block_log is not None else []
        if restored:
            if not verify_chain(restored) or restored[0].index != 0:
                raise EncodingError("block log does not hold a valid chain")
            for block in restored:
                for nid, tag in block.quorum_signatures:
                    if nid == config.notary_id and not verify_unique(block.hash, tag, self.public_key):
                        raise EncodingError(f"block log entry {block.index} fails its own signature")
            # full maps are not persisted; everything restored counts as pruned
            self._blocks = restored
        else:
            self._append(GENESIS, get_tree({}))

    @property
    def notary_id(self) -> str:
        return self.config.notary_id

    @property
    def public_key(self) -> bytes:
        return self.config.keypair.public_key

    def current_index(self) -> int:
        with self._lock:
            return len(self._blocks)

    def _sign(self, message: bytes) -> bytes:
        return sign_unique(message, self.config.keypair.secret_key)

    def _promise(self, index: int, key: bytes, value: bytes) -> Promise:
        sig = self._sign(promise_message(self.notary_id, index, key, value))
        return Promise(self.notary_id, index, key, value, sig)

    def submit_commit(
        self, index: int, global_key: bytes, global_value: bytes, source: str = "anonymous"
    ) -> Promise:
        if not is_digest(global_key) or not is_digest(global_value):
            raise KeyFormatError("global key and value must be 32-byte digests")
        with self._lock:
            current = len(self._blocks)
            if index < current:
                raise TooLateError(f"index {index} already sealed (current is {current})")
            if index > current + FUTURE_HORIZON:
                raise TooEarlyError(f"index {index} is more than {FUTURE_HORIZON} blocks ahead")
            if not self._limiter.take(source):
                raise ThrottledError(f"source {source!r} exceeded {self.config.rate_limit} requests per block")
            batch = self._batches.setdefault(index, PendingBatch(index))
            existing = batch.entries.get(global_key)
            if existing is not None and existing != global_value:
                raise ConflictError(f"key {global_key.hex()} already committed with a different value")
            batch.entries[global_key] = global_value
        return self._promise(index, global_key, global_value)

    def pending_entries(self, index: int) -> dict[bytes, bytes]:
        with self._lock:
            batch = self._batches.get(index)
            return dict(batch.entries) if batch else {}

    def build_map(self, entries: Mapping[bytes, bytes]) -> VerifiableMap:
        if self.config.workers > 1 and len(entries) >= PARALLEL_THRESHOLD:
            return get_tree_parallel(entries, self.config.workers)
        return get_tree(entries)

    def propose(self, index: int, entries: Optional[Mapping[bytes, bytes]] = None) -> tuple[Block, VerifiableMap]:
        """Unsigned block for ``index`` over ``entries`` (default: this notary's batch)."""
        with self._lock:
            if index != len(self._blocks):
                raise OrderError(f"cannot propose {index}; current is {len(self._blocks)}")
            if entries is None:
                entries = self.pending_entries(index)
            tree = self.build_map(entries)
            return Block(index, self._blocks[-1].hash, tree.root), tree

    def validate_proposal(self, block: Block, entries: Mapping[bytes, bytes]) -> Optional[VerifiableMap]:
        """Rebuild the root from the broadcast batch; the map if the proposal holds up."""
        with self._lock:
            if block.index != len(self._blocks) or block.prev_hash != self._blocks[-1].hash:
                return None
        tree = self.build_map(entries)
        return tree if tree.root == block.payload else None

    def sign_block(self, block: Block) -> tuple[str, bytes]:
        return self.notary_id, self._sign(block.hash)

    def append_block(self, block: Block, tree: VerifiableMap) -> None:
        """Adopt a finalized block whose full map is ``tree``."""
        with self._lock:
            if block.index != len(self._blocks):
                raise OrderError(f"block {block.index} out of order; current is {len(self._blocks)}")
            if block.prev_hash != self._blocks[-1].hash:
                raise OrderError("block does not link to the chain head")
            if tree.root != block.payload:
                raise OrderError("block payload does not match its map")
            self._append(block, tree)

    def _append(self, block: Block, tree: VerifiableMap) -> None:
        if self.block_log is not None:
            self.block_log.append(block)
        self._blocks.append(block)
        self._maps[block.index] = tree
        batch = self._batches.pop(block.index, None)
        if batch is not None:
            batch.sealed = True
        self._limiter.refill()
        if self.config.auto_prune:
            floor = self.retention_floor()
            if floor > 0:
                self._prune(floor - 1)

    def seal_block(self, index: Optional[int] = None) -> Block:
        """Seal the current index from this notary's own batch (standalone mode)."""
        with self._lock:
            current = len(self._blocks)
            if index is None:
                index = current
            if index != current:
                raise OrderError(f"cannot seal {index}; current is {current}")
            block, tree = self.propose(index)
            block = block.with_signatures([self.sign_block(block)])
            self._append(block, tree)
            return block

    def retention_floor(self) -> int:
        """Lowest index whose full map must still be held."""
        return max(0, len(self._blocks) - self.config.retention_blocks)

    def get_proof(self, index: int, global_key: bytes) -> InclusionProof:
        with self._lock:
            if index >= len(self._blocks):
                raise PendingError(f"index {index} not sealed yet")
            tree = self._maps.get(index)
        if tree is None:
            raise GoneError(f"map for index {index} has been pruned")
        return get_proof(tree, global_key)

    def get_value(self, index: int, global_key: bytes) -> bytes:
        with self._lock:
            tree = self._maps.get(index)
        if tree is None:
            raise GoneError(f"map for index {index} unavailable")
        value = tree.get(global_key)
        if value is None:
            raise NotFoundError(f"key {global_key.hex()} not in block {index}")
        return value

    def retained_map(self, index: int) -> Optional[VerifiableMap]:
        with self._lock:
            return self._maps.get(index)

    def retained_indices(self) -> list[int]:
        with self._lock:
            return sorted(self._maps)

    def get_block(self, index: int) -> Block:
        with self._lock:
            if not 0 <= index < len(self._blocks):
                raise NotFoundError(f"no block at index {index}")
            return self._blocks[index]

    def block_root(self, index: int) -> bytes:
        return self.get_block(index).payload

    def get_chain(self, start: int = 0, end: Optional[int] = None) -> list[Block]:
        with self._lock:
            if end is None:
                end = len(self._blocks) - 1
            if start < 0 or end >= len(self._blocks) or start > end + 1:
                raise NotFoundError(f"chain range {start}..{end} not available")
            return list(self._blocks[start : end + 1])

    def prune(self, up_to_index: int) -> None:
        with self._lock:
            if up_to_index >= self.retention_floor():
                raise RetentionError(
                    f"cannot prune through {up_to_index}; maps from {self.retention_floor()} on are retained"
                )
            self._prune(up_to_index)

    def _prune(self, up_to_index: int) -> None:
        for index in [i for i in self._maps if i <= up_to_index]:
            del self._maps[index]
