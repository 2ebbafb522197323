"""Global key/value derivation, commitment objects, and history windows."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

from synchronic.crypto import (
    encode,
    from_hex,
    hash_bytes,
    is_digest,
    sign_unique,
    verify_unique,
)
from synchronic.errors import ComponentMismatchError, DuplicateKeyError, EncodingError
from synchronic.vmap import (
    InclusionProof,
    VerifiableMap,
    get_proof,
    get_root,
    get_tree,
    proof_from_json,
    proof_to_json,
)


@dataclass(frozen=True)
class ContentEnvelope:
    """What actually gets committed for one local path: version, index, content hash."""

    sequence: int
    index: int
    payload_digest: bytes

    @property
    def value(self) -> bytes:
        return hash_bytes(encode([self.sequence, self.index, self.payload_digest]))

    def to_json(self) -> dict[str, Any]:
        return {
            "sequence": self.sequence,
            "index": self.index,
            "payloadDigest": self.payload_digest.hex(),
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "ContentEnvelope":
        return cls(
            sequence=_uint(obj["sequence"]),
            index=_uint(obj["index"]),
            payload_digest=from_hex(obj["payloadDigest"]),
        )


@dataclass(frozen=True)
class Commitment:
    index: int
    public_key: bytes
    global_path: str
    tag: bytes
    local_path: str
    envelope: ContentEnvelope
    local_proof: tuple[bytes, ...]
    local_root: bytes
    global_proof: tuple[bytes, ...]

    @property
    def global_key(self) -> bytes:
        return hash_bytes(self.tag)

    @property
    def local_key(self) -> bytes:
        return local_key(self.local_path)

    @property
    def identity(self) -> tuple[bytes, str, str]:
        return self.public_key, self.global_path, self.local_path

    def to_json(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "publicKey": self.public_key.hex(),
            "globalPath": self.global_path,
            "tag": self.tag.hex(),
            "localPath": self.local_path,
            "envelope": self.envelope.to_json(),
            "localProof": proof_to_json(self.local_proof),
            "localRoot": self.local_root.hex(),
            "globalProof": proof_to_json(self.global_proof),
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "Commitment":
        """Parse the interchange form; raises EncodingError on any malformation."""
        try:
            global_path, local_path = obj["globalPath"], obj["localPath"]
            if not isinstance(global_path, str) or not isinstance(local_path, str):
                raise EncodingError("paths must be strings")
            return cls(
                index=_uint(obj["index"]),
                public_key=bytes.fromhex(obj["publicKey"]),
                global_path=global_path,
                tag=bytes.fromhex(obj["tag"]),
                local_path=local_path,
                envelope=ContentEnvelope.from_json(obj["envelope"]),
                local_proof=tuple(proof_from_json(obj["localProof"])),
                local_root=from_hex(obj["localRoot"]),
                global_proof=tuple(proof_from_json(obj["globalProof"])),
            )
        except EncodingError:
            raise
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise EncodingError(f"malformed commitment: {exc}") from exc


def _uint(value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise EncodingError(f"expected a non-negative integer, got {value!r}")
    return value


def local_key(local_path: str) -> bytes:
    return hash_bytes(local_path.encode("utf-8"))


def signing_message(index: int, public_key: bytes, global_path: str) -> bytes:
    return encode([index, public_key, global_path])


def derive_global_key(
    index: int, public_key: bytes, global_path: str, secret_key: bytes
) -> tuple[bytes, bytes]:
    """Return ``(global_key, tag)`` where the tag is the unique signature over
    the encoded ``(index, public_key, global_path)``."""
    if not global_path:
        raise ValueError("global path must be nonempty")
    tag = sign_unique(signing_message(index, public_key, global_path), secret_key)
    return hash_bytes(tag), tag


def derive_global_value(local_root: bytes) -> bytes:
    return hash_bytes(encode([local_root]))


def build_local_map(
    contents: Union[Mapping[str, ContentEnvelope], Iterable[tuple[str, ContentEnvelope]]],
) -> tuple[VerifiableMap, dict[str, InclusionProof]]:
    pairs = contents.items() if isinstance(contents, Mapping) else contents
    by_path: dict[str, ContentEnvelope] = {}
    for path, envelope in pairs:
        if path in by_path:
            raise DuplicateKeyError(f"duplicate local path {path!r}")
        by_path[path] = envelope
    tree = get_tree({local_key(p): env.value for p, env in by_path.items()})
    proofs = {p: get_proof(tree, local_key(p)) for p in by_path}
    return tree, proofs


def assemble_commitment(
    *,
    index: int,
    public_key: bytes,
    global_path: str,
    tag: bytes,
    local_path: str,
    envelope: ContentEnvelope,
    local_proof: Sequence[bytes],
    local_root: bytes,
    global_proof: Sequence[bytes],
    block_root: Optional[bytes] = None,
) -> Commitment:
    """Bundle the pieces, refusing combinations that cannot verify.

    ``block_root`` is optional; when given, the global proof is checked too.
    """
    c = Commitment(
        index=index,
        public_key=public_key,
        global_path=global_path,
        tag=tag,
        local_path=local_path,
        envelope=envelope,
        local_proof=tuple(local_proof),
        local_root=local_root,
        global_proof=tuple(global_proof),
    )
    failed = [name for name, ok in _checks(c) if not ok]
    if block_root is not None and implied_global_root(c) != block_root:
        failed.append("global-root")
    if failed:
        raise ComponentMismatchError(f"commitment components do not agree: {', '.join(failed)}")
    return c


def implied_local_root(c: Commitment) -> bytes:
    return get_root(local_key(c.local_path), c.envelope.value, c.local_proof)


def implied_global_root(c: Commitment) -> bytes:
    return get_root(hash_bytes(c.tag), derive_global_value(c.local_root), c.global_proof)


def _checks(c: Commitment) -> list[tuple[str, bool]]:
    return [
        ("envelope-index", c.envelope.index == c.index),
        ("local-root", implied_local_root(c) == c.local_root),
        (
            "signature",
            verify_unique(signing_message(c.index, c.public_key, c.global_path), c.tag, c.public_key),
        ),
    ]


def commitment_checks(c: Commitment, block_root: bytes) -> list[tuple[str, bool, str]]:
    """Itemized verification; each entry is ``(name, passed, detail)``.

    Never raises: a malformed commitment turns into failing checks.
    """
    results: list[tuple[str, bool, str]] = []
    try:
        for name, ok in _checks(c):
            results.append((name, ok, ""))
        implied = implied_global_root(c)
        results.append(("global-root", is_digest(implied), implied.hex()))
        results.append(("chain-root", implied == block_root, f"block root {block_root.hex()}"))
    except Exception as exc:  # adversarial input must not crash a verifier
        results.append(("well-formed", False, repr(exc)))
    return results


def verify_commitment(c: Commitment, block_root: bytes) -> bool:
    checks = commitment_checks(c, block_root)
    return bool(checks) and all(ok for _, ok, _ in checks)


def period(periodicity: int) -> int:
    if periodicity < 0:
        raise ValueError("negative periodicity is not supported")
    return 1 << periodicity


def check_period(index: int, periodicity: int) -> bool:
    return index % period(periodicity) == 0


@dataclass(frozen=True)
class WindowSpec:
    """Inclusive index range ``[start_index, end_index]`` at a given periodicity."""

    start_index: int
    end_index: int
    periodicity: int = 0

    def __post_init__(self):
        if self.start_index > self.end_index:
            raise ValueError("window start after end")
        if not (check_period(self.start_index, self.periodicity) and check_period(self.end_index, self.periodicity)):
            raise ValueError("window bounds must be period-aligned")

    @property
    def expected(self) -> int:
        step = period(self.periodicity)
        return (self.end_index - self.start_index) // step + 1

    @property
    def threshold(self) -> int:
        return self.expected // 2 + 1

    def __contains__(self, index: int) -> bool:
        return self.start_index <= index <= self.end_index


@dataclass
class WindowResult:
    valid: bool
    expected: int
    present: int
    threshold: int
    reasons: list[str] = field(default_factory=list)

    @property
    def covered(self) -> bool:
        return self.present >= self.threshold


def evaluate_window(
    commitments: Sequence[Commitment], w: WindowSpec, block_roots: Mapping[int, bytes]
) -> WindowResult:
    """Check a run of commitments for one (identity, global path, local path).

    Commitments outside the window are ignored. Inside it they must all
    verify, carry consecutive sequence numbers in index order, sit on
    distinct period-aligned indices, and number at least ``expected // 2 + 1``.
    ``reasons`` lists every violation except insufficient coverage.
    """
    inside = sorted((c for c in commitments if c.index in w), key=lambda c: c.index)
    result = WindowResult(False, w.expected, len(inside), w.threshold)
    reasons = result.reasons

    if len({c.identity for c in inside}) > 1:
        reasons.append("commitments belong to different (public key, global path, local path)")
    for c in inside:
        root = block_roots.get(c.index)
        if root is None:
            reasons.append(f"no block root for index {c.index}")
        elif not verify_commitment(c, root):
            reasons.append(f"commitment at index {c.index} does not verify")
        if not check_period(c.index, w.periodicity):
            reasons.append(f"index {c.index} not aligned to period {period(w.periodicity)}")
    for prev, cur in zip(inside, inside[1:]):
        if cur.index == prev.index:
            reasons.append(f"two commitments at index {cur.index}")
        if cur.envelope.sequence != prev.envelope.sequence + 1:
            reasons.append(
                f"sequence jumps {prev.envelope.sequence} -> {cur.envelope.sequence} "
                f"between indices {prev.index} and {cur.index}"
            )
    result.valid = not reasons and result.covered
    return result


def validate_window(
    commitments: Sequence[Commitment], w: WindowSpec, block_roots: Mapping[int, bytes]
) -> bool:
    try:
        return evaluate_window(commitments, w, block_roots).valid
    except Exception:
        return False

