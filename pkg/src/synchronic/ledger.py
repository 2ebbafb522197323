"""The ledger client: turns local content into verifiable commitments."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from typing import Any, Callable, Iterable, Iterator, Mapping, Optional, Protocol

from synchronic.commitment import (
    Commitment,
    ContentEnvelope,
    WindowSpec,
    assemble_commitment,
    build_local_map,
    check_period,
    derive_global_key,
    derive_global_value,
    verify_commitment,
)
from synchronic.crypto import AuthKeypair, hash_bytes
from synchronic.errors import (
    EncodingError,
    GoneError,
    NotFoundError,
    PendingError,
    PeriodError,
    SynchronicError,
)
from synchronic.notary import Block, Evidence, Promise
from synchronic.vmap import InclusionProof, VerifiableMap, get_root

log = logging.getLogger(__name__)


class Resolver(Protocol):
    def resolve(self, local_path: str) -> bytes: ...


class NotaryAPI(Protocol):
    """What a ledger needs from a notary, in-process or over HTTP."""

    def submit_commit(self, index: int, global_key: bytes, global_value: bytes, source: str = ...) -> Promise: ...

    def get_proof(self, index: int, global_key: bytes) -> InclusionProof: ...

    def get_block(self, index: int) -> Block: ...

    def current_index(self) -> int: ...


class FileResolver:
    """Serves files under ``root``.

    Local paths are POSIX-style paths relative to ``root``, optionally
    prefixed with ``base_url`` so that the committed path is the URL readers
    will find the content at.
    """

    def __init__(self, root: os.PathLike | str, base_url: str = ""):
        self.root = Path(root).resolve()
        self.base_url = base_url

    def paths(self) -> list[str]:
        found = []
        for path in sorted(self.root.rglob("*")):
            if path.is_file():
                found.append(self.base_url + path.relative_to(self.root).as_posix())
        return found

    def resolve(self, local_path: str) -> bytes:
        if self.base_url and not local_path.startswith(self.base_url):
            raise NotFoundError(f"{local_path!r} is outside {self.base_url!r}")
        relative = PurePosixPath(local_path[len(self.base_url) :])
        if relative.is_absolute() or ".." in relative.parts:
            raise NotFoundError(f"{local_path!r} escapes the resolver root")
        target = self.root.joinpath(*relative.parts)
        try:
            return target.read_bytes()
        except (FileNotFoundError, IsADirectoryError, NotADirectoryError) as exc:
            raise NotFoundError(f"no content at {local_path!r}") from exc

    def resolve_all(self) -> dict[str, bytes]:
        return {p: self.resolve(p) for p in self.paths()}


class JsonLines:
    """Append-only JSON-lines file."""

    def __init__(self, path: os.PathLike | str):
        self.path = Path(path)

    def append(self, record: Mapping[str, Any]) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def __iter__(self) -> Iterator[dict[str, Any]]:
        if not self.path.exists():
            return
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if line.strip():
                    try:
                        yield json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise EncodingError(f"{self.path}:{lineno}: {exc}") from exc


@dataclass
class LedgerState:
    keypair: AuthKeypair
    global_path: str
    periodicity: int = 0
    next_sequence: dict[str, int] = field(default_factory=dict)
    promise_log: list[Promise] = field(default_factory=list)
    commitment_store: dict[tuple[int, str], Commitment] = field(default_factory=dict)


@dataclass
class PendingCycle:
    """Everything computed for one index before the block is sealed."""

    index: int
    envelopes: dict[str, ContentEnvelope]
    local_map: VerifiableMap
    local_proofs: dict[str, InclusionProof]
    global_key: bytes
    tag: bytes
    global_value: bytes
    promise: Optional[Promise] = None


class Ledger:
    """A ledger bound to one notary connection.

    ``commitment_file`` and ``promise_file`` are optional JSON-lines stores;
    when given, existing records are loaded and new ones appended.
    """

    def __init__(
        self,
        state: LedgerState,
        notary: NotaryAPI,
        *,
        source: str = "ledger",
        commitment_file: os.PathLike | str | None = None,
        promise_file: os.PathLike | str | None = None,
    ):
        self.state = state
        self.notary = notary
        self.source = source
        self._commitment_file = JsonLines(commitment_file) if commitment_file else None
        self._promise_file = JsonLines(promise_file) if promise_file else None
        if self._promise_file is not None:
            state.promise_log.extend(Promise.from_json(r) for r in self._promise_file)
        if self._commitment_file is not None:
            for record in self._commitment_file:
                c = Commitment.from_json(record)
                self._index(c)

    def _index(self, c: Commitment) -> None:
        self.state.commitment_store[(c.index, c.local_path)] = c
        nxt = self.state.next_sequence.get(c.local_path, 0)
        self.state.next_sequence[c.local_path] = max(nxt, c.envelope.sequence + 1)

    @property
    def public_key(self) -> bytes:
        return self.state.keypair.public_key

    def prepare(self, contents: Mapping[str, bytes], index: int) -> PendingCycle:
        """Local half of a cycle; touches neither the notary nor the state."""
        if not check_period(index, self.state.periodicity):
            raise PeriodError(f"index {index} is not a multiple of 2**{self.state.periodicity}")
        envelopes = {
            path: ContentEnvelope(self.state.next_sequence.get(path, 0), index, hash_bytes(data))
            for path, data in contents.items()
        }
        local_map, proofs = build_local_map(envelopes)
        global_key, tag = derive_global_key(
            index, self.public_key, self.state.global_path, self.state.keypair.secret_key
        )
        return PendingCycle(
            index=index,
            envelopes=envelopes,
            local_map=local_map,
            local_proofs=proofs,
            global_key=global_key,
            tag=tag,
            global_value=derive_global_value(local_map.root),
        )

    def submit(self, contents: Mapping[str, bytes], index: int) -> PendingCycle:
        pending = self.prepare(contents, index)
        promise = self.notary.submit_commit(index, pending.global_key, pending.global_value, source=self.source)
        self._log_promise(promise)
        pending.promise = promise
        return pending

    def _log_promise(self, promise: Promise) -> None:
        self.state.promise_log.append(promise)
        if self._promise_file is not None:
            self._promise_file.append(promise.to_json())

    def complete(self, pending: PendingCycle) -> dict[str, Commitment]:
        """Fetch the global proof for a sealed index and finish the commitments.

        Raises PendingError if the index is not sealed yet, NotFoundError if the
        notary left the entry out of the block.
        """
        block = self.notary.get_block(pending.index) if pending.index < self.notary.current_index() else None
        if block is None:
            raise PendingError(f"index {pending.index} not sealed yet")
        global_proof = self.notary.get_proof(pending.index, pending.global_key)
        built = {
            path: assemble_commitment(
                index=pending.index,
                public_key=self.public_key,
                global_path=self.state.global_path,
                tag=pending.tag,
                local_path=path,
                envelope=envelope,
                local_proof=pending.local_proofs[path],
                local_root=pending.local_map.root,
                global_proof=global_proof,
                block_root=block.payload,
            )
            for path, envelope in pending.envelopes.items()
        }
        for c in built.values():
            self._index(c)
            if self._commitment_file is not None:
                self._commitment_file.append(c.to_json())
        return built

    def commit_cycle(
        self,
        contents: Mapping[str, bytes],
        index: int,
        *,
        wait: Optional[Callable[[int], None]] = None,
    ) -> dict[str, Commitment]:
        """Commit ``contents`` at ``index`` and return the finished commitments.

        ``wait`` is called with the index between submission and proof
        retrieval; by default the notary is polled until the block appears.
        """
        pending = self.submit(contents, index)
        (wait or self._poll_sealed)(index)
        return self.complete(pending)

    def _poll_sealed(self, index: int, timeout: float = 60.0, interval: float = 0.05) -> None:
        deadline = time.monotonic() + timeout
        while self.notary.current_index() <= index:
            if time.monotonic() > deadline:
                raise PendingError(f"index {index} not sealed within {timeout}s")
            time.sleep(interval)

    def audit_promises(self, chain_view: NotaryAPI | None = None, since: int = 0) -> list[Evidence]:
        """Evidence for every logged promise (index >= ``since``) the sealed chain broke."""
        view = chain_view or self.notary
        current = view.current_index()
        evidence = []
        for promise in self.state.promise_log:
            if promise.index < since or promise.index >= current:
                continue
            block = view.get_block(promise.index)
            try:
                proof = view.get_proof(promise.index, promise.global_key)
            except NotFoundError:
                evidence.append(Evidence(promise, block))
                continue
            except (GoneError, PendingError):
                continue
            if get_root(promise.global_key, promise.global_value, proof) != block.payload:
                evidence.append(Evidence(promise, block))
        return evidence

    def commitments(self) -> list[Commitment]:
        return [self.state.commitment_store[k] for k in sorted(self.state.commitment_store)]

    def export_commitments(self, window: Optional[WindowSpec] = None) -> list[dict[str, Any]]:
        return [c.to_json() for c in self.commitments() if window is None or c.index in window]

    def import_commitments(
        self, records: Iterable[Mapping[str, Any]], block_roots: Mapping[int, bytes] | Callable[[int], bytes]
    ) -> tuple[list[Commitment], list[tuple[Any, str]]]:
        return import_commitments(self, records, block_roots)


def import_commitments(
    ledger: Ledger,
    records: Iterable[Mapping[str, Any]],
    block_roots: Mapping[int, bytes] | Callable[[int], bytes],
) -> tuple[list[Commitment], list[tuple[Any, str]]]:
    """Merge exported records into ``ledger``'s store.

    Each record is checked against its block root independently; bad ones are
    returned with a reason and the rest are merged.
    """
    lookup = block_roots if callable(block_roots) else block_roots.get
    accepted, rejected = [], []
    for record in records:
        try:
            c = Commitment.from_json(record)
        except EncodingError as exc:
            rejected.append((record, str(exc)))
            continue
        try:
            root = lookup(c.index)
        except SynchronicError as exc:
            root = None
            log.debug("no root for %s: %s", c.index, exc)
        if root is None:
            rejected.append((record, f"no block root for index {c.index}"))
            continue
        if not verify_commitment(c, root):
            rejected.append((record, "does not verify against its block root"))
            continue
        existing = ledger.state.commitment_store.get((c.index, c.local_path))
        if existing is not None and existing != c:
            rejected.append((record, "conflicts with a stored commitment"))
            continue
        if existing is None:
            ledger._index(c)
            if ledger._commitment_file is not None:
                ledger._commitment_file.append(c.to_json())
        accepted.append(c)
    return accepted, rejected
