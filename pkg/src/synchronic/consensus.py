"""Deterministic simulation of a permissioned notary network.

Rounds are synchronous and broadcast is reliable; misbehaviour comes only
from the notaries assigned a :class:`FaultBehavior`. Each round seals one
index. The leader of view ``v`` at index ``i`` is
``membership[(i + v) % len(membership)]``; a silent leader, or a proposal
that cannot gather ``2f + 1`` signatures, moves the round to the next view.

Ledgers submit to the live leader, keep its signed promises, and audit the
finalized block. A promise the block does not honor becomes evidence; the
members vote on it at the start of the next round and a quorum of votes
removes the promising notary.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

from synchronic.crypto import keygen
from synchronic.errors import ConfigError, EvidenceError, NotFoundError
from synchronic.ledger import Ledger, LedgerState, PendingCycle
from synchronic.notary import (
    Block,
    Evidence,
    Notary,
    NotaryConfig,
    Promise,
    verify_block_signatures,
    verify_chain,
)
from synchronic.vmap import VerifiableMap, get_tree

FAULT_KINDS = ("honest", "drop_commits", "equivocate", "silent")
DEFAULT_B = 3


@dataclass(frozen=True)
class FaultBehavior:
    notary: int
    kind: str
    # misbehave only at this index; every index when None
    round: Optional[int] = None

    def active(self, index: int) -> bool:
        return self.kind != "honest" and (self.round is None or self.round == index)


@dataclass(frozen=True)
class SimConfig:
    n: int
    f: int
    b: int = DEFAULT_B
    rounds: int = 10
    seed: int = 0
    ledgers: int = 4
    key_bits: int = 2048

    @property
    def quorum(self) -> int:
        return 2 * self.f + 1

    def validate(self, faults: Sequence[FaultBehavior] = ()) -> None:
        if self.n < 1:
            raise ConfigError("need at least one notary")
        if self.f < 0 or 3 * self.f >= self.n:
            raise ConfigError(f"f={self.f} violates f < n/3 for n={self.n}")
        if self.b < 1:
            raise ConfigError("removal bound b must be at least 1")
        if self.rounds < 0 or self.ledgers < 0:
            raise ConfigError("rounds and ledgers must be non-negative")
        faulty = set()
        for fault in faults:
            if fault.kind not in FAULT_KINDS:
                raise ConfigError(f"unknown fault kind {fault.kind!r}")
            if not 0 <= fault.notary < self.n:
                raise ConfigError(f"fault names notary {fault.notary}, but n={self.n}")
            if fault.kind != "honest":
                faulty.add(fault.notary)
        if len(faulty) > self.f:
            raise ConfigError(f"{len(faulty)} faulty notaries exceed f={self.f}")


def load_scenario(source: str | os.PathLike | Mapping[str, Any]) -> tuple[SimConfig, list[FaultBehavior]]:
    """Parse ``{n, f, b, rounds, seed, faults: [{notary, kind, round}], ledgers}``."""
    if isinstance(source, Mapping):
        spec = dict(source)
    else:
        with open(source, encoding="utf-8") as fh:
            try:
                spec = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{source}: {exc}") from exc
    try:
        config = SimConfig(
            n=int(spec["n"]),
            f=int(spec["f"]),
            b=int(spec.get("b", DEFAULT_B)),
            rounds=int(spec.get("rounds", 10)),
            seed=int(spec.get("seed", 0)),
            ledgers=int(spec.get("ledgers", 4)),
            key_bits=int(spec.get("key_bits", 2048)),
        )
        faults = [
            FaultBehavior(int(x["notary"]), str(x["kind"]), None if x.get("round") is None else int(x["round"]))
            for x in spec.get("faults", [])
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scenario: {exc!r}") from exc
    config.validate(faults)
    return config, faults


@dataclass
class RoundRecord:
    index: int
    leader: Optional[str] = None
    views: list[dict[str, Any]] = field(default_factory=list)
    payload: Optional[str] = None
    block_hash: Optional[str] = None
    signers: list[str] = field(default_factory=list)
    membership: list[str] = field(default_factory=list)
    promises_issued: list[dict[str, Any]] = field(default_factory=list)
    promises_fulfilled: list[dict[str, Any]] = field(default_factory=list)
    removals: list[dict[str, Any]] = field(default_factory=list)
    events: list[str] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class SimTrace:
    config: SimConfig
    faults: list[FaultBehavior]
    records: list[RoundRecord] = field(default_factory=list)
    chains: dict[str, list[Block]] = field(default_factory=dict)
    honest: list[str] = field(default_factory=list)
    violations: list[dict[str, Any]] = field(default_factory=list)
    removals: list[dict[str, Any]] = field(default_factory=list)
    failed: bool = False

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in self.records)

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

    def honest_chains_agree(self) -> bool:
        chains = [self.chains[h] for h in self.honest]
        return all(c == chains[0] for c in chains[1:])

    def removal_delays(self) -> dict[int, Optional[int]]:
        """For each violated index, blocks until the violator was removed (None if never)."""
        delays: dict[int, Optional[int]] = {}
        for v in self.violations:
            removed = [r["at"] for r in self.removals if r["notary"] == v["notary"] and r["at"] > v["index"]]
            delays[v["index"]] = (min(removed) - v["index"]) if removed else None
        return delays


def notary_id(i: int) -> str:
    return f"notary-{i}"


class _Gateway:
    """The ledgers' view of the network: submit to the live leader, read from an honest member."""

    def __init__(self, sim: "Simulation"):
        self.sim = sim
        self.leader: Optional[Notary] = None

    def submit_commit(self, index: int, global_key: bytes, global_value: bytes, source: str = "") -> Promise:
        assert self.leader is not None
        return self.leader.submit_commit(index, global_key, global_value, source=source)

    def _reader(self) -> Notary:
        return self.sim.nodes[self.sim.reference_member()]

    def get_proof(self, index, global_key):
        return self._reader().get_proof(index, global_key)

    def get_block(self, index):
        return self._reader().get_block(index)

    def current_index(self):
        return self._reader().current_index()


def detect_and_remove(
    node: Notary,
    evidence: Evidence,
    public_keys: Mapping[str, bytes],
    membership: Sequence[str],
) -> str:
    """Validate removal evidence against ``node``'s own chain; return the accused id.

    Raises EvidenceError for forged or inconsistent evidence.
    """
    promise = evidence.promise
    accused = promise.notary_id
    if accused not in membership:
        raise EvidenceError(f"{accused} is not a member")
    key = public_keys.get(accused)
    if key is None or not promise.verify(key):
        raise EvidenceError("promise signature does not verify")
    try:
        block = node.get_block(promise.index)
    except NotFoundError:
        raise EvidenceError(f"block {promise.index} is not finalized") from None
    if block.hash != evidence.block.hash or block.index != promise.index:
        raise EvidenceError("evidence block is not the finalized block for the promised index")
    tree = node.retained_map(promise.index)
    if tree is None:
        raise EvidenceError(f"map for index {promise.index} no longer retained")
    if tree.get(promise.global_key) == promise.global_value:
        raise EvidenceError("promise was honored")
    return accused


class Simulation:
    def __init__(self, config: SimConfig, faults: Sequence[FaultBehavior] = ()):
        config.validate(faults)
        self.config = config
        self.rng = random.Random(config.seed)
        self.faults = {notary_id(f.notary): f for f in faults if f.kind != "honest"}
        self.nodes: dict[str, Notary] = {}
        self.public_keys: dict[str, bytes] = {}
        for i in range(config.n):
            nid = notary_id(i)
            kp = keygen(f"sim-{config.seed}-{nid}".encode(), config.key_bits)
            self.nodes[nid] = Notary(NotaryConfig(nid, kp))
            self.public_keys[nid] = kp.public_key
        self.membership: list[str] = list(self.nodes)
        self.gateway = _Gateway(self)
        self.ledgers: list[Ledger] = []
        for j in range(config.ledgers):
            kp = keygen(f"sim-{config.seed}-ledger-{j}".encode(), config.key_bits)
            state = LedgerState(kp, global_path="sim://industry/feed")
            self.ledgers.append(Ledger(state, self.gateway, source=f"ledger-{j}"))
        self.trace = SimTrace(config, list(faults), honest=[n for n in self.nodes if n not in self.faults])
        self._evidence: list[Evidence] = []
        self._seen_evidence: set[bytes] = set()

    def fault(self, nid: str, index: int) -> Optional[str]:
        f = self.faults.get(nid)
        return f.kind if f is not None and f.active(index) else None

    def is_honest(self, nid: str) -> bool:
        return nid not in self.faults

    def reference_member(self) -> str:
        return next(m for m in self.membership if self.is_honest(m))

    # -- evidence and removal -------------------------------------------------

    def _process_evidence(self, record: RoundRecord) -> None:
        pending, self._evidence = self._evidence, []
        for ev in pending:
            if ev.accused not in self.membership:
                continue
            votes = 0
            for member in self.membership:
                if not self.is_honest(member):
                    continue  # a Byzantine member never helps remove anyone
                try:
                    detect_and_remove(self.nodes[member], ev, self.public_keys, self.membership)
                except EvidenceError as exc:
                    record.events.append(f"{member} rejected evidence: {exc}")
                    continue
                votes += 1
            accused = ev.accused
            if votes >= self.config.quorum and accused in self.membership:
                self.membership.remove(accused)
                removal = {"notary": accused, "violation": ev.promise.index, "at": record.index}
                record.removals.append(removal)
                self.trace.removals.append(removal)

    def submit_evidence(self, ev: Evidence) -> None:
        if ev.promise.signature not in self._seen_evidence:
            self._seen_evidence.add(ev.promise.signature)
            self._evidence.append(ev)

    # -- one round --------------------------------------------------------------

    def _contents(self, j: int, index: int) -> dict[str, bytes]:
        return {f"https://ledger-{j}.example/feed": self.rng.randbytes(32)}

    def run_round(self, index: int) -> Optional[Block]:
        record = RoundRecord(index)
        self._process_evidence(record)
        record.membership = list(self.membership)
        contents = [self._contents(j, index) for j in range(len(self.ledgers))]
        pendings: dict[int, PendingCycle] = {}
        finalized: Optional[tuple[Block, VerifiableMap]] = None

        for view in range(len(self.membership)):
            leader_id = self.membership[(index + view) % len(self.membership)]
            leader = self.nodes[leader_id]
            behavior = self.fault(leader_id, index)
            if behavior == "silent":
                record.views.append({"view": view, "leader": leader_id, "outcome": "silent"})
                continue

            self.gateway.leader = leader
            for j, ledger in enumerate(self.ledgers):
                pendings[j] = ledger.submit(contents[j], index)
                p = pendings[j].promise
                record.promises_issued.append({"notary": leader_id, "ledger": j, "key": p.global_key.hex()})

            entries = leader.pending_entries(index)
            if behavior == "drop_commits":
                entries = {}
            proposal, _ = leader.propose(index, entries)
            proposals = [(proposal, entries)]
            if behavior == "equivocate":
                forged = dict(entries)
                forged[self.rng.randbytes(32)] = self.rng.randbytes(32)
                alt, _ = leader.propose(index, forged)
                proposals.append((alt, forged))

            outcome = self._collect_votes(index, leader_id, proposals)
            if outcome is None:
                record.views.append({"view": view, "leader": leader_id, "outcome": "no-quorum"})
                continue
            block, batch = outcome
            record.views.append({"view": view, "leader": leader_id, "outcome": "finalized"})
            record.leader = leader_id
            finalized = (block, get_tree(batch))
            break

        self.gateway.leader = None
        if finalized is None:
            record.events.append("consensus-failure: no view reached quorum")
            self.trace.failed = True
            self.trace.records.append(record)
            return None

        block, tree = finalized
        for member in self.membership:
            self.nodes[member].append_block(block, tree)
        record.payload = block.payload.hex()
        record.block_hash = block.hash.hex()
        record.signers = [nid for nid, _ in block.quorum_signatures]

        for j, ledger in enumerate(self.ledgers):
            pending = pendings.get(j)
            if pending is None:
                continue
            try:
                ledger.complete(pending)
                record.promises_fulfilled.append({"ledger": j, "key": pending.global_key.hex()})
            except NotFoundError:
                record.events.append(f"ledger-{j}: promised entry missing from block {index}")
            for ev in ledger.audit_promises(since=index):
                violation = {"notary": ev.accused, "index": index}
                if violation not in self.trace.violations:
                    self.trace.violations.append(violation)
                self.submit_evidence(ev)

        self.trace.records.append(record)
        return block

    def _collect_votes(
        self, index: int, leader_id: str, proposals: list[tuple[Block, dict[bytes, bytes]]]
    ) -> Optional[tuple[Block, dict[bytes, bytes]]]:
        """Deliver proposals, gather signatures, return the one that reaches quorum."""
        others = [m for m in self.membership if m != leader_id]
        delivered: dict[str, int] = {}
        if len(proposals) == 1:
            delivered = {m: 0 for m in others}
        else:
            honest = [m for m in others if self.is_honest(m)]
            self.rng.shuffle(honest)
            half = (len(honest) + 1) // 2
            for pos, m in enumerate(honest):
                delivered[m] = 0 if pos < half else 1
            for m in others:
                delivered.setdefault(m, 0)

        signatures: list[list[tuple[str, bytes]]] = [[] for _ in proposals]
        leader = self.nodes[leader_id]
        for k, (block, _) in enumerate(proposals):
            signatures[k].append(leader.sign_block(block))

        for member in others:
            node = self.nodes[member]
            behavior = self.fault(member, index)
            if behavior == "silent":
                continue
            if behavior == "equivocate":
                for k, (block, _) in enumerate(proposals):
                    signatures[k].append(node.sign_block(block))
                continue
            k = delivered[member]
            block, batch = proposals[k]
            if node.validate_proposal(block, batch) is not None:
                signatures[k].append(node.sign_block(block))

        winners = [
            (proposals[k][0].with_signatures(sorted(sigs)), proposals[k][1])
            for k, sigs in enumerate(signatures)
            if verify_block_signatures(proposals[k][0].with_signatures(sigs), self.public_keys, self.config.quorum)
        ]
        assert len(winners) <= 1, "two proposals reached quorum for one index"
        return winners[0] if winners else None

    def run(self) -> SimTrace:
        for index in range(1, self.config.rounds + 1):
            if self.run_round(index) is None:
                break
        for nid, node in self.nodes.items():
            self.trace.chains[nid] = node.get_chain()
        for member in self.trace.honest:
            if not verify_chain(self.trace.chains[member]):
                self.trace.failed = True
        return self.trace


def simulate(config: SimConfig, faults: Iterable[FaultBehavior] = ()) -> SimTrace:
    return Simulation(config, list(faults)).run()
