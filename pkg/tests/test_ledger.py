import json

import pytest

from conftest import advance_to, sealing_wait
from synchronic.commitment import WindowSpec, verify_commitment
from synchronic.errors import ConflictError, NotFoundError, PendingError, PeriodError
from synchronic.ledger import FileResolver, Ledger, LedgerState, import_commitments


def drop_and_seal(notary, index):
    """Seal ``index`` with an empty map, as a notary breaking its promises would."""
    block, tree = notary.propose(index, entries={})
    notary.append_block(block, tree)


def test_file_resolver(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "a.html").write_bytes(b"A")
    (tmp_path / "sub" / "b.html").write_bytes(b"B")
    plain = FileResolver(tmp_path)
    assert plain.paths() == ["a.html", "sub/b.html"]
    assert plain.resolve_all() == {"a.html": b"A", "sub/b.html": b"B"}
    base = "https://x.example/"
    r = FileResolver(tmp_path, base_url=base)
    assert r.paths() == [base + "a.html", base + "sub/b.html"]
    assert r.resolve(base + "sub/b.html") == b"B"
    for bad in (base + "../etc/passwd", base + "missing.html", "sub/b.html"):
        with pytest.raises(NotFoundError):
            r.resolve(bad)


def test_commit_cycle_produces_verifying_commitments(notary, make_ledger):
    ledger = make_ledger(notary)
    cs = ledger.commit_cycle({"a": b"1", "b": b"2"}, 1, wait=sealing_wait(notary))
    assert set(cs) == {"a", "b"}
    for c in cs.values():
        assert verify_commitment(c, notary.block_root(1))
        assert c.envelope.sequence == 0 and c.envelope.index == 1


def test_sequences_advance_per_path(notary, make_ledger):
    ledger = make_ledger(notary)
    ledger.commit_cycle({"a": b"1"}, 1, wait=sealing_wait(notary))
    cs = ledger.commit_cycle({"a": b"2", "b": b"x"}, 2, wait=sealing_wait(notary))
    assert cs["a"].envelope.sequence == 1
    assert cs["b"].envelope.sequence == 0


def test_misaligned_index_rejected_before_network(make_ledger):
    class CountingNotary:
        calls = 0

        def submit_commit(self, *a, **k):
            self.calls += 1

    fake = CountingNotary()
    ledger = make_ledger(fake, periodicity=1)
    with pytest.raises(PeriodError):
        ledger.submit({"a": b"1"}, 3)
    assert fake.calls == 0


def test_failed_cycle_leaves_state_untouched(notary, make_ledger):
    ledger = make_ledger(notary)
    pending = ledger.prepare({"a": b"1"}, 1)
    notary.submit_commit(1, pending.global_key, b"\x09" * 32)
    with pytest.raises(ConflictError):
        ledger.commit_cycle({"a": b"1"}, 1, wait=sealing_wait(notary))
    assert ledger.state.next_sequence == {} and ledger.commitments() == []
    assert ledger.state.promise_log == []


def test_complete_before_seal_is_pending(notary, make_ledger):
    ledger = make_ledger(notary)
    pending = ledger.submit({"a": b"1"}, 1)
    with pytest.raises(PendingError):
        ledger.complete(pending)
    notary.seal_block()
    assert "a" in ledger.complete(pending)


def test_audit_honest_notary_has_no_evidence(notary, make_ledger):
    ledger = make_ledger(notary)
    for i in range(1, 4):
        ledger.commit_cycle({"a": b"%d" % i}, i, wait=sealing_wait(notary))
    assert ledger.audit_promises() == []


def test_audit_detects_dropped_promise(notary, make_ledger):
    ledger = make_ledger(notary)
    pending = ledger.submit({"a": b"1"}, 1)
    drop_and_seal(notary, 1)
    with pytest.raises(NotFoundError):
        ledger.complete(pending)
    evidence = ledger.audit_promises()
    assert len(evidence) == 1
    ev = evidence[0]
    assert ev.promise == pending.promise and ev.block.index == 1
    assert ev.promise.verify(notary.public_key)
    assert ledger.audit_promises(since=2) == []


def test_persistence_across_restart(tmp_path, notary, alice_keys):
    files = dict(commitment_file=tmp_path / "c.jsonl", promise_file=tmp_path / "p.jsonl")
    ledger = Ledger(LedgerState(alice_keys, "https://a/"), notary, **files)
    ledger.commit_cycle({"a": b"1"}, 1, wait=sealing_wait(notary))
    again = Ledger(LedgerState(alice_keys, "https://a/"), notary, **files)
    assert again.commitments() == ledger.commitments()
    assert again.state.next_sequence == {"a": 1}
    assert len(again.state.promise_log) == 1


def test_export_import_roundtrip(notary, make_ledger, bob_keys):
    alice = make_ledger(notary)
    for i in range(1, 6):
        alice.commit_cycle({"a": b"%d" % i}, i, wait=sealing_wait(notary))
    exported = alice.export_commitments(WindowSpec(2, 4))
    assert [r["index"] for r in exported] == [2, 3, 4]
    json.dumps(exported)

    bob = make_ledger(notary, keys=bob_keys, global_path="https://bob/")
    tampered = dict(exported[0], localRoot="00" * 32)
    accepted, rejected = bob.import_commitments(exported + [tampered, {"index": "x"}], notary.block_root)
    assert len(accepted) == 3 and len(rejected) == 2
    assert {c.index for c in bob.commitments()} == {2, 3, 4}


def test_import_merges_disjoint_windows(notary, make_ledger, alice_keys):
    alice = make_ledger(notary)
    for i in range(1, 7):
        alice.commit_cycle({"a": b"%d" % i}, i, wait=sealing_wait(notary))
    merged = Ledger(LedgerState(alice_keys, "https://alice.example/"), notary)
    roots = {i: notary.block_root(i) for i in range(notary.current_index())}
    import_commitments(merged, alice.export_commitments(WindowSpec(1, 3)), roots)
    import_commitments(merged, alice.export_commitments(WindowSpec(4, 6)), roots)
    assert merged.commitments() == alice.commitments()


def test_empty_contents_still_commit(notary, make_ledger):
    ledger = make_ledger(notary)
    advance_to(notary, 2)
    assert ledger.commit_cycle({}, 2, wait=sealing_wait(notary)) == {}
    assert notary.block_root(2) != b""


def test_store_self_audit_and_sequences(notary, make_ledger):
    import random

    ledger = make_ledger(notary)
    rng = random.Random(3)
    paths = ["a", "b", "c"]
    for index in range(1, 15):
        chosen = rng.sample(paths, rng.randrange(1, 4))
        ledger.commit_cycle({p: rng.randbytes(4) for p in chosen}, index, wait=sealing_wait(notary))
    for path in paths:
        seqs = [c.envelope.sequence for c in ledger.commitments() if c.local_path == path]
        assert seqs == list(range(len(seqs)))
    for c in ledger.commitments():
        assert verify_commitment(c, notary.block_root(c.index))


def test_evidence_rebuilt_from_promise_log(tmp_path, notary, alice_keys):
    files = dict(promise_file=tmp_path / "p.jsonl")
    ledger = Ledger(LedgerState(alice_keys, "https://a/"), notary, **files)
    ledger.submit({"a": b"1"}, 1)
    drop_and_seal(notary, 1)
    fresh = Ledger(LedgerState(alice_keys, "https://a/"), notary, **files)
    assert [e.to_json() for e in fresh.audit_promises()] == [e.to_json() for e in ledger.audit_promises()]
    assert len(fresh.audit_promises()) == 1
