"""Reader-side checks with a three-valued outcome.

A verdict is VALID, INVALID, or INCONCLUSIVE. Inconclusive means the chain
source could not be consulted, which says nothing about the commitment.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Protocol, Sequence

from synchronic.commitment import Commitment, WindowSpec, commitment_checks, evaluate_window
from synchronic.crypto import hash_bytes
from synchronic.errors import ChainUnavailableError, NotFoundError, SynchronicError
from synchronic.notary import verify_block_signatures


class ChainSource(Protocol):
    def block_root(self, index: int) -> bytes: ...


class AuthenticatedChain:
    """Chain source that only vouches for blocks carrying ``quorum`` valid
    signatures from the configured notary keys.

    A block failing that test makes verification inconclusive, not false:
    a lying source says nothing about the commitment itself.
    """

    def __init__(self, source, public_keys: Mapping[str, bytes], quorum: int = 1):
        if quorum < 1:
            raise ValueError("quorum must be positive")
        self.source = source
        self.public_keys = dict(public_keys)
        self.quorum = quorum

    def block_root(self, index: int) -> bytes:
        block = self.source.get_block(index)
        if index > 0 and not verify_block_signatures(block, self.public_keys, self.quorum):
            raise ChainUnavailableError(f"block {index} lacks {self.quorum} valid notary signatures")
        return block.payload


class Verdict(enum.Enum):
    VALID = "valid"
    INVALID = "invalid"
    INCONCLUSIVE = "inconclusive"


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class VerdictReport:
    verdict: Verdict
    checks: list[Check] = field(default_factory=list)
    facts: dict[str, Any] = field(default_factory=dict)

    @property
    def overall(self) -> Optional[bool]:
        """True, False, or None when inconclusive."""
        if self.verdict is Verdict.INCONCLUSIVE:
            return None
        return self.verdict is Verdict.VALID

    def to_json(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "overall": self.overall,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
            **self.facts,
        }

    def render(self) -> str:
        width = max([len(c.name) for c in self.checks] + [5])
        lines = [f"verdict: {self.verdict.value}"]
        for key, value in self.facts.items():
            lines.append(f"{key}: {value}")
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            lines.append(f"  {c.name:<{width}}  {mark}  {c.detail}".rstrip())
        return "\n".join(lines)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _fetch_root(chain_source: ChainSource, index: int) -> bytes:
    """Block root, or ChainUnavailableError if the source cannot answer."""
    try:
        return chain_source.block_root(index)
    except NotFoundError:
        # a chain that does not reach this index yet cannot vouch either way
        raise ChainUnavailableError(f"chain source has no block {index}")
    except ChainUnavailableError:
        raise
    except (SynchronicError, OSError) as exc:
        raise ChainUnavailableError(str(exc)) from exc


def verify_single(c: Commitment, chain_source: ChainSource, content: Optional[bytes] = None) -> VerdictReport:
    """Check one commitment; with ``content``, also that it is what was committed."""
    try:
        root = _fetch_root(chain_source, c.index)
    except ChainUnavailableError as exc:
        return VerdictReport(Verdict.INCONCLUSIVE, [Check("chain-available", False, str(exc))])
    checks = [Check(name, ok, detail) for name, ok, detail in commitment_checks(c, root)]
    if content is not None:
        checks.insert(0, Check("content-digest", hash_bytes(content) == c.envelope.payload_digest))
    verdict = Verdict.VALID if all(ch.passed for ch in checks) else Verdict.INVALID
    return VerdictReport(verdict, checks, {"index": c.index, "localPath": c.local_path})


def verify_history(cs: Sequence[Commitment], w: WindowSpec, chain_source: ChainSource) -> VerdictReport:
    facts = {"expected": w.expected, "present": 0, "threshold": w.threshold}
    roots: dict[int, bytes] = {}
    for c in cs:
        if c.index in w and c.index not in roots:
            try:
                roots[c.index] = _fetch_root(chain_source, c.index)
            except ChainUnavailableError as exc:
                return VerdictReport(
                    Verdict.INCONCLUSIVE, [Check("chain-available", False, str(exc))], facts
                )
    result = evaluate_window(cs, w, roots)
    facts["present"] = result.present
    checks = [
        Check("window-coverage", result.covered,
              f"{result.present} of {result.expected}, need {result.threshold}"),
    ]
    checks += [Check("window-rule", False, reason) for reason in result.reasons]
    if not result.reasons:
        checks.append(Check("window-rule", True, "sequence contiguous, indices aligned, all verify"))
    verdict = Verdict.VALID if result.valid else Verdict.INVALID
    return VerdictReport(verdict, checks, facts)
