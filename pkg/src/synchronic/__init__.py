"""Commit content hashes into per-block verifiable maps and prove them later.

The usual path: a :class:`~synchronic.ledger.Ledger` commits content to a
:class:`~synchronic.notary.Notary`, which seals the global map root into a
block; anyone holding the block root can check the resulting
:class:`~synchronic.commitment.Commitment` with
:func:`~synchronic.verifier.verify_single`.
"""

from synchronic.commitment import (
    Commitment,
    ContentEnvelope,
    WindowSpec,
    assemble_commitment,
    build_local_map,
    check_period,
    derive_global_key,
    derive_global_value,
    validate_window,
    verify_commitment,
)
from synchronic.consensus import FaultBehavior, SimConfig, SimTrace, simulate
from synchronic.crypto import EMPTY_DIGEST, AuthKeypair, encode, hash_bytes, keygen, sign_unique, verify_unique
from synchronic.ledger import FileResolver, Ledger, LedgerState
from synchronic.notary import Block, BlockLog, Notary, NotaryConfig, Promise, verify_chain
from synchronic.verifier import AuthenticatedChain, Verdict, VerdictReport, verify_history, verify_single
from synchronic.vmap import VerifiableMap, get_proof, get_root, get_tree, get_tree_parallel

__version__ = "0.1.0"

__all__ = [
    "assemble_commitment",
    "AuthenticatedChain",
    "AuthKeypair",
    "Block",
    "BlockLog",
    "build_local_map",
    "check_period",
    "Commitment",
    "ContentEnvelope",
    "derive_global_key",
    "derive_global_value",
    "EMPTY_DIGEST",
    "encode",
    "FaultBehavior",
    "FileResolver",
    "get_proof",
    "get_root",
    "get_tree",
    "get_tree_parallel",
    "hash_bytes",
    "keygen",
    "Ledger",
    "LedgerState",
    "Notary",
    "NotaryConfig",
    "Promise",
    "sign_unique",
    "SimConfig",
    "SimTrace",
    "simulate",
    "validate_window",
    "Verdict",
    "VerdictReport",
    "VerifiableMap",
    "verify_chain",
    "verify_commitment",
    "verify_history",
    "verify_single",
    "verify_unique",
    "WindowSpec",
]
