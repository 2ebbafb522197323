"""Command-line entry points.

Exit codes: 0 success, 1 verification false, 2 error or bad usage,
3 inconclusive (chain source unreachable).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from synchronic.commitment import Commitment, WindowSpec, check_period, period
from synchronic.consensus import load_scenario, simulate
from synchronic.crypto import AuthKeypair, keygen, public_key_of
from synchronic.errors import ChainUnavailableError, SynchronicError, TooLateError
from synchronic.ledger import FileResolver, Ledger, LedgerState
from synchronic.notary import BlockLog, Notary, NotaryConfig, verify_chain
from synchronic.service import NotaryClient, NotaryService
from synchronic.verifier import AuthenticatedChain, Verdict, verify_history, verify_single

EXIT_OK, EXIT_FALSE, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 1, 2, 3
CONFIG_ENV = "SYNCHRONIC_CONFIG"
DEFAULT_ENDPOINT = "http://127.0.0.1:8470"

log = logging.getLogger("synchronic")


class UsageError(Exception):
    pass


def load_config(path: Optional[str]) -> dict[str, Any]:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc


def _opt(args: argparse.Namespace, config: dict, name: str, default: Any = None) -> Any:
    value = getattr(args, name, None)
    if value is not None:
        return value
    return config.get(name, default)


def read_keyfile(path: str) -> AuthKeypair:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "seed" in data:
        return keygen(data["seed"].encode())
    secret = bytes.fromhex(data["secretKey"])
    return AuthKeypair(secret, public_key_of(secret))


def write_keyfile(path: str, keypair: AuthKeypair) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"secretKey": keypair.secret_key.hex(), "publicKey": keypair.public_key.hex()}, fh, indent=2)
    os.chmod(path, 0o600)


def _notary_keys(args, config) -> dict[str, bytes]:
    keys = {nid: bytes.fromhex(pk) for nid, pk in config.get("notary_keys", {}).items()}
    for item in getattr(args, "notary_key", None) or []:
        nid, sep, pk = item.partition("=")
        if not sep:
            raise UsageError(f"--notary-key expects ID=HEX, got {item!r}")
        keys[nid] = bytes.fromhex(pk)
    return keys


def _chain_source(args, config):
    chain = _opt(args, config, "chain")
    source = BlockLog(chain) if chain else NotaryClient(_opt(args, config, "endpoint", DEFAULT_ENDPOINT))
    keys = _notary_keys(args, config)
    if keys:
        return AuthenticatedChain(source, keys, int(_opt(args, config, "quorum", 1)))
    return source


def _load_commitments(paths: Sequence[str]) -> list[Commitment]:
    found = []
    for path in paths:
        text = Path(path).read_text(encoding="utf-8").strip()
        if not text:
            continue
        try:
            records = [json.loads(text)]
        except json.JSONDecodeError:
            records = [json.loads(line) for line in text.splitlines() if line.strip()]
        for record in records:
            items = record if isinstance(record, list) else [record]
            found.extend(Commitment.from_json(item) for item in items)
    return found


def _emit(args, payload: Any, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


# -- notary ------------------------------------------------------------------


def cmd_notary_serve(args, config) -> int:
    ncfg = config.get("notary", {})
    notary_id = args.notary_id or ncfg.get("id", "notary-0")
    if args.key or ncfg.get("key_file"):
        keypair = read_keyfile(args.key or ncfg["key_file"])
    else:
        keypair = keygen((args.seed or ncfg.get("seed") or notary_id).encode())
    interval = args.block_interval if args.block_interval is not None else ncfg.get("block_interval", 10.0)
    notary = Notary(
        NotaryConfig(
            notary_id,
            keypair,
            retention_blocks=args.retention or ncfg.get("retention", 1024),
            block_interval=interval,
            rate_limit=args.rate_limit or ncfg.get("rate_limit", 100),
        ),
        block_log=BlockLog(args.block_log or ncfg["block_log"]) if (args.block_log or ncfg.get("block_log")) else None,
    )
    service = NotaryService(notary, args.host or ncfg.get("host", "127.0.0.1"), args.port if args.port is not None else ncfg.get("port", 8470), interval)
    print(f"notary {notary_id} serving on {service.endpoint} (current index {notary.current_index()})", flush=True)
    service.serve_forever()
    return EXIT_OK


# -- ledger ------------------------------------------------------------------


def cmd_ledger_keygen(args, config) -> int:
    seed = args.seed.encode() if args.seed else os.urandom(32)
    keypair = keygen(seed)
    write_keyfile(args.out, keypair)
    _emit(args, {"publicKey": keypair.public_key.hex()}, f"wrote {args.out}")
    return EXIT_OK


def _ledger(args, config) -> Ledger:
    key = _opt(args, config, "key")
    if not key:
        raise UsageError("a key file is required (--key or 'key' in the config)")
    global_path = _opt(args, config, "global_path")
    if not global_path:
        raise UsageError("a global path is required (--global-path or 'global_path' in the config)")
    state = LedgerState(read_keyfile(key), global_path, int(_opt(args, config, "periodicity", 0)))
    return Ledger(
        state,
        NotaryClient(_opt(args, config, "endpoint", DEFAULT_ENDPOINT)),
        commitment_file=_opt(args, config, "store"),
        promise_file=_opt(args, config, "promises"),
    )


def _next_aligned(index: int, periodicity: int) -> int:
    step = period(periodicity)
    return -(-index // step) * step


def cmd_ledger_commit(args, config) -> int:
    ledger = _ledger(args, config)
    resolver = FileResolver(args.directory, args.base_url or config.get("base_url", ""))
    contents = resolver.resolve_all()
    if not contents:
        raise UsageError(f"nothing to commit under {args.directory}")
    p = ledger.state.periodicity
    attempts = 1 if args.index is not None else 3
    for attempt in range(attempts):
        index = args.index if args.index is not None else _next_aligned(ledger.notary.current_index(), p)
        if not check_period(index, p):
            raise UsageError(f"index {index} is not divisible by the period 2**{p}")
        try:
            commitments = ledger.commit_cycle(contents, index)
            break
        except TooLateError:
            if attempt == attempts - 1:
                raise
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for path, c in commitments.items():
            name = path.replace("://", "_").replace("/", "_") + f".{c.index}.json"
            (out / name).write_text(json.dumps(c.to_json(), indent=2))
    payload = [c.to_json() for c in commitments.values()]
    text = "\n".join(f"committed {path} at index {c.index} (sequence {c.envelope.sequence})"
                     for path, c in commitments.items())
    _emit(args, payload, text)
    return EXIT_OK


def cmd_ledger_audit(args, config) -> int:
    ledger = _ledger(args, config)
    evidence = ledger.audit_promises(since=args.since or 0)
    payload = [e.to_json() for e in evidence]
    if evidence:
        text = "\n".join(f"broken promise: {e.accused} index {e.promise.index} key {e.promise.global_key.hex()}"
                         for e in evidence)
    else:
        text = f"all {len(ledger.state.promise_log)} promises honored (or not yet checkable)"
    _emit(args, payload, text)
    return EXIT_FALSE if evidence else EXIT_OK


# -- verify ------------------------------------------------------------------


def _verdict_exit(verdict: Verdict) -> int:
    return {Verdict.VALID: EXIT_OK, Verdict.INVALID: EXIT_FALSE, Verdict.INCONCLUSIVE: EXIT_INCONCLUSIVE}[verdict]


def cmd_verify_commitment(args, config) -> int:
    try:
        commitments = _load_commitments([args.file])
    except (SynchronicError, ValueError, KeyError) as exc:
        # an unparseable commitment is a commitment that does not verify
        _emit(args, {"verdict": "invalid", "overall": False, "error": str(exc)}, f"verdict: invalid ({exc})")
        return EXIT_FALSE
    if not commitments:
        raise UsageError(f"{args.file} holds no commitment")
    source = _chain_source(args, config)
    content = Path(args.content).read_bytes() if args.content else None
    reports = [verify_single(c, source, content) for c in commitments]
    order = [Verdict.INCONCLUSIVE, Verdict.INVALID, Verdict.VALID]
    worst = min((r.verdict for r in reports), key=order.index)
    if len(reports) == 1:
        _emit(args, reports[0].to_json(), reports[0].render())
    else:
        _emit(args, [r.to_json() for r in reports], "\n\n".join(r.render() for r in reports))
    return _verdict_exit(worst)


def cmd_verify_history(args, config) -> int:
    if args.window_start is None or args.window_end is None:
        raise UsageError("--window-start and --window-end are required")
    try:
        window = WindowSpec(args.window_start, args.window_end, int(_opt(args, config, "periodicity", 0)))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    try:
        commitments = _load_commitments(args.files)
    except (SynchronicError, ValueError, KeyError) as exc:
        _emit(args, {"verdict": "invalid", "overall": False, "error": str(exc)}, f"verdict: invalid ({exc})")
        return EXIT_FALSE
    report = verify_history(commitments, window, _chain_source(args, config))
    _emit(args, report.to_json(), report.render())
    return _verdict_exit(report.verdict)


# -- chain -------------------------------------------------------------------


def cmd_chain_show(args, config) -> int:
    source = _chain_source(args, config)
    if isinstance(source, AuthenticatedChain):
        source = source.source
    if isinstance(source, BlockLog):
        blocks = source.load()
        end = args.to if args.to is not None else len(blocks) - 1
        blocks = [b for b in blocks if args.start <= b.index <= end]
    else:
        blocks = source.get_chain(args.start, args.to)
    intact = verify_chain(blocks)
    payload = {"intact": intact, "blocks": [b.to_json() for b in blocks]}
    lines = [f"{b.index:>6}  {b.hash.hex()[:16]}  root={b.payload.hex()[:16] or '(empty)'}" for b in blocks]
    lines.append(f"{len(blocks)} blocks, links {'intact' if intact else 'BROKEN'}")
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK if intact else EXIT_FALSE


# -- sim ---------------------------------------------------------------------


def cmd_sim_run(args, config) -> int:
    sim_config, faults = load_scenario(args.scenario)
    trace = simulate(sim_config, faults)
    if args.trace:
        trace.write(args.trace)
    delays = trace.removal_delays()
    late = {i: d for i, d in delays.items() if d is None or d > sim_config.b}
    ok = not trace.failed and trace.honest_chains_agree() and not late
    summary = {
        "rounds": len(trace.records),
        "failed": trace.failed,
        "honestChainsAgree": trace.honest_chains_agree(),
        "violations": trace.violations,
        "removals": trace.removals,
        "lateRemovals": {str(k): v for k, v in late.items()},
        "ok": ok,
    }
    text = (
        f"{len(trace.records)} rounds; honest chains {'agree' if summary['honestChainsAgree'] else 'DIVERGE'}; "
        f"{len(trace.violations)} violations; {len(trace.removals)} removals; "
        f"{'all within' if not late else 'NOT all within'} b={sim_config.b}"
    )
    _emit(args, summary, text)
    return EXIT_OK if ok else EXIT_FALSE


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def global_flags(default):
        # subcommands repeat these with SUPPRESS so they don't reset values given earlier
        p = argparse.ArgumentParser(add_help=False)
        p.add_argument("--config", default=default(None), help=f"JSON config file (falls back to ${CONFIG_ENV})")
        p.add_argument("--json", action="store_true", default=default(False), help="machine-readable output")
        p.add_argument("-v", "--verbose", action="store_true", default=default(False))
        return p

    common = global_flags(lambda _: argparse.SUPPRESS)

    source = argparse.ArgumentParser(add_help=False)
    source.add_argument("--endpoint", help=f"notary URL (default {DEFAULT_ENDPOINT})")
    source.add_argument("--chain", help="read blocks from a block log file instead of a notary")
    source.add_argument("--notary-key", action="append", metavar="ID=HEX",
                        help="trust blocks only when signed by these notary keys (repeatable)")
    source.add_argument("--quorum", type=int, help="signatures required with --notary-key (default 1)")

    ledger_opts = argparse.ArgumentParser(add_help=False)
    ledger_opts.add_argument("--endpoint")
    ledger_opts.add_argument("--key", help="key file written by 'ledger keygen'")
    ledger_opts.add_argument("--global-path", dest="global_path")
    ledger_opts.add_argument("--periodicity", type=int)
    ledger_opts.add_argument("--store", help="commitment store (JSON lines)")
    ledger_opts.add_argument("--promises", help="promise log (JSON lines)")

    parser = argparse.ArgumentParser(prog="synchronic", parents=[global_flags(lambda value: value)])
    groups = parser.add_subparsers(dest="group", required=True)

    notary = groups.add_parser("notary").add_subparsers(dest="command", required=True)
    serve = notary.add_parser("serve", parents=[common])
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)
    serve.add_argument("--notary-id")
    serve.add_argument("--key")
    serve.add_argument("--seed")
    serve.add_argument("--retention", type=int)
    serve.add_argument("--rate-limit", type=int)
    serve.add_argument("--block-interval", type=float, help="seconds between blocks; 0 seals on POST /seal")
    serve.add_argument("--block-log")
    serve.set_defaults(func=cmd_notary_serve)

    ledger = groups.add_parser("ledger").add_subparsers(dest="command", required=True)
    kg = ledger.add_parser("keygen", parents=[common])
    kg.add_argument("--seed", help="derive the key from this string (reproducible)")
    kg.add_argument("--out", required=True)
    kg.set_defaults(func=cmd_ledger_keygen)
    commit = ledger.add_parser("commit", parents=[common, ledger_opts])
    commit.add_argument("directory")
    commit.add_argument("--index", type=int)
    commit.add_argument("--base-url", dest="base_url")
    commit.add_argument("--out-dir", help="also write one commitment file per content item here")
    commit.set_defaults(func=cmd_ledger_commit)
    audit = ledger.add_parser("audit", parents=[common, ledger_opts])
    audit.add_argument("--since", type=int)
    audit.set_defaults(func=cmd_ledger_audit)

    verify = groups.add_parser("verify").add_subparsers(dest="command", required=True)
    vc = verify.add_parser("commitment", parents=[common, source])
    vc.add_argument("file")
    vc.add_argument("--content", help="also check this file is the committed content")
    vc.set_defaults(func=cmd_verify_commitment)
    vh = verify.add_parser("history", parents=[common, source])
    vh.add_argument("files", nargs="+")
    vh.add_argument("--window-start", type=int)
    vh.add_argument("--window-end", type=int)
    vh.add_argument("--periodicity", type=int)
    vh.set_defaults(func=cmd_verify_history)

    chain = groups.add_parser("chain").add_subparsers(dest="command", required=True)
    show = chain.add_parser("show", parents=[common, source])
    show.add_argument("--from", dest="start", type=int, default=0)
    show.add_argument("--to", type=int)
    show.set_defaults(func=cmd_chain_show)

    sim = groups.add_parser("sim").add_subparsers(dest="command", required=True)
    run = sim.add_parser("run", parents=[common])
    run.add_argument("scenario")
    run.add_argument("--trace", help="write the per-round trace here (JSON lines)")
    run.set_defaults(func=cmd_sim_run)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        config = load_config(args.config)
        return args.func(args, config)
    except ChainUnavailableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE if args.group == "verify" else EXIT_ERROR
    except (UsageError, SynchronicError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
