"""HTTP+JSON front end for a :class:`~synchronic.notary.Notary`, and its client."""

from __future__ import annotations

import json
import logging
import threading
import urllib.error
import urllib.parse
import urllib.request
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Optional

from synchronic.crypto import from_hex
from synchronic.errors import ERRORS_BY_CODE, ChainUnavailableError, EncodingError, ForbiddenError, SynchronicError
from synchronic.notary import Block, Notary, Promise
from synchronic.vmap import InclusionProof, proof_from_json, proof_to_json

log = logging.getLogger(__name__)

_STATUS = {
    "not-found": HTTPStatus.NOT_FOUND,
    "gone": HTTPStatus.GONE,
    "pending": HTTPStatus.CONFLICT,
    "too-late": HTTPStatus.CONFLICT,
    "conflict": HTTPStatus.CONFLICT,
    "order": HTTPStatus.CONFLICT,
    "throttled": HTTPStatus.TOO_MANY_REQUESTS,
    "too-early": HTTPStatus.UNPROCESSABLE_ENTITY,
    "forbidden": HTTPStatus.FORBIDDEN,
}


class _Handler(BaseHTTPRequestHandler):
    server: "_Server"

    def log_message(self, fmt, *args):  # route through logging instead of stderr
        log.debug("%s " + fmt, self.client_address[0], *args)

    def _send(self, status: int, body: Any) -> None:
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _error(self, code: str, message: str) -> None:
        self._send(_STATUS.get(code, HTTPStatus.BAD_REQUEST), {"error": code, "message": message})

    def _dispatch(self, method: str) -> None:
        url = urllib.parse.urlsplit(self.path)
        query = {k: v[-1] for k, v in urllib.parse.parse_qs(url.query).items()}
        route = self.server.routes.get((method, url.path))
        if route is None:
            self._error("not-found", f"no route {method} {url.path}")
            return
        body = None
        if method == "POST":
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            try:
                body = json.loads(raw) if raw else {}
            except json.JSONDecodeError as exc:
                self._error("encoding", f"invalid JSON: {exc}")
                return
        try:
            self._send(HTTPStatus.OK, route(self, query, body))
        except SynchronicError as exc:
            self._error(exc.code, str(exc))
        except (KeyError, TypeError, ValueError) as exc:
            self._error("encoding", f"bad request: {exc!r}")

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")


def _int(query: dict, name: str) -> int:
    try:
        return int(query[name])
    except KeyError:
        raise EncodingError(f"missing parameter {name!r}") from None
    except ValueError:
        raise EncodingError(f"parameter {name!r} must be an integer") from None


class _Server(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, notary: Notary, manual_seal: bool):
        super().__init__(address, _Handler)
        self.notary = notary
        self.manual_seal = manual_seal
        self.routes = {
            ("POST", "/commit"): self.commit,
            ("GET", "/proof"): self.proof,
            ("GET", "/block"): self.block,
            ("GET", "/chain"): self.chain,
            ("GET", "/current"): self.current,
            ("GET", "/info"): self.info,
            ("POST", "/seal"): self.seal,
        }

    def commit(self, handler, query, body):
        promise = self.notary.submit_commit(
            int(body["index"]), from_hex(body["key"]), from_hex(body["value"]), source=handler.client_address[0]
        )
        return promise.to_json()

    def proof(self, handler, query, body):
        return {"siblings": proof_to_json(self.notary.get_proof(_int(query, "index"), from_hex(query.get("key", ""))))}

    def block(self, handler, query, body):
        return self.notary.get_block(_int(query, "index")).to_json()

    def chain(self, handler, query, body):
        end = _int(query, "to") if "to" in query else None
        start = _int(query, "from") if "from" in query else 0
        return {"blocks": [b.to_json() for b in self.notary.get_chain(start, end)]}

    def current(self, handler, query, body):
        return {"index": self.notary.current_index()}

    def info(self, handler, query, body):
        return {
            "notaryId": self.notary.notary_id,
            "publicKey": self.notary.public_key.hex(),
            "retention": self.notary.config.retention_blocks,
            "current": self.notary.current_index(),
            "manualSeal": self.manual_seal,
        }

    def seal(self, handler, query, body):
        if not self.manual_seal:
            raise ForbiddenError("sealing is on a timer; restart with --block-interval 0 for manual sealing")
        return self.notary.seal_block().to_json()


class NotaryService:
    """Runs the HTTP server and, unless ``block_interval`` is 0, a sealing timer."""

    def __init__(self, notary: Notary, host: str = "127.0.0.1", port: int = 8470, block_interval: float = 10.0):
        self.notary = notary
        self.block_interval = block_interval
        self._server = _Server((host, port), notary, manual_seal=block_interval <= 0)
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    @property
    def endpoint(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def _sealer(self) -> None:
        while not self._stop.wait(self.block_interval):
            block = self.notary.seal_block()
            log.info("sealed block %d root=%s", block.index, block.payload.hex() or "(empty)")

    def start(self) -> "NotaryService":
        self._threads.append(threading.Thread(target=self._server.serve_forever, daemon=True))
        if self.block_interval > 0:
            self._threads.append(threading.Thread(target=self._sealer, daemon=True))
        for t in self._threads:
            t.start()
        return self

    def serve_forever(self) -> None:
        self.start()
        try:
            self._stop.wait()
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self) -> None:
        self._stop.set()
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class NotaryClient:
    """Speaks the service's HTTP API; usable wherever a ledger or verifier wants a notary."""

    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def _request(self, method: str, path: str, query: Optional[dict] = None, body: Any = None) -> Any:
        url = self.endpoint + path
        if query:
            url += "?" + urllib.parse.urlencode(query)
        data = json.dumps(body).encode() if body is not None else None
        req = urllib.request.Request(url, data=data, method=method, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read())
        except urllib.error.HTTPError as exc:
            try:
                payload = json.loads(exc.read())
                code, message = payload["error"], payload.get("message", "")
            except (ValueError, KeyError, TypeError):
                raise ChainUnavailableError(f"HTTP {exc.code} from {url}") from exc
            raise ERRORS_BY_CODE.get(code, SynchronicError)(message) from None
        except (urllib.error.URLError, OSError) as exc:
            raise ChainUnavailableError(f"cannot reach {self.endpoint}: {exc}") from exc

    def submit_commit(self, index: int, global_key: bytes, global_value: bytes, source: str = "") -> Promise:
        body = {"index": index, "key": global_key.hex(), "value": global_value.hex()}
        return Promise.from_json(self._request("POST", "/commit", body=body))

    def get_proof(self, index: int, global_key: bytes) -> InclusionProof:
        reply = self._request("GET", "/proof", {"index": index, "key": global_key.hex()})
        return proof_from_json(reply["siblings"])

    def get_block(self, index: int) -> Block:
        return Block.from_json(self._request("GET", "/block", {"index": index}))

    def block_root(self, index: int) -> bytes:
        return self.get_block(index).payload

    def get_chain(self, start: int = 0, end: Optional[int] = None) -> list[Block]:
        query = {"from": start}
        if end is not None:
            query["to"] = end
        return [Block.from_json(b) for b in self._request("GET", "/chain", query)["blocks"]]

    def current_index(self) -> int:
        return int(self._request("GET", "/current")["index"])

    def info(self) -> dict[str, Any]:
        return self._request("GET", "/info")

    def seal(self) -> Block:
        return Block.from_json(self._request("POST", "/seal", body={}))
