"""Payment setup: payment-pointer resolution, the HTTP credentials exchange,
a serving endpoint, and the composite pay flow."""

from __future__ import annotations

import base64
import json
import logging
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Union

import requests

from . import ilp, stream
from .uplink import UplinkNode

log = logging.getLogger(__name__)

WELL_KNOWN_PATH = "/.well-known/pay"


class MalformedPointer(ValueError):
    pass


class Unreachable(Exception):
    pass


class BadResponse(Exception):
    pass


def resolve_pointer(pointer_text: str, scheme: str = "https") -> str:
    """$host[/path] -> SPSP endpoint URL. An empty path becomes the
    well-known pay path; a non-empty path is kept verbatim."""
    if not pointer_text.startswith("$"):
        raise MalformedPointer("payment pointer must start with '$'")
    rest = pointer_text[1:]
    host, slash, path = rest.partition("/")
    if not host:
        raise MalformedPointer("payment pointer has no host")
    if not slash or not path:
        path_part = WELL_KNOWN_PATH
    else:
        path_part = "/" + path
    return f"{scheme}://{host}{path_part}"


@dataclass(frozen=True)
class SpspResponse:
    destination_account: str
    shared_secret: bytes

    def credentials(self) -> stream.StreamCredentials:
        return stream.StreamCredentials(
            ilp.parse_address(self.destination_account), self.shared_secret
        )


def query(endpoint_url: str, timeout: float = 5.0) -> SpspResponse:
    try:
        resp = requests.get(endpoint_url, timeout=timeout)
    except requests.RequestException as exc:
        raise Unreachable(str(exc)) from exc
    if resp.status_code != 200:
        raise Unreachable(f"endpoint answered {resp.status_code}")
    try:
        body = resp.json()
        destination = body["destination_account"]
        secret = base64.b64decode(body["shared_secret"])
    except (ValueError, KeyError) as exc:
        raise BadResponse(f"malformed SPSP response: {exc}") from exc
    if len(secret) != 32:
        raise BadResponse(f"shared secret decodes to {len(secret)} bytes, expected 32")
    return SpspResponse(destination, secret)


class SpspServer:
    """HTTP endpoint issuing fresh STREAM credentials per GET."""

    def __init__(
        self,
        stream_server: stream.StreamServer,
        port: int = 0,
        path: str = WELL_KNOWN_PATH,
        bind_address: str = "127.0.0.1",
    ):
        if stream_server.base_address is None:
            raise RuntimeError("stream server has no uplink address; connect the node first")
        self.stream_server = stream_server
        self.path = path
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):  # noqa: N802 (http.server API)
                if self.path.rstrip("/") != outer.path.rstrip("/"):
                    self.send_error(404)
                    return
                creds = outer.stream_server.generate_credentials()
                body = json.dumps(
                    {
                        "destination_account": str(creds.destination_account),
                        "shared_secret": base64.b64encode(creds.shared_secret).decode(),
                    }
                ).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/spsp4+json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, fmt, *args):
                log.debug("spsp http: " + fmt, *args)

        try:
            self._httpd = ThreadingHTTPServer((bind_address, port), Handler)
        except OSError as exc:
            raise OSError(f"cannot bind SPSP endpoint on port {port}: {exc}") from exc
        self.port = self._httpd.server_address[1]
        threading.Thread(target=self._httpd.serve_forever, daemon=True).start()

    @property
    def url(self) -> str:
        host, _port = self._httpd.server_address[:2]
        return f"http://{host}:{self.port}{self.path}"

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()


def serve(uplink: UplinkNode, port: int = 0, path: str = WELL_KNOWN_PATH) -> SpspServer:
    if uplink.address is None:
        raise RuntimeError("uplink is not connected")
    if uplink.stream_server is None:
        uplink.attach_stream_server(stream.StreamServer())
    return SpspServer(uplink.stream_server, port=port, path=path)


Receiver = Union[str, stream.StreamCredentials, stream.StreamServer]


def pay(
    receiver: Receiver,
    amount: int,
    uplink: UplinkNode,
    max_packet_amount: int = 2**63,
    scheme: str = "http",
    **sender_kwargs,
) -> stream.SendReport:
    """Resolve (if needed), fetch credentials, and stream the amount.

    The receiver may be a payment pointer ("$host/path"), a raw endpoint URL,
    pre-fetched credentials, or an in-process StreamServer."""
    if isinstance(receiver, stream.StreamServer):
        credentials = receiver.generate_credentials()
    elif isinstance(receiver, stream.StreamCredentials):
        credentials = receiver
    else:
        url = resolve_pointer(receiver, scheme=scheme) if receiver.startswith("$") else receiver
        credentials = query(url).credentials()
    sender = uplink.open_stream(credentials, **sender_kwargs)
    return sender.send_money(amount, max_packet_amount)
