"""Tiny JSON-over-HTTP admin surface for running components.

Routes map (method, path) to zero-argument callables returning JSON-able
dicts; queries from the CLI attach here."""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

log = logging.getLogger(__name__)


class AdminServer:
    def __init__(
        self,
        routes: dict[tuple[str, str], Callable[[], dict]],
        port: int = 0,
        bind_address: str = "127.0.0.1",
    ):
        outer_routes = dict(routes)

        class Handler(BaseHTTPRequestHandler):
            def _serve(self, method: str):
                handler_fn = outer_routes.get((method, self.path.rstrip("/") or "/"))
                if handler_fn is None:
                    self.send_error(404)
                    return
                try:
                    body = json.dumps(handler_fn()).encode()
                except Exception as exc:
                    log.exception("admin route %s %s failed", method, self.path)
                    body = json.dumps({"error": str(exc)}).encode()
                    self.send_response(500)
                else:
                    self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):  # noqa: N802 (http.server API)
                self._serve("GET")

            def do_POST(self):  # noqa: N802
                self._serve("POST")

            def log_message(self, fmt, *args):
                log.debug("admin http: " + fmt, *args)

        self._httpd = ThreadingHTTPServer((bind_address, port), Handler)
        self.port = self._httpd.server_address[1]
        threading.Thread(target=self._httpd.serve_forever, daemon=True).start()

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
