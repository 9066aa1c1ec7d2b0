"""Client for an uplink node's local application port (BTP framing over TCP).

Local apps either push packets through the node ("ilp" entries) or register
as the node's packet sink ("listen") to receive incoming traffic — the two
halves of the SPSP send/serve commands."""

from __future__ import annotations

import json
import logging
from typing import Optional

from . import ilp, link, peering, stream

log = logging.getLogger(__name__)


class LocalApp:
    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 7768,
        token: str = "local",
        name: str = "app",
        timeout: float = 5.0,
    ):
        transport = link.TcpTransport.connect(host, port)
        self.timeout = timeout
        self.stream_server: Optional[stream.StreamServer] = None
        self.endpoint = link.LinkEndpoint(transport, "client", handler=self._handle)
        self.endpoint.authenticate(name, token, timeout=timeout)

    def ildcp(self) -> dict:
        entries = self.endpoint.request(
            [peering.json_entry("ildcp", {})], timeout=self.timeout
        )
        entry = next(e for e in entries if e.name == "ildcp")
        return json.loads(entry.data)

    def send_packet(
        self, prepare: ilp.PreparePacket, timeout: Optional[float] = None
    ) -> ilp.FulfillPacket | ilp.RejectPacket:
        entries = self.endpoint.request(
            [peering.ilp_entry(ilp.encode_packet(prepare))],
            timeout=timeout if timeout is not None else self.timeout,
        )
        reply = next(e for e in entries if e.name == "ilp")
        return ilp.decode_packet(reply.data)

    def listen(self, server: stream.StreamServer) -> stream.StreamServer:
        """Register as the node's packet sink, delivering to a stream server
        anchored at the node's local address."""
        info = self.ildcp()
        server.base_address = ilp.parse_address(info["ilp_address"])
        self.stream_server = server
        self.endpoint.request([peering.json_entry("listen", {})], timeout=self.timeout)
        return server

    def _handle(self, _endpoint, entries):
        out = []
        for entry in entries:
            if entry.name == "ilp" and self.stream_server is not None:
                packet = ilp.decode_packet(entry.data)
                if isinstance(packet, ilp.PreparePacket):
                    response = self.stream_server.handle_prepare(packet)
                    out.append(peering.ilp_entry(ilp.encode_packet(response)))
            else:
                log.debug("local app ignoring sub-protocol %r", entry.name)
        return out

    def close(self) -> None:
        self.endpoint.close()
