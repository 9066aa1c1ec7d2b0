"""Money machinery shared by connectors and uplink nodes for one direct peer:
channel announcements, automatic settlement claims, and claim receipt.

Sub-protocol entries exchanged over the link:

    "channel"      JSON  payer announces a freshly opened outgoing channel
    "claim"        JSON  signed cumulative settlement claim
    "fund_channel" JSON  payer topped up the channel escrow
"""

from __future__ import annotations

import json
import logging
import threading
from typing import Optional

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

from . import btp, ledger as lg, link
from .events import EventLog, NULL_LOG
from .settlement import BilateralBalance

log = logging.getLogger(__name__)

DEFAULT_SETTLE_DELAY = 3600


def json_entry(name: str, payload: dict) -> btp.ProtocolEntry:
    return btp.ProtocolEntry(name, btp.CONTENT_STRUCTURED, json.dumps(payload).encode())


def ilp_entry(packet_bytes: bytes) -> btp.ProtocolEntry:
    return btp.ProtocolEntry("ilp", btp.CONTENT_OCTET_STREAM, packet_bytes)


class Peer:
    """One direct peering: bilateral balance plus the payment channels in
    both directions on a shared ledger."""

    def __init__(
        self,
        peer_id: str,
        balance: BilateralBalance,
        ledger: lg.Ledger,
        own_ledger_account: str,
        signing_key: Ed25519PrivateKey,
        component: str = "",
        event_log: EventLog = NULL_LOG,
    ):
        self.peer_id = peer_id
        self.balance = balance
        self.ledger = ledger
        self.own_ledger_account = own_ledger_account
        self.signing_key = signing_key
        self.endpoint: Optional[link.LinkEndpoint] = None
        self.peer_ledger_account: Optional[str] = None
        self.component = component or peer_id
        self.events = event_log
        self._settle_lock = threading.Lock()

    # -- channels

    def open_outgoing_channel(self, amount: int, settle_delay: int = DEFAULT_SETTLE_DELAY):
        if self.peer_ledger_account is None:
            raise lg.LedgerError(f"peer {self.peer_id} has not identified its ledger account")
        pub = self.signing_key.public_key().public_bytes_raw()
        channel = self.ledger.open_channel(
            self.own_ledger_account, self.peer_ledger_account, amount, settle_delay, pub
        )
        self.balance.outgoing_channel = channel.channel_id
        return channel

    def announce_channel(self, channel_id: str, timeout: float = 5.0) -> None:
        entry = json_entry(
            "channel",
            {
                "channel_id": channel_id,
                "owner_account": self.own_ledger_account,
                "asset_code": self.ledger.config.asset_code,
            },
        )
        self.endpoint.request([entry], timeout=timeout)

    def handle_channel_entry(self, data: bytes) -> None:
        info = json.loads(data)
        channel = self.ledger.get_channel(info["channel_id"])
        if channel.destination != self.own_ledger_account:
            raise link.BtpErrorResponse("F00", "channel does not pay this peer")
        self.balance.incoming_channel = channel.channel_id
        self.peer_ledger_account = info.get("owner_account", channel.account)
        self.events.emit(self.component, "channel_in", peer=self.peer_id, channel=channel.channel_id)

    # -- settlement

    def settle(self, cumulative: int, timeout: float = 5.0) -> None:
        """Sign and deliver a claim at the given cumulative amount."""
        claim = lg.sign_claim(self.signing_key, self.balance.outgoing_channel, cumulative)
        entry = json_entry(
            "claim",
            {
                "channel_id": claim.channel_id,
                "cumulative_amount": claim.cumulative_amount,
                "signature": claim.signature.hex(),
            },
        )
        self.events.emit(
            self.component, "settlement_claim", peer=self.peer_id, cumulative=cumulative
        )
        try:
            self.endpoint.request([entry], timeout=timeout)
        except link.LinkError as exc:
            # The claim is already signed and counted; delivery failure only
            # delays the peer's bookkeeping, never loses ledger value.
            log.warning("claim delivery to %s failed: %s", self.peer_id, exc)

    def record_fulfilled(self, amount: int, settle_timeout: float = 5.0) -> None:
        """Outgoing-side bookkeeping after a verified fulfill; settles (and
        tops up the channel first if it is too small) when the threshold is
        crossed."""
        with self._settle_lock:
            size = self._outgoing_channel_size()
            cumulative = self.balance.on_outgoing_fulfilled(amount, channel_size=size)
            if cumulative is None and self.balance.settlement_deferred:
                cumulative = self._top_up_and_retry(settle_timeout)
        if cumulative is not None:
            self.settle(cumulative, timeout=settle_timeout)

    def settle_now(self, timeout: float = 5.0) -> Optional[int]:
        """Immediately settle whatever is owed, topping up the channel first
        if the claim would exceed its escrow."""
        with self._settle_lock:
            size = self._outgoing_channel_size()
            cumulative = self.balance.force_settle(channel_size=size)
            if cumulative is None and self.balance.settlement_deferred:
                channel_id = self.balance.outgoing_channel
                needed = (
                    self.balance.highest_signed_cumulative
                    + (self.balance.policy.settle_to - self.balance.value)
                )
                shortfall = needed - size
                if shortfall > 0:
                    try:
                        self.ledger.fund_channel(channel_id, shortfall)
                    except lg.InsufficientFunds as exc:
                        log.warning("cannot top up channel %s: %s", channel_id, exc)
                        return None
                cumulative = self.balance.force_settle(
                    channel_size=self._outgoing_channel_size()
                )
        if cumulative is not None:
            self.settle(cumulative, timeout=timeout)
        return cumulative

    def _outgoing_channel_size(self) -> Optional[int]:
        if self.balance.outgoing_channel is None:
            return None
        return self.ledger.get_channel(self.balance.outgoing_channel).amount

    def _top_up_and_retry(self, timeout: float) -> Optional[int]:
        channel_id = self.balance.outgoing_channel
        if channel_id is None:
            return None
        shortfall = (
            self.balance.highest_signed_cumulative
            + (self.balance.policy.settle_to - self.balance.value)
            - self.ledger.get_channel(channel_id).amount
        )
        if shortfall <= 0:
            return self.balance.retry_deferred_settlement(self._outgoing_channel_size())
        try:
            self.ledger.fund_channel(channel_id, shortfall)
        except lg.InsufficientFunds as exc:
            log.warning("cannot top up channel %s: %s", channel_id, exc)
            return None
        try:
            self.endpoint.request(
                [json_entry("fund_channel", {"channel_id": channel_id, "additional": shortfall})],
                timeout=timeout,
            )
        except link.LinkError:
            pass
        return self.balance.retry_deferred_settlement(self._outgoing_channel_size())

    def handle_claim_entry(self, data: bytes) -> None:
        info = json.loads(data)
        claim = lg.Claim(
            info["channel_id"], int(info["cumulative_amount"]), bytes.fromhex(info["signature"])
        )
        try:
            delta = self.balance.receive_claim(claim, self.ledger)
        except lg.InvalidClaim as exc:
            raise link.BtpErrorResponse("F00", f"invalid claim: {exc}") from exc
        self.events.emit(
            self.component, "claim_received", peer=self.peer_id, delta=delta,
            cumulative=claim.cumulative_amount,
        )
