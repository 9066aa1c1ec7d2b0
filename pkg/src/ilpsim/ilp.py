"""ILP addresses, the three packet types, and their binary codec.

Wire layout (big-endian throughout):

    packet  = type byte || length prefix || contents
    prepare = amount(8) || expiry(17 ASCII digits) || condition(32)
              || var(destination) || var(data)
    fulfill = fulfillment(32) || var(data)
    reject  = code(3 ASCII) || var(triggered_by) || var(message) || var(data)
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Union

from .wire import (
    CodecError,
    LengthMismatch,
    Truncated,
    encode_length,
    encode_var_octets,
    read_exact,
    read_var_octets,
)

TYPE_PREPARE = 12
TYPE_FULFILL = 13
TYPE_REJECT = 14

MAX_ADDRESS_LEN = 1023
MAX_DATA_LEN = 32767

ADDRESS_SCHEMES = frozenset({"g", "private", "example", "peer", "self", "test", "local"})

_SEGMENT_RE = re.compile(r"^[A-Za-z0-9_~-]+$")
_ERROR_CODE_RE = re.compile(r"^[FTR][0-9][0-9]$")

# Error codes used across the stack. Only F08 and T04 are externally fixed;
# the rest follow the conventional class letters (F final, T temporary, R relative).
F00_BAD_REQUEST = "F00"
F02_UNREACHABLE = "F02"
F05_WRONG_CONDITION = "F05"
F06_UNEXPECTED_PAYMENT = "F06"
F08_AMOUNT_TOO_LARGE = "F08"
T00_INTERNAL_ERROR = "T00"
T04_INSUFFICIENT_LIQUIDITY = "T04"
R00_TRANSFER_TIMED_OUT = "R00"


class MalformedAddress(ValueError):
    pass


class UnknownType(CodecError):
    pass


class BadExpiryDigits(CodecError):
    pass


@dataclass(frozen=True)
class IlpAddress:
    segments: tuple[str, ...]

    def __post_init__(self):
        if not self.segments:
            raise MalformedAddress("address needs at least one segment")
        for seg in self.segments:
            if not _SEGMENT_RE.match(seg):
                raise MalformedAddress(f"bad segment {seg!r}")
        if len(str(self)) > MAX_ADDRESS_LEN:
            raise MalformedAddress("address exceeds 1023 bytes")

    @property
    def scheme(self) -> str:
        return self.segments[0]

    def __str__(self) -> str:
        return ".".join(self.segments)

    def is_prefix_of(self, other: "IlpAddress") -> bool:
        return self.segments == other.segments[: len(self.segments)]

    def with_suffix(self, *segments: str) -> "IlpAddress":
        return IlpAddress(self.segments + tuple(segments))


def parse_address(text: str) -> IlpAddress:
    if not text:
        raise MalformedAddress("empty address")
    return IlpAddress(tuple(text.split(".")))


def condition_from_fulfillment(fulfillment: bytes) -> bytes:
    if len(fulfillment) != 32:
        raise ValueError("fulfillment must be exactly 32 bytes")
    return hashlib.sha256(fulfillment).digest()


def verify_fulfillment(fulfillment: bytes, condition: bytes) -> bool:
    return condition_from_fulfillment(fulfillment) == condition


def _check_bytes32(value: bytes, what: str) -> bytes:
    if len(value) != 32:
        raise ValueError(f"{what} must be exactly 32 bytes, got {len(value)}")
    return value


@dataclass(frozen=True)
class PreparePacket:
    destination: IlpAddress
    amount: int
    condition: bytes
    expires_at: datetime
    data: bytes = b""

    def __post_init__(self):
        if not 0 <= self.amount < 2**64:
            raise ValueError("amount must fit in an unsigned 64-bit integer")
        _check_bytes32(self.condition, "condition")
        if len(self.data) > MAX_DATA_LEN:
            raise ValueError("data exceeds 32767 bytes")
        if self.expires_at.tzinfo is None:
            raise ValueError("expires_at must be timezone-aware")


@dataclass(frozen=True)
class FulfillPacket:
    fulfillment: bytes
    data: bytes = b""

    def __post_init__(self):
        _check_bytes32(self.fulfillment, "fulfillment")
        if len(self.data) > MAX_DATA_LEN:
            raise ValueError("data exceeds 32767 bytes")


@dataclass(frozen=True)
class RejectPacket:
    code: str
    triggered_by: IlpAddress
    message: str = ""
    data: bytes = b""

    def __post_init__(self):
        if not _ERROR_CODE_RE.match(self.code):
            raise ValueError(f"bad error code {self.code!r}")
        if len(self.data) > MAX_DATA_LEN:
            raise ValueError("data exceeds 32767 bytes")


IlpPacket = Union[PreparePacket, FulfillPacket, RejectPacket]


def format_expiry(ts: datetime) -> str:
    """Render a timestamp as the 17-digit YYYYMMDDHHmmssfff wire form (UTC)."""
    utc = ts.astimezone(timezone.utc)
    millis = utc.microsecond // 1000
    return utc.strftime("%Y%m%d%H%M%S") + f"{millis:03d}"


def parse_expiry(digits: str) -> datetime:
    if len(digits) != 17 or not digits.isdigit():
        raise BadExpiryDigits(f"expiry must be 17 ASCII digits, got {digits!r}")
    try:
        base = datetime.strptime(digits[:14], "%Y%m%d%H%M%S")
    except ValueError as exc:
        raise BadExpiryDigits(str(exc)) from exc
    return base.replace(microsecond=int(digits[14:]) * 1000, tzinfo=timezone.utc)


def _encode_contents(p: IlpPacket) -> tuple[int, bytes]:
    if isinstance(p, PreparePacket):
        contents = (
            p.amount.to_bytes(8, "big")
            + format_expiry(p.expires_at).encode("ascii")
            + p.condition
            + encode_var_octets(str(p.destination).encode("ascii"))
            + encode_var_octets(p.data)
        )
        return TYPE_PREPARE, contents
    if isinstance(p, FulfillPacket):
        return TYPE_FULFILL, p.fulfillment + encode_var_octets(p.data)
    if isinstance(p, RejectPacket):
        contents = (
            p.code.encode("ascii")
            + encode_var_octets(str(p.triggered_by).encode("ascii"))
            + encode_var_octets(p.message.encode("utf-8"))
            + encode_var_octets(p.data)
        )
        return TYPE_REJECT, contents
    raise TypeError(f"not an ILP packet: {type(p).__name__}")


def encode_packet(p: IlpPacket) -> bytes:
    ptype, contents = _encode_contents(p)
    return bytes([ptype]) + encode_length(len(contents)) + contents


def decode_packet(data: bytes) -> IlpPacket:
    if not data:
        raise Truncated("empty input")
    ptype = data[0]
    if ptype not in (TYPE_PREPARE, TYPE_FULFILL, TYPE_REJECT):
        raise UnknownType(f"unknown ILP packet type {ptype}")
    contents, end = read_var_octets(data, 1)
    if end != len(data):
        raise LengthMismatch(f"{len(data) - end} trailing bytes after packet")
    try:
        return _decode_contents(ptype, contents)
    except Truncated:
        raise
    except IndexError as exc:  # pragma: no cover - defensive
        raise Truncated(str(exc)) from exc


def _decode_contents(ptype: int, contents: bytes) -> IlpPacket:
    off = 0
    if ptype == TYPE_PREPARE:
        amount_b, off = read_exact(contents, off, 8, "amount")
        expiry_b, off = read_exact(contents, off, 17, "expiry")
        condition, off = read_exact(contents, off, 32, "condition")
        dest_b, off = read_var_octets(contents, off)
        payload, off = read_var_octets(contents, off)
        if off != len(contents):
            raise LengthMismatch("trailing bytes inside prepare contents")
        return PreparePacket(
            destination=parse_address(dest_b.decode("ascii")),
            amount=int.from_bytes(amount_b, "big"),
            condition=condition,
            expires_at=parse_expiry(expiry_b.decode("ascii")),
            data=payload,
        )
    if ptype == TYPE_FULFILL:
        fulfillment, off = read_exact(contents, off, 32, "fulfillment")
        payload, off = read_var_octets(contents, off)
        if off != len(contents):
            raise LengthMismatch("trailing bytes inside fulfill contents")
        return FulfillPacket(fulfillment=fulfillment, data=payload)
    code_b, off = read_exact(contents, off, 3, "error code")
    trig_b, off = read_var_octets(contents, off)
    message_b, off = read_var_octets(contents, off)
    payload, off = read_var_octets(contents, off)
    if off != len(contents):
        raise LengthMismatch("trailing bytes inside reject contents")
    return RejectPacket(
        code=code_b.decode("ascii"),
        triggered_by=parse_address(trig_b.decode("ascii")),
        message=message_b.decode("utf-8"),
        data=payload,
    )
