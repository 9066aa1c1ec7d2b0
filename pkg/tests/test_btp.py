import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ilpsim import btp, ilp
from ilpsim.wire import LengthMismatch, Truncated

import vectors
from test_ilp import capture_prepare


def test_encode_message_golden_prefix():
    frame = btp.BtpFrame(
        frame_type=btp.TYPE_MESSAGE,
        request_id=vectors.BTP_PREPARE_REQUEST_ID,
        entries=(
            btp.ProtocolEntry("ilp", btp.CONTENT_OCTET_STREAM, ilp.encode_packet(capture_prepare())),
        ),
    )
    encoded = btp.encode_frame(frame)
    assert encoded[: len(vectors.BTP_PREPARE_FRAME_PREFIX)] == vectors.BTP_PREPARE_FRAME_PREFIX


def test_response_frame_type_byte():
    frame = btp.BtpFrame(
        frame_type=btp.TYPE_RESPONSE,
        request_id=vectors.BTP_FULFILL_REQUEST_ID,
        entries=(btp.ProtocolEntry("ilp", 0, b"\x00"),),
    )
    encoded = btp.encode_frame(frame)
    assert encoded[0] == 0x01
    assert int.from_bytes(encoded[1:5], "big") == 1054375881


def test_empty_message_hand_computed():
    # 06 || request_id 0 || body length 2 || count prefix 01 00
    encoded = btp.encode_frame(btp.BtpFrame(btp.TYPE_MESSAGE, 0))
    assert encoded == bytes.fromhex("06000000000201 00".replace(" ", ""))


def test_channel_open_frame_round_trip():
    frame = btp.BtpFrame(
        frame_type=btp.TYPE_MESSAGE,
        request_id=vectors.CHANNEL_REQUEST_ID,
        entries=(
            btp.ProtocolEntry("channel", 0, vectors.CHANNEL_ENTRY_DATA),
            btp.ProtocolEntry("channel_signature", 0, vectors.CHANNEL_SIGNATURE_PREFIX),
            btp.ProtocolEntry("fund_channel", 1, vectors.FUND_CHANNEL_DATA),
        ),
    )
    decoded = btp.decode_frame(btp.encode_frame(frame))
    assert decoded.frame_type == 6
    assert decoded.request_id == 1890145753
    assert [e.name for e in decoded.entries] == ["channel", "channel_signature", "fund_channel"]
    assert decoded == frame


def test_one_byte_input_truncated():
    with pytest.raises(Truncated):
        btp.decode_frame(b"\x06")


def test_unknown_frame_type():
    with pytest.raises(btp.UnknownFrameType):
        btp.decode_frame(bytes([0x09, 0, 0, 0, 0, 0]))


def test_trailing_bytes_rejected():
    good = btp.encode_frame(btp.BtpFrame(btp.TYPE_MESSAGE, 1))
    with pytest.raises(LengthMismatch):
        btp.decode_frame(good + b"\xff")


entries = st.builds(
    btp.ProtocolEntry,
    name=st.text(alphabet="abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=20),
    content_type=st.sampled_from([0, 1, 2]),
    data=st.binary(max_size=300),
)
frames = st.builds(
    btp.BtpFrame,
    frame_type=st.sampled_from(btp.FRAME_TYPES),
    request_id=st.integers(min_value=0, max_value=2**32 - 1),
    entries=st.lists(entries, max_size=5).map(tuple),
)


@settings(max_examples=500, deadline=None)
@given(frames)
def test_frame_round_trip(frame):
    assert btp.decode_frame(btp.encode_frame(frame)) == frame
