import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ilpsim import ledger as lg
from ilpsim import settlement as stl


def policy(maximum=20, threshold=-15, settle_to=0):
    return stl.BalancePolicy(maximum=maximum, settle_threshold=threshold, settle_to=settle_to)


def test_policy_invariant_enforced():
    with pytest.raises(ValueError):
        stl.BalancePolicy(maximum=10, settle_threshold=5, settle_to=0)


def test_policy_from_config_normalizes_positive_threshold():
    p = stl.policy_from_config(
        {"maximum": "20000000000", "settleThreshold": "50000000", "settleTo": "1000000"}
    )
    assert p.maximum == 20000000000
    assert p.settle_threshold == -50000000
    assert p.settle_to == 1000000


def test_peering_compat_worked_example():
    a = policy(maximum=20, threshold=-15)
    b = policy(maximum=20, threshold=-15)
    assert stl.check_peering_compat(a, b)


def test_peering_compat_violated():
    a = policy(maximum=20, threshold=-30, settle_to=0)
    b = policy(maximum=20, threshold=-15)
    assert not stl.check_peering_compat(a, b)


def test_peering_compat_all_zero():
    z = stl.BalancePolicy(0, 0, 0)
    assert not stl.check_peering_compat(z, z)


@settings(max_examples=1000, deadline=None)
@given(
    vals=st.tuples(
        st.integers(-100, 0), st.integers(0, 100), st.integers(-100, 0), st.integers(0, 100)
    )
)
def test_peering_compat_against_brute_force(vals):
    a_thr, a_max, b_thr, b_max = vals
    a = stl.BalancePolicy(a_max, a_thr, min(0, a_max))
    b = stl.BalancePolicy(b_max, b_thr, min(0, b_max))
    expected = (-a.settle_threshold < b.maximum) and (-b.settle_threshold < a.maximum)
    assert stl.check_peering_compat(a, b) == expected


@pytest.fixture
def channel_setup():
    priv, pub = lg.generate_keypair()
    led = lg.Ledger(lg.LedgerConfig("XRP", 6, 10**9))
    led.create_and_fund("me", pub, 10**6)
    led.create_and_fund("peer", b"", 0)
    chan = led.open_channel("me", "peer", 10**5, 60, pub)
    return led, chan, priv


def test_outgoing_settles_at_threshold(channel_setup):
    _led, chan, _priv = channel_setup
    bal = stl.BilateralBalance("peer", policy())
    bal.outgoing_channel = chan.channel_id
    cumulative = bal.on_outgoing_fulfilled(20, channel_size=chan.amount)
    assert cumulative == 20
    assert bal.value == 0
    assert bal.highest_signed_cumulative == 20


def test_outgoing_below_threshold_no_claim(channel_setup):
    _led, chan, _priv = channel_setup
    bal = stl.BilateralBalance("peer", policy())
    bal.outgoing_channel = chan.channel_id
    assert bal.on_outgoing_fulfilled(10, channel_size=chan.amount) is None
    assert bal.value == -10


def test_settle_to_restored_exactly():
    bal = stl.BilateralBalance("peer", policy(maximum=10**7, threshold=-50, settle_to=25))
    bal.outgoing_channel = "chan-x"
    cumulative = bal.on_outgoing_fulfilled(100)
    assert bal.value == 25
    assert cumulative == 25 - (-100)


def test_incoming_prepare_trust_bound():
    bal = stl.BilateralBalance("peer", policy(maximum=20, threshold=-15))
    bal.value = 19
    assert bal.on_incoming_prepare(1)
    assert bal.value == 20
    assert not bal.on_incoming_prepare(1)
    assert bal.value == 20


def test_incoming_rollback():
    bal = stl.BilateralBalance("peer", policy())
    bal.on_incoming_prepare(5)
    bal.rollback_incoming(5)
    assert bal.value == 0


def test_channel_exhausted_defers(channel_setup):
    _led, chan, _priv = channel_setup
    bal = stl.BilateralBalance("peer", policy(maximum=10**7, threshold=-10, settle_to=0))
    bal.outgoing_channel = chan.channel_id
    assert bal.on_outgoing_fulfilled(chan.amount + 1, channel_size=chan.amount) is None
    assert bal.settlement_deferred
    # top up, then the deferred settlement goes through
    cumulative = bal.retry_deferred_settlement(channel_size=chan.amount * 2)
    assert cumulative == chan.amount + 1
    assert bal.value == 0
    assert not bal.settlement_deferred


def test_receive_claim_mirrors_settlement(channel_setup):
    led, chan, priv = channel_setup
    bal = stl.BilateralBalance("me", policy())
    bal.incoming_channel = chan.channel_id
    bal.value = 15  # peer owes me 15
    claim = lg.sign_claim(priv, chan.channel_id, 15)
    assert bal.receive_claim(claim, led) == 15
    assert bal.value == 0
    assert led.account_info("peer").balance == 15  # redeemed eagerly
    # duplicate claim: delta 0, value unchanged
    assert bal.receive_claim(claim, led) == 0
    assert bal.value == 0


def test_receive_claim_unknown_channel(channel_setup):
    led, _chan, priv = channel_setup
    bal = stl.BilateralBalance("me", policy())
    bal.incoming_channel = "chan-other"
    claim = lg.sign_claim(priv, "chan-nonexistent", 5)
    with pytest.raises(lg.InvalidClaim):
        bal.receive_claim(claim, led)


def test_mirror_invariant_two_sides(channel_setup):
    led, chan, priv = channel_setup
    p = policy(maximum=1000, threshold=-15)
    alice = stl.BilateralBalance("bob", p)  # outgoing side
    bob = stl.BilateralBalance("alice", p)  # incoming side
    alice.outgoing_channel = chan.channel_id
    bob.incoming_channel = chan.channel_id
    for _ in range(4):
        amount = 5
        assert bob.on_incoming_prepare(amount)
        cumulative = alice.on_outgoing_fulfilled(amount, channel_size=chan.amount)
        if cumulative is not None:
            claim = lg.sign_claim(priv, chan.channel_id, cumulative)
            bob.receive_claim(claim, led)
    assert alice.value + bob.value == 0


def test_accumulation_without_settlement():
    p = policy(maximum=10**6, threshold=-10**6 + 1, settle_to=0)
    sender = stl.BilateralBalance("peer", p)
    receiver = stl.BilateralBalance("peer", p)
    n, amount = 7, 3
    for _ in range(n):
        assert receiver.on_incoming_prepare(amount)
        sender.on_outgoing_fulfilled(amount)
    assert sender.value == -n * amount
    assert receiver.value == n * amount
