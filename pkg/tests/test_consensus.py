import random

import pytest

from chainkit import GENESIS_TIME, SLOT, extend, make_params, operator_keys, validator_keys
from poachain.consensus import (
    ChainView,
    NewBlock,
    RequestBlock,
    accept_block,
    build_block,
    decode_message,
    encode_message,
    fork_choice,
    propose_block,
    scheduled_proposer,
)
from poachain.consensus.chain_view import tip_key
from poachain.core import Block, BlockHeader, KeyPair, Transfer, digest, make_tx, merkle_root


@pytest.fixture
def net():
    vals, ops = validator_keys(7), operator_keys(2)
    params = make_params(vals, ops)
    view = ChainView(params)
    by_addr = {k.address: k for k in vals}
    members = view.head_state.validators
    return params, view, vals, ops, by_addr, members


def key_for(by_addr, members, height):
    return by_addr[scheduled_proposer(height, members)]


# schedule


def test_schedule_examples():
    members = [bytes([i]) * 20 for i in range(7)]
    assert scheduled_proposer(0, members) == members[0]
    assert scheduled_proposer(13, members) == members[6]
    counts = {m: 0 for m in members}
    for h in range(70):
        counts[scheduled_proposer(h, members)] += 1
    assert set(counts.values()) == {10}
    with pytest.raises(ValueError):
        scheduled_proposer(1, [])


def test_members_are_sorted(net):
    _, view, vals, *_ = net
    assert list(view.head_state.validators) == sorted(k.address for k in vals)


# proposing


def test_in_turn_proposer_packs_valid_txs(net):
    _, view, _, ops, by_addr, members = net
    key = key_for(by_addr, members, 1)
    txs = [make_tx(ops[0], n, Transfer(ops[1].address, 1), 21) for n in range(3)]
    block = propose_block(view, txs, (GENESIS_TIME + SLOT) * 1000, key)
    assert block is not None and len(block.txs) == 3 and block.header.weight == 2


def test_in_turn_waits_for_slot_boundary(net):
    _, view, _, _, by_addr, members = net
    key = key_for(by_addr, members, 1)
    assert propose_block(view, [], (GENESIS_TIME + SLOT) * 1000 - 1, key) is None


def test_out_of_turn_waits_for_delay(net):
    params, view, _, _, by_addr, members = net
    other = key_for(by_addr, members, 2)
    delay = params.consensus.out_of_turn_delay
    assert propose_block(view, [], (GENESIS_TIME + SLOT) * 1000, other) is None
    assert propose_block(view, [], (GENESIS_TIME + SLOT + delay - 1) * 1000, other) is None
    block = propose_block(view, [], (GENESIS_TIME + SLOT + delay) * 1000, other)
    assert block is not None and block.header.weight == 1


def test_bad_nonce_tx_is_dropped_not_blocking(net):
    _, view, _, ops, by_addr, members = net
    key = key_for(by_addr, members, 1)
    txs = [make_tx(ops[0], n, Transfer(ops[1].address, 1), 21) for n in range(4)]
    txs.append(make_tx(ops[1], 7, Transfer(ops[0].address, 1), 21))
    block = propose_block(view, txs, (GENESIS_TIME + SLOT) * 1000, key)
    assert len(block.txs) == 4


def test_non_member_cannot_propose(net):
    _, view, *_ = net
    assert propose_block(view, [], 10**13, KeyPair.from_seed("outsider")) is None


# acceptance


def _next_block(view, key, ts=None, weight=None, txs=()):
    head = view.head_entry
    ts = ts or head.block.header.timestamp + SLOT
    members = head.state.validators
    w = weight or (2 if scheduled_proposer(head.height + 1, members) == key.address else 1)
    return build_block(view, txs, ts, key, w)[0]


def test_accepting_in_turn_block_advances_head(net):
    _, view, _, _, by_addr, members = net
    block = _next_block(view, key_for(by_addr, members, 1))
    res = accept_block(view, block)
    assert res.accepted and res.head_changed and view.head == block.digest


def test_block_from_non_member_is_rejected(net):
    _, view, *_ = net
    outsider = KeyPair.from_seed("outsider")
    block = _next_block(view, outsider, weight=1)
    res = accept_block(view, block)
    assert res.status == "rejected" and res.reason == "unauthorized-proposer"
    assert accept_block(view, block).detail == "previously rejected"


def test_accept_is_idempotent(net):
    _, view, _, _, by_addr, members = net
    block = _next_block(view, key_for(by_addr, members, 1))
    accept_block(view, block)
    snapshot = (view.head, len(view.entries), dict(view.children))
    assert accept_block(view, block).status == "duplicate"
    assert (view.head, len(view.entries), dict(view.children)) == snapshot


def test_future_timestamp_rejected(net):
    _, view, _, _, by_addr, members = net
    block = _next_block(view, key_for(by_addr, members, 1))
    early_now = (block.header.timestamp - SLOT - 1) * 1000
    assert accept_block(view, block, now_ms=early_now).reason == "future-timestamp"


def test_orphans_connect_when_parent_arrives(net):
    params, view, vals, _, by_addr, members = net
    source = ChainView(params)
    b1, b2, b3 = extend(source, vals, 3)
    assert accept_block(view, b3).status == "orphan"
    assert accept_block(view, b2).status == "orphan"
    res = accept_block(view, b1)
    assert res.accepted and [b.digest for b in res.connected] == [b2.digest, b3.digest]
    assert view.head == b3.digest


def test_fork_two_plus_two_beats_two_plus_one(net):
    params, view, vals, _, by_addr, members = net
    base = view.head_entry
    p1, p2 = key_for(by_addr, members, 1), key_for(by_addr, members, 2)
    x1 = _next_block(view, p1)
    accept_block(view, x1)
    x2 = _next_block(view, p2)

    # a competing branch: the same in-turn signer double-signs height 1,
    # then an out-of-turn validator extends it
    shadow = ChainView(params)
    y1 = _next_block(shadow, p1, ts=base.block.header.timestamp + SLOT + 1)
    accept_block(shadow, y1)
    backup = key_for(by_addr, members, 4)
    y2 = _next_block(shadow, backup)
    assert (y1.header.weight, y2.header.weight) == (2, 1)

    for block in (y1, y2, x2):
        assert accept_block(view, block).accepted
    assert view.head == x2.digest
    assert view.entries[x2.digest].cum_weight == 4
    assert view.entries[y2.digest].cum_weight == 3
    # the double-sign at height 1 is kept as evidence and flagged
    assert view.flagged.get(p1.address) == 1 and len(view.evidence) == 1
    assert fork_choice(view) == view.head


def test_recent_signer_is_rejected(net):
    _, view, _, _, by_addr, members = net
    p1 = key_for(by_addr, members, 1)
    accept_block(view, _next_block(view, p1))
    again = _next_block(view, p1, weight=1)
    assert accept_block(view, again).reason == "recent-signer"


def test_wrong_weight_is_rejected(net):
    _, view, _, _, by_addr, members = net
    p1 = key_for(by_addr, members, 1)
    assert accept_block(view, _next_block(view, p1, weight=1)).reason == "bad-weight"


# fork choice vs a brute-force oracle


def _random_dag(rng: random.Random, view: ChainView, n: int):
    genesis = view.head_entry
    nodes = [genesis]
    for i in range(n):
        parent = rng.choice(nodes)
        header = BlockHeader(
            height=parent.height + 1, parent=parent.digest, state_root=digest(bytes([i])),
            tx_root=merkle_root([]), proposer=bytes([rng.randrange(3)]) * 20,
            timestamp=parent.block.header.timestamp + 1, weight=rng.choice([1, 2]),
        )
        entry = view.add(Block(header), parent.state, [])
        nodes.append(entry)
    return nodes


def _brute_force_best(view: ChainView):
    genesis = view.genesis.digest

    def paths(d):
        kids = view.children[d]
        if not kids:
            yield [d]
        for k in kids:
            for p in paths(k):
                yield [d, *p]

    best = None
    for path in paths(genesis):
        # every prefix of a path is itself a candidate chain
        for end in range(1, len(path) + 1):
            prefix = path[:end]
            weight = sum(view.entries[d].block.header.weight for d in prefix[1:])
            key = tip_key(weight, len(prefix) - 1, prefix[-1])
            if best is None or key > best[0]:
                best = (key, prefix[-1])
    return best[1]


@pytest.mark.parametrize("seed", range(40))
def test_fork_choice_matches_brute_force(seed):
    rng = random.Random(seed)
    view = ChainView(make_params(validator_keys(3)))
    _random_dag(rng, view, rng.randint(1, 20))
    expected = _brute_force_best(view)
    assert fork_choice(view) == expected
    assert view.head == expected


def test_equal_weight_equal_height_lower_digest_wins():
    view = ChainView(make_params(validator_keys(3)))
    g = view.head_entry
    entries = []
    for i in range(2):
        header = BlockHeader(1, g.digest, digest(bytes([i])), merkle_root([]), bytes([i]) * 20,
                             g.block.header.timestamp + 5, 2)
        entries.append(view.add(Block(header), g.state, []))
    assert view.head == min(e.digest for e in entries)


# wire messages


def test_messages_round_trip(chain100):
    _, blocks, _, _ = chain100
    for msg in (NewBlock(blocks[3]), RequestBlock(blocks[3].digest)):
        assert decode_message(encode_message(msg)) == msg
