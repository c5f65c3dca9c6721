import dataclasses
import hashlib
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainkit import validator_keys
from poachain.core import (
    EMPTY_ROOT,
    Block,
    BlockHeader,
    ContractCall,
    DecodeError,
    Endow,
    GovAction,
    Governance,
    KeyPair,
    Mint,
    Transaction,
    Transfer,
    address_of,
    canonical_deserialize,
    canonical_serialize,
    digest,
    from_hex,
    make_tx,
    merkle_root,
    to_hex,
    verify,
)
from poachain.core.crypto import SCHEME_ED25519, ZERO_DIGEST
from poachain.validation import decode_chain, encode_chain, validate_chain, validate_encoded_chain

SHA256_EMPTY = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
SHA256_ABC = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


# digests


def test_digest_matches_published_vectors():
    assert to_hex(digest(b"")) == SHA256_EMPTY
    assert to_hex(digest(b"abc")) == SHA256_ABC


def test_digest_is_deterministic_and_32_bytes():
    assert digest(b"x" * 1000) == digest(b"x" * 1000)
    assert len(digest(b"anything")) == 32


def test_single_bit_flips_change_digest():
    rng = random.Random(1)
    for _ in range(100):
        data = bytearray(rng.randbytes(rng.randint(1, 64)))
        before = digest(bytes(data))
        pos = rng.randrange(len(data) * 8)
        data[pos // 8] ^= 1 << (pos % 8)
        assert digest(bytes(data)) != before


def test_hex_is_lowercase_unprefixed():
    h = to_hex(digest(b"abc"))
    assert len(h) == 64 and h == h.lower() and not h.startswith("0x")
    assert from_hex(h, 32) == digest(b"abc")
    with pytest.raises(ValueError):
        from_hex(h[:-2], 32)


# keys and signatures


def test_address_is_trailing_20_bytes_of_pubkey_digest():
    key = KeyPair.from_seed("addr")
    assert key.address == hashlib.sha256(key.public).digest()[-20:]
    assert address_of(key.public) == key.address


def test_address_derivation_injective_over_10k_keys():
    addrs = {KeyPair.from_seed("inj", i).address for i in range(10_000)}
    assert len(addrs) == 10_000


def test_signatures_are_deterministic_and_verify():
    key = KeyPair.from_seed("sig")
    msg = digest(b"message")
    a, b = key.sign(msg), key.sign(msg)
    assert a == b and a.scheme == SCHEME_ED25519
    assert verify(a, msg, key.address)
    assert not verify(a, digest(b"other"), key.address)
    assert not verify(a, msg, KeyPair.from_seed("other").address)


# merkle


def test_merkle_base_cases():
    d1, d2, d3 = (digest(bytes([i])) for i in range(3))
    assert merkle_root([]) == digest(b"") == EMPTY_ROOT
    assert merkle_root([d1]) == digest(d1 + d1)
    assert merkle_root([d1, d2]) == digest(d1 + d2)
    assert merkle_root([d1, d2, d3]) == digest(digest(d1 + d2) + digest(d3 + d3))


def _oracle_root(leaves):
    if not leaves:
        return hashlib.sha256(b"").digest()
    level = leaves
    while True:
        if len(level) % 2:
            level = level + [level[-1]]
        level = [hashlib.sha256(level[i] + level[i + 1]).digest() for i in range(0, len(level), 2)]
        if len(level) == 1:
            return level[0]


@given(st.lists(st.binary(min_size=32, max_size=32), max_size=40))
def test_merkle_matches_oracle(leaves):
    assert merkle_root(leaves) == _oracle_root(leaves)


# serialization

_addr = st.binary(min_size=20, max_size=20)
_amount = st.integers(min_value=0, max_value=2**256 - 1)
_payloads = st.one_of(
    st.builds(Transfer, _addr, _amount),
    st.builds(Mint, _addr, _amount),
    st.builds(Endow, _addr, _amount),
    st.builds(ContractCall, _addr, st.text(max_size=12),
              st.lists(st.binary(max_size=40), max_size=3).map(tuple)),
)


def random_block(rng: random.Random, keys) -> Block:
    txs = []
    for _ in range(rng.randint(0, 5)):
        key = rng.choice(keys)
        payload = rng.choice([
            Transfer(rng.randbytes(20), rng.randrange(2**64)),
            Mint(rng.randbytes(20), rng.randrange(2**200)),
            Endow(rng.randbytes(20), rng.randrange(10**6)),
            ContractCall(rng.randbytes(20), "append", (rng.randbytes(8), rng.randbytes(rng.randint(0, 30)))),
            Governance(GovAction.ADD_VALIDATOR, rng.randbytes(20), (key.sign(rng.randbytes(32)),)),
        ])
        txs.append(make_tx(key, rng.randrange(1000), payload, rng.randrange(1, 10**6)))
    proposer = rng.choice(keys)
    header = BlockHeader(
        height=rng.randrange(10**6), parent=rng.randbytes(32), state_root=rng.randbytes(32),
        tx_root=merkle_root([t.digest for t in txs]), proposer=proposer.address,
        timestamp=rng.randrange(2**40), weight=rng.choice([1, 2]),
    ).signed(proposer)
    return Block(header, tuple(txs))


def test_thousand_random_blocks_round_trip():
    rng = random.Random(7)
    keys = validator_keys(5)
    for _ in range(1000):
        block = random_block(rng, keys)
        data = canonical_serialize(block)
        again = canonical_deserialize(data)
        assert again == block
        assert canonical_serialize(again) == data
        assert again.digest == block.digest


@settings(max_examples=200)
@given(_payloads, st.integers(0, 2**64 - 1), st.integers(1, 2**64 - 1))
def test_transaction_round_trip(payload, nonce, gas_limit):
    tx = make_tx(KeyPair.from_seed("rt"), nonce, payload, gas_limit)
    assert Transaction.decode(tx.encode()) == tx
    assert tx.signature_ok()


def test_zero_vs_one_tx_blocks_encode_differently(chain100):
    params, blocks, _, _ = chain100
    genesis = params.genesis_block()
    assert canonical_deserialize(canonical_serialize(genesis)) == genesis
    assert genesis.parent == ZERO_DIGEST and genesis.height == 0
    with_tx = next(b for b in blocks if b.txs)
    one = Block(with_tx.header, with_tx.txs[:1])
    zero = Block(with_tx.header, ())
    assert canonical_serialize(one) != canonical_serialize(zero)


def test_tx_digest_excludes_signature():
    key = KeyPair.from_seed("ex")
    tx = make_tx(key, 0, Transfer(b"\x01" * 20, 5), 21)
    other = dataclasses.replace(tx, signature=KeyPair.from_seed("ex2").sign(tx.digest))
    assert other.digest == tx.digest
    assert other.encode() != tx.encode()


def test_header_digest_changes_with_any_field():
    rng = random.Random(3)
    keys = validator_keys(3)
    for _ in range(50):
        h = random_block(rng, keys).header
        mutations = {
            "height": h.height + 1,
            "parent": bytes([h.parent[0] ^ 1]) + h.parent[1:],
            "state_root": bytes([h.state_root[0] ^ 1]) + h.state_root[1:],
            "tx_root": bytes([h.tx_root[0] ^ 1]) + h.tx_root[1:],
            "proposer": bytes([h.proposer[0] ^ 1]) + h.proposer[1:],
            "timestamp": h.timestamp + 1,
            "weight": 3 - h.weight,
            "signature": keys[0].sign(b"\x00" * 32),
        }
        for name, value in mutations.items():
            assert dataclasses.replace(h, **{name: value}).digest != h.digest, name


def test_decoder_rejects_truncation_and_trailing_bytes(chain100):
    _, blocks, _, _ = chain100
    data = canonical_serialize(blocks[5])
    with pytest.raises(DecodeError):
        canonical_deserialize(data[:-1])
    with pytest.raises(DecodeError):
        canonical_deserialize(data + b"\x00")


# chain validation


def test_untampered_chain_is_valid_and_prefixes_too(chain100):
    params, blocks, _, _ = chain100
    assert len(blocks) == 101
    assert validate_chain(blocks, params).ok
    for cut in (1, 2, 37, 100):
        assert validate_chain(blocks[:cut], params).ok


def test_modified_tx_at_40_reports_tx_root_mismatch(chain100):
    params, blocks, _, _ = chain100
    target = blocks[40]
    assert target.txs
    tx = target.txs[0]
    flipped = dataclasses.replace(tx, payload=Transfer(tx.payload.to, tx.payload.amount ^ 1))
    bad = Block(target.header, (flipped, *target.txs[1:]))
    report = validate_chain([*blocks[:40], bad, *blocks[41:]], params)
    assert (report.ok, report.height, report.reason) == (False, 40, "tx-root-mismatch")


def test_byte_flip_in_encoded_tx_list_detected_at_40(chain100):
    params, blocks, _, _ = chain100
    data = bytearray(canonical_serialize(blocks[40]))
    header_len = 4 + len(blocks[40].header.encode())
    # first tx: 4-byte count, 4-byte blob length, then 20-byte sender
    data[header_len + 8 + 5] ^= 0x01
    bad = canonical_deserialize(bytes(data))
    report = validate_chain([*blocks[:40], bad, *blocks[41:]], params)
    assert (report.height, report.reason) == (40, "tx-root-mismatch")


def test_foreign_signature_at_7_reports_bad_signature(chain100):
    params, blocks, vals, _ = chain100
    h = blocks[7].header
    other = next(k for k in vals if k.address != h.proposer)
    forged = Block(dataclasses.replace(h, signature=other.sign(h.signing_digest)), blocks[7].txs)
    report = validate_chain([*blocks[:7], forged, *blocks[8:]], params)
    assert (report.ok, report.height, report.reason) == (False, 7, "bad-signature")


def test_other_violation_reasons(chain100):
    params, blocks, vals, _ = chain100
    h = blocks[12].header
    relinked = Block(dataclasses.replace(h, parent=blocks[10].digest), blocks[12].txs)
    assert validate_chain([*blocks[:12], relinked], params).reason == "parent-mismatch"

    h = blocks[3].header
    key = next(k for k in vals if k.address == h.proposer)
    back_in_time = Block(dataclasses.replace(h, timestamp=blocks[2].header.timestamp - 1).signed(key), blocks[3].txs)
    assert validate_chain([*blocks[:3], back_in_time], params).reason == "non-monotonic-timestamp"

    outsider = KeyPair.from_seed("outsider")
    usurped = Block(dataclasses.replace(h, proposer=outsider.address).signed(outsider), blocks[3].txs)
    assert validate_chain([*blocks[:3], usurped], params).reason == "unauthorized-proposer"

    wrong_root = Block(dataclasses.replace(h, state_root=digest(b"x")).signed(key), blocks[3].txs)
    assert validate_chain([*blocks[:3], wrong_root], params).reason == "state-root-mismatch"


def test_encoded_chain_round_trip_and_malformed_input(chain100):
    params, blocks, _, _ = chain100
    data = encode_chain(blocks)
    decoded, failure = decode_chain(data)
    assert failure is None and decoded == blocks
    assert validate_encoded_chain(data, params).ok
    truncated = validate_encoded_chain(data[:-3], params)
    assert not truncated.ok and truncated.reason == "malformed" and truncated.height == 100
    assert validate_encoded_chain(b"", params).reason == "empty-chain"
