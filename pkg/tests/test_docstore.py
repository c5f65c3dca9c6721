import os
import random

import pytest

from chainkit import extend, make_params, operator_keys, validator_keys
from poachain.consensus import ChainView
from poachain.core import digest, to_hex
from poachain.docstore import (
    DocumentStore,
    IntegrityMismatch,
    LinkUnresolvable,
    NotRegistered,
    TooLarge,
    on_chain_footprint,
    register_on_chain,
    registration,
)


@pytest.fixture
def store(tmp_path):
    return DocumentStore(tmp_path / "docs", max_bytes=1 << 20)


def register(view, vals, op, docs):
    nonce = view.head_state.account(op.address).nonce
    txs = [register_on_chain(d, op, nonce + i) for i, d in enumerate(docs)]
    [block] = extend(view, vals, 1, lambda h, v: txs)
    assert all(r.status == "success" for r in view.head_entry.receipts)
    return block


@pytest.fixture
def ledger():
    vals, ops = validator_keys(7), operator_keys(1)
    return ChainView(make_params(vals, ops)), vals, ops[0]


def test_store_is_content_addressed_and_idempotent(store):
    a = store.store(b"contract v1")
    b = store.store(b"contract v1")
    assert a.digest == b.digest == digest(b"contract v1")
    assert a.link == b.link == "store://" + to_hex(a.digest)
    files = [p for p in store.root.rglob("*") if p.is_file()]
    assert files == [store.path_for(a.digest)]


def test_empty_document(store):
    doc = store.store(b"")
    assert doc.digest == digest(b"") and doc.size_bytes == 0
    assert store.read_verified(doc.digest) == b""


def test_hundred_random_round_trips(store):
    rng = random.Random(4)
    for _ in range(100):
        data = rng.randbytes(rng.randint(0, 4096))
        doc = store.store(data)
        assert store.read_verified(doc.digest, doc.link) == data


def test_too_large_is_rejected(store):
    with pytest.raises(TooLarge):
        store.store(b"\x00" * ((1 << 20) + 1))
    assert store.store(b"\x00" * (1 << 20)).size_bytes == 1 << 20


def test_unresolvable_links(store):
    with pytest.raises(LinkUnresolvable):
        store.resolve("http://example.com/x")
    with pytest.raises(LinkUnresolvable):
        store.resolve("store://../../etc/passwd")
    with pytest.raises(LinkUnresolvable):
        store.read_verified(digest(b"never stored"))


def test_registration_records_block_height_and_time(store, ledger):
    view, vals, op = ledger
    doc = store.store(b"bill of lading 42")
    block = register(view, vals, op, [doc])
    rec = registration(view.head_state, doc.digest)
    assert rec.height == block.height and rec.timestamp == block.header.timestamp
    assert rec.sender == op.address and rec.link == doc.link
    assert store.fetch_and_verify(doc.digest, view.head_state) == b"bill of lading 42"


def test_unregistered_document_is_refused(store, ledger):
    view, _, _ = ledger
    doc = store.store(b"stored but never registered")
    with pytest.raises(NotRegistered):
        store.fetch_and_verify(doc.digest, view.head_state)


def test_single_byte_corruption_detected(store, ledger):
    view, vals, op = ledger
    doc = store.store(b"invoice 2024-001: 1500 units")
    register(view, vals, op, [doc])
    path = store.path_for(doc.digest)
    data = bytearray(path.read_bytes())
    data[7] ^= 0x01
    os.chmod(path, 0o644)
    path.write_bytes(bytes(data))
    with pytest.raises(IntegrityMismatch):
        store.fetch_and_verify(doc.digest, view.head_state)


def test_footprint_is_small_whatever_the_document_size(store, ledger):
    view, vals, op = ledger
    docs = [store.store(os.urandom(n)) for n in (0, 10, 100_000, 1 << 20)]
    register(view, vals, op, docs)
    for doc in docs:
        assert 0 < on_chain_footprint(view.head_state, doc.digest) <= 256
    assert on_chain_footprint(view.head_state, digest(b"nope")) == 0


def test_registering_twice_reverts(store, ledger):
    view, vals, op = ledger
    doc = store.store(b"once")
    register(view, vals, op, [doc])
    nonce = view.head_state.account(op.address).nonce
    tx = register_on_chain(doc, op, nonce)
    extend(view, vals, 1, lambda h, v: [tx])
    [receipt] = view.head_entry.receipts
    assert receipt.status != "success"
