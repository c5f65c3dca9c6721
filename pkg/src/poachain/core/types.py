"""Transactions, headers and blocks with their canonical encodings.

Byte layout (all integers big-endian, ``blob`` = u32 length + bytes)::

    signature   := scheme:u8  public_key:blob  value:blob
    tx_body     := sender:20  nonce:u64  kind:u8  gas_limit:u64  payload:blob
    tx          := tx_body  signature
    header_body := height:u64  parent:32  state_root:32  tx_root:32
                   proposer:20  timestamp:u64  weight:u8
    header      := header_body  signature
    block       := header:blob  tx_count:u32  (tx:blob)*

Payload bodies by kind::

    Transfer(1)     to:20  amount:u256
    Mint(2)         beneficiary:20  amount:u256
    Endow(3)        operator:20  amount:u256
    ContractCall(4) contract:20  method:blob  argc:u32  (arg:blob)*
    Governance(5)   action:u8  subject:blob  n:u32  (signature)*

A transaction digest covers ``tx_body`` only. A header is signed over the
digest of ``header_body``; the block digest covers the full header,
signature included.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

from .crypto import (
    ADDRESS_SIZE,
    DIGEST_SIZE,
    EMPTY_SIGNATURE,
    Address,
    Digest,
    KeyPair,
    Signature,
    digest,
    verify,
)
from .encoding import DecodeError, Reader, Writer
from .merkle import merkle_root


class Role(enum.IntEnum):
    EXTERNAL = 0
    OPERATOR = 1
    VALIDATOR = 2


class TxKind(enum.IntEnum):
    TRANSFER = 1
    MINT = 2
    ENDOW = 3
    CONTRACT_CALL = 4
    GOVERNANCE = 5


class GovAction(enum.IntEnum):
    ADD_VALIDATOR = 1
    REMOVE_VALIDATOR = 2
    SET_GAS_SCHEDULE = 3


@dataclass(frozen=True)
class Transfer:
    to: Address
    amount: int


@dataclass(frozen=True)
class Mint:
    beneficiary: Address
    amount: int


@dataclass(frozen=True)
class Endow:
    operator: Address
    amount: int


@dataclass(frozen=True)
class ContractCall:
    contract: Address
    method: str
    args: tuple[bytes, ...] = ()


@dataclass(frozen=True)
class Governance:
    action: GovAction
    subject: bytes
    approvals: tuple[Signature, ...] = ()


Payload = Union[Transfer, Mint, Endow, ContractCall, Governance]

_KIND_OF = {
    Transfer: TxKind.TRANSFER,
    Mint: TxKind.MINT,
    Endow: TxKind.ENDOW,
    ContractCall: TxKind.CONTRACT_CALL,
    Governance: TxKind.GOVERNANCE,
}


def write_signature(w: Writer, sig: Signature) -> None:
    w.u8(sig.scheme).blob(sig.public_key).blob(sig.value)


def read_signature(r: Reader) -> Signature:
    return Signature(r.u8(), r.blob(), r.blob())


def encode_payload(payload: Payload) -> bytes:
    w = Writer()
    if isinstance(payload, Transfer):
        w.raw(payload.to, ADDRESS_SIZE).u256(payload.amount)
    elif isinstance(payload, Mint):
        w.raw(payload.beneficiary, ADDRESS_SIZE).u256(payload.amount)
    elif isinstance(payload, Endow):
        w.raw(payload.operator, ADDRESS_SIZE).u256(payload.amount)
    elif isinstance(payload, ContractCall):
        w.raw(payload.contract, ADDRESS_SIZE).blob(payload.method.encode())
        w.u32(len(payload.args))
        for arg in payload.args:
            w.blob(arg)
    elif isinstance(payload, Governance):
        w.u8(int(payload.action)).blob(payload.subject).u32(len(payload.approvals))
        for sig in payload.approvals:
            write_signature(w, sig)
    else:
        raise TypeError(f"unknown payload {payload!r}")
    return w.getvalue()


def decode_payload(kind: int, data: bytes) -> Payload:
    r = Reader(data)
    try:
        kind = TxKind(kind)
    except ValueError:
        raise DecodeError(f"unknown tx kind {kind}") from None
    if kind is TxKind.TRANSFER:
        out: Payload = Transfer(r.raw(ADDRESS_SIZE), r.u256())
    elif kind is TxKind.MINT:
        out = Mint(r.raw(ADDRESS_SIZE), r.u256())
    elif kind is TxKind.ENDOW:
        out = Endow(r.raw(ADDRESS_SIZE), r.u256())
    elif kind is TxKind.CONTRACT_CALL:
        contract = r.raw(ADDRESS_SIZE)
        try:
            method = r.blob().decode()
        except UnicodeDecodeError:
            raise DecodeError("method name is not utf-8") from None
        args = tuple(r.blob() for _ in range(r.u32()))
        out = ContractCall(contract, method, args)
    else:
        try:
            action = GovAction(r.u8())
        except ValueError:
            raise DecodeError("unknown governance action") from None
        subject = r.blob()
        approvals = tuple(read_signature(r) for _ in range(r.u32()))
        out = Governance(action, subject, approvals)
    r.done()
    return out


def payload_data_size(payload: Payload) -> int:
    """Variable-length data bytes billed per byte."""
    if isinstance(payload, ContractCall):
        return len(payload.method.encode()) + sum(len(a) for a in payload.args)
    if isinstance(payload, Governance):
        return len(payload.subject)
    return 0


@dataclass(frozen=True)
class Transaction:
    sender: Address
    nonce: int
    payload: Payload
    gas_limit: int
    signature: Signature = EMPTY_SIGNATURE

    @property
    def kind(self) -> TxKind:
        return _KIND_OF[type(self.payload)]

    @cached_property
    def body(self) -> bytes:
        w = Writer()
        w.raw(self.sender, ADDRESS_SIZE).u64(self.nonce).u8(int(self.kind))
        w.u64(self.gas_limit).blob(encode_payload(self.payload))
        return w.getvalue()

    @cached_property
    def digest(self) -> Digest:
        return digest(self.body)

    def encode(self) -> bytes:
        w = Writer()
        write_signature(w, self.signature)
        return self.body + w.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> Transaction:
        r = Reader(data)
        sender = r.raw(ADDRESS_SIZE)
        nonce = r.u64()
        kind = r.u8()
        gas_limit = r.u64()
        payload = decode_payload(kind, r.blob())
        sig = read_signature(r)
        r.done()
        return cls(sender, nonce, payload, gas_limit, sig)

    def signed(self, key: KeyPair) -> Transaction:
        unsigned = Transaction(self.sender, self.nonce, self.payload, self.gas_limit)
        return Transaction(
            self.sender, self.nonce, self.payload, self.gas_limit, key.sign(unsigned.digest)
        )

    def signature_ok(self) -> bool:
        return verify(self.signature, self.digest, self.sender)


def make_tx(key: KeyPair, nonce: int, payload: Payload, gas_limit: int) -> Transaction:
    return Transaction(key.address, nonce, payload, gas_limit).signed(key)


@dataclass(frozen=True)
class BlockHeader:
    height: int
    parent: Digest
    state_root: Digest
    tx_root: Digest
    proposer: Address
    timestamp: int
    weight: int
    signature: Signature = EMPTY_SIGNATURE

    @cached_property
    def body(self) -> bytes:
        w = Writer()
        w.u64(self.height).raw(self.parent, DIGEST_SIZE)
        w.raw(self.state_root, DIGEST_SIZE).raw(self.tx_root, DIGEST_SIZE)
        w.raw(self.proposer, ADDRESS_SIZE).u64(self.timestamp).u8(self.weight)
        return w.getvalue()

    @cached_property
    def signing_digest(self) -> Digest:
        return digest(self.body)

    @cached_property
    def encoded(self) -> bytes:
        w = Writer()
        write_signature(w, self.signature)
        return self.body + w.getvalue()

    @cached_property
    def digest(self) -> Digest:
        return digest(self.encoded)

    def encode(self) -> bytes:
        return self.encoded

    @classmethod
    def decode(cls, data: bytes) -> BlockHeader:
        r = Reader(data)
        out = cls(
            height=r.u64(),
            parent=r.raw(DIGEST_SIZE),
            state_root=r.raw(DIGEST_SIZE),
            tx_root=r.raw(DIGEST_SIZE),
            proposer=r.raw(ADDRESS_SIZE),
            timestamp=r.u64(),
            weight=r.u8(),
            signature=read_signature(r),
        )
        r.done()
        return out

    def signed(self, key: KeyPair) -> BlockHeader:
        return BlockHeader(
            self.height, self.parent, self.state_root, self.tx_root,
            self.proposer, self.timestamp, self.weight,
            key.sign(self.signing_digest),
        )

    def signature_ok(self) -> bool:
        return verify(self.signature, self.signing_digest, self.proposer)


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    txs: tuple[Transaction, ...] = field(default_factory=tuple)

    @property
    def digest(self) -> Digest:
        return self.header.digest

    @property
    def height(self) -> int:
        return self.header.height

    @property
    def parent(self) -> Digest:
        return self.header.parent

    def computed_tx_root(self) -> Digest:
        return merkle_root([tx.digest for tx in self.txs])

    def encode(self) -> bytes:
        w = Writer()
        w.blob(self.header.encode()).u32(len(self.txs))
        for tx in self.txs:
            w.blob(tx.encode())
        return w.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> Block:
        r = Reader(data)
        header = BlockHeader.decode(r.blob())
        count = r.u32()
        if count > r.remaining // 4:
            raise DecodeError("tx count exceeds input")
        txs = tuple(Transaction.decode(r.blob()) for _ in range(count))
        r.done()
        return cls(header, txs)


def canonical_serialize(block: Block) -> bytes:
    return block.encode()


def canonical_deserialize(data: bytes) -> Block:
    return Block.decode(data)
