"""Gossip wire messages: a one-byte tag followed by a canonical body."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from ..core.crypto import DIGEST_SIZE, Digest
from ..core.encoding import DecodeError, Reader, Writer
from ..core.types import Block, Transaction

TAG_NEW_BLOCK = 1
TAG_REQUEST_BLOCK = 2
TAG_BLOCK_RESPONSE = 3
TAG_NEW_TX = 4
TAG_TX_ACK = 5


@dataclass(frozen=True)
class NewBlock:
    block: Block


@dataclass(frozen=True)
class RequestBlock:
    digest: Digest


@dataclass(frozen=True)
class BlockResponse:
    block: Block


@dataclass(frozen=True)
class NewTx:
    tx: Transaction
    want_ack: bool = False


@dataclass(frozen=True)
class TxAck:
    tx_digest: Digest
    accepted: bool
    error: str = ""
    message: str = ""


Message = Union[NewBlock, RequestBlock, BlockResponse, NewTx, TxAck]


def encode_message(msg: Message) -> bytes:
    w = Writer()
    if isinstance(msg, NewBlock):
        w.u8(TAG_NEW_BLOCK).blob(msg.block.encode())
    elif isinstance(msg, RequestBlock):
        w.u8(TAG_REQUEST_BLOCK).raw(msg.digest, DIGEST_SIZE)
    elif isinstance(msg, BlockResponse):
        w.u8(TAG_BLOCK_RESPONSE).blob(msg.block.encode())
    elif isinstance(msg, NewTx):
        w.u8(TAG_NEW_TX).u8(int(msg.want_ack)).blob(msg.tx.encode())
    elif isinstance(msg, TxAck):
        w.u8(TAG_TX_ACK).raw(msg.tx_digest, DIGEST_SIZE).u8(int(msg.accepted))
        w.blob(msg.error.encode()).blob(msg.message.encode())
    else:
        raise TypeError(f"not a message: {msg!r}")
    return w.getvalue()


def decode_message(data: bytes) -> Message:
    r = Reader(data)
    tag = r.u8()
    if tag == TAG_NEW_BLOCK:
        out: Message = NewBlock(Block.decode(r.blob()))
    elif tag == TAG_REQUEST_BLOCK:
        out = RequestBlock(r.raw(DIGEST_SIZE))
    elif tag == TAG_BLOCK_RESPONSE:
        out = BlockResponse(Block.decode(r.blob()))
    elif tag == TAG_NEW_TX:
        want_ack = bool(r.u8())
        out = NewTx(Transaction.decode(r.blob()), want_ack)
    elif tag == TAG_TX_ACK:
        out = TxAck(r.raw(DIGEST_SIZE), bool(r.u8()), r.blob().decode(), r.blob().decode())
    else:
        raise DecodeError(f"unknown message tag {tag}")
    r.done()
    return out
