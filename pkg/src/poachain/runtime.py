"""asyncio host for one validator or observer node.

A single event loop runs the consensus core (``Node``), TCP gossip, the
anchoring agent and the explorer. The core is sans-IO: this module only
turns its ``Broadcast``/``Send``/``SetTimer`` actions into socket writes
and loop timers. The explorer reads immutable snapshots and never touches
the live view.

Wire framing is a big-endian u32 length followed by one gossip message.
A connection is symmetric: whichever side dialed, both ends gossip.
"""

from __future__ import annotations

import asyncio
import contextlib
import itertools
import logging
import os
import signal
import struct
import time
from pathlib import Path

import uvicorn

from .anchoring import AnchorAgent, AnchorLog, FileWitness, MockWitness, WitnessClient
from .consensus.chain_view import accept_block
from .consensus.messages import (
    Message,
    NewBlock,
    NewTx,
    TxAck,
    decode_message,
    encode_message,
)
from .consensus.node import Broadcast, Node, Send, SetTimer
from .core.crypto import to_hex
from .core.encoding import DecodeError
from .docstore import DocumentStore
from .explorer import ChainSnapshot, create_app
from .keyfile import load_key
from .node_config import NodeConfig
from .validation import ValidationReport, decode_chain, encode_chain, validate_encoded_chain

log = logging.getLogger(__name__)

MAX_FRAME = 32 * 1024 * 1024
CHAIN_FILE = "chain.bin"
ANCHOR_FILE = "anchors.jsonl"
_LEN = struct.Struct(">I")


class ChainCorrupt(Exception):
    def __init__(self, report: ValidationReport) -> None:
        super().__init__(f"stored chain failed validation at height {report.height}: "
                         f"{report.reason} ({report.detail})")
        self.report = report


def now_ms() -> int:
    return int(time.time() * 1000)


async def read_frame(reader: asyncio.StreamReader) -> bytes:
    (size,) = _LEN.unpack(await reader.readexactly(4))
    if size > MAX_FRAME:
        raise DecodeError(f"frame of {size} bytes exceeds limit")
    return await reader.readexactly(size)


def write_frame(writer: asyncio.StreamWriter, payload: bytes) -> None:
    writer.write(_LEN.pack(len(payload)) + payload)


async def submit_transaction(host: str, port: int, tx, timeout: float = 10.0) -> TxAck:
    """Send ``tx`` to a node's gossip port and wait for its ``TxAck``."""
    reader, writer = await asyncio.wait_for(asyncio.open_connection(host, port), timeout)
    try:
        write_frame(writer, encode_message(NewTx(tx, want_ack=True)))
        await writer.drain()
        while True:
            msg = decode_message(await asyncio.wait_for(read_frame(reader), timeout))
            if isinstance(msg, TxAck) and msg.tx_digest == tx.digest:
                return msg
    finally:
        writer.close()
        with contextlib.suppress(OSError):
            await writer.wait_closed()


class _QuietServer(uvicorn.Server):
    # the runtime owns SIGTERM/SIGINT; uvicorn must not capture or re-raise them
    @contextlib.contextmanager
    def capture_signals(self):
        yield


class NodeRuntime:
    def __init__(self, config: NodeConfig) -> None:
        self.config = config
        self.params = config.chain_params()
        self.key = load_key(config.key_file)
        self.data_dir = config.data_path
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.node = Node(self.params, self.key, node_id=to_hex(self.key.address)[:8],
                         listener=self._on_event)
        self._restore()
        self.store = DocumentStore(self.data_dir / "docs", config.max_document_bytes)
        self.anchor_log = AnchorLog(self.data_dir / ANCHOR_FILE)
        self.witness = self._witness()
        self.anchor_agent = (AnchorAgent(config.anchor_policy(), self.witness, self.anchor_log,
                                         start_time=self.params.genesis.timestamp)
                             if config.anchor.enabled else None)
        self._conns: dict[int, asyncio.StreamWriter] = {}
        self._ids = itertools.count(1)
        self._timers: list[asyncio.TimerHandle] = []
        self._snapshot: ChainSnapshot | None = None
        self._snapshot_key: tuple | None = None
        self._server: asyncio.base_events.Server | None = None
        self.explorer: _QuietServer | None = None

    # startup / shutdown

    def _restore(self) -> None:
        path = self.data_dir / CHAIN_FILE
        if not path.exists():
            return
        data = path.read_bytes()
        report = validate_encoded_chain(data, self.params)
        if not report.ok:
            raise ChainCorrupt(report)
        blocks, _ = decode_chain(data)
        for block in blocks[1:]:
            accept_block(self.node.view, block)
        log.info("restored chain at height %d", self.node.view.head_entry.height)

    def _witness(self) -> WitnessClient:
        if self.config.witness.kind == "mock":
            return MockWitness(clock=time.time)
        return FileWitness(self.config.witness_path)

    def persist(self) -> Path:
        path = self.data_dir / CHAIN_FILE
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(encode_chain(self.node.view.canonical()))
        os.replace(tmp, path)
        return path

    # snapshots

    def snapshot(self) -> ChainSnapshot:
        key = (self.node.view.head, len(self.anchor_log))
        if key != self._snapshot_key:
            self._snapshot = ChainSnapshot.from_view(self.node.view, self.anchor_log.anchors)
            self._snapshot_key = key
        return self._snapshot

    # action plumbing

    def _on_event(self, kind: str, **data) -> None:
        if kind == "head":
            log.info("head %s at height %d", data["digest"][:16], data["height"])
        elif kind in ("rejected", "equivocation"):
            log.warning("%s: %s", kind, data)

    def _dispatch(self, actions) -> None:
        for action in actions:
            if isinstance(action, SetTimer):
                delay = max(0.0, (action.at_ms - now_ms()) / 1000)
                handle = asyncio.get_running_loop().call_later(delay, self._fire, action.token)
                self._timers.append(handle)
            elif isinstance(action, Broadcast):
                data = encode_message(action.msg)
                for cid, writer in list(self._conns.items()):
                    if cid != action.exclude:
                        self._write(cid, writer, data)
            elif isinstance(action, Send):
                writer = self._conns.get(action.peer)
                if writer is not None:
                    self._write(action.peer, writer, encode_message(action.msg))

    def _write(self, cid: int, writer: asyncio.StreamWriter, data: bytes) -> None:
        if writer.is_closing():
            self._conns.pop(cid, None)
            return
        write_frame(writer, data)

    def _fire(self, token: int) -> None:
        loop_now = asyncio.get_running_loop().time()
        self._timers = [h for h in self._timers if h.when() > loop_now]
        self._dispatch(self.node.on_timer(token, now_ms()))

    # connections

    async def _serve_conn(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        cid = next(self._ids)
        self._conns[cid] = writer
        self.node.peers = list(self._conns)
        # let the other side catch up from our head
        write_frame(writer, encode_message(NewBlock(self.node.view.head_block)))
        try:
            while True:
                try:
                    msg: Message = decode_message(await read_frame(reader))
                except DecodeError as exc:
                    log.warning("dropping peer %d: %s", cid, exc)
                    break
                self._dispatch(self.node.on_message(msg, cid, now_ms()))
                await writer.drain()
        except (asyncio.IncompleteReadError, ConnectionError):
            pass
        finally:
            self._conns.pop(cid, None)
            self.node.peers = list(self._conns)
            writer.close()
            with contextlib.suppress(OSError, ConnectionError):
                await writer.wait_closed()

    async def _dial(self, endpoint: str) -> None:
        host, _, port = endpoint.rpartition(":")
        while True:
            try:
                reader, writer = await asyncio.open_connection(host, int(port))
            except OSError:
                await asyncio.sleep(1.0)
                continue
            log.info("connected to %s", endpoint)
            await self._serve_conn(reader, writer)
            await asyncio.sleep(1.0)

    # periodic work

    async def _anchor_loop(self) -> None:
        tick = min(1.0, self.config.anchor.interval_seconds / 4)
        while True:
            await asyncio.sleep(tick)
            view = self.node.view
            anchor = self.anchor_agent.maybe_anchor(view.canonical(), time.time(),
                                                    len(view.head_state.validators))
            if anchor is not None:
                log.info("anchored height %d (%s)", anchor.height, anchor.witness_ref)

    # main

    async def run(self, stop: asyncio.Event | None = None) -> None:
        stop = stop or asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGTERM, signal.SIGINT):
            with contextlib.suppress(NotImplementedError, RuntimeError, ValueError):
                loop.add_signal_handler(sig, stop.set)

        host, port = self.config.listen_addr
        self._server = await asyncio.start_server(self._serve_conn, host, port)
        tasks = [asyncio.create_task(self._dial(p)) for p in self.config.peers]
        if self.anchor_agent is not None:
            tasks.append(asyncio.create_task(self._anchor_loop()))
        explorer_task = None
        if self.config.explorer_port is not None:
            app = create_app(self.snapshot, self.store, self.config.explorer_allow)
            self.explorer = _QuietServer(uvicorn.Config(
                app, host=self.config.explorer_host, port=self.config.explorer_port,
                log_level="warning", lifespan="off", access_log=False))
            explorer_task = asyncio.create_task(self.explorer.serve())
        self._dispatch(self.node.start(now_ms()))
        log.info("node %s listening on %s", to_hex(self.key.address), self.config.listen)
        try:
            await stop.wait()
        finally:
            await self._shutdown(tasks, explorer_task)

    async def _shutdown(self, tasks, explorer_task) -> None:
        for handle in self._timers:
            handle.cancel()
        for task in tasks:
            task.cancel()
        await asyncio.gather(*tasks, return_exceptions=True)
        if self.explorer is not None:
            self.explorer.should_exit = True
            await asyncio.gather(explorer_task, return_exceptions=True)
        self._server.close()
        for writer in list(self._conns.values()):
            writer.close()
        with contextlib.suppress(Exception):
            await self._server.wait_closed()
        path = self.persist()
        log.info("persisted %d blocks to %s", self.node.view.head_entry.height + 1, path)


def run_node(config: NodeConfig) -> None:
    runtime = NodeRuntime(config)
    asyncio.run(runtime.run())
