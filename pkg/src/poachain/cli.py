"""``poachain`` command line.

Successful commands print one JSON object on stdout and exit 0. Failures
print ``{"error": <code>, "message": ...}`` on stderr and exit with the
status listed in ``EXIT_CODES``; expected failures never show a traceback.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import logging
import sys
import time
import urllib.error
import urllib.request
from pathlib import Path

import click

from .anchoring import load_witness_dump, verify_against_anchors
from .core.crypto import KeyPair, from_hex, to_hex
from .core.types import Endow, Role, Transfer, make_tx
from .docstore import DocStoreError, DocumentStore, register_on_chain
from .execution.gas import GasSchedule
from .keyfile import KeyFileError, load_key, save_key
from .node_config import ConfigInvalid, NodeConfig
from .params import Allocation, ChainParams, ConsensusConfig, Genesis
from .validation import decode_chain, validate_encoded_chain

# error code -> exit status. Transaction rejections keep their own code
# (InsufficientGasFunds, BadNonce, ...) and share status 7.
EXIT_CODES = {
    "UsageError": 2,
    "ConfigInvalid": 3,
    "KeyFileError": 4,
    "IOError": 5,
    "NodeUnreachable": 6,
    "TxRejected": 7,
    "VerificationFailed": 8,
    "DocStoreError": 9,
    "ChainCorrupt": 10,
}


class CliError(Exception):
    def __init__(self, code: str, message: str, status: int | None = None, **extra) -> None:
        super().__init__(message)
        self.code = code
        self.status = status if status is not None else EXIT_CODES[code]
        self.extra = extra

    def payload(self) -> dict:
        return {"error": self.code, "message": str(self), **self.extra}


def emit(obj: dict) -> None:
    click.echo(json.dumps(obj, indent=2, sort_keys=True))


class JsonGroup(click.Group):
    """Root group that reports every failure as a JSON error object."""

    def main(self, args=None, prog_name=None, **extra):  # type: ignore[override]
        extra.pop("standalone_mode", None)
        try:
            rv = super().main(args=args, prog_name=prog_name, standalone_mode=False, **extra)
        except CliError as exc:
            click.echo(json.dumps(exc.payload(), sort_keys=True), err=True)
            sys.exit(exc.status)
        except click.exceptions.Exit as exc:
            sys.exit(exc.exit_code)
        except click.exceptions.Abort:
            click.echo(json.dumps({"error": "Aborted", "message": "interrupted"}), err=True)
            sys.exit(130)
        except click.UsageError as exc:
            click.echo(json.dumps({"error": "UsageError", "message": exc.format_message()}), err=True)
            sys.exit(EXIT_CODES["UsageError"])
        except click.ClickException as exc:
            click.echo(json.dumps({"error": "UsageError", "message": exc.format_message()}), err=True)
            sys.exit(EXIT_CODES["UsageError"])
        sys.exit(rv if isinstance(rv, int) else 0)


# shared helpers

def _key(path: str) -> KeyPair:
    try:
        return load_key(path)
    except KeyFileError as exc:
        raise CliError("KeyFileError", str(exc)) from None


def _address(text: str) -> bytes:
    try:
        return from_hex(text, 20)
    except ValueError:
        raise CliError("UsageError", f"not a 20-byte hex address: {text!r}") from None


def _endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise CliError("UsageError", f"expected host:port, got {text!r}")
    return host, int(port)


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError("IOError", str(exc)) from None


def _nonce(explicit: int | None, explorer: str | None, address: bytes) -> int:
    if explicit is not None:
        return explicit
    if explorer is None:
        raise CliError("UsageError", "give --nonce or --explorer to look the nonce up")
    url = f"{explorer.rstrip('/')}/addresses/{to_hex(address)}"
    try:
        with urllib.request.urlopen(url, timeout=10) as resp:
            return int(json.loads(resp.read())["nonce"])
    except (urllib.error.URLError, OSError, ValueError, KeyError) as exc:
        raise CliError("NodeUnreachable", f"explorer {explorer}: {exc}") from None


def _submit(node: str, tx) -> dict:
    from .runtime import submit_transaction

    host, port = _endpoint(node)
    try:
        ack = asyncio.run(submit_transaction(host, port, tx))
    except (OSError, asyncio.TimeoutError, asyncio.IncompleteReadError) as exc:
        raise CliError("NodeUnreachable", f"{node}: {exc or type(exc).__name__}") from None
    if not ack.accepted:
        raise CliError(ack.error or "TxRejected", ack.message or ack.error,
                       status=EXIT_CODES["TxRejected"], tx=to_hex(tx.digest))
    return {"tx": to_hex(tx.digest), "accepted": True, "sender": to_hex(tx.sender),
            "nonce": tx.nonce}


_node_opt = click.option("--node", required=True, metavar="HOST:PORT", help="Gossip endpoint of a node.")
_key_opt = click.option("--key", "key_path", required=True, type=click.Path(dir_okay=False),
                        help="Signing key file.")
_nonce_opt = click.option("--nonce", type=click.IntRange(min=0), default=None,
                          help="Sender nonce (looked up via --explorer when omitted).")
_explorer_opt = click.option("--explorer", default=None, metavar="URL",
                             help="Explorer base URL used to look up the nonce.")


@click.group(cls=JsonGroup)
@click.version_option(package_name="artifact", prog_name="poachain")
def cli() -> None:
    """Permissioned proof-of-authority ledger node and tools."""


@cli.command()
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Key file to write (mode 0600).")
@click.option("--force", is_flag=True, help="Overwrite an existing file.")
def keygen(out: str, force: bool) -> None:
    """Generate an Ed25519 key pair and print its address."""
    if Path(out).exists() and not force:
        raise CliError("IOError", f"{out} exists (use --force to overwrite)")
    key = KeyPair.generate()
    try:
        save_key(key, out)
    except OSError as exc:
        raise CliError("IOError", str(exc)) from None
    emit({"address": to_hex(key.address), "public_key": to_hex(key.public), "key_file": out})


@cli.group()
def genesis() -> None:
    """Genesis file helpers."""


@genesis.command("init")
@click.option("--validator", "validators", multiple=True, required=True,
              help="Validator address, or a key file to read it from. Repeatable.")
@click.option("--alloc", "allocs", multiple=True, metavar="ADDR:AMOUNT[:ROLE]",
              help="Initial balance; ROLE is operator (default), validator or external.")
@click.option("--timestamp", type=int, default=None, help="Genesis unix time (default: now).")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def genesis_init(validators, allocs, timestamp, out) -> None:
    """Write a genesis JSON file shared by all nodes."""
    members = []
    for v in validators:
        members.append(_key(v).address if Path(v).is_file() else _address(v))
    allocations = []
    for spec in allocs:
        parts = spec.split(":")
        if len(parts) not in (2, 3) or not parts[1].isdigit():
            raise CliError("UsageError", f"bad --alloc {spec!r}")
        role = parts[2].upper() if len(parts) == 3 else "OPERATOR"
        if role not in Role.__members__:
            raise CliError("UsageError", f"unknown role {parts[2]!r}")
        allocations.append(Allocation(_address(parts[0]), int(parts[1]), Role[role]))
    try:
        g = Genesis(tuple(members), tuple(allocations),
                    int(time.time()) if timestamp is None else timestamp)
    except ValueError as exc:
        raise CliError("ConfigInvalid", str(exc)) from None
    try:
        Path(out).write_text(json.dumps(g.to_json(), indent=2) + "\n")
    except OSError as exc:
        raise CliError("IOError", str(exc)) from None
    emit({"genesis": out, "validators": len(members),
          "genesis_digest": to_hex(ChainParams(g).genesis_block().digest)})


@cli.group()
def node() -> None:
    """Run a node or inspect its configuration."""


def _load_config(path: str) -> NodeConfig:
    try:
        return NodeConfig.load(path)
    except ConfigInvalid as exc:
        raise CliError("ConfigInvalid", str(exc)) from None


@node.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--log-level", default="INFO", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]))
def node_run(config_path: str, log_level: str) -> None:
    """Run consensus, gossip, explorer and anchoring until SIGTERM."""
    from .runtime import ChainCorrupt, NodeRuntime

    cfg = _load_config(config_path)
    logging.basicConfig(level=log_level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        runtime = NodeRuntime(cfg)
    except ConfigInvalid as exc:
        raise CliError("ConfigInvalid", str(exc)) from None
    except KeyFileError as exc:
        raise CliError("KeyFileError", str(exc)) from None
    except ChainCorrupt as exc:
        raise CliError("ChainCorrupt", str(exc), report=exc.report.to_json()) from None
    try:
        asyncio.run(runtime.run())
    except OSError as exc:
        raise CliError("IOError", str(exc)) from None
    view = runtime.node.view
    emit({"stopped": True, "height": view.head_entry.height, "head": to_hex(view.head)})


@node.group("config")
def node_config() -> None:
    """Node configuration helpers."""


@node_config.command("print")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
def node_config_print(config_path: str) -> None:
    """Print the fully-resolved config; the output reloads to an equal config."""
    click.echo(_load_config(config_path).dumps())


@cli.group()
def tx() -> None:
    """Transactions."""


@tx.command("send")
@_node_opt
@_key_opt
@click.option("--to", "to", required=True, help="Recipient address.")
@click.option("--amount", required=True, type=click.IntRange(min=0))
@click.option("--gas-limit", default=None, type=click.IntRange(min=1),
              help="Defaults to the standard transfer cost.")
@_nonce_opt
@_explorer_opt
def tx_send(node, key_path, to, amount, gas_limit, nonce, explorer) -> None:
    """Sign and submit a transfer."""
    key = _key(key_path)
    payload = Transfer(_address(to), amount)
    t = make_tx(key, _nonce(nonce, explorer, key.address), payload,
                gas_limit or GasSchedule().transfer)
    emit(_submit(node, t))


@cli.command()
@_node_opt
@_key_opt
@click.option("--to", "to", required=True, help="Operator address to endow.")
@click.option("--amount", required=True, type=click.IntRange(min=1))
@_nonce_opt
@_explorer_opt
def faucet(node, key_path, to, amount, nonce, explorer) -> None:
    """Endow an operator from a validator's balance (grants write access)."""
    key = _key(key_path)
    t = make_tx(key, _nonce(nonce, explorer, key.address), Endow(_address(to), amount),
                GasSchedule().endow)
    emit(_submit(node, t))


@cli.group()
def doc() -> None:
    """Off-chain documents."""


@doc.command("register")
@click.argument("file", type=click.Path(dir_okay=False))
@click.option("--store", "store_root", default=None, type=click.Path(file_okay=False),
              help="Document store root (default: <data_dir>/docs from --config).")
@click.option("--config", "config_path", default=None, type=click.Path(dir_okay=False))
@_node_opt
@_key_opt
@_nonce_opt
@_explorer_opt
@click.option("--gas-limit", default=1_000, type=click.IntRange(min=1))
def doc_register(file, store_root, config_path, node, key_path, nonce, explorer, gas_limit) -> None:
    """Store a document and register its digest on chain."""
    if store_root is None and config_path is None:
        raise CliError("UsageError", "give --store or --config")
    max_bytes = None
    if store_root is None:
        cfg = _load_config(config_path)
        store_root, max_bytes = str(cfg.data_path / "docs"), cfg.max_document_bytes
    store = DocumentStore(store_root, max_bytes) if max_bytes else DocumentStore(store_root)
    key = _key(key_path)
    try:
        stored = store.store(_read(file))
    except DocStoreError as exc:
        raise CliError(exc.code, str(exc), status=EXIT_CODES["DocStoreError"]) from None
    t = register_on_chain(stored, key, _nonce(nonce, explorer, key.address), gas_limit)
    out = _submit(node, t)
    emit({**out, **stored.to_json()})


@cli.group()
def anchor() -> None:
    """Anchoring tools."""


@anchor.command("verify")
@click.option("--chain", "chain_path", required=True, type=click.Path(dir_okay=False),
              help="Chain export (length-prefixed canonical blocks).")
@click.option("--witness", "witness_path", required=True, type=click.Path(dir_okay=False),
              help="Witness dump: JSON list or JSON lines.")
@click.option("--config", "config_path", default=None, type=click.Path(dir_okay=False),
              help="Node config; enables full chain validation.")
@click.option("--genesis", "genesis_path", default=None, type=click.Path(dir_okay=False),
              help="Genesis file (default consensus settings); enables full chain validation.")
def anchor_verify(chain_path, witness_path, config_path, genesis_path) -> None:
    """Check an exported chain against witness-chain anchors."""
    data = _read(chain_path)
    try:
        records = load_witness_dump(witness_path)
    except OSError as exc:
        raise CliError("IOError", str(exc)) from None
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError("ConfigInvalid", f"witness dump: {exc}") from None

    validation = None
    params = None
    if config_path:
        try:
            params = _load_config(config_path).chain_params()
        except ConfigInvalid as exc:
            raise CliError("ConfigInvalid", str(exc)) from None
    elif genesis_path:
        try:
            params = ChainParams(Genesis.load(genesis_path), ConsensusConfig(), GasSchedule())
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise CliError("ConfigInvalid", f"genesis: {exc}") from None
    if params is not None:
        validation = validate_encoded_chain(data, params)

    blocks, failure = decode_chain(data)
    report = verify_against_anchors(blocks, records)
    result = {
        "blocks": len(blocks),
        "anchors": len(records),
        "anchor_report": report.to_json(),
        "validation": validation.to_json() if validation else None,
    }
    problems = [h for h in (
        failure[0] if failure is not None else None,
        None if report.ok else report.earliest_mismatch,
        None if validation is None or validation.ok else validation.height,
    ) if h is not None]
    if problems or not report.ok:
        earliest = min(problems) if problems else None
        raise CliError("VerificationFailed",
                       f"chain does not match anchors; earliest mismatch at height {earliest}",
                       earliest_mismatch=earliest, **result)
    emit({"ok": True, **result})


@cli.group()
def simnet() -> None:
    """Deterministic network simulation."""


@simnet.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--duration", required=True, type=click.FloatRange(min=0, min_open=True),
              help="Virtual seconds to simulate.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Trace JSON output.")
def simnet_run(config_path, duration, out) -> None:
    """Run a scenario and write its trace; prints stats and checks."""
    from .simnet import ConfigInvalid as SimConfigInvalid
    from .simnet import SimConfig, assert_convergence, assert_safety, run

    try:
        config = SimConfig.load(config_path)
    except SimConfigInvalid as exc:
        raise CliError("ConfigInvalid", str(exc)) from None
    trace = run(config, duration)
    body = trace.to_json()
    try:
        Path(out).write_bytes(body)
    except OSError as exc:
        raise CliError("IOError", str(exc)) from None
    safety = assert_safety(trace)
    convergence = assert_convergence(trace) if config.partitions and max(
        p.end for p in config.partitions) < duration else None
    emit({
        "trace": out,
        "trace_sha256": hashlib.sha256(body).hexdigest(),
        "stats": trace.stats,
        "safety": {"passed": safety.passed, "evidence": safety.evidence[:10]},
        "convergence": None if convergence is None else
        {"passed": convergence.passed, "converged_at": convergence.converged_at},
        "anchors": len(trace.anchors),
        "gaps": len(trace.gaps),
    })


def main() -> None:
    cli.main(prog_name="poachain")


if __name__ == "__main__":
    main()
