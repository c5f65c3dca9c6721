"""Seven real node processes gossiping over local TCP."""

import asyncio
import json
import os
import signal
import socket
import subprocess
import sys
import time
import urllib.request
from pathlib import Path

import pytest

from poachain.core import KeyPair, Role, Transfer, make_tx, to_hex
from poachain.keyfile import save_key
from poachain.params import Allocation, Genesis
from poachain.runtime import submit_transaction

pytestmark = pytest.mark.slow

N = 7


def free_ports(n):
    socks = [socket.socket() for _ in range(n)]
    for s in socks:
        s.bind(("127.0.0.1", 0))
    ports = [s.getsockname()[1] for s in socks]
    for s in socks:
        s.close()
    return ports


def get(port, path):
    with urllib.request.urlopen(f"http://127.0.0.1:{port}{path}", timeout=2) as r:
        return json.loads(r.read())


def wait_for(predicate, timeout, interval=0.25):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            value = predicate()
        except OSError:
            value = None
        if value:
            return value
        time.sleep(interval)
    raise AssertionError(f"condition not met within {timeout}s")


class Cluster:
    def __init__(self, root: Path):
        self.root = root
        self.keys = [KeyPair.from_seed("runtime", i) for i in range(N)]
        self.operator = KeyPair.from_seed("runtime-op")
        gossip, http = free_ports(N), free_ports(N)
        self.gossip, self.http = gossip, http
        allocs = [Allocation(k.address, 10**9, Role.VALIDATOR) for k in self.keys]
        allocs.append(Allocation(self.operator.address, 10**6, Role.OPERATOR))
        genesis = Genesis(tuple(k.address for k in self.keys), tuple(allocs), int(time.time()) + 2)
        (root / "genesis.json").write_text(json.dumps(genesis.to_json()))
        self.configs = []
        for i, key in enumerate(self.keys):
            save_key(key, root / f"k{i}.json")
            cfg = {
                "key_file": f"k{i}.json", "genesis_file": "genesis.json", "data_dir": f"d{i}",
                "listen": f"127.0.0.1:{gossip[i]}",
                "peers": [f"127.0.0.1:{gossip[j]}" for j in range(i)],
                "explorer_port": http[i],
                "consensus": {"slot_seconds": 1},
                "anchor": {"interval_seconds": 3, "depth": 2},
                "witness": {"path": "witness.jsonl"},
            }
            path = root / f"n{i}.json"
            path.write_text(json.dumps(cfg))
            self.configs.append(path)
        self.procs: dict[int, subprocess.Popen] = {}

    def start(self, i):
        log = open(self.root / f"log{i}.txt", "ab")
        self.procs[i] = subprocess.Popen(
            [sys.executable, "-m", "poachain.cli", "node", "run", "--config", str(self.configs[i]),
             "--log-level", "WARNING"],
            stdout=subprocess.PIPE, stderr=log, cwd=self.root,
        )

    def stop(self, i, timeout=15):
        proc = self.procs.pop(i)
        proc.send_signal(signal.SIGTERM)
        out, _ = proc.communicate(timeout=timeout)
        return proc.returncode, out

    def kill_all(self):
        for proc in self.procs.values():
            proc.kill()
            proc.wait()
        self.procs.clear()

    def heads(self):
        return [get(self.http[i], "/blocks/latest") for i in range(N)]


@pytest.fixture
def cluster(tmp_path):
    c = Cluster(tmp_path)
    yield c
    c.kill_all()


def test_seven_nodes_converge_persist_and_resume(cluster):
    for i in range(N):
        cluster.start(i)
    wait_for(lambda: min(h["height"] for h in cluster.heads()) >= 8, timeout=40)

    # a transfer submitted to one node lands on every node
    tx = make_tx(cluster.operator, 0, Transfer(KeyPair.from_seed("payee").address, 777), 21)
    ack = asyncio.run(submit_transaction("127.0.0.1", cluster.gossip[3], tx))
    assert ack.accepted

    def get_or_none(port, path):
        try:
            return get(port, path)
        except urllib.error.HTTPError:
            return None

    wait_for(lambda: all(get_or_none(p, f"/txs/{to_hex(tx.digest)}") for p in cluster.http), timeout=20)

    # honest nodes agree on every block buried past the finality depth
    def agree():
        heads = cluster.heads()
        low = min(h["height"] for h in heads) - N
        if low < 1:
            return None
        digests = {get(p, f"/blocks/{low}")["digest"] for p in cluster.http}
        return len(digests) == 1 and heads

    wait_for(agree, timeout=20)
    # and their heads coincide at some instant
    wait_for(lambda: len({h["digest"] for h in cluster.heads()}) == 1, timeout=20, interval=0.1)

    status = get(cluster.http[0], "/status")
    assert status["head_height"] >= 8
    wait_for(lambda: get(cluster.http[0], "/anchors")["anchors"], timeout=15)

    results = {}
    for i in sorted(cluster.procs):
        code, out = cluster.stop(i)
        assert code == 0, (cluster.root / f"log{i}.txt").read_text()
        results[i] = json.loads(out)
    assert all(r["stopped"] for r in results.values())
    assert (cluster.root / "d0" / "chain.bin").stat().st_size > 0

    # a restarted node resumes at its persisted head before producing anything
    cluster.start(0)
    resumed = wait_for(lambda: get(cluster.http[0], "/status"), timeout=20)
    assert resumed["head_height"] >= results[0]["height"]
    block = get(cluster.http[0], f"/blocks/{results[0]['height']}")
    assert block["digest"] == results[0]["head"]
    code, _ = cluster.stop(0)
    assert code == 0


def test_corrupted_chain_file_refuses_start(cluster):
    cluster.start(0)
    wait_for(lambda: get(cluster.http[0], "/status")["head_height"] >= 1, timeout=20)
    code, _ = cluster.stop(0)
    assert code == 0
    chain = cluster.root / "d0" / "chain.bin"
    data = bytearray(chain.read_bytes())
    data[-5] ^= 0xFF
    chain.write_bytes(bytes(data))
    proc = subprocess.run(
        [sys.executable, "-m", "poachain.cli", "node", "run", "--config", str(cluster.configs[0])],
        capture_output=True, cwd=cluster.root, timeout=30,
        env={**os.environ, "PYTHONWARNINGS": "ignore"},
    )
    assert proc.returncode == 10
    assert json.loads(proc.stderr.decode().strip().splitlines()[-1])["error"] == "ChainCorrupt"
