#!/usr/bin/env python3
"""Re-derives every block hash in a ledger dump and checks the chain links.

Reads only the text dump, never the Rust code. Exit status 0 iff every
`hash` matches the recomputed value, every `prev` matches the previous block,
heights count up from 0 and the dump's own `verify_chain` line says true.

    python3 rehash_oracle.py ../fixtures/stl_dump_seed1.txt ../fixtures/swt_dump_seed1.txt
"""
import hashlib
import struct
import sys


def u32(n):
    return struct.pack(">I", n)


def field(tag, value):
    return bytes([tag]) + u32(len(value)) + value


def block_hash(height, prev, txs, puts):
    tx_list = b"".join(u32(len(d)) + d for d in txs)
    put_map = b"".join(u32(len(k)) + k + u32(len(v)) + v for k, v in sorted(puts))
    body = (
        field(1, struct.pack(">Q", height))
        + field(2, prev)
        + field(3, tx_list)
        + field(4, put_map)
    )
    return hashlib.sha256(body).digest()


def parse(text):
    blocks = []
    header = None
    verdict = None
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "network":
            header = parts
        elif parts[0] == "block":
            blocks.append({
                "height": int(parts[1]),
                "prev": bytes.fromhex(parts[3]),
                "hash": bytes.fromhex(parts[5]),
                "txs": [],
                "puts": [],
            })
        elif parts[0] == "tx":
            blocks[-1]["txs"].append(bytes.fromhex(parts[1]))
        elif parts[0] == "put":
            blocks[-1]["puts"].append((bytes.fromhex(parts[1]), bytes.fromhex(parts[2])))
        elif parts[0] == "verify_chain":
            verdict = parts[1]
        else:
            raise ValueError("unexpected line: " + line)
    return header, blocks, verdict


def check(text):
    header, blocks, verdict = parse(text)
    if header is None or verdict != "true" or not blocks:
        return False
    if int(header[5]) != len(blocks) - 1:
        return False
    prev = bytes(32)
    for i, b in enumerate(blocks):
        if b["height"] != i or b["prev"] != prev:
            return False
        if block_hash(b["height"], b["prev"], b["txs"], b["puts"]) != b["hash"]:
            return False
        prev = b["hash"]
    return True


def main(paths):
    ok = True
    for path in paths:
        with open(path) as f:
            good = check(f.read())
        print(path, "ok" if good else "BROKEN")
        ok = ok and good
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
