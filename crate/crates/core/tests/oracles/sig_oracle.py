#!/usr/bin/env python3
"""Known-answer vectors for the "sig-v1" suite (Ed25519), computed with the
`cryptography` package. Frozen into tests/fixtures/sig_kat.txt."""
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
from cryptography.hazmat.primitives import serialization

RAW = serialization.Encoding.Raw
vectors = [
    (bytes.fromhex("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60"), b""),
    (bytes(range(32)), b"sig-v1 known answer"),
]
for seed, msg in vectors:
    sk = Ed25519PrivateKey.from_private_bytes(seed)
    pk = sk.public_key().public_bytes(RAW, serialization.PublicFormat.Raw)
    print(seed.hex(), pk.hex(), msg.hex() or "-", sk.sign(msg).hex())
