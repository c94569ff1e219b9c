#!/usr/bin/env python3
"""Standalone hashed-trigram embedder used to freeze golden vectors.

Scheme: lowercase, character trigrams, FNV-1a 64 over UTF-8 bytes,
sign from the top bit, slot = h mod dim, L2-normalize, cast to float32.
"""
import math
import struct
import sys

FNV_OFFSET = 0xcbf29ce484222325
FNV_PRIME = 0x100000001b3


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def hashed_embed(text: str, dim: int):
    acc = [0.0] * dim
    chars = list(text.lower())
    for i in range(len(chars) - 2):
        h = fnv1a64("".join(chars[i:i + 3]).encode("utf-8"))
        acc[h % dim] += -1.0 if (h >> 63) else 1.0
    norm = math.sqrt(sum(v * v for v in acc))
    if norm == 0.0:
        return [0.0] * dim
    return [struct.unpack("<f", struct.pack("<f", v / norm))[0] for v in acc]


def cos(a, b):
    return sum(x * y for x, y in zip(a, b))


if __name__ == "__main__":
    v = hashed_embed("abc", 8)
    print("abc/8:", v, [hex(struct.unpack("<I", struct.pack("<f", x))[0]) for x in v])
    v = hashed_embed("Datensicherheit für Systeme", 16)
    print("de/16:", [hex(struct.unpack("<I", struct.pack("<f", x))[0]) for x in v])
    a = hashed_embed("data security policy", 256)
    b = hashed_embed("data security policies", 256)
    c = hashed_embed("quarterly revenue report", 256)
    print("cos(policy, policies) =", cos(a, b))
    print("cos(policy, revenue)  =", cos(a, c))
    sys.exit(0 if cos(a, b) > cos(a, c) else 1)
