"""Encrypt, ring-combine and shuffle a ShareSet into wire frames, and back.

Pipeline for n shares under one SessionKey:

1. share j (x = j+1) is serialized as ``x || payload`` and XORed with the
   keystream for nonce j, giving e_j;
2. the anchor frame carries e_0, ring frame i carries e_i XOR e_{(i+1) mod n}
   (no ring frames when n == 1);
3. logical slot 0 is the anchor, slot i+1 is ring frame i; slot j goes out at
   wire position pi(j), where pi is a keyed Fisher-Yates permutation.

Headers carry only the session id and wire position, so a frame's role is
hidden from anyone who cannot compute pi.

Keystream generator (non-cryptographic, bit-exact): the key is read as two
big-endian 64-bit words k0, k1; the seed is ``mix(k0, k1, session_id, nonce)``
where ``mix`` folds each value through SplitMix64 (``h = splitmix64(h ^ v)``,
h starting at 0). The seed drives xorshift64* (shifts 12, 25, 27, multiplier
0x2545F4914F6CDD1D) and each output word is emitted as 8 big-endian bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from itertools import islice
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from .errors import (
    FrameFormatError,
    InsufficientSharesError,
    MalformedShareError,
    ParameterError,
    SessionMismatchError,
)
from .gf_sharing import Share, ShareSet, reconstruct
from .prng import MASK64, mix, words_to_bytes, xorshift64star

HEADER = struct.Struct(">IH")
CONTAINER_MAGIC = b"SDUP1"
MAX_SLOTS = 1 << 16


@dataclass(frozen=True)
class SessionKey:
    key: bytes
    session_id: int

    def __post_init__(self):
        if len(self.key) != 16:
            raise ParameterError("session key must be 16 bytes")
        if not 0 <= self.session_id < 1 << 32:
            raise ParameterError("session id must fit in 32 bits")

    @classmethod
    def from_hex(cls, text: str, session_id: int = 0) -> "SessionKey":
        try:
            raw = bytes.fromhex(text)
        except ValueError as exc:
            raise ParameterError(f"bad hex key: {exc}") from None
        return cls(raw, session_id)


@dataclass(frozen=True)
class EncryptedShare:
    index: int
    body: bytes


@dataclass(frozen=True)
class Frame:
    session_id: int
    wire_pos: int
    body: bytes

    def to_bytes(self) -> bytes:
        return HEADER.pack(self.session_id, self.wire_pos) + self.body

    @classmethod
    def from_bytes(cls, data: bytes) -> "Frame":
        if len(data) < HEADER.size:
            raise FrameFormatError(f"frame shorter than its {HEADER.size}-byte header")
        sid, pos = HEADER.unpack_from(data)
        return cls(sid, pos, bytes(data[HEADER.size:]))


Keystream = Callable[[SessionKey, int, int], bytes]


def _seed(key: SessionKey, nonce: int) -> int:
    k0 = int.from_bytes(key.key[:8], "big")
    k1 = int.from_bytes(key.key[8:], "big")
    return mix(k0, k1, key.session_id, nonce & MASK64)


def _stream_bytes(key: SessionKey, nonce: int) -> Iterator[int]:
    for word in xorshift64star(_seed(key, nonce)):
        yield from word.to_bytes(8, "big")


def derive_keystream(key: SessionKey, nonce: int, length: int) -> bytes:
    if length < 0:
        raise ParameterError("keystream length must be >= 0")
    nwords = -(-length // 8)
    words = list(islice(xorshift64star(_seed(key, nonce)), nwords))
    return words_to_bytes(words)[:length]


def _xor(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise MalformedShareError("XOR operands differ in length")
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


def xor_transform(data: bytes, key: SessionKey, nonce: int,
                  keystream: Keystream = derive_keystream) -> bytes:
    return _xor(bytes(data), keystream(key, nonce, len(data)))


def ring_combine(encrypted: Sequence[EncryptedShare]) -> tuple[bytes, list[bytes]]:
    n = len(encrypted)
    if n < 1:
        raise ParameterError("need at least one encrypted share")
    if len({len(e.body) for e in encrypted}) != 1:
        raise MalformedShareError("encrypted share bodies differ in length")
    bodies = [e.body for e in sorted(encrypted, key=lambda e: e.index)]
    if n == 1:
        return bodies[0], []
    return bodies[0], [_xor(bodies[i], bodies[(i + 1) % n]) for i in range(n)]


def recover_shares(anchor: bytes | None, ring: Mapping[int, bytes], n: int) -> dict[int, bytes]:
    """Walk the ring both ways from e_0 across the ring frames that are present."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    if anchor is None:
        return {}
    known = {0: anchor}
    if n == 1:
        return known
    i = 0
    while i in ring and (i + 1) % n not in known:
        known[(i + 1) % n] = _xor(ring[i], known[i])
        i = (i + 1) % n
    i = 0
    while (i - 1) % n in ring and (i - 1) % n not in known:
        j = (i - 1) % n
        known[j] = _xor(ring[j], known[i])
        i = j
    return known


def recoverable_indices(slots: Iterable[int], n: int) -> set[int]:
    """Share indices recoverable when exactly the given logical slots are held."""
    slots = set(slots)
    ring = {s - 1: b"" for s in slots if s >= 1}
    return set(recover_shares(b"" if 0 in slots else None, ring, n))


def slot_count(n: int) -> int:
    return 1 if n == 1 else n + 1


def derive_permutation(key: SessionKey, m: int) -> list[int]:
    """Keyed Fisher-Yates shuffle of range(m); element j is the wire position of slot j.

    Index draws take two keystream bytes (nonce = m) as a big-endian u16 and
    reject values at or above the largest multiple of the bound.
    """
    if not 1 <= m <= MAX_SLOTS:
        raise ParameterError(f"permutation size must be in 1..{MAX_SLOTS}")
    stream = _stream_bytes(key, m)

    def draw(bound: int) -> int:
        limit = MAX_SLOTS - MAX_SLOTS % bound
        while True:
            u = next(stream) << 8 | next(stream)
            if u < limit:
                return u % bound

    perm = list(range(m))
    for i in range(m - 1, 0, -1):
        j = draw(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def encode_frames(shares: ShareSet, key: SessionKey,
                  keystream: Keystream = derive_keystream) -> list[Frame]:
    encrypted = [
        EncryptedShare(i, xor_transform(bytes([s.x]) + s.payload, key, i, keystream))
        for i, s in enumerate(shares.shares)
    ]
    anchor, ring = ring_combine(encrypted)
    logical = [anchor] + ring
    perm = derive_permutation(key, len(logical))
    frames = [Frame(key.session_id, perm[j], body) for j, body in enumerate(logical)]
    return sorted(frames, key=lambda f: f.wire_pos)


def classify(frames: Iterable[Frame], perm: Sequence[int]) -> tuple[bytes | None, dict[int, bytes]]:
    """Map frames back to (anchor, ring) via the inverse permutation; first arrival wins."""
    inverse = {pos: slot for slot, pos in enumerate(perm)}
    anchor, ring = None, {}
    for f in frames:
        slot = inverse.get(f.wire_pos)
        if slot is None:
            raise FrameFormatError(f"wire position {f.wire_pos} outside the session plan")
        if slot == 0:
            if anchor is None:
                anchor = f.body
        else:
            ring.setdefault(slot - 1, f.body)
    return anchor, ring


def decode_frames(frames: Iterable[Frame], key: SessionKey, n: int, k: int,
                  keystream: Keystream = derive_keystream) -> bytes:
    frames = list(frames)
    if not 1 <= k <= n:
        raise ParameterError(f"need 1 <= k <= n, got k={k}, n={n}")
    if {f.session_id for f in frames} - {key.session_id}:
        raise SessionMismatchError("frames belong to a different session")
    anchor, ring = classify(frames, derive_permutation(key, slot_count(n)))
    recovered = recover_shares(anchor, ring, n)
    if anchor is None or len(recovered) < k:
        raise InsufficientSharesError(f"recovered {len(recovered)} of the {k} shares needed")
    shares = []
    for index in sorted(recovered)[:k]:
        plain = xor_transform(recovered[index], key, index, keystream)
        if len(plain) < 2:
            raise MalformedShareError("decrypted share has no payload")
        shares.append(Share(plain[0], plain[1:]))
    return reconstruct(shares, k)


def write_container(frames: Iterable[Frame], n: int, k: int) -> bytes:
    """Offline container: b"SDUP1", n and k as one byte each, then 4-byte BE length-prefixed frames."""
    if not (1 <= k <= n <= 255):
        raise ParameterError(f"need 1 <= k <= n <= 255, got k={k}, n={n}")
    out = [CONTAINER_MAGIC, bytes([n, k])]
    for f in frames:
        wire = f.to_bytes()
        out.append(len(wire).to_bytes(4, "big"))
        out.append(wire)
    return b"".join(out)


def read_container(data: bytes) -> tuple[int, int, list[Frame]]:
    if not data.startswith(CONTAINER_MAGIC) or len(data) < len(CONTAINER_MAGIC) + 2:
        raise FrameFormatError("not an SDUP1 container")
    pos = len(CONTAINER_MAGIC)
    n, k = data[pos], data[pos + 1]
    pos += 2
    frames = []
    while pos < len(data):
        if pos + 4 > len(data):
            raise FrameFormatError("truncated frame length prefix")
        size = int.from_bytes(data[pos:pos + 4], "big")
        pos += 4
        if pos + size > len(data):
            raise FrameFormatError("truncated frame")
        frames.append(Frame.from_bytes(data[pos:pos + size]))
        pos += size
    return n, k, frames
