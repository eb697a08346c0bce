"""GF(2^8) arithmetic and byte-parallel Shamir (k, n) threshold sharing.

The field uses the AES reduction polynomial x^8 + x^4 + x^3 + x + 1 (0x11B).
Every byte of a message gets its own random polynomial of degree k-1; share
``j`` holds the evaluations at x = j for j in 1..n.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import (
    DuplicateShareError,
    InsufficientSharesError,
    MalformedShareError,
    ParameterError,
)

REDUCTION_POLY = 0x11B
GENERATOR = 0x03
MAX_SHARES = 255


class ByteSource(Protocol):
    def randbytes(self, n: int) -> bytes: ...


def _slow_mul(a: int, b: int) -> int:
    result = 0
    while b:
        if b & 1:
            result ^= a
        a <<= 1
        if a & 0x100:
            a ^= REDUCTION_POLY
        b >>= 1
    return result


def _build_tables():
    exp = [0] * 510
    log = [0] * 256
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x = _slow_mul(x, GENERATOR)
    for i in range(255, 510):
        exp[i] = exp[i - 255]
    mul = np.zeros((256, 256), dtype=np.uint8)
    for a in range(1, 256):
        for b in range(1, 256):
            mul[a, b] = exp[log[a] + log[b]]
    inv = [0] * 256
    for a in range(1, 256):
        inv[a] = exp[255 - log[a]]
    return exp, log, mul, inv


_EXP, _LOG, MUL_TABLE, _INV = _build_tables()
_MUL_ROWS = MUL_TABLE.tolist()


def gf_add(a: int, b: int) -> int:
    return a ^ b


def gf_mul(a: int, b: int) -> int:
    return _MUL_ROWS[a][b]


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no multiplicative inverse in GF(256)")
    return _INV[a]


def gf_div(a: int, b: int) -> int:
    return gf_mul(a, gf_inv(b))


@dataclass(frozen=True)
class Share:
    x: int
    payload: bytes

    def __post_init__(self):
        if not 0 < self.x < 256:
            raise MalformedShareError(f"share x must be in 1..255, got {self.x}")


@dataclass(frozen=True)
class ShareSet:
    k: int
    n: int
    shares: tuple[Share, ...]

    def __post_init__(self):
        _check_params(self.k, self.n)
        if len(self.shares) != self.n:
            raise ParameterError(f"expected {self.n} shares, got {len(self.shares)}")
        if len({s.x for s in self.shares}) != self.n:
            raise DuplicateShareError("share x values must be distinct")


def _check_params(k: int, n: int) -> None:
    if k < 1 or n < k or n > MAX_SHARES:
        raise ParameterError(f"need 1 <= k <= n <= {MAX_SHARES}, got k={k}, n={n}")


def evaluate_shares(secret: bytes, coefficients: Sequence[bytes], n: int) -> ShareSet:
    """Build a ShareSet from explicit coefficient rows.

    ``coefficients[d-1]`` holds the degree-d coefficient for every byte
    position, so the threshold is ``len(coefficients) + 1``.
    """
    k = len(coefficients) + 1
    _check_params(k, n)
    if not secret:
        raise ParameterError("secret must be nonempty")
    const = np.frombuffer(bytes(secret), dtype=np.uint8)
    rows = [np.frombuffer(bytes(c), dtype=np.uint8) for c in coefficients]
    if any(r.shape != const.shape for r in rows):
        raise ParameterError("every coefficient row must match the secret length")
    # Horner from the highest degree down to the constant term.
    ordered = rows[::-1] + [const]
    shares = []
    for x in range(1, n + 1):
        mul_x = MUL_TABLE[x]
        y = ordered[0].copy()
        for c in ordered[1:]:
            y = mul_x[y] ^ c
        shares.append(Share(x, y.tobytes()))
    return ShareSet(k, n, tuple(shares))


def split(secret: bytes, k: int, n: int, randomness: ByteSource) -> ShareSet:
    """Split ``secret`` into n shares, any k of which reconstruct it.

    Coefficient rows are drawn from ``randomness.randbytes`` in increasing
    degree order, one row of ``len(secret)`` bytes per degree.
    """
    _check_params(k, n)
    if not secret:
        raise ParameterError("secret must be nonempty")
    coefficients = [randomness.randbytes(len(secret)) for _ in range(k - 1)]
    return evaluate_shares(secret, coefficients, n)


def lagrange_weights_at_zero(xs: Sequence[int]) -> list[int]:
    weights = []
    for i, xi in enumerate(xs):
        num, den = 1, 1
        for j, xj in enumerate(xs):
            if i != j:
                num = gf_mul(num, xj)
                den = gf_mul(den, xi ^ xj)
        weights.append(gf_div(num, den))
    return weights


def reconstruct(shares: Sequence[Share], k: int) -> bytes:
    """Interpolate at x = 0 from the first ``k`` of ``shares``."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if len(shares) < k:
        raise InsufficientSharesError(f"need {k} shares, got {len(shares)}")
    xs = [s.x for s in shares]
    if len(set(xs)) != len(xs):
        raise DuplicateShareError("duplicate share x values")
    if len({len(s.payload) for s in shares}) != 1:
        raise MalformedShareError("share payloads differ in length")
    use = shares[:k]
    weights = lagrange_weights_at_zero([s.x for s in use])
    out = np.zeros(len(use[0].payload), dtype=np.uint8)
    for w, share in zip(weights, use):
        out ^= MUL_TABLE[w][np.frombuffer(share.payload, dtype=np.uint8)]
    return out.tobytes()
