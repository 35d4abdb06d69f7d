"""Cryptographic building blocks.

Two independent hash functions ``h`` and ``h2`` (SHA-256 behind distinct
one-byte domain prefixes), iterated hashing, 32-byte XOR, modular
exponentiation in a safe-prime group, and two placeholders standing in
for the registration authority's real schemes: a Schnorr signature and an
HMAC keystream cipher.

``OpMeter`` wraps the metered subset (hash, xor, exp) so protocol entities
can report exact primitive counts per purpose.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
from collections import Counter, defaultdict
from contextlib import contextmanager
from dataclasses import dataclass

from .errors import InvalidArgument

DIGEST_SIZE = 32
GROUP_ELEMENT_SIZE = 64
ZERO32 = bytes(DIGEST_SIZE)


class HashDomain(enum.Enum):
    H = b"\x01"
    H2 = b"\x02"


H = HashDomain.H
H2 = HashDomain.H2


def hash(domain: HashDomain, data: bytes) -> bytes:  # noqa: A001 - mirrors h(.)
    return hashlib.sha256(domain.value + data).digest()


def hash_iter(domain: HashDomain, seed: bytes, k: int) -> bytes:
    """Return ``h^k(seed)``; ``k == 0`` is only defined for a 32-byte seed."""
    if k < 0:
        raise InvalidArgument("iteration count must be non-negative")
    if k == 0:
        if len(seed) != DIGEST_SIZE:
            raise InvalidArgument("h^0 is only defined for a 32-byte seed")
        return bytes(seed)
    value = seed
    for _ in range(k):
        value = hashlib.sha256(domain.value + value).digest()
    return value


def xor32(a: bytes, b: bytes) -> bytes:
    if len(a) != DIGEST_SIZE or len(b) != DIGEST_SIZE:
        raise InvalidArgument("xor32 operands must be 32 bytes")
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(DIGEST_SIZE, "big")


def digest_to_int(d: bytes) -> int:
    return int.from_bytes(d, "big")


def int_to_digest(x: int) -> bytes:
    return (x % (1 << 256)).to_bytes(DIGEST_SIZE, "big")


# --------------------------------------------------------------------------
# group arithmetic


@dataclass(frozen=True)
class GroupParams:
    name: str
    p: int
    g: int
    order: int
    n_pub: int


# Safe prime p = 2q + 1: the first one at or above SHA-512("dwpt-auth full512
# group") with the top bit forced. g = 4 is a square, so it generates the
# subgroup of prime order q.
_P512 = int(
    "a4293a67666fb776b481186eb1af15c2d58daf649ced029a91e8f8a3267c15bf"
    "bd16bf8782ec62bf45ecaf70576f2c437da4347d3eaf9513f697b316fba82b37",
    16,
)
FULL512 = GroupParams(name="full512", p=_P512, g=4, order=(_P512 - 1) // 2, n_pub=65537)
TOY23 = GroupParams(name="toy", p=23, g=5, order=22, n_pub=3)

GROUPS = {"full512": FULL512, "toy": TOY23}


@dataclass(frozen=True)
class GroupElement:
    value: int

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(GROUP_ELEMENT_SIZE, "big")

    @classmethod
    def from_bytes(cls, data: bytes, params: GroupParams) -> "GroupElement":
        if len(data) != GROUP_ELEMENT_SIZE:
            raise InvalidArgument("group element must be 64 bytes")
        value = int.from_bytes(data, "big")
        if not 0 < value < params.p:
            raise InvalidArgument("group element out of range")
        return cls(value)


def group_exp(params: GroupParams, exponent: int) -> GroupElement:
    return GroupElement(pow(params.g, exponent % params.order, params.p))


def masked_exponent(p_prime: bytes, r_cspa: bytes, n_pub: int) -> int:
    """Exponent of c'7: ``P' xor (r_CSPA - n)`` on 32-byte forms, as an integer.

    The subtraction wraps modulo 2^256 so both operands stay 32 bytes wide;
    reduction modulo the group order happens in ``group_exp``.
    """
    shifted = (digest_to_int(r_cspa) - n_pub) % (1 << 256)
    return digest_to_int(p_prime) ^ shifted


# --------------------------------------------------------------------------
# placeholders for the DMV's signature and symmetric encryption


@dataclass(frozen=True)
class SigningKeypair:
    secret: int
    public: int


SIGNATURE_SIZE = DIGEST_SIZE + GROUP_ELEMENT_SIZE


def keygen(rng, params: GroupParams = FULL512) -> SigningKeypair:
    x = 1 + int.from_bytes(rng.bytes(64), "big") % (params.order - 1)
    return SigningKeypair(secret=x, public=pow(params.g, x, params.p))


def _challenge(r: int, public: int, msg: bytes, params: GroupParams) -> int:
    data = r.to_bytes(GROUP_ELEMENT_SIZE, "big") + public.to_bytes(GROUP_ELEMENT_SIZE, "big") + msg
    return int.from_bytes(hashlib.sha256(b"schnorr" + data).digest(), "big") % params.order


def sign(secret: int, msg: bytes, params: GroupParams = FULL512) -> bytes:
    public = pow(params.g, secret, params.p)
    nonce_src = secret.to_bytes(GROUP_ELEMENT_SIZE, "big") + msg
    k = int.from_bytes(hashlib.sha512(b"schnorr-nonce" + nonce_src).digest(), "big") % params.order
    k = k or 1
    e = _challenge(pow(params.g, k, params.p), public, msg, params)
    s = (k + secret * e) % params.order
    return e.to_bytes(DIGEST_SIZE, "big") + s.to_bytes(GROUP_ELEMENT_SIZE, "big")


def verify(public: int, msg: bytes, sig: bytes, params: GroupParams = FULL512) -> bool:
    if len(sig) != SIGNATURE_SIZE or not 0 < public < params.p:
        return False
    e = int.from_bytes(sig[:DIGEST_SIZE], "big")
    s = int.from_bytes(sig[DIGEST_SIZE:], "big")
    if e >= params.order or s >= params.order:
        return False
    r = pow(params.g, s, params.p) * pow(public, params.order - e, params.p) % params.p
    return hmac.compare_digest(
        _challenge(r, public, msg, params).to_bytes(DIGEST_SIZE, "big"), sig[:DIGEST_SIZE]
    )


def sym_encrypt(key: bytes, nonce: bytes, data: bytes) -> bytes:
    """Keystream cipher; decryption is the same call."""
    stream = b""
    counter = 0
    while len(stream) < len(data):
        stream += hmac.new(key, nonce + counter.to_bytes(4, "big"), hashlib.sha256).digest()
        counter += 1
    return bytes(x ^ y for x, y in zip(data, stream))


sym_decrypt = sym_encrypt


# --------------------------------------------------------------------------
# instrumentation

PURPOSES = ("auth", "chain", "key")


class OpMeter:
    """Counts metered primitive calls, bucketed by the current purpose.

    ``auth`` covers the authentication formulas, ``chain`` hash-chain
    generation and verification, ``key`` master-key wrapping of H1 and
    session-key derivation.
    """

    def __init__(self):
        self._counts: dict[str, Counter] = defaultdict(Counter)
        self.purpose = "auth"

    @contextmanager
    def purpose_of(self, purpose: str):
        if purpose not in PURPOSES:
            raise InvalidArgument(f"unknown purpose {purpose!r}")
        previous, self.purpose = self.purpose, purpose
        try:
            yield self
        finally:
            self.purpose = previous

    def hash(self, domain: HashDomain, data: bytes) -> bytes:
        self._counts[self.purpose]["hash"] += 1
        return hash(domain, data)

    def hash_iter(self, domain: HashDomain, seed: bytes, k: int) -> bytes:
        value = hash_iter(domain, seed, k)
        self._counts[self.purpose]["hash"] += k
        return value

    def xor(self, a: bytes, b: bytes) -> bytes:
        self._counts[self.purpose]["xor"] += 1
        return xor32(a, b)

    def wrap(self, key: bytes, value: bytes) -> bytes:
        """XOR under the CSPA master key; always billed to ``key``."""
        self._counts["key"]["xor"] += 1
        return xor32(key, value)

    def exp(self, params: GroupParams, exponent: int) -> GroupElement:
        self._counts[self.purpose]["exp"] += 1
        return group_exp(params, exponent)

    def drain(self) -> dict[str, dict[str, int]]:
        """Return counts accumulated since the previous drain and reset."""
        out = {p: dict(sorted(c.items())) for p, c in sorted(self._counts.items()) if c}
        self._counts = defaultdict(Counter)
        return out
