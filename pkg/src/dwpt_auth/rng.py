"""Seeded randomness, forked per entity by label.

Forking hashes the parent seed with the child label, so adding a new
entity (a new label) never shifts the draws of existing ones.
"""

from __future__ import annotations

import hashlib
import random


class DetRng:
    def __init__(self, seed: int, label: str = "root"):
        if seed < 0 or seed >= 1 << 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.label = label
        material = hashlib.sha256(f"{seed}/{label}".encode()).digest()
        self._rand = random.Random(int.from_bytes(material, "big"))

    def fork(self, label: str) -> "DetRng":
        return DetRng(self.seed, f"{self.label}/{label}")

    def bytes(self, n: int = 32) -> bytes:
        return self._rand.randbytes(n)

    def below(self, n: int) -> int:
        return self._rand.randrange(n)

    def shuffle(self, items: list) -> None:
        self._rand.shuffle(items)

    def __deepcopy__(self, memo) -> "DetRng":
        # the Mersenne state is an immutable tuple; share it instead of walking it
        clone = DetRng.__new__(DetRng)
        clone.seed, clone.label = self.seed, self.label
        clone._rand = random.Random()
        clone._rand.setstate(self._rand.getstate())
        memo[id(self)] = clone
        return clone
