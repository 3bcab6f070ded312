"""Splittable, counter-based random streams.

Every consumer of randomness receives a stream identified by a path of
identifiers below a root seed, e.g. ``root / level / sample-index / "noise"``.
Distinct paths map to statistically independent Philox keys, so the value
drawn for sample 5 never depends on whether sample 3 was generated first,
on which worker generated it, or in which order levels were visited.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

__all__ = ["RandomStream", "split_stream"]

PathId = int | str


def _philox_key(root_seed: int, path: tuple[PathId, ...]) -> np.ndarray:
    """Hash (root_seed, path) into a 128-bit Philox key."""
    h = hashlib.blake2b(digest_size=16)
    h.update(int(root_seed).to_bytes(8, "little", signed=False))
    for part in path:
        if isinstance(part, int):
            h.update(b"i" + part.to_bytes(8, "little", signed=True))
        else:
            raw = part.encode("utf-8")
            h.update(b"s" + len(raw).to_bytes(4, "little") + raw)
    return np.frombuffer(h.digest(), dtype=np.uint64)


@dataclass(frozen=True)
class RandomStream:
    """A value-type handle on one reproducible random sequence.

    ``split`` derives children; ``generator`` instantiates the actual
    bit generator. Repeated ``generator()`` calls restart the sequence,
    which is what makes records reproducible: the stream handle, not the
    generator state, is the unit that gets passed around.
    """

    root_seed: int
    path: tuple[PathId, ...] = field(default=())

    def split(self, *ids: PathId) -> "RandomStream":
        return RandomStream(self.root_seed, self.path + ids)

    def generator(self) -> np.random.Generator:
        key = _philox_key(self.root_seed, self.path)
        return np.random.Generator(np.random.Philox(key=key))


def split_stream(root: RandomStream, *ids: PathId) -> RandomStream:
    """Derive the child stream of ``root`` at ``ids`` (purely functional)."""
    return root.split(*ids)
