"""
Splittable random streams keyed by (master seed, purpose path, draw index)
"""
from typing import Tuple, Union

import numpy as np

from pacile.utils import hash_string


def _tag_words(tag: str) -> Tuple[int, int]:
    digest = hash_string(tag)
    return int(digest[:8], 16), int(digest[8:16], 16)


class SeedStream:
    """
    Reproducibility token.

    A stream is a master seed plus a path of purpose tags. `child(tag)` derives
    an independent sub-stream and `generator(index)` returns a fresh Philox
    generator for the `index`-th draw of that purpose. Nothing is stateful, so
    the same (master, path, index) yields the same numbers in any thread and
    in any order.
    """

    def __init__(self, master: int, path: Tuple[int, ...] = ()):
        if master < 0:
            raise ValueError("master seed must be non-negative")
        self.master = int(master)
        self.path = tuple(path)

    def child(self, tag: str) -> "SeedStream":
        return SeedStream(self.master, self.path + _tag_words(tag))

    def generator(self, index: int = 0) -> np.random.Generator:
        entropy = [self.master, *self.path, int(index)]
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SeedStream) and (self.master, self.path) == (other.master, other.path)

    def __hash__(self) -> int:
        return hash((self.master, self.path))

    def __repr__(self) -> str:
        return f"SeedStream(master={self.master}, depth={len(self.path) // 2})"


SeedLike = Union[int, SeedStream, np.random.Generator]


def make_generator(seed: SeedLike, index: int = 0) -> np.random.Generator:
    """Turn any accepted seed token into a numpy Generator"""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, SeedStream):
        return seed.generator(index)
    return SeedStream(int(seed)).generator(index)


def as_stream(seed: Union[int, SeedStream]) -> SeedStream:
    return seed if isinstance(seed, SeedStream) else SeedStream(int(seed))
