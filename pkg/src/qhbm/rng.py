"""Deterministic random-stream derivation.

All randomness in the package flows from a single master seed.  Each
consumer (Markov chain, Bernoulli embedding, event generation, synthetic
data) pulls from a named substream so that seeding is reproducible and
independent of call order.
"""

from __future__ import annotations

import numpy as np


def _tag_entropy(tag: str | int) -> int:
    if isinstance(tag, int):
        return tag
    # Stable across runs and platforms: the raw bytes of the name.
    return int.from_bytes(tag.encode("utf-8"), "little")


def substream(seed: int, *tags: str | int) -> np.random.Generator:
    """Generator for the substream named by ``tags`` under ``seed``.

    Same (seed, tags) always yields the same stream; distinct tags yield
    statistically independent streams.
    """
    entropy = [int(seed)] + [_tag_entropy(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def generator_state(rng: np.random.Generator) -> dict:
    """JSON-serialisable snapshot of a generator's position."""
    return rng.bit_generator.state


def restore_generator(state: dict) -> np.random.Generator:
    """Rebuild a generator from a ``generator_state`` snapshot."""
    name = state["bit_generator"]
    bitgen_cls = getattr(np.random, name, None)
    if bitgen_cls is None:
        raise ValueError(f"unknown bit generator {name!r}")
    bitgen = bitgen_cls()
    bitgen.state = state
    return np.random.Generator(bitgen)
