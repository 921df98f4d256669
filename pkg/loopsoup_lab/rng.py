"""
Deterministic random streams.

Every stochastic component takes an explicit `numpy.random.Generator`
obtained from `stream(master_seed, replica_id, module_tag)`. Streams are
Philox (counter-based) generators keyed by a SeedSequence built from the
three keys, so replica order and parallel scheduling never change results.
"""
import zlib

import numpy as np


def _tag_key(module_tag: str) -> int:
    # crc32 is stable across processes, unlike hash()
    return zlib.crc32(module_tag.encode("utf-8"))


def stream(master_seed: int, replica_id: int, module_tag: str) -> np.random.Generator:
    """Per-replica, per-module generator."""
    seq = np.random.SeedSequence([int(master_seed), int(replica_id), _tag_key(module_tag)])
    return np.random.Generator(np.random.Philox(seq))


def streams(master_seed: int, n_rep: int, module_tag: str) -> list[np.random.Generator]:
    return [stream(master_seed, i, module_tag) for i in range(n_rep)]


def child_seed(rng: np.random.Generator) -> int:
    """Draw a 63-bit seed from a parent stream (used to key sub-runs)."""
    return int(rng.integers(0, 2**63 - 1))
