"""Counter-based random streams.

Every random quantity in hypernash is drawn from a Philox stream whose key is a
function of a 64-bit seed and a tuple of labels. Draw k of a stream is always
the k-th output of that key, so results never depend on which thread or in
which order instances are built.
"""

import hashlib

import numpy as np

type Seed = int

SEED_MASK = (1 << 64) - 1


def label_word(label: str | int) -> int:
    if isinstance(label, int):
        return label & SEED_MASK
    digest = hashlib.blake2b(label.encode(), digest_size=8).digest()
    return int.from_bytes(digest, 'little')


def philox_key(seed: Seed, *labels: str | int) -> np.ndarray:
    entropy = [seed & SEED_MASK, *(label_word(lab) for lab in labels)]
    return np.random.SeedSequence(entropy).generate_state(2, np.uint64)


def stream(seed: Seed, *labels: str | int) -> np.random.Generator:
    """Fresh generator for the stream keyed by (seed, *labels), positioned at counter 0."""
    return np.random.Generator(np.random.Philox(key=philox_key(seed, *labels)))


def derive_seed(seed: Seed, *labels: str | int) -> Seed:
    """64-bit child seed, e.g. the seed of trial t of an experiment."""
    words = philox_key(seed, *labels)
    return int(words[0] ^ words[1])
