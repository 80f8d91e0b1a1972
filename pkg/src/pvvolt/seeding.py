"""Per-stage seeds derived from one global seed."""

import zlib

import numpy as np


def derive_seed(seed: int, label: str) -> int:
    """Stable 63-bit seed for ``label`` under the global ``seed``."""
    state = np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))
