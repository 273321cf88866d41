"""Counter-based random substreams.

Every random quantity is drawn from a Philox generator keyed by
``(master seed, unit index, purpose)``, so results never depend on which
worker handled which unit or in what order.
"""
import numpy as np

# purposes
PHASES = 0
NOISE = 1
JITTER = 2
AMPLITUDES = 3
POSITION = 4
DIRECTIONS = 5

# unit index reserved for quantities shared by every atom of a run
SHARED = 2 ** 40


def substream(seed, *path):
    """Independent generator for ``seed`` and the integer ``path``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *path):
    """A 63-bit child seed, used to hand a sub-run its own master seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> np.uint64(1))
