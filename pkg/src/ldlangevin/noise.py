"""Counter-based noise addressable by ``(seed, replica, step)``.

Draws come from numpy's Philox generator.  The Philox counter of a block is
``[0, replica, channel, block]`` where ``block = step // BLOCK``, so the
normal used by replica ``i`` at step ``k`` does not depend on how many other
replicas are simulated alongside it or in which order.  Channel 0 carries the
Brownian increments, channel 1 the uniforms of the bridge crossing test.
"""

from __future__ import annotations

import numpy as np

__all__ = ["BLOCK", "NoiseStream", "derive_seed", "INCREMENTS", "BRIDGE", "ENTRY"]

BLOCK = 1024
INCREMENTS = 0
BRIDGE = 1
ENTRY = 2


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 63-bit child seed for a sub-experiment."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


class NoiseStream:
    """Standard normals and uniforms indexed by replica and step.

    Parameters
    ----------
    seed : int
        Master seed; hashed into the Philox key.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._key = np.random.SeedSequence(self.seed).generate_state(2, np.uint64)

    def _generator(self, replica, channel, block):
        bg = np.random.Philox(key=self._key,
                              counter=[0, int(replica), int(channel), int(block)])
        return np.random.Generator(bg)

    def _draw(self, replica, start, n, channel, kind):
        out = np.empty(n)
        pos = 0
        step = start
        while pos < n:
            b, off = divmod(step, BLOCK)
            g = self._generator(replica, channel, b)
            vals = g.standard_normal(BLOCK) if kind == "normal" else g.random(BLOCK)
            take = min(BLOCK - off, n - pos)
            out[pos:pos + take] = vals[off:off + take]
            pos += take
            step += take
        return out

    def normals(self, replica: int, start: int, n: int, channel: int = INCREMENTS):
        """Normals for steps ``start, ..., start + n - 1`` of one replica."""
        return self._draw(replica, start, n, channel, "normal")

    def uniforms(self, replica: int, start: int, n: int, channel: int = BRIDGE):
        """Uniforms on ``[0, 1)`` for steps ``start, ..., start + n - 1``."""
        return self._draw(replica, start, n, channel, "uniform")

    def normal_matrix(self, replicas, start, n, channel=INCREMENTS):
        """Array of shape ``(n, len(replicas))``: step-major for fast row access."""
        replicas = np.asarray(replicas, dtype=np.int64)
        out = np.empty((n, replicas.size))
        for j, r in enumerate(replicas):
            out[:, j] = self._draw(r, start, n, channel, "normal")
        return out

    def uniform_matrix(self, replicas, start, n, channel=BRIDGE):
        replicas = np.asarray(replicas, dtype=np.int64)
        out = np.empty((n, replicas.size))
        for j, r in enumerate(replicas):
            out[:, j] = self._draw(r, start, n, channel, "uniform")
        return out
