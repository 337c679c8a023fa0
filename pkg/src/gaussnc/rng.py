"""Seedable, splittable Gaussian streams.

Each stream is keyed by ``(seed, stream_id)`` and backed by the Philox
counter-based generator, so independent streams need no coordination.
Standard normals come from the Marsaglia polar transform applied to fixed
blocks of uniforms; the emitted sequence therefore does not depend on how
callers chunk their requests.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
# uniform pairs drawn per refill; fixed so the output is chunking-invariant
_BLOCK_PAIRS = 4096


class RngStream:
    """A reproducible stream of standard normal variates.

    Parameters
    ----------
    seed, stream_id : int
        Reduced modulo 2**64 and used as the two Philox key words.

    Attributes
    ----------
    counter : int
        Number of normals handed out so far.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)
        self._gen = np.random.Generator(self._bitgen)
        self._buffer = np.empty(0)
        self._pos = 0
        self.counter = 0

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"

    def spawn(self, stream_id: int) -> "RngStream":
        """Fresh stream with the same seed and a different stream id."""
        return RngStream(self.seed, stream_id)

    def _refill(self) -> None:
        uv = self._gen.random((_BLOCK_PAIRS, 2)) * 2.0 - 1.0
        s = uv[:, 0] ** 2 + uv[:, 1] ** 2
        ok = (s > 0.0) & (s < 1.0)
        uv, s = uv[ok], s[ok]
        factor = np.sqrt(-2.0 * np.log(s) / s)
        fresh = (uv * factor[:, None]).ravel()
        self._buffer = np.concatenate([self._buffer[self._pos:], fresh])
        self._pos = 0

    def normals(self, count: int) -> np.ndarray:
        """Return ``count`` independent N(0, 1) variates."""
        count = int(count)
        while len(self._buffer) - self._pos < count:
            self._refill()
        out = self._buffer[self._pos:self._pos + count].copy()
        self._pos += count
        self.counter += count
        return out
