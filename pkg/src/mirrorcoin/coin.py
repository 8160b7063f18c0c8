"""Coin-betting position updates for particle clouds.

Both engines maintain positions for an (N, d) cloud relative to its starting
point ``y0`` and consume one "outcome" array per call -- the negative
gradient signal computed at the current positions.  They never take a
learning rate.

:class:`KTCoin` is the Krichevsky-Trofimov bettor.  After outcomes
``c_1 .. c_t`` (observed at positions ``y_1 .. y_t``, with ``y_1 = y0``) the
position is

    y = y0 + (sum_s c_s) / (t + 1) * (1 + sum_s <c_s, y_s - y0>),

with the inner product (the bettor's wealth from past rounds) scalar per
particle.  Before any outcome the position is exactly ``y0``.

:class:`AdaptiveCoin` replaces the ``1/(t+1)`` schedule with per-coordinate
scale tracking: running maximum ``L``, absolute-sum ``G``, and clipped reward
``R``, updated with each outcome before the position is recomputed as

    y = y0 + sum_c / (G + L) * (1 + R / L)

per coordinate (optionally with the denominator clamped to at least
``100 L``).  Its very first step therefore moves each coordinate by exactly
sign(c)/2 (1/100 with the clamp).  Coordinates that have seen only zero
outcomes stay at ``y0``.
"""

from __future__ import annotations

import numpy as np


class KTCoin:
    def __init__(self, y0: np.ndarray):
        y0 = np.array(y0, dtype=float)
        self.y0 = y0
        self._y = y0.copy()
        self._sum_c = np.zeros_like(y0)
        self._wealth = np.zeros(y0.shape[:-1])
        self._t = 1

    def positions(self) -> np.ndarray:
        return self._y.copy()

    def set_positions(self, y: np.ndarray) -> None:
        """Overwrite the current positions (e.g. after a projection).

        Subsequent reward accounting pairs the next outcome with these
        positions.
        """
        self._y = np.array(y, dtype=float)

    def step(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        self._wealth = self._wealth + (c * (self._y - self.y0)).sum(axis=-1)
        self._sum_c = self._sum_c + c
        self._t += 1
        self._y = self.y0 + self._sum_c / self._t * (1.0 + self._wealth)[..., None]
        return self.positions()


class AdaptiveCoin:
    def __init__(self, y0: np.ndarray, guard: bool = False):
        y0 = np.array(y0, dtype=float)
        self.y0 = y0
        self.guard = bool(guard)
        self._y = y0.copy()
        self._sum_c = np.zeros_like(y0)
        self.L = np.zeros_like(y0)
        self.G = np.zeros_like(y0)
        self.R = np.zeros_like(y0)

    def positions(self) -> np.ndarray:
        return self._y.copy()

    def set_positions(self, y: np.ndarray) -> None:
        self._y = np.array(y, dtype=float)

    def step(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        np.maximum(self.L, np.abs(c), out=self.L)
        self.G += np.abs(c)
        np.maximum(self.R + c * (self._y - self.y0), 0.0, out=self.R)
        self._sum_c = self._sum_c + c
        denom = self.G + self.L
        if self.guard:
            denom = np.maximum(denom, 100.0 * self.L)
        seen = self.L > 0.0
        safe_denom = np.where(seen, denom, 1.0)
        safe_L = np.where(seen, self.L, 1.0)
        move = np.where(seen, self._sum_c / safe_denom * (1.0 + self.R / safe_L), 0.0)
        self._y = self.y0 + move
        return self.positions()


def make_coin(kind: str, y0: np.ndarray, guard: bool = False):
    if kind == "coin_kt":
        return KTCoin(y0)
    if kind == "coin_adaptive":
        return AdaptiveCoin(y0, guard=guard)
    raise ValueError(f"unknown coin engine {kind!r}")
