"""Transmission schedules for the random and periodic comparison strategies."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from ..errors import RateOutOfRange


def _check_rate(rate: float) -> None:
    if not (rate is not None and 0 < rate <= 1):
        raise RateOutOfRange(f"transmission rate must be in (0, 1], got {rate}")


def random_schedule(rate: float, node_count: int, horizon: int, L: int, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli(rate) permissions, repaired so no time step is empty.

    An empty step gets its lexicographically first slot (l = 0, node 0) switched on.
    """
    _check_rate(rate)
    table = rng.random((horizon, L, node_count)) < rate
    empty = ~table.reshape(horizon, -1).any(axis=1)
    table[empty, 0, 0] = True
    return table


def periodic_schedule(rate: float, node_count: int, horizon: int, L: int) -> np.ndarray:
    """Staggered round-robin: node i fires in slot t when t*rate + i/N crosses an integer.

    Every slot has at least one permitted node when rate >= 1/N. Phases use
    exact rationals so the pattern does not depend on float rounding.
    """
    _check_rate(rate)
    r = Fraction(rate).limit_denominator(10**6)
    n = node_count
    t = np.arange(horizon * L, dtype=object)[:, None]
    i = np.arange(n, dtype=object)[None, :]
    # floor((t*r + i/n)) with integer arithmetic: r = a/b -> (t*a*n + i*b) // (b*n)
    a, b = r.numerator, r.denominator
    phase = (t * a * n + i * b) // (b * n)
    phase_next = ((t + 1) * a * n + i * b) // (b * n)
    table = (phase_next > phase).astype(bool).reshape(horizon, L, n)
    # Only reachable for rate < 1/N.
    empty = ~table.reshape(horizon, -1).any(axis=1)
    table[empty, 0, 0] = True
    return table


def schedule(kind: str, rate: float, node_count: int, horizon: int, L: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Permission table indexed (step, consensus step, node)."""
    if kind == "random":
        if rng is None:
            raise ValueError("random schedule needs an rng")
        return random_schedule(rate, node_count, horizon, L, rng)
    if kind == "periodic":
        return periodic_schedule(rate, node_count, horizon, L)
    raise ValueError(f"no schedule for strategy {kind!r}")
