"""Deterministic random streams built on a counter-based generator.

Every random draw in the library flows through :func:`stream`, which derives
an independent Philox substream from a base seed and a path of labels. The
same ``(seed, path)`` always yields the same stream no matter how many other
streams exist or in what order they are created, so replications can run
sequentially or across worker processes and produce identical bytes.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream", "derive_seed", "standard_normal"]


def _spawn_key(path) -> tuple[int, ...]:
    words = []
    for part in path:
        if isinstance(part, (bool, float)):
            raise TypeError(f"stream path entries must be int or str, got {part!r}")
        if isinstance(part, (int, np.integer)):
            if part < 0:
                raise ValueError(f"stream path ints must be non-negative, got {part}")
            words.append(int(part))
        elif isinstance(part, str):
            digest = hashlib.sha256(part.encode("utf-8")).digest()
            words.append(int.from_bytes(digest[:8], "little"))
        else:
            raise TypeError(f"stream path entries must be int or str, got {part!r}")
    return tuple(words)


def stream(seed: int, *path) -> np.random.Generator:
    """Return the Philox generator for the substream named by ``path``.

    Parameters
    ----------
    seed : int
        Base seed shared by a whole run.
    *path : int or str
        Labels naming the consumer, e.g. ``stream(7, "draw", rep, "noise")``.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=_spawn_key(path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path) -> int:
    """Collapse ``(seed, path)`` to a reproducible non-negative 31-bit int.

    Used to hand child components (estimators, sub-experiments) their own
    base seed without sharing stream state.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=_spawn_key(path))
    return int(ss.generate_state(1, np.uint32)[0] & 0x7FFFFFFF)


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normal draws via the Box-Muller transform.

    Consumes only ``rng.random()`` so the uniform-to-normal mapping is fixed
    by this function rather than by the generator's own normal algorithm,
    keeping simulated datasets stable across numpy versions.
    """
    shape = (size,) if isinstance(size, (int, np.integer)) else tuple(size)
    total = int(np.prod(shape)) if shape else 1
    pairs = (total + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # in (0, 1], keeps log finite
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([radius * np.cos(2.0 * np.pi * u2),
                        radius * np.sin(2.0 * np.pi * u2)])[:total]
    return z.reshape(shape)
