"""Seeded random streams.

Every random draw in the package goes through a Philox counter-based
bit generator keyed by an explicit 64-bit seed.  Normal variates come
from a Box-Muller transform of uniform doubles so that the stream only
depends on the (stable) uniform conversion, not on numpy's ziggurat.
"""

import numpy as np

__all__ = ["generator", "standard_normal", "uniforms"]


def generator(seed):
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.Philox(key=seed))


def uniforms(gen, shape):
    """Uniform doubles on [0, 1)."""
    return gen.random(shape)


def standard_normal(gen, shape):
    """Standard normal draws of ``shape`` via Box-Muller."""
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    size = int(np.prod(shape, dtype=np.int64))
    half = (size + 1) // 2
    u = gen.random((2, half))
    radius = np.sqrt(-2.0 * np.log1p(-u[0]))
    angle = 2.0 * np.pi * u[1]
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
    return z[:size].reshape(shape)
