"""
PerturbKit RNG - Counter-based SplitMix64 substreams.

The generator is frozen; golden tests replay it step by step.

    GAMMA   = 0x9E3779B97F4A7C15
    mix64(z):
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB
        return z ^ (z >> 31)                       (all arithmetic mod 2**64)

    name_hash = FNV-1a 64 over the UTF-8 bytes of the tensor name
                (offset 0xCBF29CE484222325, prime 0x100000001B3)
    key       = mix64(mix64(seed) ^ name_hash)

    draw k (k = 0, 1, 2, ...):  x_k = mix64(key + (k + 1) * GAMMA)
    uniform k:                  u_k = (x_k >> 11) * 2**-53        in [0, 1)

Uniform noise is (u_k - 0.5) * lam, which lies in [-lam/2, lam/2).
Gaussian noise uses Box-Muller on consecutive pairs (u_2i, u_2i+1):
    r = sqrt(-2 ln(1 - u_2i)); z_2i = r cos(2 pi u_2i+1); z_2i+1 = r sin(2 pi u_2i+1)
scaled by lam / 2.

Because every tensor's stream depends only on (seed, name), the order in
which tensors are visited never changes their noise.
"""

from dataclasses import dataclass

import numpy as np


MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MIX_A = 0xBF58476D1CE4E5B9
MIX_B = 0x94D049BB133111EB
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)


def mix64(z: int) -> int:
    """SplitMix64 finaliser on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX_A) & MASK64
    z = ((z ^ (z >> 27)) * MIX_B) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U30)) * np.uint64(MIX_A)
    z = (z ^ (z >> _U27)) * np.uint64(MIX_B)
    return z ^ (z >> _U31)


def fnv1a64(text: str) -> int:
    """FNV-1a 64-bit hash of the UTF-8 encoding of `text`."""
    h = FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def stream_key(seed: int, name: str) -> int:
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return mix64(mix64(seed) ^ fnv1a64(name))


@dataclass
class Substream:
    """
    One tensor's random stream: a key plus a draw counter.

    Each call consumes draws; two Substreams built from the same
    (seed, name) produce identical sequences.
    """

    key: int
    counter: int = 0

    def next_u64(self, n: int) -> np.ndarray:
        """Next `n` raw 64-bit outputs."""
        with np.errstate(over="ignore"):
            steps = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
            z = np.uint64(self.key) + steps * np.uint64(GAMMA)
            out = _mix64_array(z)
        self.counter += n
        return out

    def uniform(self, n: int) -> np.ndarray:
        """Next `n` float64 draws in [0, 1) (53-bit mantissa construction)."""
        return (self.next_u64(n) >> _U11).astype(np.float64) * (2.0 ** -53)

    def normal(self, n: int) -> np.ndarray:
        """Next `n` standard normal draws via Box-Muller (consumes an even count)."""
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        theta = 2.0 * np.pi * u[1::2]
        z = np.empty(2 * pairs, dtype=np.float64)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:n]


def derive_substream(seed: int, tensor_name: str) -> Substream:
    """
    Stream for one tensor under a global seed.

    Args:
        seed: Unsigned 64-bit run seed
        tensor_name: Record name (any UTF-8 string)

    Returns:
        Fresh Substream positioned at draw 0
    """
    return Substream(key=stream_key(seed, tensor_name))


def derive_seed(*parts: int) -> int:
    """Fold several integers into one 64-bit seed (used for per-run seeds)."""
    h = GAMMA
    for part in parts:
        h = mix64(h ^ (int(part) & MASK64))
    return h
