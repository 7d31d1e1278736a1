"""Deterministic per-replication seeds."""

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def derive_seed(master: int, index: int) -> int:
    """SplitMix64 output for state ``master XOR index``.

    The state is advanced by the golden-ratio increment and passed through
    the SplitMix64 finalizer, a bijection on 64-bit words, so distinct
    indices below 2**64 never collide for a fixed master seed.
    """
    if not (0 <= master <= _MASK and 0 <= index <= _MASK):
        raise ValueError("seed and index must be 64-bit unsigned integers")
    z = ((master ^ index) + _GAMMA) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)
