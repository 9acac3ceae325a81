"""Shared pseudo-random stream for both forest kernel backends.

A Lehmer/MINSTD generator: state' = 48271 * state mod (2^31 - 1). Chosen
not for statistical heroics but because every intermediate product stays
below 2^63, so compiled int64 arithmetic and ordinary Python integers
walk the exact same sequence. That is what lets the numba and numpy
backends grow bit-identical trees from one seed.

Each tree gets its own stream derived from (seed, stream index); the
derivation mixes both into a state and burns a few steps so that
neighbouring seeds do not start on nearly identical trajectories.
"""

MODULUS = 2147483647  # 2^31 - 1, prime
MULTIPLIER = 48271


def stream_state(seed, stream):
    """Initial MINSTD state for stream `stream` of run `seed`.

    Accepts any nonnegative integers; the result is always in
    [1, MODULUS - 1]. Kept free of helper calls so it can be compiled
    as-is by the numba backend.
    """
    s = seed % 2147483647
    s = (s * 16807 + (stream + 1) * 48271 + 12345) % 2147483647
    if s == 0:
        s = 1
    for _ in range(8):
        s = (48271 * s) % 2147483647
    return s


def next_state(s):
    """One MINSTD step. Callers draw integers as (state - 1) % bound."""
    return (48271 * s) % 2147483647
