"""Counter-based randomness keyed by (seed, vertex label).

Sceneries must be reproducible from (seed, label) alone, independent of vertex
enumeration order and stable when a finite window is enlarged.  We therefore
never draw sequentially: every vertex value is a deterministic mix of a 64-bit
seed and a 64-bit label key.  The mixer is the SplitMix64 finalizer, applied
twice, which is more than enough avalanche for i.i.d.-quality uniforms.

Walk randomness is a separate stream (numpy PCG64 generators); see
`walk_generator`.
"""

from __future__ import annotations

import hashlib

import numpy as np

_U64 = np.uint64
_MASK = (1 << 64) - 1

_GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)

# stream salts: scenery draws, coboundary eta field, one-site resampling
STREAM_MASS = _U64(0x53414E44504C4531)
STREAM_ETA = _U64(0x434F424F554E4452)
STREAM_RESAMPLE = _U64(0x5245534D504C3163)

# label-scheme salts (see graphs.py); shared schemes give shared keys
SCHEME_SALTS = {
    "coords": _U64(0xC001D5A17C001D5A),
    "tree": _U64(0x7EEE5A17BCDE0123),
    "pipes": _U64(0x9B1BE5A17F00DBAD),
    "ray": _U64(0x4A75A17D00DFEED5),
    "custom": _U64(0xCAFEBABE12345678),
}


def _as_u64(x) -> np.ndarray:
    return np.asarray(x).astype(np.uint64, copy=False)


def mix64(x):
    """SplitMix64 finalizer on uint64 scalars or arrays (wraps mod 2^64)."""
    with np.errstate(over="ignore"):
        z = _as_u64(x) + _GOLDEN
        z = (z ^ (z >> _U64(30))) * _MIX1
        z = (z ^ (z >> _U64(27))) * _MIX2
        return z ^ (z >> _U64(31))


def combine_u64(salt: np.uint64, *components) -> np.ndarray:
    """Chain-mix integer component arrays into one key array."""
    key = mix64(salt)
    with np.errstate(over="ignore"):
        for i, comp in enumerate(components):
            c = _as_u64(comp)
            key = mix64((key ^ c) + mix64(salt + _U64(i + 1)))
    return key


def string_key(label: str) -> int:
    """Stable 64-bit key for an opaque label string (custom graphs)."""
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def uniform_open01(keys, seed: int, stream=STREAM_MASS, counter: int = 0):
    """Uniforms on (0, 1], one per key, deterministic in (seed, key, counter)."""
    with np.errstate(over="ignore"):
        s = mix64(_U64(seed & _MASK) ^ stream)
        z = mix64(_as_u64(keys) ^ s)
        if counter:
            z = mix64(z + _U64(counter) * _GOLDEN)
    return ((z >> _U64(11)).astype(np.float64) + 1.0) * 2.0 ** -53


def walk_generator(seed: int, replica: int = 0) -> np.random.Generator:
    """Walk RNG, independent of the scenery stream by construction."""
    ss = np.random.SeedSequence(entropy=seed & _MASK, spawn_key=(0x57414C4B, replica))
    return np.random.Generator(np.random.PCG64(ss))
