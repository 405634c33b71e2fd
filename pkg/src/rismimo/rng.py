"""Counter-based random streams keyed by (seed, trial, link, role).

Every random draw in the package comes from a Philox generator whose 128-bit
key encodes the addressing tuple, so trials are reproducible bit-for-bit and
independent of evaluation order or worker count.
"""

from __future__ import annotations

import numpy as np

# Stream roles.  Values below 256 are packed into the low key byte.
ROLE_X = 0          # scattering draw for an F-type link
ROLE_Y = 1          # scattering draw for a G-type link
ROLE_BASIS = 2      # random eigenbasis generation
ROLE_PROFILE = 3    # random variance-profile generation
ROLE_ANGLE = 4      # random steering angles
ROLE_PHASE = 5      # random reflection phases
ROLE_SPECULAR = 6   # random (non-UPA) specular components

_TRIAL_LIMIT = 1 << 40
_ROLE_LIMIT = 1 << 16
_LINK_LIMIT = 1 << 8


def philox_key(seed: int, trial: int = 0, link: int = 0, role: int = 0) -> np.ndarray:
    """Pack the addressing tuple into a collision-free 2x64-bit Philox key."""
    if not 0 <= trial < _TRIAL_LIMIT:
        raise ValueError(f"trial must be in [0, 2^40), got {trial}")
    if not 0 <= role < _ROLE_LIMIT:
        raise ValueError(f"role must be in [0, 2^16), got {role}")
    if not 0 <= link < _LINK_LIMIT:
        raise ValueError(f"link must be in [0, 2^8), got {link}")
    word0 = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    word1 = np.uint64((trial << 24) | (role << 8) | link)
    return np.array([word0, word1], dtype=np.uint64)


def stream(seed: int, trial: int = 0, link: int = 0, role: int = 0) -> np.random.Generator:
    """Generator for the stream addressed by (seed, trial, link, role)."""
    return np.random.Generator(np.random.Philox(key=philox_key(seed, trial, link, role)))


def complex_gaussian(gen: np.random.Generator, shape, var: float) -> np.ndarray:
    """Circularly symmetric complex Gaussian array with per-entry variance ``var``."""
    scale = np.sqrt(var / 2.0)
    return scale * (gen.standard_normal(shape) + 1j * gen.standard_normal(shape))


def haar_unitary(gen: np.random.Generator, n: int) -> np.ndarray:
    """Haar-distributed n x n unitary (QR of a Ginibre matrix, phases fixed)."""
    z = complex_gaussian(gen, (n, n), 1.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))
