"""Dense float64 matrix helpers and a seedable, splittable random source.

All randomness in the package flows through :class:`RandomStream`, which wraps
numpy's PCG64 bit generator keyed by ``(seed, stream_id[, child ids...])`` via
``SeedSequence``. Identical keys give identical draw sequences: the generator
algorithm is fixed and draws are made in a documented order, so runs are
reproducible across platforms.

Uniform draws are strictly inside (0, 1): they are built from 53-bit integers
``k`` in [1, 2^53 - 1] as ``k * 2**-53``, which is exact in float64 and can
never round to an endpoint. Standard normals are the inverse normal CDF
applied to those open-interval uniforms, one uniform per normal.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

__all__ = [
    "Matrix",
    "RandomStream",
    "as_matrix",
    "matmul",
    "sample_standard_normal",
    "sample_uniform",
]

# A Matrix is a 2-D, C-contiguous float64 ndarray (row-major entries).
Matrix = np.ndarray

_U53 = 1 << 53
_INV53 = 2.0 ** -53


def as_matrix(values, rows=None, cols=None) -> Matrix:
    """Coerce ``values`` to a validated 2-D float64 array.

    Raises ValueError on wrong dimensionality, a shape mismatch against the
    optional ``rows``/``cols``, or non-finite entries.
    """
    a = np.ascontiguousarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got ndim={a.ndim}")
    if rows is not None and a.shape[0] != rows:
        raise ValueError(f"expected {rows} rows, got {a.shape[0]}")
    if cols is not None and a.shape[1] != cols:
        raise ValueError(f"expected {cols} cols, got {a.shape[1]}")
    if not np.isfinite(a).all():
        raise ValueError("matrix entries must all be finite")
    return a


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with explicit conformance checking."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul requires 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"shape mismatch: ({a.shape[0]}x{a.shape[1]}) @ ({b.shape[0]}x{b.shape[1]})"
        )
    return a @ b


class RandomStream:
    """Deterministic PCG64 stream keyed by (seed, stream_id, *children).

    A stream is single-consumer; concurrent users must take disjoint
    ``split`` children. ``split`` derives an independent stream without
    consuming any state from the parent.
    """

    def __init__(self, seed: int, stream_id: int = 0, _key=None):
        self.key = tuple(_key) if _key is not None else (int(seed), int(stream_id))
        self._bitgen = np.random.PCG64(np.random.SeedSequence(self.key))
        self._gen = np.random.Generator(self._bitgen)

    @property
    def seed(self) -> int:
        return self.key[0]

    @property
    def stream_id(self) -> int:
        return self.key[1]

    def split(self, child_id: int) -> "RandomStream":
        """Independent child stream; does not advance this stream."""
        return RandomStream(0, 0, _key=self.key + (int(child_id),))

    # State save/restore supports bit-exact training resume.
    def get_state(self) -> dict:
        return self._bitgen.state

    def set_state(self, state: dict) -> None:
        self._bitgen.state = state

    def generator(self) -> np.random.Generator:
        return self._gen

    def __repr__(self):
        return f"RandomStream(key={self.key})"


def sample_uniform(stream: RandomStream, n: int) -> np.ndarray:
    """n i.i.d. draws from the open interval (0, 1)."""
    if n < 1:
        raise ValueError(f"need n >= 1 draws, got {n}")
    gen = stream.generator()
    k = gen.integers(0, _U53, size=n, dtype=np.int64)
    # k == 0 has probability 2^-53; redraw so 0.0 is impossible.
    zero = k == 0
    while zero.any():
        k[zero] = gen.integers(0, _U53, size=int(zero.sum()), dtype=np.int64)
        zero = k == 0
    return k * _INV53


def sample_standard_normal(stream: RandomStream, n: int) -> np.ndarray:
    """n i.i.d. N(0, 1) draws via inverse-CDF of open-interval uniforms."""
    if n < 1:
        raise ValueError(f"need n >= 1 draws, got {n}")
    return ndtri(sample_uniform(stream, n))
