"""Dense complex matrix kernels: checked inverses, block partitions, and the
Woodbury / 2x2 / 3x3 block inversion identities.

The block identities are kept as literal formula transcriptions so they can
cross-check the generic LU path (and vice versa); the fixed-point solver uses
:func:`hermitian_inverse` for every inverse it takes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

#: Reciprocal-condition floor below which a matrix is treated as singular.
RCOND_FLOOR = 1e-13


class SingularMatrixError(np.linalg.LinAlgError):
    """A matrix required to be invertible is singular or too ill-conditioned."""

    def __init__(self, message: str, rcond: float | None = None, pivot: str | None = None):
        super().__init__(message)
        self.rcond = rcond
        self.pivot = pivot


def as_cmatrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and convert to a 2-D complex128 array with finite entries."""
    out = np.asarray(a, dtype=np.complex128)
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {out.shape}")
    if out.shape[0] < 1 or out.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got {out.shape}")
    if not np.isfinite(out).all():
        raise ValueError(f"{name} contains non-finite entries")
    return out


def is_hermitian(a: np.ndarray, tol: float = 1e-12) -> bool:
    """Whether ``a`` equals its conjugate transpose within relative ``tol``."""
    a = np.asarray(a)
    scale = np.linalg.norm(a)
    return np.linalg.norm(a - a.conj().T) <= tol * max(scale, 1.0)


@dataclass(frozen=True)
class Partition:
    """Ordered block sizes (L_0, ..., L_K) of an L x L block layout."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ValueError(f"block sizes must be positive, got {self.sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def total(self) -> int:
        return sum(self.sizes)

    @property
    def nblocks(self) -> int:
        return len(self.sizes)

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for s in self.sizes:
            out.append(acc)
            acc += s
        return tuple(out)

    def block_slice(self, k: int) -> slice:
        if not 0 <= k < self.nblocks:
            raise IndexError(f"block index {k} out of range [0, {self.nblocks})")
        start = self.offsets[k]
        return slice(start, start + self.sizes[k])


@dataclass
class BlockDiag:
    """A block-diagonal matrix stored as its square diagonal blocks."""

    partition: Partition
    blocks: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.blocks) != self.partition.nblocks:
            raise ValueError("one block per partition cell required")
        checked = []
        for k, (b, s) in enumerate(zip(self.blocks, self.partition.sizes)):
            b = as_cmatrix(b, f"block {k}")
            if b.shape != (s, s):
                raise ValueError(f"block {k} must be {s}x{s}, got {b.shape}")
            checked.append(b)
        self.blocks = checked

    @classmethod
    def zeros(cls, partition: Partition) -> "BlockDiag":
        return cls(partition, [np.zeros((s, s), dtype=np.complex128) for s in partition.sizes])

    @classmethod
    def from_dense(cls, a: np.ndarray, partition: Partition) -> "BlockDiag":
        """Keep only the diagonal blocks of a dense L x L matrix."""
        a = as_cmatrix(a)
        if a.shape != (partition.total, partition.total):
            raise ValueError(f"expected {partition.total}x{partition.total}, got {a.shape}")
        return cls(partition, [extract_diag_block(a, partition, k) for k in range(partition.nblocks)])

    def to_dense(self) -> np.ndarray:
        return blkdiag(self.blocks)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return all(is_hermitian(b, tol) for b in self.blocks)


def blkdiag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Dense block-diagonal matrix from square blocks."""
    blocks = [as_cmatrix(b) for b in blocks]
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n), dtype=np.complex128)
    pos = 0
    for b in blocks:
        s = b.shape[0]
        if b.shape[1] != s:
            raise ValueError("blocks must be square")
        out[pos:pos + s, pos:pos + s] = b
        pos += s
    return out


def extract_diag_block(a: np.ndarray, partition: Partition, k: int) -> np.ndarray:
    """The (k+1)-th diagonal sub-matrix of ``a`` under ``partition``."""
    a = np.asarray(a)
    if a.shape[0] != partition.total or a.shape[1] != partition.total:
        raise ValueError(f"matrix is {a.shape}, partition totals {partition.total}")
    s = partition.block_slice(k)
    return a[s, s].copy()


def _norm1(a: np.ndarray) -> float:
    return float(np.abs(a).sum(axis=0).max())


def hermitian_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse via pivoted LU with a reciprocal-condition check.

    Despite the name this accepts any square matrix; Hermitian inputs yield
    Hermitian outputs to rounding.  The 1-norm reciprocal condition
    1 / (norm1(A) * norm1(A^-1)) is evaluated from the computed inverse;
    :class:`SingularMatrixError` is raised below ``RCOND_FLOOR``.
    """
    a = as_cmatrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got {a.shape}")
    try:
        inv = np.linalg.inv(a)
    except np.linalg.LinAlgError as err:
        raise SingularMatrixError(f"LU inversion failed: {err}", rcond=0.0) from err
    if not np.isfinite(inv).all():
        raise SingularMatrixError("inverse overflowed (singular matrix)", rcond=0.0)
    rcond = 1.0 / (_norm1(a) * _norm1(inv))
    if not np.isfinite(rcond) or rcond < RCOND_FLOOR:
        raise SingularMatrixError(
            f"matrix numerically singular (rcond={rcond:.3e} < {RCOND_FLOOR:.0e})",
            rcond=float(rcond),
        )
    return inv


def _pivot_inverse(a: np.ndarray, pivot: str) -> np.ndarray:
    try:
        return hermitian_inverse(a)
    except SingularMatrixError as err:
        raise SingularMatrixError(f"pivot {pivot} is singular: {err}", rcond=err.rcond, pivot=pivot) from err


def woodbury_inverse(A: np.ndarray, B: np.ndarray, D: np.ndarray, C: np.ndarray) -> np.ndarray:
    """(A + B D C)^{-1} through inverses of A and D plus a k x k solve."""
    A, B, D, C = (as_cmatrix(m, n) for m, n in zip((A, B, D, C), "ABDC"))
    m, k = B.shape
    if A.shape != (m, m) or D.shape != (k, k) or C.shape != (k, m):
        raise ValueError("non-conformable Woodbury blocks")
    Ai = _pivot_inverse(A, "A")
    Di = _pivot_inverse(D, "D")
    inner = _pivot_inverse(Di + C @ Ai @ B, "D^-1 + C A^-1 B")
    return Ai - Ai @ B @ inner @ C @ Ai


def block2x2_inverse(A: np.ndarray, B: np.ndarray, C: np.ndarray, D: np.ndarray):
    """Blocks of [[A, B], [C, D]]^{-1}, pivoting on A and its Schur complement."""
    A, B, C, D = (as_cmatrix(m, n) for m, n in zip((A, B, C, D), "ABCD"))
    Ai = _pivot_inverse(A, "A")
    Si = _pivot_inverse(D - C @ Ai @ B, "Schur complement D - C A^-1 B")
    AiB = Ai @ B
    CAi = C @ Ai
    top_left = Ai + AiB @ Si @ CAi
    top_right = -AiB @ Si
    bottom_left = -Si @ CAi
    return top_left, top_right, bottom_left, Si


def block3x3_inverse(E, F, G, H, J, K, L, M, N):
    """Nine blocks of the inverse of [[E, F, G], [H, J, K], [L, M, N]].

    Uses the nested-Schur intermediates A = J - H E^-1 F, B = K - H E^-1 G,
    C = M - L E^-1 F, D = N - L E^-1 G, U = G - F A^-1 B, V = L - C A^-1 H,
    S = D - C A^-1 B.
    """
    E, F, G, H, J, K, L, M, N = (
        as_cmatrix(m, n) for m, n in zip((E, F, G, H, J, K, L, M, N), "EFGHJKLMN")
    )
    Ei = _pivot_inverse(E, "E")
    A = J - H @ Ei @ F
    B = K - H @ Ei @ G
    C = M - L @ Ei @ F
    D = N - L @ Ei @ G
    Ai = _pivot_inverse(A, "A = J - H E^-1 F")
    U = G - F @ Ai @ B
    V = L - C @ Ai @ H
    S = D - C @ Ai @ B
    Si = _pivot_inverse(S, "S = D - C A^-1 B")
    out11 = Ei + Ei @ (F @ Ai @ H + U @ Si @ V) @ Ei
    out12 = -Ei @ (F - U @ Si @ C) @ Ai
    out13 = -Ei @ U @ Si
    out21 = -Ai @ (H - B @ Si @ V) @ Ei
    out22 = Ai + Ai @ B @ Si @ C @ Ai
    out23 = -Ai @ B @ Si
    out31 = -Si @ V @ Ei
    out32 = -Si @ C @ Ai
    out33 = Si
    return out11, out12, out13, out21, out22, out23, out31, out32, out33
