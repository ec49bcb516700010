"""Dense GF(2) linear algebra: binary matrices, row reduction, systematic forms."""

from __future__ import annotations

import numpy as np

__all__ = [
    "BinaryMatrix",
    "gf2_matmul",
    "identity",
    "rank",
    "rref",
    "null_space",
    "stack_rows",
    "systematic_form",
    "diagonalize_at",
    "identity_columns",
    "complementary_pcm",
    "is_cyclic_row_space",
]


class BinaryMatrix:
    """Immutable dense matrix over GF(2), stored row-major as uint8.

    Entries are validated to lie in {0, 1} and the backing array is made
    read-only, so instances are safe to share across threads.
    """

    __slots__ = ("bits",)

    def __init__(self, bits) -> None:
        arr = np.array(bits, dtype=np.uint8, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"BinaryMatrix requires a 2-D array, got ndim={arr.ndim}")
        if arr.size and arr.max() > 1:
            raise ValueError("BinaryMatrix entries must be 0 or 1")
        arr.setflags(write=False)
        self.bits = arr

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def popcount(self) -> int:
        """Number of ones."""
        return int(self.bits.sum())

    def transpose(self) -> "BinaryMatrix":
        return BinaryMatrix(self.bits.T)

    def column(self, j: int) -> np.ndarray:
        return self.bits[:, j]

    def is_zero(self) -> bool:
        return not self.bits.any()

    def tobytes(self) -> bytes:
        """Canonical byte serialization (shape header + row-major bits)."""
        header = f"{self.rows} {self.cols}\n".encode()
        return header + self.bits.tobytes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self) -> int:
        return hash(self.tobytes())

    def __repr__(self) -> str:
        return f"BinaryMatrix({self.rows}x{self.cols}, ones={self.popcount()})"


def identity(n: int) -> BinaryMatrix:
    return BinaryMatrix(np.eye(n, dtype=np.uint8))


def gf2_matmul(a: BinaryMatrix, b: BinaryMatrix) -> BinaryMatrix:
    """Mod-2 matrix product.

    Raises ValueError on inner-dimension mismatch.
    """
    if a.cols != b.rows:
        raise ValueError(f"dimension mismatch: ({a.rows}x{a.cols}) @ ({b.rows}x{b.cols})")
    prod = (a.bits.astype(np.int64) @ b.bits.astype(np.int64)) & 1
    return BinaryMatrix(prod.astype(np.uint8))


def gf2_matvec(m: BinaryMatrix, v: np.ndarray) -> np.ndarray:
    """Mod-2 matrix-vector product; v is a length-cols bit vector."""
    v = np.asarray(v, dtype=np.uint8)
    if v.shape != (m.cols,):
        raise ValueError(f"vector length {v.shape} incompatible with {m.cols} columns")
    return ((m.bits.astype(np.int64) @ v.astype(np.int64)) & 1).astype(np.uint8)


def rref(m: BinaryMatrix) -> tuple[np.ndarray, list[int]]:
    """Reduced row-echelon form over GF(2).

    Returns (array, pivot_columns). Uses row operations only; column order is
    never changed.
    """
    a = m.bits.copy()
    nrows, ncols = a.shape
    pivots: list[int] = []
    row = 0
    for col in range(ncols):
        if row == nrows:
            break
        hit = np.nonzero(a[row:, col])[0]
        if hit.size == 0:
            continue
        piv = row + int(hit[0])
        if piv != row:
            a[[row, piv]] = a[[piv, row]]
        others = np.nonzero(a[:, col])[0]
        for r in others:
            if r != row:
                a[r] ^= a[row]
        pivots.append(col)
        row += 1
    return a, pivots


def rank(m: BinaryMatrix) -> int:
    """GF(2) rank via Gaussian elimination."""
    _, pivots = rref(m)
    return len(pivots)


def stack_rows(a: BinaryMatrix, b: BinaryMatrix) -> BinaryMatrix:
    if a.cols != b.cols:
        raise ValueError("cannot stack matrices with different column counts")
    return BinaryMatrix(np.vstack([a.bits, b.bits]))


def null_space(m: BinaryMatrix) -> BinaryMatrix:
    """Basis of the right null space, one basis vector per row.

    For a full-rank (n-k) x n parity-check matrix the result is a k x n
    generator matrix with G H^T = 0.
    """
    reduced, pivots = rref(m)
    ncols = m.cols
    free_cols = [c for c in range(ncols) if c not in pivots]
    basis = np.zeros((len(free_cols), ncols), dtype=np.uint8)
    for i, free in enumerate(free_cols):
        basis[i, free] = 1
        for r, p in enumerate(pivots):
            basis[i, p] = reduced[r, free]
    return BinaryMatrix(basis)


def systematic_form(h: BinaryMatrix) -> BinaryMatrix:
    """Row-reduce a full-rank PCM toward [I | P] using row operations only.

    The row space is preserved exactly. If the leading (rows x rows) block is
    singular, the result is the best-effort reduced echelon form; use
    identity_columns() to inspect how much of the identity block was achieved.

    Raises ValueError if h is rank-deficient.
    """
    reduced, pivots = rref(h)
    if len(pivots) < h.rows:
        raise ValueError(f"rank-deficient matrix: rank {len(pivots)} < {h.rows} rows")
    return BinaryMatrix(reduced)


def identity_columns(m: BinaryMatrix, start: int = 0) -> int:
    """Count columns of the block starting at `start` that form a clean identity.

    Column start+i counts when it equals the i-th standard basis vector.
    """
    count = 0
    for i in range(min(m.rows, m.cols - start)):
        col = m.bits[:, start + i]
        if col[i] == 1 and col.sum() == 1:
            count += 1
    return count


def diagonalize_at(h: BinaryMatrix, start: int) -> tuple[BinaryMatrix, int]:
    """Best-effort diagonalization with the identity block targeted at `start`.

    Pivots are chosen first inside the window [start, start + rows) (wrapping
    mod cols), then wherever possible. Row operations only. Returns the
    reduced matrix and the achieved identity-column count inside the window.
    """
    a = h.bits.copy()
    nrows, ncols = a.shape
    order = [(start + j) % ncols for j in range(ncols)]
    row = 0
    for col in order:
        if row == nrows:
            break
        hit = np.nonzero(a[row:, col])[0]
        if hit.size == 0:
            continue
        piv = row + int(hit[0])
        if piv != row:
            a[[row, piv]] = a[[piv, row]]
        for r in np.nonzero(a[:, col])[0]:
            if r != row:
                a[r] ^= a[row]
        row += 1
    out = BinaryMatrix(a)
    achieved = 0
    for i in range(min(nrows, ncols)):
        col = out.bits[:, (start + i) % ncols]
        if col.sum() == 1 and col[i] == 1:
            achieved += 1
    return out, achieved


def complementary_pcm(h_sys: BinaryMatrix, p: int) -> BinaryMatrix:
    """Cyclic column shift of a systematic PCM placing the identity block at p·(n-k).

    Output column j equals input column (j - p*(n-k)) mod n. Only valid as a
    PCM when the underlying code is cyclic; callers on non-cyclic codes must
    use diagonalize_at() instead.
    """
    m, n = h_sys.shape
    limit = -(-n // m) - 1  # ceil(n/m) - 1
    if p == 0:
        return BinaryMatrix(h_sys.bits)
    if not 1 <= p <= limit:
        raise ValueError(f"shift index p={p} outside 1..{limit} for a {m}x{n} PCM")
    src = (np.arange(n) - p * m) % n
    return BinaryMatrix(h_sys.bits[:, src])


def is_cyclic_row_space(h: BinaryMatrix) -> bool:
    """True when a one-step cyclic column shift preserves the row space.

    Equivalent to the code (null space of h) being closed under cyclic shifts.
    """
    shifted = BinaryMatrix(np.roll(h.bits, 1, axis=1))
    r = rank(h)
    return rank(stack_rows(h, shifted)) == r
