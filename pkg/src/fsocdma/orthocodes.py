"""Real-valued multi-level orthogonal spreading codes.

Walsh (Sylvester) matrices cover orders 2^k; hard-coded circulant bases
cover the odd primes 3, 5 and 7; a Kronecker-style block composition
extends the family to every order whose prime factors lie in the
supported table.  All arithmetic is exact integer arithmetic with an
explicit 64-bit overflow check -- orthogonality is never a floating
point statement here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

INT64_MAX = np.iinfo(np.int64).max

# Hard limit on matrix order (walsh exponent 12 == order 4096).
MAX_WALSH_EXPONENT = 12
ORDER_LIMIT = 2 ** MAX_WALSH_EXPONENT

SUPPORTED_PRIMES = (2, 3, 5, 7)


def _circulant_rows(first: tuple[int, ...]) -> tuple[tuple[int, ...], ...]:
    n = len(first)
    return tuple(tuple(first[(j - i) % n] for j in range(n)) for i in range(n))

# Orthogonal bases for the odd primes, re-verified at construction time.
# The order-5 and order-7 matrices are circulants of a first row whose
# cyclic autocorrelation vanishes at every nonzero lag (found by integer
# search over entries in {+-1,..,+-3}); order 3 needs explicit signs.
_PRIME_BASES = {
    3: (
        (1, 2, 2),
        (2, 1, -2),
        (2, -2, 1),
    ),
    5: _circulant_rows((2, -3, 2, 2, 2)),
    7: _circulant_rows((1, -2, -2, -1, 1, 1, -2)),
}


class UnsupportedOrderError(ValueError):
    """Requested order has a prime factor outside the supported table."""

    def __init__(self, factor: int, n: int | None = None):
        self.factor = factor
        where = f" of n={n}" if n is not None else ""
        super().__init__(
            f"prime factor {factor}{where} is not in the supported table "
            f"{SUPPORTED_PRIMES}"
        )


class OrderLimitError(ValueError):
    """Requested order exceeds the configured maximum."""


class EntryOverflowError(OverflowError):
    """Exact integer entry or Gram value does not fit in signed 64 bits."""


class DimensionError(ValueError):
    """Row length does not match the number of free positions."""


@dataclass(frozen=True)
class CodeMatrix:
    """Square integer matrix with pairwise orthogonal, all-nonzero rows.

    ``gram_diag[i]`` caches the exact squared norm of row i.
    """

    n: int
    entries: np.ndarray  # (n, n) int64, read-only
    gram_diag: np.ndarray  # (n,) int64, read-only

    def row(self, i: int) -> np.ndarray:
        return self.entries[i]


@dataclass(frozen=True)
class GramReport:
    """Exact Gram matrix of a candidate code plus the two orthogonality flags."""

    gram: np.ndarray  # (n, n) int64
    is_orthogonal: bool  # all off-diagonal entries zero
    all_nonzero: bool  # no zero entries in the candidate itself


@dataclass(frozen=True)
class ModifiedSignature:
    """Length-N spreading code with zeros on deactivated subcarriers."""

    length: int
    chips: np.ndarray  # (N,) int64, read-only
    free_mask: np.ndarray  # (N,) bool: True exactly where chips != 0
    energy: int  # sum of squared chips

    @property
    def free_count(self) -> int:
        return int(np.count_nonzero(self.free_mask))


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _exact_gram(entries: np.ndarray) -> np.ndarray:
    """C @ C.T in exact integer arithmetic, raising on 64-bit overflow."""
    n = entries.shape[0]
    bound = int(np.max(np.abs(entries))) if entries.size else 0
    if bound * bound * max(n, 1) <= INT64_MAX:
        # products cannot overflow, use fast int64 matmul
        return entries @ entries.T
    gram_obj = entries.astype(object) @ entries.astype(object).T
    if int(np.max(np.abs(gram_obj))) > INT64_MAX:
        raise EntryOverflowError("Gram matrix exceeds signed 64-bit range")
    return gram_obj.astype(np.int64)


def verify(candidate) -> GramReport:
    """Compute the exact Gram matrix of a square integer matrix.

    Diagnostic only: never raises on a non-orthogonal input, the flags
    report what was found.
    """
    entries = np.asarray(candidate, dtype=np.int64)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {entries.shape}")
    gram = _exact_gram(entries)
    off = gram[~np.eye(entries.shape[0], dtype=bool)]
    is_orth = bool(off.size == 0 or not np.any(off))
    all_nz = bool(np.all(entries != 0))
    return GramReport(gram=_freeze(gram), is_orthogonal=is_orth, all_nonzero=all_nz)


def from_entries(candidate) -> CodeMatrix:
    """Wrap a matrix as a CodeMatrix, enforcing every invariant."""
    entries = np.array(candidate, dtype=np.int64)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {entries.shape}")
    report = verify(entries)
    if not report.all_nonzero:
        raise ValueError("code matrix entries must all be nonzero")
    if not report.is_orthogonal:
        raise ValueError("rows are not pairwise orthogonal")
    diag = np.diagonal(report.gram).copy()
    return CodeMatrix(
        n=entries.shape[0], entries=_freeze(entries), gram_diag=_freeze(diag)
    )


def walsh(k: int) -> CodeMatrix:
    """Walsh/Sylvester matrix of order 2^k with entries in {+1, -1}."""
    if k < 0:
        raise ValueError("walsh exponent must be nonnegative")
    if k > MAX_WALSH_EXPONENT:
        raise OrderLimitError(
            f"walsh exponent {k} exceeds the maximum {MAX_WALSH_EXPONENT}"
        )
    h = np.array([[1]], dtype=np.int64)
    for _ in range(k):
        h = np.block([[h, h], [h, -h]])
    diag = np.full(h.shape[0], h.shape[0], dtype=np.int64)
    return CodeMatrix(n=h.shape[0], entries=_freeze(h), gram_diag=_freeze(diag))


def prime_base(p: int) -> CodeMatrix:
    """Orthogonal base matrix of prime order p from the supported table.

    p=2 is the Walsh kernel; odd primes use circulant matrices whose first
    rows are re-verified here, so a corrupted table fails loudly.
    """
    if p == 2:
        return walsh(1)
    if p not in _PRIME_BASES:
        raise UnsupportedOrderError(p)
    return from_entries(_PRIME_BASES[p])


def compose(outer: CodeMatrix, inner: CodeMatrix) -> CodeMatrix:
    """Block composition: the (i, j) block of the result is outer[i][j] * inner.

    This is the Kronecker product outer (x) inner; the Gram matrix of the
    result is the Kronecker product of the input Gram matrices.
    """
    n = outer.n * inner.n
    if n > ORDER_LIMIT:
        raise OrderLimitError(f"composed order {n} exceeds the limit {ORDER_LIMIT}")
    bound_out = int(np.max(np.abs(outer.entries)))
    bound_in = int(np.max(np.abs(inner.entries)))
    if bound_out * bound_in > INT64_MAX:
        raise EntryOverflowError("composed entries exceed signed 64-bit range")
    entries = np.kron(outer.entries, inner.entries)
    # Gram diagonal composes as the Kronecker product of the diagonals.
    diag_out = outer.gram_diag.astype(object)
    diag_in = inner.gram_diag.astype(object)
    diag = np.kron(diag_out, diag_in)
    if int(max(diag)) > INT64_MAX:
        raise EntryOverflowError("composed Gram diagonal exceeds signed 64-bit range")
    return CodeMatrix(
        n=n, entries=_freeze(entries), gram_diag=_freeze(diag.astype(np.int64))
    )


def _prime_factors_ascending(n: int) -> list[int]:
    factors = []
    rest = n
    for p in SUPPORTED_PRIMES:
        while rest % p == 0:
            factors.append(p)
            rest //= p
    if rest != 1:
        # smallest remaining factor for the error message
        f = rest
        for q in range(2, math.isqrt(rest) + 1):
            if rest % q == 0:
                f = q
                break
        raise UnsupportedOrderError(f, n=n)
    return factors


@lru_cache(maxsize=None)
def build(n: int) -> CodeMatrix:
    """Orthogonal code matrix of order n for any n with supported prime factors.

    Deterministic: prime factors ascending, composed left to right with the
    running product as the inner matrix.
    """
    if n < 1:
        raise ValueError("order must be >= 1")
    if n > ORDER_LIMIT:
        raise OrderLimitError(f"order {n} exceeds the limit {ORDER_LIMIT}")
    factors = _prime_factors_ascending(n)
    if not factors:
        one = np.array([[1]], dtype=np.int64)
        return CodeMatrix(
            n=1, entries=_freeze(one), gram_diag=_freeze(np.array([1], dtype=np.int64))
        )
    running = prime_base(factors[0])
    for p in factors[1:]:
        running = compose(prime_base(p), running)
    return running


def is_supported_order(n: int) -> bool:
    if n < 1 or n > ORDER_LIMIT:
        return False
    rest = n
    for p in SUPPORTED_PRIMES:
        while rest % p == 0:
            rest //= p
    return rest == 1


def largest_supported_order(n: int) -> int:
    """Largest supported order <= n (1 for any n >= 1, 0 for n <= 0)."""
    m = min(n, ORDER_LIMIT)
    while m > 0 and not is_supported_order(m):
        m -= 1
    return max(m, 0)


def supported_orders(limit: int) -> list[int]:
    return [n for n in range(1, limit + 1) if is_supported_order(n)]


def embed(code_row, busy_mask) -> ModifiedSignature:
    """Place a length-n_free code row onto the free positions of a mask.

    busy positions get chip 0; the row is laid out in index order over the
    free positions.
    """
    row = np.asarray(code_row, dtype=np.int64)
    busy = np.asarray(busy_mask, dtype=bool)
    if row.ndim != 1 or busy.ndim != 1:
        raise DimensionError("code_row and busy_mask must be one-dimensional")
    n_free = int(np.count_nonzero(~busy))
    if row.size != n_free:
        raise DimensionError(
            f"code row length {row.size} != number of free positions {n_free}"
        )
    chips = np.zeros(busy.size, dtype=np.int64)
    chips[~busy] = row
    energy = int(np.sum(row.astype(object) ** 2))
    if energy > INT64_MAX:
        raise EntryOverflowError("signature energy exceeds signed 64-bit range")
    return ModifiedSignature(
        length=busy.size,
        chips=_freeze(chips),
        free_mask=_freeze(~busy),
        energy=energy,
    )


def format_matrix(code: CodeMatrix) -> str:
    """Plain-text export: first line n=<order>, then space-separated rows."""
    lines = [f"n={code.n}"]
    lines.extend(" ".join(str(int(v)) for v in row) for row in code.entries)
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    """Inverse of format_matrix (returns the raw entries)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("n="):
        raise ValueError("matrix text must start with an n=<order> line")
    n = int(lines[0][2:])
    rows = [[int(tok) for tok in ln.split()] for ln in lines[1:]]
    arr = np.array(rows, dtype=np.int64)
    if arr.shape != (n, n):
        raise ValueError(f"expected a {n}x{n} matrix, got shape {arr.shape}")
    return arr
