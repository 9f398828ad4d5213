"""Additive character sensing matrices and the random matrices they are compared against."""
import logging
import math
import time
from dataclasses import dataclass
from typing import Callable
from typing import Iterator
from typing import Optional
from typing import Sequence

import numpy as np
from sympy import isprime

from util.galois import FieldContext
from util.galois import field_add
from util.galois import field_mul
from util.galois import field_pow
from util.galois import roots_of_unity
from util.galois import trace
from util.lfsr import combined_generator
from util.lfsr import generate
from util.rng import sample_without_replacement

logger = logging.getLogger("additive_cs.util.sensing")

ADDITIVE_CHARACTER = "additive-character"
GAUSSIAN = "gaussian"
PARTIAL_FOURIER = "partial-fourier"

DEFAULT_DENSE_CAP = 2**24
BUILD_BLOCK = 4096
COLUMN_METHODS = ("table", "direct", "lfsr")


class ConstructionError(ValueError):
    pass


class IndexRangeError(ValueError):
    pass


@dataclass(frozen=True)
class ConstructionSpec:
    p: int
    m: int
    h: int
    d: int
    exponents: tuple

    def __post_init__(self):
        object.__setattr__(self, "exponents", tuple(int(r) for r in self.exponents))
        violations = self.violations()
        if violations:
            raise ConstructionError("; ".join(violations))

    def violations(self) -> list:
        problems = []
        if self.p == 2 or not isprime(self.p):
            problems.append(f"p={self.p} is not an odd prime")
        if self.m < 1:
            problems.append(f"m={self.m} must be at least 1")
        if self.h < 2:
            problems.append(f"h={self.h} must be greater than 1")
        if self.d < self.h:
            problems.append(f"d={self.d} must be at least h={self.h}")
        r = self.exponents
        if len(r) != self.h:
            problems.append(f"expected {self.h} exponents, got {len(r)}")
        if any(b <= a for a, b in zip(r, r[1:])):
            problems.append(f"exponents {r} are not strictly increasing")
        if r and r[0] != 1:
            problems.append(f"r_1={r[0]} must be 1")
        if r and r[-1] != self.d:
            problems.append(f"r_h={r[-1]} must equal d={self.d}")
        for value in r:
            if value < 1 or value % self.p == 0:
                problems.append(f"gcd({value}, {self.p}^{self.m}) != 1")
        return problems

    @property
    def K(self) -> int:
        return self.p**self.m

    @property
    def N(self) -> int:
        return self.K**self.h

    @classmethod
    def construction_1a(cls, p: int, m: int) -> "ConstructionSpec":
        return cls(p=p, m=m, h=2, d=2, exponents=(1, 2))

    def describe(self) -> dict:
        return {
            "p": self.p,
            "m": self.m,
            "h": self.h,
            "d": self.d,
            "exponents": ",".join(str(r) for r in self.exponents),
        }


@dataclass(frozen=True)
class ColumnSpec:
    n: int
    u: tuple
    b: tuple


def decompose_index(n: int, K: int, h: int) -> tuple:
    """Base-K digits u_1..u_h of a column index, least significant first."""
    if n < 0 or n >= K**h:
        raise IndexRangeError(f"Column index {n} is outside [0, {K ** h - 1}]")
    return tuple((n // K**i) % K for i in range(h))


def coefficients_from_index(ctx: FieldContext, u: Sequence[int]) -> tuple:
    """b_i = 0 for u_i = 0, otherwise alpha^(u_i - 1)."""
    return tuple(0 if ui == 0 else int(ctx.exp_table[ui - 1]) for ui in u)


def column_spec(spec: ConstructionSpec, ctx: FieldContext, n: int) -> ColumnSpec:
    u = decompose_index(n, spec.K, spec.h)
    return ColumnSpec(n=n, u=u, b=coefficients_from_index(ctx, u))


def _check_field(spec: ConstructionSpec, ctx: FieldContext) -> None:
    if (ctx.p, ctx.m) != (spec.p, spec.m):
        raise ConstructionError(
            f"Field GF({ctx.p}^{ctx.m}) does not match construction GF({spec.p}^{spec.m})"
        )


def phase_block(
    spec: ConstructionSpec,
    ctx: FieldContext,
    columns: Sequence[int],
    rows: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Residues Tr(sum b_i alpha^(r_i(k-1))) for rows k and the given columns; row 0 is zero.

    With b_i = alpha^(u_i - 1), each term is Tr(alpha^(u_i - 1 + r_i(k-1))), a lookup in the
    trace-of-powers table. `rows` defaults to all K rows.
    """
    K = spec.K
    n = np.asarray(columns, dtype=np.int64)
    if n.size and (n.min() < 0 or n.max() >= spec.N):
        raise IndexRangeError(f"Column indices must lie in [0, {spec.N - 1}]")
    k = np.arange(K, dtype=np.int64) if rows is None else np.asarray(rows, dtype=np.int64)
    if k.size and (k.min() < 0 or k.max() >= K):
        raise IndexRangeError(f"Row indices must lie in [0, {K - 1}]")
    k = k[:, None]
    phases = np.zeros((k.shape[0], n.size), dtype=np.int64)
    for i, r in enumerate(spec.exponents):
        u = ((n // K**i) % K)[None, :]
        contribution = ctx.power_traces[(u - 1 + r * (k - 1)) % (K - 1)]
        phases += np.where((u > 0) & (k > 0), contribution, 0)
    return phases % spec.p


def entries_from_phases(phases: np.ndarray, p: int, K: int) -> np.ndarray:
    return roots_of_unity(p)[phases] / math.sqrt(K)


def column_phases(
    spec: ConstructionSpec, ctx: FieldContext, n: int, method: str = "table"
) -> np.ndarray:
    """Phase residues of column n computed through one of three independent paths.

    :param spec: The construction
    :param ctx: Its field
    :param n: Column index
    :param method: "table" (trace-of-powers lookup), "direct" (field arithmetic) or "lfsr"
    :return: Length-K vector of residues mod p
    """
    _check_field(spec, ctx)
    if method == "table":
        return phase_block(spec, ctx, [n])[:, 0]
    col = column_spec(spec, ctx, n)
    K = spec.K
    if method == "direct":
        phases = [0]
        for k in range(1, K):
            x = 0
            for r, b in zip(spec.exponents, col.b):
                x = field_add(ctx, x, field_mul(ctx, b, field_pow(ctx, ctx.alpha, r * (k - 1))))
            phases.append(trace(ctx, x))
        return np.array(phases, dtype=np.int64)
    if method == "lfsr":
        gen = combined_generator(ctx, spec.exponents, col.b)
        return np.concatenate(([0], generate(gen, K - 1)))
    raise ValueError(f"Unknown column method '{method}', expected one of {COLUMN_METHODS}")


def column(spec: ConstructionSpec, ctx: FieldContext, n: int, method: str = "table") -> np.ndarray:
    return entries_from_phases(column_phases(spec, ctx, n, method), spec.p, spec.K)


class SensingMatrix:
    """A K x N complex matrix with unit-norm columns, held densely or generated per column block.

    Dense entries are stored column-major. Lazy matrices keep only the construction and its
    field and rebuild any requested columns from the trace tables.
    """

    def __init__(
        self,
        K: int,
        N: int,
        kind: str,
        entries: Optional[np.ndarray] = None,
        spec: Optional[ConstructionSpec] = None,
        field: Optional[FieldContext] = None,
    ):
        self.K = K
        self.N = N
        self.kind = kind
        self.spec = spec
        self.field = field
        self._dense = None
        self._adjoint = None
        if entries is not None:
            if entries.shape != (K, N):
                raise ValueError(f"Entries have shape {entries.shape}, expected {(K, N)}")
            self._dense = np.asfortranarray(entries)
            self._dense.flags.writeable = False
        elif spec is None or field is None:
            raise ValueError("A lazy matrix needs its construction and field")

    @property
    def is_lazy(self) -> bool:
        return self._dense is None

    @property
    def shape(self) -> tuple:
        return self.K, self.N

    def descriptor(self) -> dict:
        values = {"K": self.K, "N": self.N, "kind": self.kind}
        if self.spec is not None:
            values.update(self.spec.describe())
        if self.field is not None:
            values["modulus"] = self.field.modulus.serialize()
        return values

    def columns(self, indices: Sequence[int]) -> np.ndarray:
        if self._dense is not None:
            return self._dense[:, np.asarray(indices, dtype=np.int64)]
        phases = phase_block(self.spec, self.field, indices)
        return entries_from_phases(phases, self.spec.p, self.K)

    def submatrix(self, rows: Sequence[int], columns: Sequence[int]) -> np.ndarray:
        """Entries at the given rows and columns; lazy matrices generate only those."""
        rows = np.asarray(rows, dtype=np.int64)
        columns = np.asarray(columns, dtype=np.int64)
        if self._dense is not None:
            return self._dense[np.ix_(rows, columns)]
        phases = phase_block(self.spec, self.field, columns, rows)
        return entries_from_phases(phases, self.spec.p, self.K)

    def column(self, n: int) -> np.ndarray:
        return self.columns([n])[:, 0]

    def iter_blocks(self, block_size: int = BUILD_BLOCK) -> Iterator:
        """Yield (start, K x b block) pairs covering every column in order."""
        for start in range(0, self.N, block_size):
            stop = min(start + block_size, self.N)
            yield start, self.columns(np.arange(start, stop))

    def to_dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense
        return np.asfortranarray(np.hstack([block for _, block in self.iter_blocks()]))

    def apply(self, x: np.ndarray) -> np.ndarray:
        """A @ x for a length-N vector or an N x B stack."""
        if self._dense is not None:
            return self._dense @ x
        result = None
        for start, block in self.iter_blocks():
            part = block @ x[start : start + block.shape[1]]
            result = part if result is None else result + part
        return result

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        """A^H @ r for a length-K vector or a K x B stack."""
        if self._dense is not None:
            if self._adjoint is None:
                self._adjoint = np.ascontiguousarray(self._dense.conj().T)
            return self._adjoint @ r
        return np.concatenate([block.conj().T @ r for _, block in self.iter_blocks()])

    def __repr__(self) -> str:
        mode = "lazy" if self.is_lazy else "dense"
        return f"SensingMatrix({self.kind}, {self.K}x{self.N}, {mode})"


def build_matrix(
    spec: ConstructionSpec,
    ctx: FieldContext,
    lazy: Optional[bool] = None,
    dense_cap: int = DEFAULT_DENSE_CAP,
) -> SensingMatrix:
    """Build the K x N matrix whose n-th column is column(spec, ctx, n).

    :param spec: Validated construction
    :param ctx: The field the construction lives in
    :param lazy: Force lazy (True) or dense (False); by default lazy only above dense_cap entries
    :param dense_cap: Largest number of entries stored densely
    :return: The SensingMatrix
    """
    _check_field(spec, ctx)
    K, N = spec.K, spec.N
    if lazy is None:
        lazy = K * N > dense_cap
    if lazy:
        logger.info("Using lazy %sx%s additive character matrix", K, N)
        return SensingMatrix(K, N, ADDITIVE_CHARACTER, spec=spec, field=ctx)

    start_time = time.time()
    logger.info("Building %sx%s additive character matrix...", K, N)
    entries = np.empty((K, N), dtype=np.complex128, order="F")
    for start in range(0, N, BUILD_BLOCK):
        stop = min(start + BUILD_BLOCK, N)
        entries[:, start:stop] = entries_from_phases(
            phase_block(spec, ctx, np.arange(start, stop)), spec.p, K
        )
    logger.info("--- %s seconds ---", (time.time() - start_time))
    return SensingMatrix(K, N, ADDITIVE_CHARACTER, entries=entries, spec=spec, field=ctx)


def build_construction_1a(
    ctx: FieldContext, lazy: Optional[bool] = None, dense_cap: int = DEFAULT_DENSE_CAP
) -> SensingMatrix:
    """The K x K^2 matrix with h = d = 2 and exponents (1, 2) over the given field."""
    return build_matrix(ConstructionSpec.construction_1a(ctx.p, ctx.m), ctx, lazy, dense_cap)


def orthonormal_block(spec: ConstructionSpec, ctx: FieldContext, t: int) -> np.ndarray:
    """The K x K submatrix whose u_1 digit runs over [0, K-1] and whose other digits encode t."""
    K = spec.K
    if t < 0 or t >= K ** (spec.h - 1):
        raise IndexRangeError(f"Block index {t} is outside [0, {K ** (spec.h - 1) - 1}]")
    _check_field(spec, ctx)
    return entries_from_phases(phase_block(spec, ctx, K * t + np.arange(K)), spec.p, K)


def entry_alphabet(matrix: SensingMatrix, decimals: int = 12) -> np.ndarray:
    """Distinct entry phases of a matrix, as angles in [0, 2*pi) rounded to `decimals`."""
    seen = set()
    for _, block in matrix.iter_blocks():
        angles = np.mod(np.angle(block), 2 * np.pi)
        seen.update(np.unique(np.round(angles, decimals)).tolist())
    return np.array(sorted(seen))


def gaussian_matrix(
    K: int, s: int, rng: np.random.Generator, normalize: bool = True
) -> SensingMatrix:
    """K x s matrix of i.i.d. N(0, 1/K) entries with every column scaled to unit norm."""
    if s < 1:
        raise ValueError(f"Gaussian matrix needs at least one column, got {s}")
    entries = rng.normal(0.0, 1.0 / math.sqrt(K), size=(K, s))
    if normalize:
        entries = entries / np.linalg.norm(entries, axis=0)
    return SensingMatrix(K, s, GAUSSIAN, entries=entries)


def partial_fourier(K: int, N: int, rng: np.random.Generator) -> SensingMatrix:
    """K distinct rows of the N-point DFT matrix, scaled by 1/sqrt(K)."""
    if K > N:
        raise ValueError(f"Cannot draw {K} distinct rows from an {N}-point DFT")
    rows = sample_without_replacement(N, K, rng)
    phases = (rows[:, None] * np.arange(N, dtype=np.int64)[None, :]) % N
    entries = np.exp(2j * np.pi * phases / N) / math.sqrt(K)
    return SensingMatrix(K, N, PARTIAL_FOURIER, entries=entries)


@dataclass(frozen=True)
class MatrixFamily:
    """A source of sensing matrices for the experiment harness.

    Fixed families return the same matrix on every draw; the others draw a fresh matrix from the
    trial's random stream.
    """

    name: str
    K: int
    N: int
    fixed: bool
    draw: Callable


def additive_character_family(matrix: SensingMatrix) -> MatrixFamily:
    return MatrixFamily(ADDITIVE_CHARACTER, matrix.K, matrix.N, True, lambda rng: matrix)


def partial_fourier_family(K: int, N: int) -> MatrixFamily:
    return MatrixFamily(PARTIAL_FOURIER, K, N, False, lambda rng: partial_fourier(K, N, rng))


def gaussian_family(K: int, N: int) -> MatrixFamily:
    return MatrixFamily(GAUSSIAN, K, N, False, lambda rng: gaussian_matrix(K, N, rng))
