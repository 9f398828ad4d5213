import logging
import math
import time
from dataclasses import dataclass
from typing import Callable
from typing import Optional

import numpy as np

from util.galois import character_sum
from util.galois import FieldContext
from util.galois import field_sub
from util.rng import sample_without_replacement
from util.rng import trial_rng
from util.sensing import ADDITIVE_CHARACTER
from util.sensing import column_spec
from util.sensing import ConstructionSpec
from util.sensing import GAUSSIAN
from util.sensing import gaussian_matrix
from util.sensing import orthonormal_block
from util.sensing import SensingMatrix
from util.workers import run_jobs

logger = logging.getLogger("additive_cs.util.analysis")

COHERENCE_BLOCK = 512
SPECTRAL_CHUNK = 250
JACOBI_TOLERANCE = 1e-10
JACOBI_MAX_SWEEPS = 100
SINGULAR_THRESHOLD = 1e-14
COHERENCE_SLACK = 1e-9


class DomainError(ValueError):
    pass


class EigenConvergenceError(RuntimeError):
    pass


class InvariantViolationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CoherenceReport:
    mu: float
    argmax_pair: tuple
    welch: float
    weil_prediction: Optional[float]

    @property
    def welch_ratio(self) -> float:
        return self.mu / self.welch if self.welch else math.inf


@dataclass(frozen=True)
class FrameReport:
    deviation: float
    max_off_diagonal: float
    redundancy: float


@dataclass(frozen=True)
class SpectralStats:
    family: str
    s: int
    trials: int
    cond_mean: float
    cond_std: float
    lambda_min_mean: float
    lambda_max_mean: float
    delta_hat: float


def welch_bound(K: int, N: int) -> float:
    """Lower bound sqrt((N-K) / (K(N-1))) on the coherence of any K x N unit-norm frame."""
    if K < 1 or N <= K:
        raise DomainError(f"The Welch bound needs N > K >= 1, got K={K}, N={N}")
    return math.sqrt((N - K) / (K * (N - 1)))


def _better(value: float, pair: tuple, best_value: float, best_pair: Optional[tuple]) -> bool:
    if value > best_value:
        return True
    return value == best_value and best_pair is not None and pair < best_pair


def _scan_block_row(matrix: SensingMatrix, block_size: int, row_start: int) -> tuple:
    """Largest |<a_i, a_j>| with i in this block row and j > i."""
    row_stop = min(row_start + block_size, matrix.N)
    left = matrix.columns(np.arange(row_start, row_stop)).conj().T
    best_value, best_pair = -1.0, None
    for col_start in range(row_start, matrix.N, block_size):
        col_stop = min(col_start + block_size, matrix.N)
        gram = np.abs(left @ matrix.columns(np.arange(col_start, col_stop)))
        if col_start == row_start:
            gram[np.tril_indices(gram.shape[0], k=0, m=gram.shape[1])] = -1.0
        flat = int(np.argmax(gram))
        i, j = divmod(flat, gram.shape[1])
        value, pair = float(gram[i, j]), (row_start + i, col_start + j)
        if value >= 0.0 and _better(value, pair, best_value, best_pair):
            best_value, best_pair = value, pair
    return best_value, best_pair


def coherence(
    matrix: SensingMatrix, block_size: int = COHERENCE_BLOCK, workers: Optional[int] = None
) -> CoherenceReport:
    """Exhaustive scan of |<a_n1, a_n2>| over every pair of distinct columns.

    Block rows are scanned in parallel and reduced in block order; ties on the maximum go to the
    lexicographically smallest (n1, n2).

    :param matrix: Matrix with unit-norm columns
    :param block_size: Columns per block
    :param workers: Worker count for the block rows
    :return: CoherenceReport with the maximum, its pair and the reference bounds
    """
    if matrix.N < 2:
        raise DomainError("Coherence needs at least two columns")
    start_time = time.time()
    logger.info("Scanning %s column pairs for coherence...", matrix.N * (matrix.N - 1) // 2)
    rows = list(range(0, matrix.N, block_size))
    results = run_jobs(
        lambda row_start: _scan_block_row(matrix, block_size, row_start),
        rows,
        workers,
        desc="coherence",
    )
    best_value, best_pair = -1.0, None
    for value, pair in results:
        if pair is not None and _better(value, pair, best_value, best_pair):
            best_value, best_pair = value, pair
    logger.info("--- %s seconds ---", (time.time() - start_time))

    welch = welch_bound(matrix.K, matrix.N) if matrix.N > matrix.K else 0.0
    weil = None
    if matrix.spec is not None:
        weil = (matrix.spec.d - 1) / math.sqrt(matrix.K)
    return CoherenceReport(mu=best_value, argmax_pair=best_pair, welch=welch, weil_prediction=weil)


def pair_correlation_exact(
    spec: ConstructionSpec, ctx: FieldContext, n1: int, n2: int
) -> complex:
    """<a_n1, a_n2> as (1/K) times the character sum of f(x) = sum (b'_i - b_i) x^(r_i)."""
    b = column_spec(spec, ctx, n1).b
    b_prime = column_spec(spec, ctx, n2).b
    f_coeffs = {}
    for r, first, second in zip(spec.exponents, b, b_prime):
        f_coeffs[r] = field_sub(ctx, second, first)
    return character_sum(ctx, f_coeffs) / spec.K


def sparsity_bound(spec: ConstructionSpec) -> float:
    """Recovery guarantee s < (sqrt(K)/(d-1) + 1) / 2."""
    return 0.5 * (math.sqrt(spec.K) / (spec.d - 1) + 1.0)


def max_guaranteed_sparsity(bound: float) -> int:
    """Largest integer s strictly below the bound."""
    if float(bound).is_integer():
        return int(bound) - 1
    return math.floor(bound)


def coherence_sparsity_bound(mu: float) -> float:
    """(1/mu + 1) / 2, the coherence condition for any matrix."""
    if mu <= 0.0:
        return math.inf
    return 0.5 * (1.0 / mu + 1.0)


def log_sparsity_bound(K: int, N: int) -> float:
    """The d = h form of the sparsity bound, (sqrt(K) log K / log(N/K) + 1) / 2."""
    if N <= K:
        raise DomainError(f"Need N > K, got K={K}, N={N}")
    return 0.5 * (math.sqrt(K) * math.log(K) / math.log(N / K) + 1.0)


def frame_test(matrix: SensingMatrix) -> FrameReport:
    """Compare the row Gram A A^H against (N/K) I.

    :param matrix: Any sensing matrix
    :return: FrameReport with the max deviation, the max off-diagonal magnitude and N/K
    """
    gram = np.zeros((matrix.K, matrix.K), dtype=np.complex128)
    for _, block in matrix.iter_blocks():
        gram += block @ block.conj().T
    redundancy = matrix.N / matrix.K
    deviation = float(np.max(np.abs(gram - redundancy * np.eye(matrix.K))))
    off_diagonal = np.abs(gram[~np.eye(matrix.K, dtype=bool)])
    return FrameReport(
        deviation=deviation,
        max_off_diagonal=float(off_diagonal.max()) if off_diagonal.size else 0.0,
        redundancy=redundancy,
    )


def block_orthonormality(spec: ConstructionSpec, ctx: FieldContext) -> float:
    """Max |sigma_t^H sigma_t - I| over all K^(h-1) orthonormal blocks."""
    worst = 0.0
    identity = np.eye(spec.K)
    for t in range(spec.K ** (spec.h - 1)):
        block = orthonormal_block(spec, ctx, t)
        worst = max(worst, float(np.max(np.abs(block.conj().T @ block - identity))))
    return worst


def _round_robin_pairs(n: int) -> list:
    """Rounds of disjoint (p, q) pairs, p < q, covering every pair once per sweep."""
    size = n + (n % 2)
    players = list(range(size))
    rounds = []
    for _ in range(size - 1):
        pairs = [(players[i], players[size - 1 - i]) for i in range(size // 2)]
        pairs = sorted((min(a, b), max(a, b)) for a, b in pairs if max(a, b) < n)
        rounds.append(
            (
                np.array([a for a, _ in pairs], dtype=np.int64),
                np.array([b for _, b in pairs], dtype=np.int64),
            )
        )
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _off_diagonal_norm(h: np.ndarray) -> np.ndarray:
    mask = ~np.eye(h.shape[-1], dtype=bool)
    return np.sqrt(np.sum(np.abs(h[:, mask]) ** 2, axis=-1))


def _rotate(h: np.ndarray, p_idx: np.ndarray, q_idx: np.ndarray) -> None:
    """Zero h[p, q] for every pair of one round with a complex Jacobi rotation, in place.

    The rotation J acts on columns (p, q) as [[c, s], [-s*w, c*w]] with w = conj(h_pq)/|h_pq|,
    and h becomes J^H h J.
    """
    a = h[:, p_idx, p_idx].real
    d = h[:, q_idx, q_idx].real
    b = h[:, p_idx, q_idx]
    magnitude = np.abs(b)
    active = magnitude > 0.0
    safe = np.where(active, magnitude, 1.0)
    theta = (d - a) / (2.0 * safe)
    t = np.where(theta >= 0.0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
    c = np.where(active, 1.0 / np.sqrt(t * t + 1.0), 1.0)
    s = np.where(active, t * c, 0.0)
    w = np.where(active, np.conj(b) / safe, 1.0)

    hp, hq = h[:, :, p_idx].copy(), h[:, :, q_idx].copy()
    h[:, :, p_idx] = c[:, None, :] * hp - (s * w)[:, None, :] * hq
    h[:, :, q_idx] = s[:, None, :] * hp + (c * w)[:, None, :] * hq

    hp, hq = h[:, p_idx, :].copy(), h[:, q_idx, :].copy()
    h[:, p_idx, :] = c[:, :, None] * hp - (s * np.conj(w))[:, :, None] * hq
    h[:, q_idx, :] = s[:, :, None] * hp + (c * np.conj(w))[:, :, None] * hq


def jacobi_eigenvalues(
    hermitian: np.ndarray,
    tolerance: float = JACOBI_TOLERANCE,
    max_sweeps: int = JACOBI_MAX_SWEEPS,
) -> np.ndarray:
    """Eigenvalues of Hermitian matrices by cyclic complex Jacobi rotations.

    Each sweep visits every off-diagonal pair once, in round-robin order so that the rotations of
    a round touch disjoint rows and columns and are applied together. Sweeps stop once the
    off-diagonal Frobenius mass is at most `tolerance`.

    :param hermitian: One s x s matrix or a stack of them, shape (..., s, s)
    :param tolerance: Off-diagonal mass at convergence
    :param max_sweeps: Sweeps allowed before giving up
    :return: Ascending eigenvalues, shape (..., s)
    """
    h = np.array(hermitian, dtype=np.complex128)
    single = h.ndim == 2
    if single:
        h = h[None]
    batch_shape = h.shape[:-2]
    n = h.shape[-1]
    h = h.reshape((-1, n, n))
    rounds = _round_robin_pairs(n)
    for sweep in range(max_sweeps + 1):
        off = _off_diagonal_norm(h)
        if np.all(off <= tolerance):
            break
        if sweep == max_sweeps:
            raise EigenConvergenceError(
                f"Jacobi did not converge in {max_sweeps} sweeps (off-diagonal {off.max():.3e})"
            )
        for p_idx, q_idx in rounds:
            _rotate(h, p_idx, q_idx)
    eigenvalues = np.sort(np.real(np.diagonal(h, axis1=-2, axis2=-1)), axis=-1)
    eigenvalues = eigenvalues.reshape(batch_shape + (n,))
    return eigenvalues[0] if single else eigenvalues


def gram_eigenvalues(submatrix: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of A_s^H A_s for a K x s submatrix (or a stack of them)."""
    a = np.asarray(submatrix)
    gram = np.conj(np.swapaxes(a, -1, -2)) @ a
    return jacobi_eigenvalues(gram)


def condition_from_eigenvalues(eigenvalues: np.ndarray) -> np.ndarray:
    """sqrt(lambda_max / lambda_min), infinite where lambda_min <= SINGULAR_THRESHOLD."""
    lam_min = eigenvalues[..., 0]
    lam_max = eigenvalues[..., -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.sqrt(lam_max / np.where(lam_min > SINGULAR_THRESHOLD, lam_min, 1.0))
    return np.where(lam_min > SINGULAR_THRESHOLD, ratio, np.inf)


def condition_number(submatrix: np.ndarray) -> float:
    return float(condition_from_eigenvalues(gram_eigenvalues(submatrix)))


def _spectral_chunk(draw: Callable, family: str, s: int, seed: int, trials: range) -> np.ndarray:
    subs = np.stack([draw(trial_rng(seed, family, s, t)) for t in trials])
    return gram_eigenvalues(subs)


def _spectral_stats(
    draw: Callable, family: str, s: int, trials: int, seed: int, workers: Optional[int]
) -> SpectralStats:
    start_time = time.time()
    logger.info("Condition numbers for %s, s=%s over %s trials...", family, s, trials)
    chunks = [range(i, min(i + SPECTRAL_CHUNK, trials)) for i in range(0, trials, SPECTRAL_CHUNK)]
    eigenvalues = np.concatenate(
        run_jobs(
            lambda chunk: _spectral_chunk(draw, family, s, seed, chunk),
            chunks,
            workers,
            desc=f"{family} s={s}",
        )
    )
    conditions = condition_from_eigenvalues(eigenvalues)
    lam_min, lam_max = eigenvalues[:, 0], eigenvalues[:, -1]
    logger.info("--- %s seconds ---", (time.time() - start_time))
    return SpectralStats(
        family=family,
        s=s,
        trials=trials,
        cond_mean=float(np.mean(conditions)),
        cond_std=float(np.std(conditions)),
        lambda_min_mean=float(np.mean(lam_min)),
        lambda_max_mean=float(np.mean(lam_max)),
        delta_hat=float(np.max(np.maximum(lam_max - 1.0, 1.0 - lam_min))),
    )


def condition_stats(
    matrix: SensingMatrix, s: int, trials: int, seed: int, workers: Optional[int] = None
) -> SpectralStats:
    """Condition-number statistics of K x s submatrices with s distinct random columns.

    delta_hat is the largest max(lambda_max - 1, 1 - lambda_min) seen, an empirical lower bound
    on the restricted isometry constant rather than a certificate.
    """
    if s < 1 or s > matrix.K:
        raise DomainError(f"Need 1 <= s <= K={matrix.K}, got s={s}")

    def draw(rng):
        return matrix.columns(sample_without_replacement(matrix.N, s, rng))

    return _spectral_stats(draw, matrix.kind, s, trials, seed, workers)


def compare_with_gaussian(
    K: int, s: int, trials: int, seed: int, workers: Optional[int] = None
) -> SpectralStats:
    """The same statistics for fresh column-normalised Gaussian K x s matrices."""
    if s < 1 or s > K:
        raise DomainError(f"Need 1 <= s <= K={K}, got s={s}")

    def draw(rng):
        return gaussian_matrix(K, s, rng).to_dense()

    return _spectral_stats(draw, GAUSSIAN, s, trials, seed, workers)


def invariant_violations(
    matrix: SensingMatrix, report: CoherenceReport, frame: FrameReport
) -> list:
    problems = []
    if report.mu > 1.0 + COHERENCE_SLACK:
        problems.append(f"coherence {report.mu} exceeds 1")
    if report.mu < report.welch - COHERENCE_SLACK:
        problems.append(f"coherence {report.mu} is below the Welch bound {report.welch}")
    if matrix.kind == ADDITIVE_CHARACTER and report.weil_prediction is not None:
        if report.mu > report.weil_prediction + COHERENCE_SLACK:
            problems.append(
                f"coherence {report.mu} exceeds (d-1)/sqrt(K) = {report.weil_prediction}"
            )
        if matrix.spec.d == 2 and abs(report.mu - report.weil_prediction) > COHERENCE_SLACK:
            problems.append(f"coherence {report.mu} differs from 1/sqrt(K) for d = 2")
    frame_tolerance = max(matrix.K * matrix.N * 1e-15, 1e-12)
    if matrix.kind == ADDITIVE_CHARACTER and frame.deviation > frame_tolerance:
        problems.append(f"frame deviation {frame.deviation} exceeds {frame_tolerance}")
    return problems


def check_invariants(matrix: SensingMatrix, report: CoherenceReport, frame: FrameReport) -> None:
    """Raise InvariantViolationError listing every violated coherence/frame property."""
    problems = invariant_violations(matrix, report, frame)
    if problems:
        raise InvariantViolationError("; ".join(problems))
