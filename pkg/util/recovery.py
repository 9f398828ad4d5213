"""Sparse signals, noisy measurements, matching pursuit and the recovery-rate experiments."""
import logging
import math
import time
from dataclasses import dataclass
from dataclasses import field
from typing import Optional
from typing import Sequence

import numpy as np
import pandas
from tenacity import after_log
from tenacity import retry
from tenacity import retry_if_exception_type
from tenacity import stop_after_attempt

from util.rng import sample_without_replacement
from util.rng import trial_rng
from util.sensing import MatrixFamily
from util.sensing import SensingMatrix
from util.workers import run_jobs

logger = logging.getLogger("additive_cs.util.recovery")

NOISELESS_THRESHOLD = 1e-4
NOISY_THRESHOLD = 1e-2
DEFAULT_TRIALS = 500
DEFAULT_NOISY_SPARSITY = (1, 2, 3)
DEFAULT_SNR_GRID = tuple(float(snr) for snr in range(0, 45, 5))
TRIAL_CHUNK = 50
NOISELESS_KEY = "noiseless"


class SparsityRangeError(ValueError):
    pass


class DegenerateSnrError(ValueError):
    pass


class ZeroAmplitudeError(RuntimeError):
    pass


@dataclass(frozen=True)
class SparseSignal:
    N: int
    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.support) != len(self.values):
            raise SparsityRangeError("Support and amplitudes differ in length")
        if len(self.support) > self.N:
            raise SparsityRangeError(f"Support of {len(self.support)} exceeds N={self.N}")
        if len(set(int(n) for n in self.support)) != len(self.support):
            raise SparsityRangeError("Support indices must be distinct")
        if np.any(self.values == 0.0):
            raise SparsityRangeError("Support amplitudes must be nonzero")

    @property
    def s(self) -> int:
        return len(self.support)

    def to_dense(self) -> np.ndarray:
        x = np.zeros(self.N)
        x[self.support] = self.values
        return x


@dataclass(frozen=True)
class MpConfig:
    max_iterations: int = 100
    residual_floor: float = 1e-12
    success_threshold: float = NOISELESS_THRESHOLD

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be at least 1, got {self.max_iterations}")
        if self.residual_floor <= 0.0 or self.success_threshold <= 0.0:
            raise ValueError("MP thresholds must be positive")

    @classmethod
    def noisy(cls, max_iterations: int = 100) -> "MpConfig":
        return cls(max_iterations=max_iterations, success_threshold=NOISY_THRESHOLD)


@dataclass
class PursuitResult:
    estimates: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray
    history: Optional[list] = None


@dataclass(frozen=True)
class TrialResult:
    s: int
    squared_error: float
    squared_error_real: float
    iterations_used: int
    success: bool
    success_real: bool
    snr_db: Optional[float] = None


@dataclass(frozen=True)
class ConditionResult:
    family: str
    s: int
    trials: int
    success_rate: float
    success_rate_real: float
    mean_iterations: float
    snr_db: Optional[float] = None


@dataclass
class ExperimentReport:
    descriptor: dict
    seed: int
    threshold: float
    conditions: list = field(default_factory=list)
    trial_log: list = field(default_factory=list)

    @property
    def noisy(self) -> bool:
        return any(c.snr_db is not None for c in self.conditions)

    def rate(self, family: str, s: int, snr_db: Optional[float] = None) -> float:
        for c in self.conditions:
            if c.family == family and c.s == s and c.snr_db == snr_db:
                return c.success_rate
        raise KeyError((family, s, snr_db))

    def to_frame(self, include_real: bool = False) -> pandas.DataFrame:
        columns = ["family", "s", "snr_db", "trials", "success_rate"]
        if include_real:
            columns.append("success_rate_real")
        rows = [[getattr(c, name) for name in columns] for c in self.conditions]
        frame = pandas.DataFrame(rows, columns=columns)
        if not self.noisy:
            frame = frame.drop(columns=["snr_db"])
        return frame

    def trial_frame(self) -> pandas.DataFrame:
        columns = ["family", "s", "snr_db", "trial", "squared_error", "squared_error_real"]
        columns += ["iterations", "success"]
        return pandas.DataFrame(self.trial_log, columns=columns)


@retry(
    stop=stop_after_attempt(10),
    retry=retry_if_exception_type(ZeroAmplitudeError),
    after=after_log(logger, logging.DEBUG),
    reraise=True,
)
def _draw_amplitudes(s: int, rng: np.random.Generator) -> np.ndarray:
    values = rng.standard_normal(s)
    if np.any(values == 0.0):
        raise ZeroAmplitudeError("Drew an exact-zero amplitude")
    return values


def random_sparse_signal(N: int, s: int, rng: np.random.Generator) -> SparseSignal:
    """An s-sparse signal with a uniform random support and standard normal amplitudes.

    :param N: Signal dimension
    :param s: Number of nonzero entries
    :param rng: The random stream
    :return: SparseSignal with distinct support indices
    """
    if s < 1 or s > N:
        raise SparsityRangeError(f"Sparsity must satisfy 1 <= s <= N={N}, got {s}")
    support = sample_without_replacement(N, s, rng)
    return SparseSignal(N=N, support=support, values=_draw_amplitudes(s, rng))


def _as_vector(matrix: SensingMatrix, x) -> np.ndarray:
    if isinstance(x, SparseSignal):
        x = x.to_dense()
    x = np.asarray(x)
    if x.shape != (matrix.N,):
        raise ValueError(f"Signal has shape {x.shape}, expected ({matrix.N},)")
    return x


def measure(matrix: SensingMatrix, x) -> np.ndarray:
    """Noiseless measurement y = A x."""
    x = _as_vector(matrix, x)
    if not np.any(x):
        return np.zeros(matrix.K, dtype=np.complex128)
    return np.asarray(matrix.apply(x), dtype=np.complex128)


def noise_variance(y: np.ndarray, K: int, snr_db: float) -> float:
    """Per-component noise power ||Ax||^2 / (K 10^(snr/10)) for the realised measurement."""
    power = float(np.vdot(y, y).real)
    if power == 0.0:
        raise DegenerateSnrError("A zero measurement has no finite SNR")
    if math.isinf(snr_db) and snr_db < 0:
        raise DegenerateSnrError("An SNR of -inf dB has no finite noise power")
    return power / (K * 10.0 ** (snr_db / 10.0))


def add_noise(y: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Add circular complex Gaussian noise at the given SNR; an infinite SNR adds nothing."""
    if math.isinf(snr_db) and snr_db > 0:
        return y
    sigma = math.sqrt(noise_variance(y, len(y), snr_db) / 2.0)
    noise = rng.normal(0.0, sigma, size=len(y)) + 1j * rng.normal(0.0, sigma, size=len(y))
    return y + noise


def measure_noisy(
    matrix: SensingMatrix, x, snr_db: float, rng: np.random.Generator
) -> np.ndarray:
    return add_noise(measure(matrix, x), snr_db, rng)


def pursue(
    matrix: SensingMatrix, Y: np.ndarray, config: MpConfig, record_history: bool = False
) -> PursuitResult:
    """Matching pursuit run on every column of Y at once.

    Each column keeps its own residual; once a residual drops below the floor that column stops
    iterating. Ties on |g_j| go to the smallest j.

    :param matrix: Dictionary with unit-norm columns
    :param Y: One measurement of length K or a K x B stack
    :param config: Iteration limit and residual floor
    :param record_history: Keep the residual norms after every iteration
    :return: PursuitResult with N x B estimates, K x B residuals and per-column iteration counts
    """
    Y = np.asarray(Y, dtype=np.complex128)
    single = Y.ndim == 1
    if single:
        Y = Y[:, None]
    if Y.shape[0] != matrix.K:
        raise ValueError(f"Measurements have {Y.shape[0]} rows, expected {matrix.K}")
    batch = Y.shape[1]
    X = np.zeros((matrix.N, batch), dtype=np.complex128)
    R = Y.copy()
    iterations = np.zeros(batch, dtype=np.int64)
    norms = np.linalg.norm(R, axis=0)
    history = [norms.copy()] if record_history else None

    for _ in range(config.max_iterations):
        active = np.flatnonzero(norms >= config.residual_floor)
        if active.size == 0:
            break
        G = matrix.adjoint(R[:, active])
        picks = np.argmax(np.abs(G), axis=0)
        coefs = G[picks, np.arange(active.size)]
        X[picks, active] += coefs
        R[:, active] -= matrix.columns(picks) * coefs[None, :]
        iterations[active] += 1
        norms = np.linalg.norm(R, axis=0)
        if record_history:
            history.append(norms.copy())

    if single:
        return PursuitResult(X[:, 0], R[:, 0], iterations, history)
    return PursuitResult(X, R, iterations, history)


def matching_pursuit(
    matrix: SensingMatrix, y: np.ndarray, config: Optional[MpConfig] = None
) -> np.ndarray:
    """Estimate x from y = A x by classical matching pursuit; returns the complex estimate."""
    return pursue(matrix, y, config or MpConfig()).estimates


def evaluate_success(
    x, x_hat: np.ndarray, threshold: float, iterations_used: int = 0, snr_db=None
) -> TrialResult:
    """Squared error of the complex estimate (and of its real part) against the true signal."""
    if isinstance(x, SparseSignal):
        s, x = x.s, x.to_dense()
    else:
        x = np.asarray(x, dtype=float)
        s = int(np.count_nonzero(x))
    if x.shape != np.shape(x_hat):
        raise ValueError(f"Signal shape {x.shape} does not match estimate {np.shape(x_hat)}")
    error = float(np.sum(np.abs(x - x_hat) ** 2))
    error_real = float(np.sum((x - np.real(x_hat)) ** 2))
    return TrialResult(
        s=s,
        squared_error=error,
        squared_error_real=error_real,
        iterations_used=int(iterations_used),
        success=error < threshold,
        success_real=error_real < threshold,
        snr_db=snr_db,
    )


def _draw_trial(family: MatrixFamily, s: int, snr_db, seed: int, t: int) -> tuple:
    """(matrix, signal, measurement) for one trial, all drawn from that trial's own stream."""
    rng = trial_rng(seed, family.name, s, NOISELESS_KEY if snr_db is None else float(snr_db), t)
    matrix = family.draw(rng)
    if s == 0:
        signal = SparseSignal(family.N, np.zeros(0, dtype=np.int64), np.zeros(0))
        return matrix, signal, np.zeros(family.K, dtype=np.complex128)
    signal = random_sparse_signal(family.N, s, rng)
    y = matrix.columns(signal.support) @ signal.values
    if snr_db is not None:
        y = add_noise(y, snr_db, rng)
    return matrix, signal, y


def _run_chunk(job: tuple) -> list:
    family, s, snr_db, trials, seed, config = job
    draws = [_draw_trial(family, s, snr_db, seed, t) for t in trials]
    if family.fixed:
        matrix = draws[0][0]
        pursuit = pursue(matrix, np.stack([y for _, _, y in draws], axis=1), config)
        estimates = [pursuit.estimates[:, i] for i in range(len(draws))]
        iterations = list(pursuit.iterations)
    else:
        estimates, iterations = [], []
        for matrix, _, y in draws:
            pursuit = pursue(matrix, y, config)
            estimates.append(pursuit.estimates)
            iterations.append(int(pursuit.iterations[0]))
    return [
        evaluate_success(signal, x_hat, config.success_threshold, used, snr_db)
        for (_, signal, _), x_hat, used in zip(draws, estimates, iterations)
    ]


def _run_conditions(
    families: Sequence[MatrixFamily],
    conditions: list,
    trials: int,
    config: MpConfig,
    seed: int,
    workers: Optional[int],
    keep_trials: bool,
) -> ExperimentReport:
    if trials < 1:
        raise ValueError(f"Need at least one trial per condition, got {trials}")
    chunks = [range(i, min(i + TRIAL_CHUNK, trials)) for i in range(0, trials, TRIAL_CHUNK)]
    jobs = [
        (family, s, snr_db, chunk, seed, config)
        for family in families
        for s, snr_db in conditions
        for chunk in chunks
    ]
    results = run_jobs(_run_chunk, jobs, workers, desc="trials")

    descriptor = {"K": families[0].K, "N": families[0].N}
    for family in families:
        if family.fixed:
            descriptor.update(family.draw(None).descriptor())
    descriptor["families"] = ",".join(family.name for family in families)
    report = ExperimentReport(descriptor=descriptor, seed=seed, threshold=config.success_threshold)
    per_condition = len(chunks)
    for index in range(0, len(jobs), per_condition):
        family, s, snr_db = jobs[index][:3]
        outcomes = [r for chunk in results[index : index + per_condition] for r in chunk]
        report.conditions.append(
            ConditionResult(
                family=family.name,
                s=s,
                trials=len(outcomes),
                success_rate=sum(r.success for r in outcomes) / len(outcomes),
                success_rate_real=sum(r.success_real for r in outcomes) / len(outcomes),
                mean_iterations=float(np.mean([r.iterations_used for r in outcomes])),
                snr_db=snr_db,
            )
        )
        logger.debug("%s s=%s snr=%s: %s", family.name, s, snr_db, report.conditions[-1])
        if keep_trials:
            report.trial_log.extend(
                [
                    family.name,
                    s,
                    snr_db,
                    t,
                    r.squared_error,
                    r.squared_error_real,
                    r.iterations_used,
                    r.success,
                ]
                for t, r in enumerate(outcomes)
            )
    return report


def run_noiseless_experiment(
    families: Sequence[MatrixFamily],
    s_range: Sequence[int],
    trials: int = DEFAULT_TRIALS,
    config: Optional[MpConfig] = None,
    seed: int = 0,
    workers: Optional[int] = None,
    keep_trials: bool = False,
) -> ExperimentReport:
    """Success rate of noiseless recovery for every family and sparsity.

    Fixed families reuse their matrix for every trial; the others draw a new matrix per trial.

    :param families: Matrix families to compare
    :param s_range: Sparsity levels (0 gives the trivial zero signal)
    :param trials: Trials per (family, s)
    :param config: MP settings, success threshold 1e-4 by default
    :param seed: Run seed
    :param workers: Worker count for the trial chunks
    :param keep_trials: Keep the per-trial squared errors in the report
    :return: ExperimentReport with one condition per (family, s)
    """
    config = config or MpConfig()
    for s in s_range:
        for family in families:
            if s < 0 or s > family.N:
                raise SparsityRangeError(f"Sparsity {s} is outside [0, {family.N}]")
    start_time = time.time()
    logger.info("Noiseless recovery: %s trials for s in %s", trials, list(s_range))
    report = _run_conditions(
        families, [(s, None) for s in s_range], trials, config, seed, workers, keep_trials
    )
    logger.info("--- %s seconds ---", (time.time() - start_time))
    return report


def run_noisy_experiment(
    families: Sequence[MatrixFamily],
    s_set: Sequence[int] = DEFAULT_NOISY_SPARSITY,
    snr_grid_db: Sequence[float] = DEFAULT_SNR_GRID,
    trials: int = DEFAULT_TRIALS,
    config: Optional[MpConfig] = None,
    seed: int = 0,
    workers: Optional[int] = None,
    keep_trials: bool = False,
) -> ExperimentReport:
    """Success-rate surface over (s, SNR) with noise calibrated to each trial's own ||Ax||^2."""
    config = config or MpConfig.noisy()
    for s in s_set:
        for family in families:
            if s < 1 or s > family.N:
                raise SparsityRangeError(f"Noisy trials need 1 <= s <= {family.N}, got {s}")
    start_time = time.time()
    logger.info(
        "Noisy recovery: %s trials for s in %s, SNR in %s dB", trials, list(s_set), snr_grid_db
    )
    conditions = [(s, float(snr)) for s in s_set for snr in snr_grid_db]
    report = _run_conditions(families, conditions, trials, config, seed, workers, keep_trials)
    logger.info("--- %s seconds ---", (time.time() - start_time))
    return report
