import logging
import math
from pathlib import Path
from typing import Optional
from typing import Sequence

import numpy as np
import pandas

from util.analysis import CoherenceReport
from util.analysis import FrameReport
from util.analysis import SpectralStats
from util.recovery import ExperimentReport
from util.sensing import ConstructionSpec
from util.sensing import SensingMatrix

logger = logging.getLogger("additive_cs.util.output")

COHERENCE_COLUMNS = ["K", "N", "d", "mu", "welch", "ratio"]
CONDSTATS_COLUMNS = ["family", "s", "trials", "cond_mean", "cond_std", "delta_hat"]
EXPORT_BLOCK = 2**16


class OutputSession:
    """Track the files a command writes so a failed command leaves none of them behind.

    Exceptions listed in `keep_on` leave the files in place (the report is still useful).
    """

    def __init__(self, out_dir, keep_on: tuple = ()):
        self.out_dir = Path(out_dir)
        self.keep_on = keep_on
        self.written = []

    def __enter__(self) -> "OutputSession":
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc_type is not None and not (self.keep_on and issubclass(exc_type, self.keep_on)):
            self.cleanup()
        return False

    def path(self, name: str) -> Path:
        path = self.out_dir / name
        self.written.append(path)
        return path

    def cleanup(self) -> None:
        for path in self.written:
            try:
                path.unlink(missing_ok=True)
                logger.debug("Removed partial output %s", path)
            except OSError as e:
                logger.warning("Unable to remove partial output %s: %s", path, e)
        self.written = []


def coherence_frame(matrix: SensingMatrix, report: CoherenceReport) -> pandas.DataFrame:
    d = matrix.spec.d if matrix.spec is not None else None
    ratio = report.welch_ratio if report.welch else None
    row = [matrix.K, matrix.N, d, report.mu, report.welch, ratio]
    return pandas.DataFrame([row], columns=COHERENCE_COLUMNS)


def condstats_frame(stats: Sequence[SpectralStats]) -> pandas.DataFrame:
    rows = [[getattr(s, name) for name in CONDSTATS_COLUMNS] for s in stats]
    return pandas.DataFrame(rows, columns=CONDSTATS_COLUMNS)


def write_frame(frame: pandas.DataFrame, outfile_name) -> None:
    """Write a result table as CSV with full float precision and no index column."""
    frame.to_csv(outfile_name, index=False, float_format="%.17g")
    logger.debug("Wrote %s rows to %s", len(frame), outfile_name)


def write_coherence_csv(matrix: SensingMatrix, report: CoherenceReport, outfile_name) -> None:
    write_frame(coherence_frame(matrix, report), outfile_name)


def write_condstats_csv(stats: Sequence[SpectralStats], outfile_name) -> None:
    write_frame(condstats_frame(stats), outfile_name)


def write_recovery_csv(report: ExperimentReport, outfile_name, include_real: bool = False):
    write_frame(report.to_frame(include_real), outfile_name)


def write_trial_log(report: ExperimentReport, outfile_name) -> None:
    write_frame(report.trial_frame(), outfile_name)


def matrix_header(matrix: SensingMatrix) -> str:
    fields = [matrix.K, matrix.N, matrix.kind]
    if matrix.spec is not None:
        spec = matrix.spec
        fields += [spec.p, spec.m, spec.h, spec.d] + list(spec.exponents)
    return " ".join(str(f) for f in fields)


def write_matrix(matrix: SensingMatrix, outfile_name) -> None:
    """Text export: a `K N kind p m h d r1..rh` header, then one row per line of `re:im` pairs.

    :param matrix: Matrix to export (lazy matrices are generated one row chunk at a time)
    :param outfile_name: File to write
    """
    with open(outfile_name, "w") as matrix_file:
        matrix_file.write(matrix_header(matrix) + "\n")
        for k in range(matrix.K):
            for start in range(0, matrix.N, EXPORT_BLOCK):
                columns = np.arange(start, min(start + EXPORT_BLOCK, matrix.N))
                chunk = matrix.submatrix([k], columns)[0]
                if start:
                    matrix_file.write(" ")
                matrix_file.write(" ".join(f"{v.real!r}:{v.imag!r}" for v in chunk.tolist()))
            matrix_file.write("\n")


def read_matrix(matrix_file_name) -> SensingMatrix:
    """Read a write_matrix() export back into a dense SensingMatrix.

    :param matrix_file_name: File to read
    :return: The matrix, with its construction restored when the header carries one
    """
    with open(matrix_file_name) as matrix_file:
        header = matrix_file.readline().split()
        if len(header) < 3:
            raise ValueError(f"Malformed matrix header {header}")
        K, N, kind = int(header[0]), int(header[1]), header[2]
        spec = None
        if len(header) > 3:
            p, m, h, d = (int(v) for v in header[3:7])
            spec = ConstructionSpec(p=p, m=m, h=h, d=d, exponents=[int(v) for v in header[7:]])
        entries = np.empty((K, N), dtype=np.complex128)
        for i in range(K):
            pairs = matrix_file.readline().split()
            if len(pairs) != N:
                raise ValueError(f"Row {i} has {len(pairs)} entries, expected {N}")
            for j, pair in enumerate(pairs):
                re, im = pair.split(":")
                entries[i, j] = complex(float(re), float(im))
    return SensingMatrix(K, N, kind, entries=entries, spec=spec)


def write_matrix_csv(matrix: SensingMatrix, outfile_name) -> None:
    """CSV export in long form: one (row, column, re, im) record per entry, column by column."""
    with open(outfile_name, "w", newline="") as csv_file:
        for start, block in matrix.iter_blocks():
            rows, cols = np.indices(block.shape)
            dataset = pandas.DataFrame(
                {
                    "row": rows.ravel(order="F"),
                    "column": (cols + start).ravel(order="F"),
                    "re": block.real.ravel(order="F"),
                    "im": block.imag.ravel(order="F"),
                }
            )
            dataset.to_csv(csv_file, header=start == 0, index=False, float_format="%.17g")
    logger.debug("Wrote %s entries to %s", matrix.K * matrix.N, outfile_name)


def write_manifest(pairs: dict, outfile_name) -> None:
    """Write `key=value` lines that can be fed back through `--config`."""
    with open(outfile_name, "w") as manifest_file:
        manifest_file.write("# additive_cs run manifest\n")
        for key, value in pairs.items():
            manifest_file.write(f"{key}={value}\n")


def format_coherence_report(
    matrix: SensingMatrix,
    report: CoherenceReport,
    frame: FrameReport,
    sparsity: Optional[float] = None,
) -> str:
    """Format the coherence scan and frame test for the console.

    :param matrix: The matrix that was scanned
    :param report: Coherence scan result
    :param frame: Tight-frame test result
    :param sparsity: The construction's sparsity bound, if it has one
    :return: A str containing the formatted output
    """
    result_str = "\n"
    result_str += f"Matrix: {matrix.K}x{matrix.N} ({matrix.kind})\n"
    result_str += "mu={:.6f}\n".format(report.mu)
    result_str += "argmax pair: {}\n".format(report.argmax_pair)
    result_str += "welch={:.6f} (ratio {:.6f})\n".format(report.welch, report.welch_ratio)
    if report.weil_prediction is not None:
        result_str += "(d-1)/sqrt(K)={:.6f}\n".format(report.weil_prediction)
    result_str += "\nFrame test:\n----------\n"
    result_str += "max |A A^H - (N/K) I| = {:.3e}\n".format(frame.deviation)
    result_str += "max off-diagonal = {:.3e}\n".format(frame.max_off_diagonal)
    if sparsity is not None:
        result_str += f"\nGuaranteed recovery for s < {sparsity:.4f}\n"
    return result_str


def format_condition_stats(stats: Sequence[SpectralStats]) -> str:
    result_str = "\nCondition numbers:\n----------\n"
    for s in stats:
        result_str += "{}, s={}: mean {:.4f}, std {:.4f}, delta_hat {:.4f}\n".format(
            s.family, s.s, s.cond_mean, s.cond_std, s.delta_hat
        )
    return result_str


def format_recovery_report(report: ExperimentReport) -> str:
    result_str = "\nRecovery rates (threshold {:g}):\n----------\n".format(report.threshold)
    for c in report.conditions:
        snr = ""
        if c.snr_db is not None:
            snr = " snr=inf" if math.isinf(c.snr_db) else f" snr={c.snr_db:g}"
        result_str += "{}, s={}{}: {:.4f} ({}/{})\n".format(
            c.family, c.s, snr, c.success_rate, round(c.success_rate * c.trials), c.trials
        )
    return result_str
