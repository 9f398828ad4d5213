import math

import mock
import numpy as np
import pandas
import pytest

from util import output
from util.analysis import CoherenceReport
from util.analysis import FrameReport
from util.analysis import SpectralStats
from util.galois import build_field
from util.recovery import ConditionResult
from util.recovery import ExperimentReport
from util.sensing import build_construction_1a
from util.sensing import gaussian_matrix
from util.sensing import SensingMatrix


@pytest.fixture(scope="module")
def matrix9():
    return build_construction_1a(build_field(3, 2))


@pytest.fixture
def report9():
    return CoherenceReport(
        mu=1 / 3, argmax_pair=(0, 9), welch=0.3162277660168379, weil_prediction=1 / 3
    )


class TestOutputSession:
    def test_keeps_files_on_success(self, tmp_path):
        with output.OutputSession(tmp_path / "out") as session:
            session.path("a.csv").write_text("x")
        assert (tmp_path / "out" / "a.csv").exists()

    def test_removes_files_on_failure(self, tmp_path):
        with pytest.raises(OSError):
            with output.OutputSession(tmp_path) as session:
                session.path("a.csv").write_text("x")
                session.path("never_written.txt")
                raise OSError("disk full")
        assert not (tmp_path / "a.csv").exists()

    def test_keep_on(self, tmp_path):
        with pytest.raises(RuntimeError):
            with output.OutputSession(tmp_path, keep_on=(RuntimeError,)) as session:
                session.path("a.csv").write_text("x")
                raise RuntimeError("invariant")
        assert (tmp_path / "a.csv").exists()


class TestOutput:
    def test_write_coherence_csv(self, mocker, matrix9, report9):
        dataframe_mock = mocker.patch("pandas.DataFrame")
        output.write_coherence_csv(matrix9, report9, "outfile")
        dataframe_mock.assert_called_once_with(
            [[9, 81, 2, 1 / 3, 0.3162277660168379, report9.welch_ratio]],
            columns=output.COHERENCE_COLUMNS,
        )
        dataframe_mock.return_value.to_csv.assert_called_once_with(
            "outfile", index=False, float_format="%.17g"
        )

    def test_coherence_csv_contents(self, tmp_path, matrix9, report9):
        output.write_coherence_csv(matrix9, report9, tmp_path / "coherence.csv")
        frame = pandas.read_csv(tmp_path / "coherence.csv")
        assert list(frame.columns) == ["K", "N", "d", "mu", "welch", "ratio"]
        assert frame["mu"][0] == pytest.approx(1 / 3, abs=1e-15)

    def test_condstats_csv(self, tmp_path):
        stats = [SpectralStats("gaussian", 4, 10, 2.5, 0.5, 0.4, 1.6, 0.6)]
        output.write_condstats_csv(stats, tmp_path / "condstats.csv")
        frame = pandas.read_csv(tmp_path / "condstats.csv")
        assert list(frame.columns) == output.CONDSTATS_COLUMNS
        assert frame["delta_hat"][0] == pytest.approx(0.6)

    def test_recovery_csv(self, tmp_path):
        report = ExperimentReport(descriptor={}, seed=1, threshold=1e-4)
        report.conditions.append(ConditionResult("additive-character", 1, 10, 1.0, 1.0, 1.0, None))
        output.write_recovery_csv(report, tmp_path / "recovery.csv")
        assert (tmp_path / "recovery.csv").read_text().splitlines() == [
            "family,s,trials,success_rate",
            "additive-character,1,10,1",
        ]

    def test_matrix_round_trip(self, tmp_path, matrix9):
        output.write_matrix(matrix9, tmp_path / "matrix.txt")
        restored = output.read_matrix(tmp_path / "matrix.txt")
        assert np.array_equal(restored.to_dense(), matrix9.to_dense())
        assert restored.spec == matrix9.spec
        assert restored.kind == matrix9.kind

    def test_lazy_export_is_streamed(self, tmp_path, mocker, matrix9):
        expected = matrix9.to_dense().copy()
        lazy = build_construction_1a(matrix9.field, lazy=True)
        mocker.patch.object(SensingMatrix, "to_dense", side_effect=MemoryError)
        output.write_matrix(lazy, tmp_path / "matrix.txt")
        output.write_matrix_csv(lazy, tmp_path / "matrix.csv")
        restored = output.read_matrix(tmp_path / "matrix.txt")
        assert np.array_equal(restored.columns(np.arange(81)), expected)
        frame = pandas.read_csv(tmp_path / "matrix.csv")
        assert len(frame) == 9 * 81
        entries = frame["re"].to_numpy() + 1j * frame["im"].to_numpy()
        assert np.allclose(entries, expected.ravel(order="F"), atol=1e-15)

    def test_export_row_chunks(self, tmp_path, mocker, matrix9):
        output.write_matrix(matrix9, tmp_path / "whole.txt")
        mocker.patch.object(output, "EXPORT_BLOCK", 10)
        output.write_matrix(matrix9, tmp_path / "chunked.txt")
        assert (tmp_path / "chunked.txt").read_text() == (tmp_path / "whole.txt").read_text()

    def test_matrix_header(self, matrix9):
        assert output.matrix_header(matrix9) == "9 81 additive-character 3 2 2 2 1 2"
        gaussian = gaussian_matrix(4, 8, np.random.default_rng(0))
        assert output.matrix_header(gaussian) == "4 8 gaussian"

    def test_read_short_row(self, tmp_path):
        (tmp_path / "bad.txt").write_text("2 2 gaussian\n1.0:0.0 0.0:0.0\n1.0:0.0\n")
        with pytest.raises(ValueError):
            output.read_matrix(tmp_path / "bad.txt")

    def test_matrix_csv(self, tmp_path, matrix9):
        output.write_matrix_csv(matrix9, tmp_path / "matrix.csv")
        frame = pandas.read_csv(tmp_path / "matrix.csv")
        assert list(frame.columns) == ["row", "column", "re", "im"]
        assert len(frame) == 9 * 81
        assert list(frame["row"][:3]) == [0, 1, 2]
        assert frame["re"][0] == pytest.approx(1 / 3)

    def test_write_manifest(self):
        with mock.patch("builtins.open", mock.mock_open()) as file_mock:
            output.write_manifest({"p": 3, "lazy": "false"}, "manifest")
            file_mock.assert_called_once_with("manifest", "w")
            handle = file_mock()
            handle.write.assert_any_call("# additive_cs run manifest\n")
            handle.write.assert_any_call("p=3\n")
            handle.write.assert_any_call("lazy=false\n")

    def test_format_coherence_report(self, matrix9, report9):
        frame = FrameReport(deviation=1e-15, max_off_diagonal=2e-16, redundancy=9.0)
        expected = """
Matrix: 9x81 (additive-character)
mu=0.333333
argmax pair: (0, 9)
welch=0.316228 (ratio 1.054093)
(d-1)/sqrt(K)=0.333333

Frame test:
----------
max |A A^H - (N/K) I| = 1.000e-15
max off-diagonal = 2.000e-16

Guaranteed recovery for s < 2.0000
"""

        result = output.format_coherence_report(matrix9, report9, frame, sparsity=2.0)
        assert result == expected

    def test_format_condition_stats(self):
        stats = [SpectralStats("gaussian", 4, 10, 2.5, 0.5, 0.4, 1.6, 0.6)]
        expected = """
Condition numbers:
----------
gaussian, s=4: mean 2.5000, std 0.5000, delta_hat 0.6000
"""

        assert output.format_condition_stats(stats) == expected

    def test_format_recovery_report(self):
        report = ExperimentReport(descriptor={}, seed=1, threshold=1e-2)
        report.conditions.append(ConditionResult("partial-fourier", 2, 4, 0.75, 0.75, 3.0, 10.0))
        report.conditions.append(ConditionResult("partial-fourier", 2, 4, 1.0, 1.0, 2.0, math.inf))
        expected = """
Recovery rates (threshold 0.01):
----------
partial-fourier, s=2 snr=10: 0.7500 (3/4)
partial-fourier, s=2 snr=inf: 1.0000 (4/4)
"""

        assert output.format_recovery_report(report) == expected
