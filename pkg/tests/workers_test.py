import pytest

from util import workers


def square(job):
    return job * job


class TestWorkers:
    def test_default_workers_from_environment(self, monkeypatch):
        monkeypatch.setenv(workers.WORKERS_ENV, "3")
        assert workers.default_workers() == 3

    def test_default_workers_falls_back_to_cpus(self, monkeypatch, mocker):
        monkeypatch.delenv(workers.WORKERS_ENV, raising=False)
        mocker.patch("os.cpu_count", return_value=6)
        assert workers.default_workers() == 6

    def test_bad_worker_count(self, monkeypatch):
        monkeypatch.setenv(workers.WORKERS_ENV, "0")
        with pytest.raises(ValueError):
            workers.default_workers()

    def test_sequential(self, mocker):
        asyncio_mock = mocker.patch("asyncio.run")
        assert workers.run_jobs(square, range(5), workers=1) == [0, 1, 4, 9, 16]
        asyncio_mock.assert_not_called()

    def test_pool_keeps_job_order(self):
        assert workers.run_jobs(square, range(40), workers=4) == [j * j for j in range(40)]

    def test_empty(self):
        assert workers.run_jobs(square, [], workers=4) == []

    @pytest.mark.asyncio
    async def test_run_jobs_async(self):
        assert await workers.run_jobs_async(square, [3, 1, 2], 2) == [9, 1, 4]

    def test_job_errors_propagate(self):
        def fail(job):
            raise RuntimeError(f"job {job}")

        with pytest.raises(RuntimeError):
            workers.run_jobs(fail, [1, 2], workers=2)
