"""Control backend tests: clocks, drift, buffering, execution, jobs."""

from __future__ import annotations

import math
import time

import pytest

from qbatch.batching import Mode, StepCount, plan
from qbatch.control import (
    DriftModel,
    Hardware,
    HardwareConfig,
    JobService,
    SimulatedClock,
    WallClock,
    execute,
)
from qbatch.control import _ExecutionBuffer
from qbatch.errors import BufferOverflow, UnknownJobId, ValidationError

ROWS = {"angle": [0.5, 0.9, 1.3]}


@pytest.fixture
def combined_plan(two_sub_program, library):
    return plan(two_sub_program, "combined", overrides=ROWS, library=library)


@pytest.fixture
def unbatched_plan(two_sub_program, library):
    return plan(two_sub_program, "unbatched", overrides=ROWS, library=library)


class TestHardwareConfig:
    def test_defaults(self):
        cfg = HardwareConfig()
        assert cfg.buffer_capacity_words == 4096
        assert cfg.comm_latency_s == 2.0
        assert cfg.compile_time_s == 0.0
        assert cfg.upload_rate_words_per_s == math.inf
        assert cfg.clock == "simulated"

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"buffer_capacity_words": 0},
            {"comm_latency_s": -1.0},
            {"compile_time_s": -0.5},
            {"upload_rate_words_per_s": 0.0},
            {"upload_rate_words_per_s": -3.0},
            {"clock": "sundial"},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValidationError):
            HardwareConfig(**kwargs)

    def test_make_clock(self):
        assert isinstance(HardwareConfig().make_clock(), SimulatedClock)
        assert isinstance(HardwareConfig(clock="wall").make_clock(), WallClock)


class TestClocks:
    def test_simulated_clock_advances_exactly(self):
        clock = SimulatedClock()
        assert clock.now() == 0.0
        clock.advance(2.5)
        clock.advance(0.5)
        assert clock.now() == 3.0

    def test_wall_clock_ignores_advance(self):
        clock = WallClock()
        t0 = clock.now()
        clock.advance(1000.0)
        assert clock.now() - t0 < 5.0  # real time, not the fake advance


class TestDriftModel:
    def test_defaults_hit_reference_point(self):
        d = DriftModel()
        assert d.rate_hz_per_s == pytest.approx(15000.0 / 900.0)
        assert d.error_probability(3000.0) == pytest.approx(0.02)
        assert d.error_probability(0.0) == 0.0
        # quadratic: double the detuning, four times the error
        assert d.error_probability(6000.0) == pytest.approx(0.08)

    def test_probability_clipped(self):
        d = DriftModel()
        assert d.error_probability(1e9) == 1.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"rate_hz_per_s": -1.0},
            {"walk_sigma_hz_per_sqrt_s": -0.1},
            {"reference_error": 0.0},
            {"reference_error": 1.5},
            {"reference_detuning_hz": 0.0},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValidationError):
            DriftModel(**kwargs)


class TestExecutionBuffer:
    def test_overflow(self):
        buf = _ExecutionBuffer(10)
        with pytest.raises(BufferOverflow):
            buf.admit(11)

    def test_staging_overlaps_when_room(self):
        buf = _ExecutionBuffer(10)
        buf.admit(4)
        buf.admit(5)  # staged while the 4-word unit still runs
        assert buf.high_water == 9

    def test_no_staging_when_tight(self):
        buf = _ExecutionBuffer(10)
        buf.admit(7)
        buf.admit(6)  # must wait: 7 + 6 exceeds capacity
        assert buf.high_water == 7
        buf.admit(3)  # 6 still resident, 3 fits alongside
        assert buf.high_water == 9


class TestHardwareState:
    def test_no_drift_means_zero_detuning(self):
        hw = Hardware(HardwareConfig())
        assert hw.detuning_hz() == 0.0

    def test_linear_drift_follows_clock(self, combined_plan):
        hw = Hardware(HardwareConfig(), DriftModel(rate_hz_per_s=10.0))
        hw.execute(combined_plan, shots=0)
        # one communication step at the default 2 s latency
        assert hw.now() == pytest.approx(2.0)
        assert hw.detuning_hz() == pytest.approx(20.0)

    def test_recalibrate_zeroes_and_takes_time(self, combined_plan):
        hw = Hardware(HardwareConfig(), DriftModel(rate_hz_per_s=10.0))
        hw.execute(combined_plan, shots=0)
        assert hw.detuning_hz() > 0.0
        before = hw.now()
        hw.recalibrate(duration_s=10.0)
        assert hw.now() == pytest.approx(before + 10.0)
        assert hw.detuning_hz() == 0.0
        with pytest.raises(ValidationError):
            hw.recalibrate(duration_s=-1.0)

    def test_walk_is_seed_deterministic(self, combined_plan):
        def detuning_after(seed):
            hw = Hardware(
                HardwareConfig(),
                DriftModel(rate_hz_per_s=0.0, walk_sigma_hz_per_sqrt_s=50.0),
                seed=seed,
            )
            hw.execute(combined_plan, shots=0)
            return hw.detuning_hz()

        assert detuning_after(1) == detuning_after(1)
        assert detuning_after(1) != detuning_after(2)


class TestExecution:
    def test_cost_identity(self, unbatched_plan):
        cfg = HardwareConfig(
            comm_latency_s=2.0, compile_time_s=0.5, upload_rate_words_per_s=100.0
        )
        report = Hardware(cfg).execute(unbatched_plan, shots=50)
        terms = report.cost_terms()
        assert all(v > 0.0 for v in terms.values())
        assert abs(report.elapsed_s - sum(terms.values())) < 1e-9

    def test_realized_matches_plan(self, unbatched_plan, combined_plan):
        for p in (unbatched_plan, combined_plan):
            report = Hardware().execute(p, shots=10)
            assert report.realized == p.step_count
            assert report.realized.steps == p.step_count.steps

    def test_unbatched_streams_with_bounded_residency(self, unbatched_plan):
        report = Hardware().execute(unbatched_plan, shots=0, stream_capacity=2)
        assert report.stream_capacity == 2
        assert 1 <= report.stream_high_water <= 2
        assert report.stream_compilations == len(unbatched_plan.runs)

    def test_batched_does_not_stream(self, combined_plan):
        report = Hardware().execute(combined_plan, shots=0)
        assert report.stream_capacity == 0
        assert report.stream_high_water == 0
        assert report.stream_compilations == 0

    def test_buffer_high_water_bounded(self, combined_plan):
        report = Hardware().execute(combined_plan, shots=0)
        assert 0 < report.buffer_high_water_words <= report.buffer_capacity_words

    def test_tiny_buffer_overflows(self, combined_plan):
        hw = Hardware(HardwareConfig(buffer_capacity_words=2))
        with pytest.raises(BufferOverflow):
            hw.execute(combined_plan, shots=0)

    def test_shots_zero_plays_nothing(self, combined_plan):
        report = Hardware().execute(combined_plan, shots=0)
        assert report.pulse_seconds == 0.0
        assert all(r.counts == {} for r in report.runs)
        assert all(r.duration_us > 0.0 for r in report.runs[:1])

    def test_counts_are_seeded(self, combined_plan):
        a = Hardware().execute(combined_plan, shots=200, seed=5)
        b = Hardware().execute(combined_plan, shots=200, seed=5)
        c = Hardware().execute(combined_plan, shots=200, seed=6)
        assert [r.counts for r in a.runs] == [r.counts for r in b.runs]
        assert [r.counts for r in a.runs] != [r.counts for r in c.runs]
        assert all(sum(r.counts.values()) == 200 for r in a.runs)

    def test_run_metadata(self, combined_plan):
        report = Hardware().execute(combined_plan, shots=10, seed=1)
        assert [r.run_index for r in report.runs] == list(range(6))
        assert [(r.row_index, r.subcircuit_index) for r in report.runs] == [
            (0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)
        ]
        doc = report.as_dict()
        assert doc["mode"] == "combined"
        assert doc["step_count"] == {"steps": 1, "compilations": 2, "upload_words": 107}
        assert doc["costs"]["elapsed_s"] == report.elapsed_s

    def test_argument_validation(self, combined_plan):
        hw = Hardware()
        with pytest.raises(ValidationError):
            hw.execute("not a plan", shots=1)
        with pytest.raises(ValidationError):
            hw.execute(combined_plan, shots=-1)


class TestCrossModeCounts:
    """Batching is an accounting change; outcome statistics must not move."""

    def test_identical_counts_without_drift(self, unbatched_plan, combined_plan):
        a = Hardware().execute(unbatched_plan, shots=300, seed=11)
        b = Hardware().execute(combined_plan, shots=300, seed=11)
        assert [r.counts for r in a.runs] == [r.counts for r in b.runs]

    def test_identical_counts_with_drift_and_free_link(
        self, unbatched_plan, combined_plan
    ):
        # With every link cost zero, only pulse playback advances the
        # clock, identically in both modes, so even drift noise agrees.
        cfg = HardwareConfig(comm_latency_s=0.0, compile_time_s=0.0)
        drift = DriftModel(rate_hz_per_s=500.0)
        a = Hardware(cfg, drift, seed=3).execute(unbatched_plan, shots=300, seed=11)
        b = Hardware(cfg, drift, seed=3).execute(combined_plan, shots=300, seed=11)
        assert [r.counts for r in a.runs] == [r.counts for r in b.runs]
        assert [r.detuning_hz for r in a.runs] == [r.detuning_hz for r in b.runs]


class TestNoiseInjection:
    def test_drift_perturbs_entangling_runs(self, combined_plan):
        clean = Hardware().execute(combined_plan, shots=500, seed=4)
        noisy_hw = Hardware(HardwareConfig(), DriftModel(rate_hz_per_s=3000.0))
        noisy = noisy_hw.execute(combined_plan, shots=500, seed=4)
        ms_runs = [r.run_index for r in noisy.runs if r.n_ms_gates > 0]
        assert ms_runs  # the fixture program has entangling gates
        assert any(
            noisy.runs[i].counts != clean.runs[i].counts for i in ms_runs
        )
        for i in ms_runs:
            assert noisy.runs[i].ms_error_prob > 0.0
            assert sum(noisy.runs[i].counts.values()) == 500
        assert noisy.mean_ms_error() > clean.mean_ms_error() == 0.0

    def test_saturated_error_probability(self, combined_plan):
        hw = Hardware(HardwareConfig(), DriftModel(rate_hz_per_s=1e9))
        report = hw.execute(combined_plan, shots=100, seed=4)
        for r in report.runs:
            if r.n_ms_gates:
                assert r.ms_error_prob == 1.0
            assert sum(r.counts.values()) == 100

    def test_runs_without_entangling_gates_report_zero_error(self, combined_plan):
        hw = Hardware(HardwareConfig(), DriftModel(rate_hz_per_s=3000.0))
        report = hw.execute(combined_plan, shots=100, seed=4)
        for r in report.runs:
            if r.n_ms_gates == 0:
                assert r.ms_error_prob == 0.0


class TestExecuteFunction:
    def test_matches_fresh_hardware(self, combined_plan):
        via_fn = execute(combined_plan, shots=100, seed=9)
        via_hw = Hardware(seed=9).execute(combined_plan, shots=100)
        assert [r.counts for r in via_fn.runs] == [r.counts for r in via_hw.runs]
        assert via_fn.elapsed_s == via_hw.elapsed_s


class TestJobService:
    def test_lifecycle(self, combined_plan):
        with JobService() as svc:
            first = svc.submit(combined_plan, shots=50, seed=1)
            second = svc.submit(combined_plan, shots=50, seed=1)
            assert first == "job-0001"
            assert second == "job-0002"
            state = svc.wait(first)
            assert state["status"] == "done"
            assert state["report"]["shots"] == 50
            assert svc.wait(second)["status"] == "done"
            svc.release(first)
            with pytest.raises(UnknownJobId):
                svc.poll(first)

    def test_rejects_bad_submissions(self, combined_plan):
        with JobService() as svc:
            with pytest.raises(ValidationError, match="TypeError"):
                svc.submit("nope", shots=1)
            with pytest.raises(ValidationError, match="job rejected"):
                svc.submit(combined_plan, shots=-1)
            with pytest.raises(ValidationError):
                svc.submit(combined_plan, shots=True)

    def test_execution_failure_reported(self, combined_plan):
        hw = Hardware(HardwareConfig(buffer_capacity_words=2))
        with JobService(hw) as svc:
            job = svc.submit(combined_plan, shots=0)
            state = svc.wait(job)
            assert state["status"] == "error"
            assert "BufferOverflow" in state["error"]

    def test_unknown_ids(self):
        with JobService() as svc:
            with pytest.raises(UnknownJobId):
                svc.poll("job-9999")
            with pytest.raises(UnknownJobId):
                svc.release("job-9999")

    def test_closed_service_rejects(self, combined_plan):
        svc = JobService()
        svc.close()
        with pytest.raises(ValidationError, match="closed"):
            svc.submit(combined_plan, shots=1)

    def test_jobs_share_one_clock(self, combined_plan):
        with JobService() as svc:
            a = svc.wait(svc.submit(combined_plan, shots=0))
            b = svc.wait(svc.submit(combined_plan, shots=0))
            # the second job starts where the first finished
            assert (
                b["report"]["clock"]["started_s"]
                == a["report"]["clock"]["finished_s"]
            )

    def test_wait_timeout(self, combined_plan):
        with JobService() as svc:
            job = svc.submit(combined_plan, shots=0)
            time.sleep(0.01)
            # already done: wait returns immediately even with a tiny timeout
            assert svc.wait(job, timeout_s=5.0)["status"] == "done"
