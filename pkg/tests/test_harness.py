"""Replication engine: aggregation math, exports, determinism, replay."""

import hashlib
import json
import os

import numpy as np
import pytest

from ksib.errors import ConfigError, DomainError
from ksib.harness import (RunRecord, Scenario, TrajectoryLog, aggregate,
                          calibrated_band_ratio, export, inference_snapshot,
                          run_replication, run_scenario, run_trajectory)
from ksib.numerics import Rng

TINY = dict(T=140, T0=20, reps=4, inference_times=(60, 100, 139),
            d=2, sigma=0.05, seed=3)


@pytest.fixture(scope="module")
def tiny_records():
    sc = Scenario(**TINY)
    return sc, [run_replication(sc, r) for r in range(sc.reps)]


class TestScenario:
    def test_validation_messages(self):
        with pytest.raises(ConfigError):
            Scenario(sigma=-1.0).validate()
        with pytest.raises(ConfigError):
            Scenario(inference_times=(10, 999)).validate()
        with pytest.raises(ConfigError):
            Scenario(inference_times=(999, 200)).validate()
        with pytest.raises(ConfigError):
            Scenario(score="bogus").validate()

    def test_scenario_betas_shared_across_reps(self):
        sc = Scenario(**TINY)
        np.testing.assert_array_equal(sc.scenario_betas(), sc.scenario_betas())
        other = Scenario(**{**TINY, "sigma": 0.10})
        assert not np.array_equal(sc.scenario_betas(), other.scenario_betas())

    def test_betas_canonical(self):
        betas = Scenario(**TINY).scenario_betas()
        for b in betas:
            assert b[0] > 0
            assert np.linalg.norm(b) == pytest.approx(1.0)


class TestTrajectoryLog:
    def test_round_trip_rows(self):
        sc = Scenario(**TINY)
        log, _, _, _ = run_trajectory(sc, 0)
        rows = [[str(v) for v in row] for row in log.to_rows()]
        back = TrajectoryLog.from_rows(TrajectoryLog.header(sc.d), rows)
        np.testing.assert_array_equal(back.contexts, log.contexts)
        np.testing.assert_array_equal(back.propensity, log.propensity)
        np.testing.assert_array_equal(back.arm, log.arm)

    def test_schema_mismatch_names_columns(self):
        with pytest.raises(DomainError) as err:
            TrajectoryLog.from_rows(["t", "x0", "oops"], [["1", "0", "0"]])
        assert "pulled_arm" in str(err.value)

    def test_arm_propensities_reconstruction(self):
        sc = Scenario(**TINY)
        log, _, _, _ = run_trajectory(sc, 1)
        for arm in (0, 1):
            props = log.arm_propensities(arm, sc.T, sc.T0, 2)
            pulled = log.arm == arm
            np.testing.assert_allclose(props[pulled], log.propensity[pulled])
            np.testing.assert_allclose(props[:sc.T0], 0.5)


class TestRunReplication:
    def test_deterministic_records(self, tiny_records):
        sc, records = tiny_records
        again = run_replication(sc, 2)
        assert again.to_json() == records[2].to_json()

    def test_noiseless_linear_link_always_covered(self):
        """sigma=0, linear links, no ridge: ellipsoid contains the truth."""
        sc = Scenario(**{**TINY, "sigma": 0.0, "lambda_beta": 0.0})
        betas = sc.scenario_betas()
        from ksib.environment import SyntheticEnv
        from ksib import harness as hz

        orig = hz.SyntheticEnv

        class LinearEnv(orig):
            def __init__(self, b, sigma, rng, links=None, link_params=None):
                links = (lambda z: 0.5 + 0.1 * z, lambda z: 0.5 - 0.1 * z)
                super().__init__(b, sigma, rng, links=links)

        hz.SyntheticEnv = LinearEnv
        try:
            rec = run_replication(sc, 0)
        finally:
            hz.SyntheticEnv = orig
        assert rec.ok, rec.error
        assert all(row["covered"] for row in rec.param_rows)

    def test_snapshot_rejects_bad_times(self, tiny_records):
        sc, _ = tiny_records
        log, _, _, _ = run_trajectory(sc, 0)
        with pytest.raises(DomainError):
            inference_snapshot(log, sc.T0, 0, sc)
        with pytest.raises(DomainError):
            inference_snapshot(log, sc.T + 1, 0, sc)


class TestAggregate:
    def test_rates_and_se(self, tiny_records):
        sc, records = tiny_records
        table = aggregate(records, sc)
        row = next(r for r in table.coverage_rows
                   if r["kind"] == "param_joint" and r["t"] == 100)
        flags = [jr["covered"] for rec in records for jr in rec.joint_rows
                 if jr["t"] == 100]
        assert row["rate"] == pytest.approx(np.mean(flags))
        assert row["se"] == pytest.approx(
            np.sqrt(row["rate"] * (1 - row["rate"]) / len(flags)))

    def test_alternating_flags_rate_half(self):
        sc = Scenario(**TINY)
        records = []
        for rep in range(100):
            rec = RunRecord(rep)
            for t in sc.inference_times:
                rec.joint_rows.append({"t": t, "covered": rep % 2})
                rec.regret_rows.append({"t": t, "avg_regret": 0.0})
            records.append(rec)
        table = aggregate(records, sc)
        row = next(r for r in table.coverage_rows if r["kind"] == "param_joint")
        assert row["rate"] == pytest.approx(0.5)
        assert row["se"] == pytest.approx(0.05)

    def test_known_probability_coverage_rate(self):
        """Bernoulli(0.9) covered flags: harness rate lands within 3 SE."""
        sc = Scenario(**TINY)
        rng = Rng(123)
        n = 10_000
        records = []
        for rep in range(n):
            rec = RunRecord(rep)
            rec.joint_rows.append({"t": 60, "covered": int(rng.uniform() < 0.9)})
            rec.regret_rows.append({"t": 60, "avg_regret": 0.0})
            records.append(rec)
        table = aggregate(records, sc)
        row = next(r for r in table.coverage_rows
                   if r["kind"] == "param_joint" and r["t"] == 60)
        assert abs(row["rate"] - 0.9) <= 3 * np.sqrt(0.9 * 0.1 / n)

    def test_failed_reps_excluded_but_counted(self, tiny_records):
        sc, records = tiny_records
        broken = records + [RunRecord(99, ok=False, error="boom")]
        table = aggregate(broken, sc)
        assert table.diagnostics["failed"] == 1
        assert table.diagnostics["errors"] == ["boom"]
        row = next(r for r in table.coverage_rows if r["kind"] == "param_joint")
        assert row["n"] == sc.reps

    def test_all_failed_raises(self):
        sc = Scenario(**TINY)
        with pytest.raises(DomainError):
            aggregate([RunRecord(0, ok=False, error="x")], sc)


def dir_digest(path):
    digest = hashlib.sha256()
    for name in sorted(os.listdir(path)):
        digest.update(name.encode())
        with open(os.path.join(path, name), "rb") as fh:
            digest.update(fh.read())
    return digest.hexdigest()


class TestExport:
    def test_byte_stable_and_parsable(self, tiny_records, tmp_path):
        sc, records = tiny_records
        table = aggregate(records, sc)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        export(table, str(out_a))
        export(table, str(out_b))
        assert dir_digest(out_a) == dir_digest(out_b)
        with open(out_a / "summary.json", encoding="utf-8") as fh:
            summary = json.load(fh)
        assert summary["schema_version"] == 1
        assert summary["config"]["sigma"] == sc.sigma
        assert summary["config"]["T"] == sc.T
        header = open(out_a / "coverage.csv", encoding="utf-8").readline()
        assert header.strip() == "scenario,d,sigma,arm,t,kind,rate,se,n"
        header = open(out_a / "lengths.csv", encoding="utf-8").readline()
        assert header.strip() == "scenario,arm,t,method,mean_length,se,n"
        header = open(out_a / "regret.csv", encoding="utf-8").readline()
        assert header.strip() == "scenario,t,mean_avg_regret,lo,hi,n"

    def test_empty_table_no_partial_files(self, tiny_records, tmp_path):
        sc, records = tiny_records
        table = aggregate(records, sc)
        table.coverage_rows = []
        out = tmp_path / "empty"
        with pytest.raises(DomainError):
            export(table, str(out))
        assert not out.exists()


class TestParallel:
    def test_parallel_equals_serial(self, tmp_path):
        sc = Scenario(**{**TINY, "reps": 3})
        serial = run_scenario(sc, threads=1)
        parallel = run_scenario(sc, threads=2)
        for a, b in zip(serial, parallel):
            assert a.to_json() == b.to_json()
        out_a, out_b = tmp_path / "s", tmp_path / "p"
        export(aggregate(serial, sc), str(out_a))
        export(aggregate(parallel, sc), str(out_b))
        assert dir_digest(out_a) == dir_digest(out_b)


class TestRegretTrend:
    def test_average_regret_nonincreasing_trend(self, tiny_records):
        sc, records = tiny_records
        ok = 0
        for rec in records:
            vals = [row["avg_regret"] for row in rec.regret_rows]
            ts = np.array(sc.inference_times, dtype=float)
            slope = np.polyfit(ts, vals, 1)[0]
            ok += slope <= 0
        assert ok >= len(records) - 1


class TestCalibratedRatio:
    def test_calibration_on_synthetic_rows(self):
        rows = []
        rng = np.random.default_rng(0)
        for rep in range(50):
            for t, base in ((200, 2.0), (999, 1.0)):
                err = abs(rng.normal()) * 0.05
                rows.append({"rep": rep, "arm": 0, "t": t, "method": "AS",
                             "u": 0.0, "center": err, "lo": 0.0, "hi": 0.0,
                             "truth": 0.0, "covered": 1, "length": 2 * base})
                rows.append({"rep": rep, "arm": 0, "t": t, "method": "KSIEGE",
                             "u": 0.0, "center": 0.0, "lo": -0.05, "hi": 0.05,
                             "truth": 0.0, "covered": 1, "length": 0.1})
        c_star, info = calibrated_band_ratio(rows, 200, 999)
        # the calibrated band covers everything at the calibration time
        assert info["coverage"][200] == 1.0
        assert info["ratio"] == pytest.approx(2 * c_star * 1.0 / 0.1)
