import math
import unittest
from typing import Optional

import numpy as np

from sea_smc.analysis import (
    boundary_layer,
    chattering_index,
    compute_metrics,
    is_monotone,
    mismatch,
    observer_error_report,
    overshoot,
    rmse,
    verify_lyapunov,
    verify_reaching,
)
from sea_smc.sim import CSV_COLUMNS, Trace


def make_trace(dt: float, n: int, extras: Optional[dict] = None, meta: Optional[dict] = None, **values) -> Trace:
    columns = {name: np.zeros(n) for name in CSV_COLUMNS}
    columns["t"] = np.arange(n) * dt
    for name, v in values.items():
        columns[name] = np.asarray(v, dtype=float)
    return Trace(dt=dt, columns=columns, extras={k: np.asarray(v, dtype=float) for k, v in (extras or {}).items()}, meta=dict(meta or {}))


class TestTrackingMetrics(unittest.TestCase):
    def test_rmse(self):
        trace = make_trace(0.5, 4, ref=[0.0, 0.0, 2.0, 2.0])
        self.assertAlmostEqual(math.sqrt(2.0), rmse(trace))
        self.assertAlmostEqual(2.0, rmse(trace, window=(1.0, None)))
        self.assertAlmostEqual(0.0, rmse(trace, window=(None, 0.5)))
        with self.assertRaises(ValueError):
            rmse(trace, window=(5.0, None))

    def test_chattering_index(self):
        self.assertAlmostEqual(2.0, chattering_index([0.0, 1.0, 0.0, 1.0], 0.5))
        self.assertEqual(0.0, chattering_index([3.0, 3.0], 1e-3))
        with self.assertRaises(ValueError):
            chattering_index([1.0], 1e-3)

    def test_overshoot(self):
        trace = make_trace(0.1, 3, ref=[1.0, 1.0, 1.0], tau_env=[0.0, 1.2, 1.0])
        self.assertAlmostEqual(0.2, overshoot(trace))
        self.assertAlmostEqual(-0.8, overshoot(trace, target=2.0))

    def test_is_monotone(self):
        test_cases = [
            {"name": "strictly increasing", "values": [1, 2, 3], "kwargs": {"strict": True}, "expected": True},
            {"name": "tie is not strict", "values": [1, 1, 2], "kwargs": {"strict": True}, "expected": False},
            {"name": "tie is nondecreasing", "values": [1, 1, 2], "kwargs": {}, "expected": True},
            {"name": "decreasing", "values": [3, 2, 1], "kwargs": {"increasing": False}, "expected": True},
            {"name": "not monotone", "values": [1, 3, 2], "kwargs": {}, "expected": False},
            {"name": "single value", "values": [1], "kwargs": {"strict": True}, "expected": True},
        ]

        for case in test_cases:
            with self.subTest(case=case["name"]):
                self.assertEqual(case["expected"], is_monotone(case["values"], **case["kwargs"]))


class TestSlidingMetrics(unittest.TestCase):
    def test_boundary_layer(self):
        self.assertAlmostEqual(0.6, boundary_layer([0.0, 0.1, 0.3]))
        self.assertAlmostEqual(0.4, boundary_layer([0.0, 0.1, 0.3], steps=2))
        self.assertEqual(0.0, boundary_layer([1.0]))

    def test_mismatch(self):
        n = 3
        force = {"mode": "force", "controller": {"use_link_accel": False, "link_velocity_feedforward": False}}
        test_cases = [
            {"name": "exact estimates", "meta": {}, "values": {}, "expected": 0.0},
            {"name": "motor channel", "meta": {}, "values": {"d4_true": np.full(n, 1e-3)}, "expected": 35.0},
            {"name": "link channel", "meta": {}, "values": {"d2_true": np.full(n, 1e-5)}, "expected": 8.527},
            {
                "name": "link channel without estimates",
                "meta": {"controller": {"estimate_terms": False}},
                "values": {"d2_true": np.full(n, 1e-5)},
                "expected": -0.323,
            },
            {
                "name": "model channel cancels the state",
                "meta": {"controller": {"estimate_terms": False}},
                "values": {"q": np.full(n, 1e-3), "theta": np.full(n, 1e-3), "d2_true": np.full(n, 35.0)},
                "expected": 0.0,
            },
            {"name": "force matched channel", "meta": force, "values": {"d4_true": np.full(n, 3.0)}, "expected": 3.0},
            {"name": "force link velocity", "meta": force, "values": {"qd": np.full(n, 0.1)}, "expected": 3.0},
        ]

        for case in test_cases:
            with self.subTest(case=case["name"]):
                trace = make_trace(1e-3, n, meta=case["meta"], **case["values"])
                np.testing.assert_allclose(np.full(n, case["expected"]), mismatch(trace), atol=1e-9)

    def test_verify_reaching(self):
        test_cases = [
            {"name": "reached in time", "sigma": [1.0, 0.5, 0.0, 0.0], "time": 0.2, "passed": True},
            {"name": "reached late", "sigma": [0.1] * 4 + [0.0], "time": 0.4, "passed": False},
            {"name": "never reached", "sigma": [1.0, 1.0, 1.0], "time": math.inf, "passed": False},
        ]

        for case in test_cases:
            with self.subTest(case=case["name"]):
                result = verify_reaching(case["sigma"], 0.1, math.sqrt(2), 0.01)
                self.assertAlmostEqual(case["time"], result.time)
                self.assertEqual(case["passed"], result.passed)

        self.assertAlmostEqual(1.2, verify_reaching([1.0, 0.0], 0.1, math.sqrt(2), 0.01).bound)
        with self.assertRaises(ValueError):
            verify_reaching([1.0, 0.0], 0.1, 0.0, 0.01)

    def test_verify_lyapunov(self):
        n = 4
        gains = {"rho": np.full(n, 2.0)}
        test_cases = [
            {"name": "decreasing", "sigma": [1.0, 0.8, 0.6, 0.4], "values": {}, "kwargs": {}, "expected": 0},
            {"name": "stuck with exact estimates", "sigma": [1.0] * n, "values": {}, "kwargs": {}, "expected": 3},
            {
                # m = 852700·1e-5 ≈ 8.5 exceeds ρ = 2, so the switching term never dominates
                "name": "stuck under a larger mismatch",
                "sigma": [1.0] * n,
                "values": {"d2_true": np.full(n, 1e-5)},
                "kwargs": {},
                "expected": 0,
            },
            {
                "name": "asserted bound overrides the measured one",
                "sigma": [1.0] * n,
                "values": {"d2_true": np.full(n, 1e-5)},
                "kwargs": {"delta_beta": 0.0},
                "expected": 3,
            },
            {"name": "inside the layer", "sigma": [1.0] * n, "values": {}, "kwargs": {"layer": 2.0}, "expected": 0},
        ]

        for case in test_cases:
            with self.subTest(case=case["name"]):
                trace = make_trace(0.1, n, extras=gains, sigma=case["sigma"], **case["values"])
                self.assertEqual(case["expected"], verify_lyapunov(trace, **case["kwargs"]))

    def test_growth_with_exact_estimates_is_a_violation(self):
        n = 50
        sigma = 1.0 + 1e-3 * np.arange(n)
        trace = make_trace(1e-3, n, extras={"switch": np.ones(n), "rho": np.full(n, 100.0)}, sigma=sigma)
        self.assertEqual(n - 1, verify_lyapunov(trace, layer=0.0))

    def test_rho_from_meta(self):
        trace = make_trace(0.1, 3, meta={"rho": 2.0}, sigma=[1.0, 1.0, 1.0])
        self.assertEqual(2, verify_lyapunov(trace, delta_beta=0.0))
        self.assertEqual(0, verify_lyapunov(trace, rho=0.0, delta_beta=0.0))


class TestObserverErrorReport(unittest.TestCase):
    def test_report(self):
        n = 10
        true = np.ones((n, 4))
        exact = make_trace(0.1, n, extras={"dis_true": true, "dis_hat": true}, meta={"observer_decay_rate": 500.0})
        report = observer_error_report(exact)
        self.assertEqual(0.0, report.steady_norm)
        self.assertEqual(0.0, report.delta)
        self.assertEqual(500.0, report.decay_rate)
        self.assertTrue(report.passed)

        biased = make_trace(0.1, n, extras={"dis_true": true, "dis_hat": np.zeros((n, 4))})
        report = observer_error_report(biased, decay_rate=500.0)
        self.assertAlmostEqual(2.0, report.steady_norm)
        self.assertEqual([1.0] * 4, report.max_error)
        self.assertFalse(report.passed)

        with self.assertRaises(ValueError):
            observer_error_report(biased, window=(0.85, None), decay_rate=500.0)


class TestComputeMetrics(unittest.TestCase):
    def test_position(self):
        trace = make_trace(0.5, 4, meta={"mode": "position", "rho": 1.0}, ref=np.ones(4), tau_m=np.ones(4), d2_true=np.ones(4))
        report = compute_metrics(trace)
        self.assertAlmostEqual(1.0, report.rmse_tracking)
        self.assertEqual(0.0, report.chattering_index)
        self.assertEqual({"d2": 1.0, "d4": 0.0}, report.max_estimation_error)
        self.assertEqual(0.0, report.reaching_time)
        self.assertTrue(report.reaching_passed)
        self.assertIn("lyapunov_violations", report.to_dict())

    def test_force(self):
        trace = make_trace(0.5, 4, meta={"mode": "force"}, ref=np.ones(4), tau_s=np.full(4, 0.5))
        report = compute_metrics(trace, window=(1.0, None))
        self.assertAlmostEqual(0.5, report.rmse_tracking)
        self.assertEqual(["d4"], list(report.max_estimation_error))

    def test_unknown_mode(self):
        with self.assertRaises(ValueError):
            compute_metrics(make_trace(0.5, 4), mode="impedance")


if __name__ == "__main__":
    unittest.main()
