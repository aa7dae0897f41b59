import csv
import io
import json
import os
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from unittest.mock import patch

from sea_smc.analysis import compute_metrics
from sea_smc.cli import EXIT_DIVERGED, EXIT_FAILED, EXIT_INVALID, EXIT_OK, SWEEP_COLUMNS, main
from sea_smc.scenario import load_recorded_run
from sea_smc.verify import CheckResult


def run_cli(*argv: str) -> tuple[int, str]:
    out = io.StringIO()
    with redirect_stdout(out), redirect_stderr(io.StringIO()):
        code = main(list(argv))
    return code, out.getvalue()


class TestRun(unittest.TestCase):
    def test_writes_outputs(self):
        with tempfile.TemporaryDirectory() as tmp:
            code, _ = run_cli("run", "free_oscillation", "--out", tmp, "--duration", "0.01", "--seed", "3")
            self.assertEqual(EXIT_OK, code)
            for name in ("trace.csv", "summary.json", "scenario.scenario"):
                with self.subTest(case=name):
                    self.assertTrue(os.path.isfile(os.path.join(tmp, name)))

            with open(os.path.join(tmp, "summary.json")) as f:
                summary = json.load(f)
            self.assertEqual("free_oscillation", summary["name"])
            self.assertEqual(3, summary["seed"])
            self.assertEqual(21, summary["samples"])
            self.assertIn("rmse_tracking", summary["metrics"])

            with open(os.path.join(tmp, "scenario.scenario")) as f:
                self.assertIn("sim.duration = 0.01", f.read())

    def test_summary_matches_reanalysis_of_saved_trace(self):
        schedule = [
            "controller.rho=",
            "controller.rho.kind=step",
            "controller.rho.offset=0.001",
            "controller.rho.amplitude=10",
            "controller.rho.t0=0.05",
            "controller.rho.rise_time=0.1",
        ]
        with tempfile.TemporaryDirectory() as tmp:
            args = ["run", "tracking", "--out", tmp, "--duration", "0.2"]
            for override in schedule:
                args += ["--set", override]
            code, _ = run_cli(*args)
            self.assertEqual(EXIT_OK, code)
            with open(os.path.join(tmp, "summary.json")) as f:
                summary = json.load(f)
            recorded = load_recorded_run(os.path.join(tmp, "trace.csv"))

        reanalyzed = json.loads(json.dumps(compute_metrics(recorded, window=(0.0, None)).to_dict()))
        self.assertEqual(reanalyzed, summary["metrics"])
        self.assertAlmostEqual(0.001, recorded.extras["rho"][0])
        self.assertAlmostEqual(10.001, recorded.extras["rho"][-1])

    def test_exit_codes(self):
        test_cases = [
            {"name": "unknown key", "args": ["--set", "controller.gain=1"], "expected": EXIT_INVALID},
            {"name": "malformed override", "args": ["--set", "controller.gain"], "expected": EXIT_INVALID},
            {"name": "bad value", "args": ["--set", "sim.dt=fast"], "expected": EXIT_INVALID},
            {
                "name": "divergence",
                "args": ["--set", "controller.torque.kind=constant", "--set", "controller.torque.value=1000"],
                "expected": EXIT_DIVERGED,
            },
        ]

        for case in test_cases:
            with self.subTest(case=case["name"]):
                with tempfile.TemporaryDirectory() as tmp:
                    code, _ = run_cli("run", "free_oscillation", "--out", tmp, "--duration", "0.05", *case["args"])
                self.assertEqual(case["expected"], code)

    def test_missing_scenario(self):
        with tempfile.TemporaryDirectory() as tmp:
            code, _ = run_cli("run", "no_such_scenario", "--out", tmp)
        self.assertEqual(EXIT_INVALID, code)


class TestSweep(unittest.TestCase):
    def test_sweep(self):
        with tempfile.TemporaryDirectory() as tmp:
            code, _ = run_cli(
                "sweep", "free_oscillation", "initial.theta", "0.01", "0.02", "--out", tmp, "--duration", "0.01"
            )
            self.assertEqual(EXIT_OK, code)
            with open(os.path.join(tmp, "sweep.csv"), newline="") as f:
                rows = list(csv.DictReader(f))
            self.assertTrue(os.path.isfile(os.path.join(tmp, "initial.theta=0.02", "trace.csv")))

        self.assertEqual(["0.01", "0.02"], [row["value"] for row in rows])
        self.assertEqual(["ok", "ok"], [row["status"] for row in rows])
        self.assertEqual(list(SWEEP_COLUMNS), list(rows[0]))

    def test_records_divergence(self):
        with tempfile.TemporaryDirectory() as tmp:
            code, _ = run_cli(
                "sweep",
                "free_oscillation",
                "controller.torque.value",
                "0",
                "1000",
                "--set",
                "controller.torque.kind=constant",
                "--out",
                tmp,
                "--duration",
                "0.05",
            )
            with open(os.path.join(tmp, "sweep.csv"), newline="") as f:
                rows = list(csv.DictReader(f))
        self.assertEqual(EXIT_OK, code)
        self.assertEqual(["ok", "diverged"], [row["status"] for row in rows])
        self.assertIn("sample", rows[1]["message"])

    def test_invalid_value_runs_nothing(self):
        with tempfile.TemporaryDirectory() as tmp:
            code, _ = run_cli("sweep", "free_oscillation", "initial.theta", "0.01", "wide", "--out", tmp)
            self.assertEqual(EXIT_INVALID, code)
            self.assertEqual([], os.listdir(tmp))


class TestVerifyAndList(unittest.TestCase):
    @patch("sea_smc.cli.run_checks")
    def test_verify(self, mock_run):
        test_cases = [
            {"name": "all pass", "passed": [True, True], "expected": EXIT_OK},
            {"name": "one fails", "passed": [True, False], "expected": EXIT_FAILED},
        ]

        for case in test_cases:
            with self.subTest(case=case["name"]):
                mock_run.return_value = [
                    CheckResult(f"check_{i}", passed, "detail") for i, passed in enumerate(case["passed"])
                ]
                code, out = run_cli("verify", "--only", "pole_placement")
                self.assertEqual(case["expected"], code)
                self.assertIn(f"{sum(case['passed'])}/2 checks passed", out)
                mock_run.assert_called_with(["pole_placement"])

    def test_list(self):
        code, out = run_cli("list-scenarios", "-v")
        self.assertEqual(EXIT_OK, code)
        self.assertIn("tracking", out)
        self.assertIn("tracking.scenario", out)

    def test_unknown_command(self):
        with redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit) as ctx:
                main(["simulate"])
        self.assertEqual(2, ctx.exception.code)


if __name__ == "__main__":
    unittest.main()
