import math
import unittest

from sea_smc.signals import (
    SMOOTHSTEP,
    BandLimitedNoise,
    Constant,
    Pulse,
    Sine,
    Step,
    Sum,
    Windowed,
    Zero,
    build_signal,
)


class TestWaveforms(unittest.TestCase):
    def test_values(self):
        test_cases = [
            {"name": "zero", "signal": Zero(), "t": 3.0, "expected": 0.0},
            {"name": "constant", "signal": Constant(2.5), "t": 1.0, "expected": 2.5},
            {"name": "step before", "signal": Step(amplitude=2.0, t0=1.0), "t": 0.5, "expected": 0.0},
            {"name": "step after", "signal": Step(amplitude=2.0, t0=1.0), "t": 1.5, "expected": 2.0},
            {"name": "step with offset", "signal": Step(amplitude=1.0, t0=0.0, offset=3.0), "t": 1.0, "expected": 4.0},
            {"name": "smooth step midpoint", "signal": Step(amplitude=2.0, t0=1.0, rise_time=0.5), "t": 1.25, "expected": 1.0},
            {"name": "sine peak", "signal": Sine(amplitude=2.0, frequency=1.0), "t": 0.25, "expected": 2.0},
            {"name": "sine offset", "signal": Sine(amplitude=1.0, frequency=1.0, offset=2.0), "t": 0.0, "expected": 2.0},
            {"name": "pulse peak", "signal": Pulse(amplitude=-0.5, start=1.0, stop=2.0), "t": 1.5, "expected": -0.5},
            {"name": "pulse outside", "signal": Pulse(amplitude=-0.5, start=1.0, stop=2.0), "t": 2.5, "expected": 0.0},
            {"name": "window inside", "signal": Windowed(Constant(1.0), 1.0, 2.0), "t": 1.0, "expected": 1.0},
            {"name": "window after", "signal": Windowed(Constant(1.0), 1.0, 2.0), "t": 2.0, "expected": 0.0},
            {"name": "sum", "signal": Sum([Constant(1.0), Step(amplitude=2.0)]), "t": 1.0, "expected": 3.0},
        ]

        for case in test_cases:
            with self.subTest(case=case["name"]):
                self.assertAlmostEqual(case["expected"], case["signal"](case["t"]), places=12)

    def test_sine_derivatives(self):
        w = 2 * math.pi
        values = Sine(amplitude=0.5, frequency=1.0).derivatives(0.0, 4)
        expected = (0.0, 0.5 * w, 0.0, -0.5 * w**3, 0.0)
        for n, (e, v) in enumerate(zip(expected, values)):
            with self.subTest(case=f"derivative {n}"):
                self.assertAlmostEqual(e, v, delta=1e-9 * max(1.0, abs(e)))

    def test_smooth_step_is_flat_at_both_ends(self):
        for tau in (0.0, 1.0):
            for n in range(1, 5):
                with self.subTest(case=f"tau={tau} order={n}"):
                    self.assertAlmostEqual(0.0, SMOOTHSTEP.deriv(n)(tau), places=9)
        self.assertAlmostEqual(0.0, SMOOTHSTEP(0.0))
        self.assertAlmostEqual(1.0, SMOOTHSTEP(1.0))

    def test_invalid_parameters(self):
        test_cases = [
            {"name": "negative rise time", "build": lambda: Step(rise_time=-1.0)},
            {"name": "negative frequency", "build": lambda: Sine(frequency=-1.0)},
            {"name": "empty pulse", "build": lambda: Pulse(start=1.0, stop=1.0)},
            {"name": "negative std", "build": lambda: BandLimitedNoise(std=-1.0)},
            {"name": "zero cutoff", "build": lambda: BandLimitedNoise(cutoff=0.0)},
            {"name": "taper out of range", "build": lambda: BandLimitedNoise(taper=2.0)},
        ]

        for case in test_cases:
            with self.subTest(case=case["name"]):
                with self.assertRaises(ValueError):
                    case["build"]()


class TestBandLimitedNoise(unittest.TestCase):
    def test_seeded(self):
        a = BandLimitedNoise(std=1.0, cutoff=5.0, start=0.0, stop=2.0, seed=(3, 1))
        b = BandLimitedNoise(std=1.0, cutoff=5.0, start=0.0, stop=2.0, seed=(3, 1))
        c = BandLimitedNoise(std=1.0, cutoff=5.0, start=0.0, stop=2.0, seed=(3, 2))
        times = [0.1 * i for i in range(21)]

        self.assertEqual([a(t) for t in times], [b(t) for t in times])
        self.assertNotEqual([a(t) for t in times], [c(t) for t in times])

    def test_zero_outside_and_at_window_edges(self):
        noise = BandLimitedNoise(std=1.0, cutoff=5.0, start=1.0, stop=3.0, seed=(0,))
        for t in (0.0, 0.999, 1.0, 3.0, 4.0):
            with self.subTest(case=f"t={t}"):
                self.assertAlmostEqual(0.0, noise(t), places=12)
        self.assertGreater(max(abs(noise(1.0 + 0.01 * i)) for i in range(201)), 0.1)


class TestBuildSignal(unittest.TestCase):
    def test_kinds(self):
        test_cases = [
            {"name": "zero", "kind": "zero", "params": {}, "type": Zero},
            {"name": "constant", "kind": "constant", "params": {"value": 1.0}, "type": Constant},
            {"name": "step", "kind": "step", "params": {"amplitude": 5.0}, "type": Step},
            {"name": "sine", "kind": "sine", "params": {"frequency": 2.0}, "type": Sine},
            {"name": "pulse", "kind": "pulse", "params": {"start": 1.0, "stop": 2.0}, "type": Pulse},
            {"name": "random", "kind": "random", "params": {"std": 1e-4}, "type": BandLimitedNoise},
            {"name": "gated step", "kind": "step", "params": {"start": 1.0, "stop": 2.0}, "type": Windowed},
        ]

        for case in test_cases:
            with self.subTest(case=case["name"]):
                self.assertIsInstance(build_signal(case["kind"], case["params"]), case["type"])

    def test_defaults_are_filled(self):
        step = build_signal("step", {"amplitude": 5.0})
        self.assertEqual(Step(amplitude=5.0, t0=0.0, rise_time=0.0, offset=0.0), step)

    def test_rejects_unknown_kind_and_parameter(self):
        test_cases = [
            {"name": "unknown kind", "kind": "square", "params": {}},
            {"name": "unknown parameter", "kind": "sine", "params": {"amplitud": 1.0}},
            {"name": "gate on random", "kind": "random", "params": {"t0": 1.0}},
        ]

        for case in test_cases:
            with self.subTest(case=case["name"]):
                with self.assertRaises(ValueError):
                    build_signal(case["kind"], case["params"])


if __name__ == "__main__":
    unittest.main()
