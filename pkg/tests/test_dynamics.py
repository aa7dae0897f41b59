import math
import unittest

import numpy as np

from sea_smc.control import OpenLoopConfig
from sea_smc.dynamics import (
    environment_torque,
    link_acceleration,
    link_disturbance,
    lumped_force_disturbance,
    motor_disturbance,
    normalized_disturbance,
    plant_derivative,
    spring_torque,
    state_space_matrices,
    total_energy,
)
from sea_smc.observer import ObserverConfig
from sea_smc.schema import DisturbanceProfile, EnvironmentModel, PlantParams, PlantState, ReferenceTrajectory
from sea_smc.signals import Constant, Sine
from sea_smc.sim import SimConfig, run_scenario


class TestPlantDerivative(unittest.TestCase):
    def setUp(self):
        self.params = PlantParams()
        self.dist = DisturbanceProfile()

    def test_rest_is_equilibrium(self):
        derivative = plant_derivative(self.params, PlantState(), 0.0, self.dist, None, 0.0)
        self.assertEqual([0.0, 0.0, 0.0, 0.0], list(derivative))

    def test_accelerations(self):
        test_cases = [
            {
                "name": "motor torque from rest",
                "state": PlantState(),
                "tau_m": 1e-3,
                "expected": [0.0, 0.0, 0.0, 1e-3 / 2.2e-6],
            },
            {
                "name": "wound spring",
                "state": PlantState(theta=0.01),
                "tau_m": 0.0,
                "expected": [0.0, 0.14 * 0.01 / 4e-6, 0.0, -0.14 * 0.01 / 2.2e-6],
            },
            {
                "name": "moving link",
                "state": PlantState(q_dot=2.0, theta_dot=2.0),
                "tau_m": 0.0,
                "expected": [2.0, 0.0, 2.0, 0.0],
            },
        ]

        for case in test_cases:
            with self.subTest(case=case["name"]):
                derivative = plant_derivative(self.params, case["state"], case["tau_m"], self.dist, None, 0.0)
                np.testing.assert_allclose(case["expected"], derivative, rtol=1e-12)

    def test_rejects_non_finite_state(self):
        with self.assertRaises(ValueError):
            plant_derivative(self.params, PlantState(q=math.nan), 0.0, self.dist, None, 0.0)

    def test_spring_torque(self):
        params = PlantParams(k=0.2)
        state = PlantState(q=0.1, theta=0.3)
        self.assertAlmostEqual(0.14 * 0.2, spring_torque(params, state))
        self.assertAlmostEqual(0.2 * 0.2, spring_torque(params, state, "true"))
        with self.assertRaises(ValueError):
            spring_torque(params, state, "measured")  # type: ignore[arg-type]


class TestDisturbances(unittest.TestCase):
    def test_normalized_disturbance_of_exact_model_is_zero(self):
        params = PlantParams(bm_n=1e-5, bl_n=2e-5)
        state = PlantState(q=0.1, q_dot=-0.3, theta=0.12, theta_dot=0.5)
        derivative = plant_derivative(params, state, 2e-3, DisturbanceProfile(), None, 0.0)
        np.testing.assert_allclose(np.zeros(4), normalized_disturbance(params, state, derivative, 2e-3), atol=1e-6)

    def test_normalized_disturbance_channels(self):
        params = PlantParams()
        dist = DisturbanceProfile(tau_m_ud=Constant(1e-4), tau_l_ud=Constant(2e-4))
        state = PlantState()
        derivative = plant_derivative(params, state, 0.0, dist, None, 0.0)
        expected = [0.0, 2e-4 / 4e-6, 0.0, 1e-4 / 2.2e-6]
        np.testing.assert_allclose(expected, normalized_disturbance(params, state, derivative, 0.0), rtol=1e-12)

    def test_matched_and_mismatched_disturbances(self):
        nominal = PlantParams()
        heavier = nominal.perturbed(Jm=0.5, Jl=0.25)
        state = PlantState(q=0.01, q_dot=0.2, theta=0.02, theta_dot=0.1)
        dist = DisturbanceProfile(tau_m_ud=Constant(1e-4), tau_l_ud=Constant(-1e-4))

        test_cases = [
            {
                "name": "motor side, nominal plant",
                "value": motor_disturbance(nominal, state, 5.0, dist, 0.0),
                "expected": 1e-4,
            },
            {
                "name": "motor side, heavier rotor",
                "value": motor_disturbance(heavier, state, 5.0, dist, 0.0),
                "expected": 0.5 * 2.2e-6 * 5.0 + 1e-4,
            },
            {
                "name": "link side, heavier link",
                "value": link_disturbance(heavier, state, 3.0, dist, 0.0),
                "expected": 0.25 * 4e-6 * 3.0 - 1e-4,
            },
        ]

        for case in test_cases:
            with self.subTest(case=case["name"]):
                self.assertAlmostEqual(case["expected"], case["value"], places=12)

    def test_lumped_force_disturbance_of_exact_model(self):
        # With no unknown inputs the lumped term reduces to the nominal link reaction Jl·q̈ + bl·q̇ = τs
        params = PlantParams()
        state = PlantState(q=0.01, theta=0.02)
        derivative = plant_derivative(params, state, 0.0, DisturbanceProfile(), None, 0.0)
        value = lumped_force_disturbance(params, state, derivative, DisturbanceProfile(), None, 0.0)
        self.assertAlmostEqual(spring_torque(params, state), value, places=12)


class TestLumpedForceOracle(unittest.TestCase):
    def test_matches_motor_balance_of_a_driven_run(self):
        # Whatever the source, the lumped term must equal τm − Jm·θ̈ − bm·θ̇ on the nominal rotor
        test_cases = [
            {"name": "exact model", "plant": PlantParams(), "dist": DisturbanceProfile(), "env": None},
            {
                "name": "link sine load",
                "plant": PlantParams(),
                "dist": DisturbanceProfile(tau_l_ud=Sine(amplitude=2e-4, frequency=3.0)),
                "env": None,
            },
            {
                "name": "motor sine disturbance on a heavier rotor",
                "plant": PlantParams(bm_n=1e-6, Jm=3e-6, bm=2e-6),
                "dist": DisturbanceProfile(tau_m_ud=Sine(amplitude=1e-4, frequency=5.0)),
                "env": None,
            },
            {
                "name": "spring environment",
                "plant": PlantParams(),
                "dist": DisturbanceProfile(),
                "env": EnvironmentModel(De=1e-4, Ke=0.05),
            },
        ]

        for case in test_cases:
            with self.subTest(case=case["name"]):
                plant, dist, env = case["plant"], case["dist"], case["env"]
                sim = SimConfig(duration=0.5)
                trace = run_scenario(
                    plant,
                    env,
                    dist,
                    OpenLoopConfig(torque=Sine(amplitude=1e-3, frequency=2.0)),
                    ObserverConfig(),
                    ReferenceTrajectory(),
                    sim,
                )
                lumped = np.zeros(len(trace))
                for k, t in enumerate(trace.t):
                    state = PlantState(trace["q"][k], trace["qd"][k], trace["theta"][k], trace["thetad"][k])
                    derivative = plant_derivative(plant, state, trace["tau_m"][k], dist, env, t)
                    lumped[k] = lumped_force_disturbance(plant, state, derivative, dist, env, t)

                theta_ddot = np.gradient(trace["thetad"], sim.dt)
                expected = trace["tau_m"] - plant.Jm_n * theta_ddot - plant.bm_n * trace["thetad"]
                interior = slice(1, -1)
                error = np.sqrt(np.mean((lumped[interior] - expected[interior]) ** 2))
                scale = np.sqrt(np.mean(expected[interior] ** 2))
                self.assertLess(error, 0.02 * scale)


class TestEnvironment(unittest.TestCase):
    def setUp(self):
        self.params = PlantParams()
        self.dist = DisturbanceProfile()

    def test_contact_modes(self):
        wall = EnvironmentModel(Ke=20.0, qe=Constant(0.2), contact_mode="unilateral")
        spring = EnvironmentModel(Ke=20.0, qe=Constant(0.2), contact_mode="always")

        test_cases = [
            {"name": "unilateral before the wall", "env": wall, "state": PlantState(q=0.1), "expected": 0.0},
            {"name": "unilateral pressing", "env": wall, "state": PlantState(q=0.3, theta=0.3), "expected": 2.0},
            {"name": "always engaged pulls back", "env": spring, "state": PlantState(q=0.1, theta=0.1), "expected": -2.0},
        ]

        for case in test_cases:
            with self.subTest(case=case["name"]):
                q_ddot, tau_ext = link_acceleration(self.params, case["state"], self.dist, case["env"], 0.0)
                self.assertAlmostEqual(case["expected"], tau_ext, places=9)
                self.assertAlmostEqual(case["expected"], environment_torque(case["env"], case["state"], q_ddot, 0.0), places=9)

    def test_environment_inertia_is_folded_into_the_link(self):
        env = EnvironmentModel(Je=4e-6, tau_a=Constant(-1e-3))
        q_ddot, _ = link_acceleration(self.params, PlantState(), self.dist, env, 0.0)
        self.assertAlmostEqual(1e-3 / 8e-6, q_ddot, places=6)


class TestModel(unittest.TestCase):
    def test_state_space_matrices(self):
        A, b = state_space_matrices(PlantParams())
        self.assertEqual((4, 4), A.shape)
        self.assertAlmostEqual(-0.14 / 4e-6, A[1, 0])
        self.assertAlmostEqual(0.14 / 2.2e-6, A[3, 0])
        self.assertAlmostEqual(1 / 2.2e-6, b[3])

    def test_total_energy(self):
        params = PlantParams()
        state = PlantState(q_dot=1.0, theta=0.1, theta_dot=2.0)
        expected = 0.5 * 2.2e-6 * 4.0 + 0.5 * 4e-6 * 1.0 + 0.5 * 0.14 * 0.01
        self.assertAlmostEqual(expected, total_energy(params, state), places=15)


if __name__ == "__main__":
    unittest.main()
