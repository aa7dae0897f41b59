"""SEA plant dynamics in free motion and in contact with an environment.

The simulator integrates the true-parameter plant. The nominal model with the
lumped disturbances is algebraically the same system, and the functions below
that reconstruct those disturbances are used as ground truth for the observers.
"""

import logging
from typing import Literal, Optional

import numpy as np

from sea_smc.schema import DisturbanceProfile, EnvironmentModel, PlantParams, PlantState

logger = logging.getLogger(__name__)

Which = Literal["nominal", "true"]


def spring_torque(params: PlantParams, state: PlantState, which: Which = "nominal") -> float:
    """Hooke's law torque k·(θ − q) with the nominal or true stiffness."""
    if which not in ("nominal", "true"):
        raise ValueError(f"which must be 'nominal' or 'true', got '{which}'")
    k = params.k_n if which == "nominal" else params.k
    return k * (state.theta - state.q)


def _check_finite(state: PlantState) -> None:
    if not state.is_finite():
        raise ValueError(f"non-finite plant state {state}")


def _motor_acceleration(params: PlantParams, state: PlantState, tau_m: float, dist: DisturbanceProfile, t: float) -> float:
    tau_s = spring_torque(params, state, "true")
    return (tau_m - tau_s - params.bm * state.theta_dot - dist.tau_m_ud(t)) / params.Jm


def _link_drive(params: PlantParams, state: PlantState, dist: DisturbanceProfile, t: float) -> float:
    """Link-side torque before any environment interaction."""
    tau_s = spring_torque(params, state, "true")
    return tau_s - params.bl * state.q_dot - dist.gravity(state.q) - dist.tau_l_ud(t)


def link_acceleration(
    params: PlantParams, state: PlantState, dist: DisturbanceProfile, env: Optional[EnvironmentModel], t: float
) -> tuple[float, float]:
    """Returns (q̈, τext) for the true plant.

    While the environment is engaged its inertia is folded into the link, so
    q̈ = (drive − τa − passive)/(Jl + Je) with passive = De(q̇ − q̇e) + Ke(q − qe) − Je·q̈e.
    A unilateral contact is disengaged when q < qe or when it would pull on the link.
    """
    drive = _link_drive(params, state, dist, t)
    if env is None:
        return drive / params.Jl, 0.0

    qe, qe_dot, qe_ddot = env.qe.derivatives(t, 2)
    tau_a = env.tau_a(t)
    passive = env.De * (state.q_dot - qe_dot) + env.Ke * (state.q - qe) - env.Je * qe_ddot

    free_accel = (drive - tau_a) / params.Jl
    if env.contact_mode == "unilateral" and state.q < qe:
        return free_accel, tau_a

    q_ddot = (drive - tau_a - passive) / (params.Jl + env.Je)
    contact = env.Je * q_ddot + passive
    if env.contact_mode == "unilateral" and contact < 0:
        return free_accel, tau_a
    return q_ddot, tau_a + contact


def environment_torque(env: EnvironmentModel, state: PlantState, q_ddot: float, t: float) -> float:
    """Torque the environment exerts against the link, τa + Je(q̈ − q̈e) + De(q̇ − q̇e) + Ke(q − qe).

    In unilateral mode only τa acts while q < qe or the contact would pull.
    """
    qe, qe_dot, qe_ddot = env.qe.derivatives(t, 2)
    tau_a = env.tau_a(t)
    contact = env.Je * (q_ddot - qe_ddot) + env.De * (state.q_dot - qe_dot) + env.Ke * (state.q - qe)
    if env.contact_mode == "unilateral" and (state.q < qe or contact < 0):
        return tau_a
    return tau_a + contact


def free_motion_derivative(
    params: PlantParams, state: PlantState, tau_m: float, dist: DisturbanceProfile, t: float
) -> np.ndarray:
    _check_finite(state)
    q_ddot, _ = link_acceleration(params, state, dist, None, t)
    theta_ddot = _motor_acceleration(params, state, tau_m, dist, t)
    return np.array([state.q_dot, q_ddot, state.theta_dot, theta_ddot])


def contact_derivative(
    params: PlantParams, state: PlantState, tau_m: float, dist: DisturbanceProfile, env: EnvironmentModel, t: float
) -> np.ndarray:
    _check_finite(state)
    q_ddot, _ = link_acceleration(params, state, dist, env, t)
    theta_ddot = _motor_acceleration(params, state, tau_m, dist, t)
    return np.array([state.q_dot, q_ddot, state.theta_dot, theta_ddot])


def plant_derivative(
    params: PlantParams,
    state: PlantState,
    tau_m: float,
    dist: DisturbanceProfile,
    env: Optional[EnvironmentModel],
    t: float,
) -> np.ndarray:
    if env is None:
        return free_motion_derivative(params, state, tau_m, dist, t)
    return contact_derivative(params, state, tau_m, dist, env, t)


def motor_disturbance(params: PlantParams, state: PlantState, theta_ddot: float, dist: DisturbanceProfile, t: float) -> float:
    """Matched disturbance τm^d = ΔJm·θ̈ + Δbm·θ̇ + (τs − τs^n) + τm^ud."""
    return (
        (params.Jm - params.Jm_n) * theta_ddot
        + (params.bm - params.bm_n) * state.theta_dot
        + spring_torque(params, state, "true")
        - spring_torque(params, state, "nominal")
        + dist.tau_m_ud(t)
    )


def link_disturbance(params: PlantParams, state: PlantState, q_ddot: float, dist: DisturbanceProfile, t: float) -> float:
    """Mismatched disturbance τl^d = ΔJl·q̈ + Δbl·q̇ − (τs − τs^n) + τg + τl^ud."""
    return (
        (params.Jl - params.Jl_n) * q_ddot
        + (params.bl - params.bl_n) * state.q_dot
        - spring_torque(params, state, "true")
        + spring_torque(params, state, "nominal")
        + dist.gravity(state.q)
        + dist.tau_l_ud(t)
    )


def lumped_force_disturbance(
    params: PlantParams,
    state: PlantState,
    derivative: np.ndarray,
    dist: DisturbanceProfile,
    env: Optional[EnvironmentModel],
    t: float,
) -> float:
    """Matched lumped disturbance of the force-control model, τm^d + Jl^n·q̈ + bl^n·q̇ + τl^d + τext."""
    q_ddot, theta_ddot = float(derivative[1]), float(derivative[3])
    tau_ext = environment_torque(env, state, q_ddot, t) if env is not None else 0.0
    return (
        motor_disturbance(params, state, theta_ddot, dist, t)
        + params.Jl_n * q_ddot
        + params.bl_n * state.q_dot
        + link_disturbance(params, state, q_ddot, dist, t)
        + tau_ext
    )


def state_space_matrices(params: PlantParams) -> tuple[np.ndarray, np.ndarray]:
    """Nominal A_n, b_n of ξ̇ = A_n·ξ + b_n·τm − τdis."""
    K = params.k_n / params.Jl_n
    M = params.k_n / params.Jm_n
    A = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [-K, -params.bl_n / params.Jl_n, K, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [M, 0.0, -M, -params.bm_n / params.Jm_n],
        ]
    )
    b = np.array([0.0, 0.0, 0.0, 1.0 / params.Jm_n])
    return A, b


def normalized_disturbance(params: PlantParams, state: PlantState, derivative: np.ndarray, tau_m: float) -> np.ndarray:
    """True τdis = A_n·ξ + b_n·τm − ξ̇."""
    A, b = state_space_matrices(params)
    return A @ state.to_array() + b * tau_m - np.asarray(derivative, dtype=float)


def total_energy(params: PlantParams, state: PlantState) -> float:
    """Kinetic plus spring energy of the true plant (J)."""
    return (
        0.5 * params.Jm * state.theta_dot**2
        + 0.5 * params.Jl * state.q_dot**2
        + 0.5 * params.k * (state.theta - state.q) ** 2
    )
