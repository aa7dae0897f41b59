"""Sliding-mode position and force controllers driven by disturbance estimates.

Position control regulates the link angle through the third-order surface
σp = e⃛ + c2p·ë + c1p·ė + c0p·e. Force control maps the desired spring torque to
a desired motor angle with Hooke's law and regulates σF = ėF + c0F·eF.
Either loop can replace the signum with σ/(|σ| + ε) or integrate it on a
surface one order higher so the torque stays continuous.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence, Union

import numpy as np

from sea_smc.observer import DisturbanceEstimates, channel_estimates
from sea_smc.schema import PlantParams, PlantState
from sea_smc.signals import Signal, Zero

logger = logging.getLogger(__name__)

Mode = Literal["discontinuous", "quasi", "continuous"]
MODES = ("discontinuous", "quasi", "continuous")


def sign(x: float) -> float:
    """Signum with sgn(0) = 0."""
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


def quasi_sign(sigma: float, epsilon: float) -> float:
    """σ/(|σ| + ε), a smooth approximation of the signum."""
    if not epsilon > 0:
        raise ValueError(
            f"quasi-sign epsilon must be positive, got {epsilon}; "
            "nonpositive values are rejected rather than treated as the signum or a reversed switch, select the discontinuous mode instead"
        )
    return sigma / (abs(sigma) + epsilon)


def surface_coefficients(g: float, order: int) -> tuple[float, ...]:
    """Lower coefficients (c0, ..., c_{n-1}) of (s + g)^n, placing every surface pole at −g."""
    if order < 1:
        raise ValueError(f"surface order must be at least 1, got {order}")
    if g < 0:
        raise ValueError(f"surface bandwidth must be nonnegative, got {g}")
    return tuple(math.comb(order, j) * g ** (order - j) for j in range(order))


def smc_gain_from_bound(delta_beta: float, mu: float) -> float:
    """Switching gain ρ = δβ + μ/√2 that reaches σ = 0 within √2·|σ(t0)|/μ."""
    if delta_beta < 0:
        raise ValueError(f"delta_beta must be nonnegative, got {delta_beta}")
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    return delta_beta + mu / math.sqrt(2)


def _check_mode(mode: str, epsilon: float, rho: float, ct: Sequence[float], mu: float) -> None:
    if mode not in MODES:
        raise ValueError(f"unknown controller mode '{mode}', expected one of {MODES}")
    if not rho > 0:
        raise ValueError(f"switching gain rho must be positive, got {rho}")
    if mode == "quasi" and not epsilon > 0:
        raise ValueError(f"quasi mode needs a positive epsilon, got {epsilon}")
    if mode == "continuous" and not all(c > 0 for c in ct):
        raise ValueError(f"continuous mode needs positive surface coefficients, got {tuple(ct)}")
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")


@dataclass
class PositionControllerConfig:
    """Gains of the position sliding-mode controller"""

    c0p: float = 27000.0  # g³ with g_smc = 30 rad/s
    c1p: float = 2700.0  # 3g²
    c2p: float = 90.0  # 3g
    rho_p: float = 0.001
    mode: Mode = "discontinuous"
    epsilon: float = 0.01
    ct: tuple[float, ...] = surface_coefficients(30.0, 4)  # continuous-mode c̃0p..c̃3p
    mu: float = 1.0
    estimate_terms: bool = True
    g_smc: Optional[float] = 30.0
    rho_schedule: Optional[Signal] = None  # time-varying ρp, replaces rho_p when set

    def __post_init__(self):
        for name in ("c0p", "c1p", "c2p"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if len(self.ct) != 4:
            raise ValueError(f"position continuous surface needs 4 coefficients, got {len(self.ct)}")
        _check_mode(self.mode, self.epsilon, self.rho_p, self.ct, self.mu)

    def rho_at(self, t: float) -> float:
        return self.rho_schedule(t) if self.rho_schedule is not None else self.rho_p

    @classmethod
    def from_bandwidth(cls, g_smc: float, **kwargs) -> "PositionControllerConfig":
        c0, c1, c2 = surface_coefficients(g_smc, 3)
        kwargs.setdefault("ct", surface_coefficients(g_smc, 4))
        return cls(c0p=c0, c1p=c1, c2p=c2, g_smc=g_smc, **kwargs)


@dataclass
class ForceControllerConfig:
    """Gains of the force sliding-mode controller"""

    c0F: float = 30.0  # 1/s
    rho_F: float = 0.0035
    mode: Mode = "discontinuous"
    epsilon: float = 0.01
    ct: tuple[float, ...] = surface_coefficients(30.0, 2)  # continuous-mode c̃0f, c̃1f
    mu: float = 1.0
    use_link_accel: bool = True
    link_velocity_feedforward: bool = True
    estimate_terms: bool = True
    rho_schedule: Optional[Signal] = None  # time-varying ρF, replaces rho_F when set

    def __post_init__(self):
        if self.c0F < 0:
            raise ValueError(f"c0F must be nonnegative, got {self.c0F}")
        if len(self.ct) != 2:
            raise ValueError(f"force continuous surface needs 2 coefficients, got {len(self.ct)}")
        _check_mode(self.mode, self.epsilon, self.rho_F, self.ct, self.mu)

    def rho_at(self, t: float) -> float:
        return self.rho_schedule(t) if self.rho_schedule is not None else self.rho_F

    @classmethod
    def from_bandwidth(cls, g_smc: float, **kwargs) -> "ForceControllerConfig":
        kwargs.setdefault("ct", surface_coefficients(g_smc, 2))
        return cls(c0F=g_smc, **kwargs)


@dataclass
class OpenLoopConfig:
    """Scripted motor torque, no feedback"""

    torque: Signal = field(default_factory=Zero)  # N·m


ControllerConfig = Union[PositionControllerConfig, ForceControllerConfig, OpenLoopConfig]


def theta_des(
    tau_s_des: float,
    tau_s_des_dot: float,
    tau_s_des_ddot: float,
    q: float,
    q_dot: float,
    q_ddot_est: float,
    k_n: float,
) -> tuple[float, float, float]:
    """Desired motor angle θdes = τs_des/k_n + q and its two time derivatives."""
    if not k_n > 0:
        raise ValueError(f"k_n must be positive, got {k_n}")
    return (tau_s_des / k_n + q, tau_s_des_dot / k_n + q_dot, tau_s_des_ddot / k_n + q_ddot_est)


def position_errors(
    state: PlantState, est: DisturbanceEstimates, refs: Sequence[float], params: PlantParams
) -> tuple[float, float, float, float]:
    """Link tracking error and its first three derivatives, with estimates in place of the true disturbances."""
    K = params.K
    return (
        refs[0] - state.q,
        refs[1] - state.q_dot,
        refs[2] - K * state.theta + est.d2,
        refs[3] - K * state.theta_dot + est.d2_dot,
    )


def sliding_variable_position(errors: Sequence[float], config: PositionControllerConfig) -> float:
    e, e_dot, e_ddot, e_dddot = errors[:4]
    return e_dddot + config.c2p * e_ddot + config.c1p * e_dot + config.c0p * e


def beta_hat_position(
    state: PlantState, est: DisturbanceEstimates, refs: Sequence[float], config: PositionControllerConfig, params: PlantParams
) -> float:
    """Estimated drift of σp: every term of σ̇p except −αp·τm."""
    K = params.K
    c0, c1, c2 = config.c0p, config.c1p, config.c2p
    return (
        refs[4]
        + c2 * refs[3]
        + c1 * refs[2]
        + c0 * refs[1]
        - K * (c1 * state.theta + c2 * state.theta_dot)
        - c0 * state.q_dot
        + c1 * est.d2
        + c2 * est.d2_dot
        + est.d2_ddot
        + K * est.d4
    )


def _switch(sigma: float, mode: Mode, epsilon: float) -> float:
    if mode == "quasi":
        return quasi_sign(sigma, epsilon)
    return sign(sigma)


def position_control(
    state: PlantState,
    est: DisturbanceEstimates,
    refs: Sequence[float],
    config: PositionControllerConfig,
    params: PlantParams,
    integral: float = 0.0,
    rho: Optional[float] = None,
) -> float:
    """Motor torque τm = (ρp·sgn(σp) + β̂p)/αp.

    In continuous mode the switching part is replaced by `integral`, the
    accumulated torque kept by PositionController. `rho` overrides the
    configured gain, e.g. with the current value of a gain schedule.
    """
    gain = config.rho_p if rho is None else rho
    beta_hat = beta_hat_position(state, est, refs, config, params)
    if config.mode == "continuous":
        return integral + beta_hat / params.alpha_p
    sigma = sliding_variable_position(position_errors(state, est, refs, params), config)
    return (gain * _switch(sigma, config.mode, config.epsilon) + beta_hat) / params.alpha_p


def sliding_variable_force(e_F: float, e_F_dot: float, config: ForceControllerConfig) -> float:
    return e_F_dot + config.c0F * e_F


def beta_hat_force(theta_dot: float, desired: Sequence[float], d_hat: float, config: ForceControllerConfig) -> float:
    """Estimated drift of σF, without θ̈des on the acceleration-free path."""
    accel = desired[2] if config.use_link_accel else 0.0
    return accel + config.c0F * (desired[1] - theta_dot) + d_hat


def force_control(
    theta: float,
    theta_dot: float,
    desired: Sequence[float],
    d_hat: float,
    config: ForceControllerConfig,
    Jm_n: float,
    integral: float = 0.0,
    rho: Optional[float] = None,
) -> float:
    """Motor torque τm = Jm^n·(ρF·sgn(σF) + β̂F)."""
    gain = config.rho_F if rho is None else rho
    beta_hat = beta_hat_force(theta_dot, desired, d_hat, config)
    if config.mode == "continuous":
        return integral + Jm_n * beta_hat
    sigma = sliding_variable_force(desired[0] - theta, desired[1] - theta_dot, config)
    return Jm_n * (gain * _switch(sigma, config.mode, config.epsilon) + beta_hat)


def continuous_sliding_variables(errors: Sequence[float], ct: Sequence[float]) -> float:
    """σ̃ = e^(n) + Σ c̃j·e^(j), one derivative above the discontinuous surface.

    `errors` runs from the error itself up to its highest derivative and must
    hold one entry more than `ct`.
    """
    if len(errors) != len(ct) + 1:
        raise ValueError(f"expected {len(ct) + 1} error channels for {len(ct)} coefficients, got {len(errors)}")
    return errors[-1] + sum(c * e for c, e in zip(ct, errors[:-1]))


def _model_only(state: PlantState, params: PlantParams) -> DisturbanceEstimates:
    """Channel values predicted by the nominal model alone, for conventional SMC."""
    zero = np.zeros(4)
    return channel_estimates(state.to_array(), zero, zero, zero, params)


@dataclass
class ControlOutput:
    """One controller sample"""

    tau_m: float = 0.0  # N·m
    sigma: float = 0.0  # sliding variable actually switched on
    switch: float = 0.0  # sgn(σ), σ/(|σ|+ε) or sgn(σ̃)
    rho: float = 0.0
    error: float = 0.0  # e or eF
    held: bool = False


class PositionController:
    """Stateful position loop: owns the continuous-mode integral and holds output on bad estimates."""

    def __init__(self, config: PositionControllerConfig, params: PlantParams):
        self.config = config
        self.params = params
        self.integral = 0.0
        self.last = ControlOutput(rho=config.rho_p)

    def step(
        self,
        state: PlantState,
        est: DisturbanceEstimates,
        refs: Sequence[float],
        theta_ddot_est: float,
        dt: float,
        t: float = 0.0,
    ) -> ControlOutput:
        if not est.is_finite():
            logger.warning("Rejected non-finite disturbance estimates, holding the previous torque")
            self.last = ControlOutput(self.last.tau_m, self.last.sigma, self.last.switch, self.last.rho, self.last.error, True)
            return self.last

        cfg = self.config
        rho = cfg.rho_at(t)
        used = est if cfg.estimate_terms else _model_only(state, self.params)
        errors = position_errors(state, used, refs, self.params)

        if cfg.mode == "continuous":
            e_ddddot = refs[4] - self.params.K * theta_ddot_est + used.d2_ddot
            sigma = continuous_sliding_variables((*errors, e_ddddot), cfg.ct)
            switch = sign(sigma)
            self.integral += dt * rho * switch / self.params.alpha_p
        else:
            sigma = sliding_variable_position(errors, cfg)
            switch = _switch(sigma, cfg.mode, cfg.epsilon)

        tau_m = position_control(state, used, refs, cfg, self.params, self.integral, rho)
        self.last = ControlOutput(tau_m, sigma, switch, rho, errors[0])
        return self.last


class ForceController:
    """Stateful force loop with the same hold and integral behavior as PositionController."""

    def __init__(self, config: ForceControllerConfig, params: PlantParams):
        self.config = config
        self.params = params
        self.integral = 0.0
        self.last = ControlOutput(rho=config.rho_F)

    def desired(self, refs: Sequence[float], state: PlantState, q_ddot_est: float) -> tuple[float, float, float]:
        q_dot = state.q_dot if self.config.link_velocity_feedforward else 0.0
        return theta_des(refs[0], refs[1], refs[2], state.q, q_dot, q_ddot_est, self.params.k_n)

    def step(
        self,
        state: PlantState,
        est: DisturbanceEstimates,
        refs: Sequence[float],
        q_ddot_est: float,
        theta_ddot_est: float,
        dt: float,
        t: float = 0.0,
    ) -> ControlOutput:
        if not est.is_finite():
            logger.warning("Rejected non-finite disturbance estimate, holding the previous torque")
            self.last = ControlOutput(self.last.tau_m, self.last.sigma, self.last.switch, self.last.rho, self.last.error, True)
            return self.last

        cfg = self.config
        rho = cfg.rho_at(t)
        d_hat = est.d4 if cfg.estimate_terms else _model_only(state, self.params).d4
        desired = self.desired(refs, state, q_ddot_est)
        e_F = desired[0] - state.theta
        e_F_dot = desired[1] - state.theta_dot

        if cfg.mode == "continuous":
            e_F_ddot = desired[2] - theta_ddot_est
            sigma = continuous_sliding_variables((e_F, e_F_dot, e_F_ddot), cfg.ct)
            switch = sign(sigma)
            self.integral += dt * rho * switch * self.params.Jm_n
        else:
            sigma = sliding_variable_force(e_F, e_F_dot, cfg)
            switch = _switch(sigma, cfg.mode, cfg.epsilon)

        tau_m = force_control(state.theta, state.theta_dot, desired, d_hat, cfg, self.params.Jm_n, self.integral, rho)
        self.last = ControlOutput(tau_m, sigma, switch, rho, e_F)
        return self.last


class OpenLoopController:
    def __init__(self, config: OpenLoopConfig):
        self.config = config

    def step(self, t: float) -> ControlOutput:
        return ControlOutput(tau_m=self.config.torque(t))
