"""Fixed-step closed-loop simulation of the SEA with observer and controller in the loop."""

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Any, Optional, Sequence, Union

import numpy as np

from sea_smc.control import (
    ControllerConfig,
    ControlOutput,
    ForceController,
    ForceControllerConfig,
    OpenLoopConfig,
    OpenLoopController,
    PositionController,
    PositionControllerConfig,
)
from sea_smc.dynamics import environment_torque, plant_derivative, state_space_matrices
from sea_smc.errors import DivergenceError
from sea_smc.integrators import METHODS, Method, integrate_step
from sea_smc.observer import ObserverConfig
from sea_smc.schema import NOMINAL_NAMES, DisturbanceProfile, EnvironmentModel, PlantParams, PlantState, ReferenceTrajectory

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "t",
    "q",
    "qd",
    "theta",
    "thetad",
    "tau_m",
    "tau_s",
    "ref",
    "sigma",
    "d2_true",
    "d2_hat",
    "d4_true",
    "d4_hat",
    "tau_env",
)


@dataclass
class SimConfig:
    """Loop timing, sensing and safety limits"""

    dt: float = 5e-4  # s, 2 kHz
    duration: float = 1.0  # s
    integrator: Method = "rk4"
    motor_encoder_ppr: int = 2048
    link_encoder_ppr: int = 1024
    quantization_enabled: bool = False
    deriv_filter_bw: float = 200.0  # rad/s
    rng_seed: int = 0
    torque_limit: Optional[float] = None  # N·m, symmetric
    start_on_reference: bool = False
    plant_substeps: int = 2
    divergence_limit: float = 1e6

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.duration >= self.dt:
            raise ValueError(f"duration must be at least dt, got {self.duration}")
        if self.integrator not in METHODS:
            raise ValueError(f"unknown integrator '{self.integrator}', expected one of {METHODS}")
        for name in ("motor_encoder_ppr", "link_encoder_ppr", "plant_substeps"):
            value = getattr(self, name)
            if int(value) != value or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value}")
        if not self.deriv_filter_bw > 0:
            raise ValueError(f"deriv_filter_bw must be positive, got {self.deriv_filter_bw}")
        if self.torque_limit is not None and not self.torque_limit > 0:
            raise ValueError(f"torque_limit must be positive, got {self.torque_limit}")
        if not self.divergence_limit > 0:
            raise ValueError(f"divergence_limit must be positive, got {self.divergence_limit}")

    @property
    def samples(self) -> int:
        return int(round(self.duration / self.dt)) + 1


def quantize_encoder(angle: float, ppr: int) -> float:
    """Angle as read by a quadrature encoder of `ppr` pulses per revolution."""
    if ppr <= 0:
        raise ValueError(f"ppr must be positive, got {ppr}")
    resolution = 2 * math.pi / (4 * ppr)
    return math.floor(angle / resolution + 1e-9) * resolution


class FilteredDerivative:
    """Backward difference followed by a first-order low-pass of bandwidth `bw`.

    The discrete time constant is shortened by half a sample to absorb the
    delay of the difference. The first output is 0.
    """

    def __init__(self, bw: float, dt: float):
        if not bw > 0:
            raise ValueError(f"filter bandwidth must be positive, got {bw}")
        self.dt = dt
        self.alpha = dt / (1 / bw + dt / 2)
        self.prev: Optional[float] = None
        self.value = 0.0

    def update(self, x: float) -> float:
        if self.prev is None:
            self.prev = x
            return self.value
        raw = (x - self.prev) / self.dt
        self.prev = x
        self.value += self.alpha * (raw - self.value)
        return self.value


def filtered_derivative(samples: Sequence[float], bw: float, dt: float) -> np.ndarray:
    filt = FilteredDerivative(bw, dt)
    return np.array([filt.update(float(x)) for x in samples])


@dataclass
class Trace:
    """Uniformly sampled record of one run"""

    dt: float
    columns: dict[str, np.ndarray]
    extras: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in list(self.columns.values()) + list(self.extras.values())}
        if len(lengths) > 1:
            raise ValueError(f"trace columns differ in length: {sorted(lengths)}")

    def __getitem__(self, name: str) -> np.ndarray:
        if name in self.columns:
            return self.columns[name]
        return self.extras[name]

    def __contains__(self, name: str) -> bool:
        return name in self.columns or name in self.extras

    def __len__(self) -> int:
        return len(self.columns["t"])

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    def window(self, start: Optional[float] = None, stop: Optional[float] = None) -> np.ndarray:
        """Boolean mask of samples with start ≤ t ≤ stop."""
        mask = np.ones(len(self), dtype=bool)
        tol = 1e-9 * max(1.0, abs(self.dt))
        if start is not None:
            mask &= self.t >= start - tol
        if stop is not None:
            mask &= self.t <= stop + tol
        return mask

    def table(self) -> np.ndarray:
        return np.column_stack([self.columns[name] for name in CSV_COLUMNS])


def save_trace(trace: Trace, path: str) -> None:
    """Writes the fixed CSV columns with 9 significant digits."""
    np.savetxt(path, trace.table(), fmt="%.9g", delimiter=",", header=",".join(CSV_COLUMNS), comments="")
    logger.info(f"Saved {len(trace)} samples to {path}")


def load_trace(path: str, dt: Optional[float] = None) -> Trace:
    with open(path, "r") as f:
        header = f.readline().strip().split(",")
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected trace header {header}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    columns = {name: data[:, i].copy() for i, name in enumerate(CSV_COLUMNS)}
    if dt is None:
        t = columns["t"]
        dt = float(t[1] - t[0]) if len(t) > 1 else 0.0
    return Trace(dt=dt, columns=columns)


def reference_initial_state(params: PlantParams, reference: ReferenceTrajectory) -> PlantState:
    """Initial state on the reference with zero second and third tracking-error derivatives (nominal model)."""
    qd, qd_dot, qd_ddot, qd_dddot, _ = reference.position(0.0)
    K = params.K
    beta = params.bl_n / params.Jl_n
    return PlantState(
        q=qd,
        q_dot=qd_dot,
        theta=qd + (qd_ddot + beta * qd_dot) / K,
        theta_dot=qd_dot + (qd_dddot + beta * qd_ddot) / K,
    )


def _mode(controller: ControllerConfig) -> str:
    if isinstance(controller, PositionControllerConfig):
        return "position"
    if isinstance(controller, ForceControllerConfig):
        return "force"
    if isinstance(controller, OpenLoopConfig):
        return "open_loop"
    raise ValueError(f"unsupported controller configuration {type(controller).__name__}")


def _check_compatible(mode: str, reference: ReferenceTrajectory, observer: ObserverConfig) -> None:
    if mode == "position" and observer.order != 2:
        raise ValueError("position control needs the second-order observer (observer.order = 2)")
    if mode != "open_loop" and reference.mode != mode:
        raise ValueError(f"{mode} controller cannot track a {reference.mode} reference")


def run_scenario(
    plant: PlantParams,
    env: Optional[EnvironmentModel],
    dist: DisturbanceProfile,
    controller: ControllerConfig,
    observer: ObserverConfig,
    reference: ReferenceTrajectory,
    sim: SimConfig,
    initial: Optional[PlantState] = None,
    name: str = "scenario",
) -> Trace:
    """Runs the closed loop and returns its trace.

    Every sample measures the state, advances the observer over the last
    interval, computes and saturates the torque, records the sample and then
    integrates the true plant with that torque held until the next sample.
    Raises DivergenceError with the sample index when the state blows up.
    """
    mode = _mode(controller)
    _check_compatible(mode, reference, observer)

    params = dist.apply(plant)
    dt, n = sim.dt, sim.samples
    if initial is None:
        initial = PlantState()
    if sim.start_on_reference and mode == "position":
        initial = reference_initial_state(plant, reference)
    x = initial.to_array()

    dob = observer.build(plant, sim.integrator)
    ctrl: Union[PositionController, ForceController, OpenLoopController]
    if isinstance(controller, PositionControllerConfig):
        ctrl = PositionController(controller, plant)
    elif isinstance(controller, ForceControllerConfig):
        ctrl = ForceController(controller, plant)
    else:
        ctrl = OpenLoopController(controller)

    dq = FilteredDerivative(sim.deriv_filter_bw, dt)
    dtheta = FilteredDerivative(sim.deriv_filter_bw, dt)
    ddq = FilteredDerivative(sim.deriv_filter_bw, dt)
    ddtheta = FilteredDerivative(sim.deriv_filter_bw, dt)

    A_n, b_n = state_space_matrices(plant)
    K = plant.K

    cols = {name: np.zeros(n) for name in CSV_COLUMNS}
    extras = {
        "dis_true": np.zeros((n, 4)),
        "dis_hat": np.zeros((n, 4)),
        "dis_dot_hat": np.zeros((n, 4)),
        "dis_ddot_hat": np.zeros((n, 4)),
        "switch": np.zeros(n),
        "rho": np.zeros(n),
        "error": np.zeros(n),
        "held": np.zeros(n),
    }

    logger.info(f"Running '{name}': {mode} control, {n} samples at dt={dt:g} s")
    h = dt / sim.plant_substeps
    for k in range(n):
        t = k * dt
        state = PlantState.from_array(x)

        # Measure
        if sim.quantization_enabled:
            q_m = quantize_encoder(state.q, sim.link_encoder_ppr)
            theta_m = quantize_encoder(state.theta, sim.motor_encoder_ppr)
            measured = PlantState(q_m, dq.update(q_m), theta_m, dtheta.update(theta_m))
        else:
            measured = state
        q_ddot_est = ddq.update(measured.q_dot)
        theta_ddot_est = ddtheta.update(measured.theta_dot)
        xi = measured.to_array()

        # Estimate
        est = dob.update(t, xi)

        # Control
        refs = reference.values(t) if mode != "open_loop" else (0.0,)
        out: ControlOutput
        if isinstance(ctrl, PositionController):
            out = ctrl.step(measured, est, refs, theta_ddot_est, dt, t=t)
        elif isinstance(ctrl, ForceController):
            out = ctrl.step(measured, est, refs, q_ddot_est, theta_ddot_est, dt, t=t)
        else:
            out = ctrl.step(t)
        tau = out.tau_m
        if sim.torque_limit is not None:
            tau = float(np.clip(tau, -sim.torque_limit, sim.torque_limit))
        dob.hold(tau)

        # Record
        deriv = plant_derivative(params, state, tau, dist, env, t)
        q_ddot, theta_ddot = float(deriv[1]), float(deriv[3])
        cols["t"][k] = t
        cols["q"][k], cols["qd"][k], cols["theta"][k], cols["thetad"][k] = x
        cols["tau_m"][k] = tau
        cols["tau_s"][k] = params.k * (state.theta - state.q)
        cols["ref"][k] = refs[0] if mode != "open_loop" else 0.0
        cols["sigma"][k] = out.sigma
        if mode != "force":
            cols["d2_true"][k] = K * state.theta - q_ddot
            cols["d2_hat"][k] = est.d2
        cols["d4_true"][k] = tau / plant.Jm_n - theta_ddot
        cols["d4_hat"][k] = est.d4
        cols["tau_env"][k] = environment_torque(env, state, q_ddot, t) if env is not None else 0.0
        extras["dis_true"][k] = A_n @ x + b_n * tau - deriv
        extras["dis_hat"][k] = est.tau_dis
        extras["dis_dot_hat"][k] = est.tau_dis_dot
        extras["dis_ddot_hat"][k] = est.tau_dis_ddot
        extras["switch"][k] = out.switch
        extras["rho"][k] = out.rho
        extras["error"][k] = out.error
        extras["held"][k] = float(out.held)

        if k == n - 1:
            break

        # Integrate
        def f(s: float, y: np.ndarray) -> np.ndarray:
            return plant_derivative(params, PlantState.from_array(y), tau, dist, env, s)

        try:
            for j in range(sim.plant_substeps):
                x = integrate_step(f, x, h, sim.integrator, t + j * h)
        except (ValueError, FloatingPointError) as e:
            logger.error(f"Run '{name}' diverged at sample {k + 1}: {e}")
            raise DivergenceError(f"state became non-finite: {e}", k + 1, t + dt) from e
        if np.max(np.abs(x)) > sim.divergence_limit:
            logger.error(f"Run '{name}' diverged at sample {k + 1}: |state| = {np.max(np.abs(x)):.3g}")
            raise DivergenceError(f"state exceeded {sim.divergence_limit:g}", k + 1, t + dt)

    if extras["held"].any():
        logger.warning(f"Run '{name}' held the controller output on {int(extras['held'].sum())} samples")
    logger.info(f"Finished '{name}' at t={cols['t'][-1]:.6g} s")

    return Trace(dt=dt, columns=cols, extras=extras, meta=run_meta(name, plant, controller, observer, sim))


def gain_schedule(controller: ControllerConfig, t: np.ndarray) -> np.ndarray:
    """Switching gain ρ at each sample time, zero for open loop."""
    if isinstance(controller, (PositionControllerConfig, ForceControllerConfig)):
        return np.array([controller.rho_at(float(s)) for s in t])
    return np.zeros(len(t))


def run_meta(
    name: str, plant: PlantParams, controller: ControllerConfig, observer: ObserverConfig, sim: SimConfig
) -> dict[str, Any]:
    """Trace metadata: enough of the loop configuration to analyze a trace without rerunning it."""
    meta: dict[str, Any] = {
        "name": name,
        "mode": _mode(controller),
        "seed": sim.rng_seed,
        "rho": 0.0,
        "mu": getattr(controller, "mu", None),
        "observer_order": observer.order,
        "observer_decay_rate": observer.decay_rate(),
        "observer_gains": list(observer.resolved_gains().as_tuple()) if observer.order == 2 else None,
        "plant": {n: getattr(plant, n) for n in NOMINAL_NAMES},
        "deriv_filter_bw": sim.deriv_filter_bw,
    }
    if isinstance(controller, (PositionControllerConfig, ForceControllerConfig)):
        settings = {f.name: getattr(controller, f.name) for f in fields(controller) if f.name != "rho_schedule"}
        settings["ct"] = list(settings["ct"])
        meta["controller"] = settings
        meta["rho"] = controller.rho_at(0.0)
    return meta
