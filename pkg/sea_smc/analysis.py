"""Metrics and property checks computed from a Trace.

All functions are pure: they only read the trace and its metadata, so a saved
trace reloaded with its scenario yields the same report every time.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Optional, Sequence, Union

import numpy as np

from sea_smc.control import ForceControllerConfig, PositionControllerConfig
from sea_smc.observer import tune_gains
from sea_smc.schema import PlantParams
from sea_smc.sim import Trace, filtered_derivative

logger = logging.getLogger(__name__)

TRACKING_COLUMN = {"position": "q", "force": "tau_s", "open_loop": "q"}


def rmse(
    trace: Trace,
    column: str = "q",
    reference: str = "ref",
    window: Optional[tuple[Optional[float], Optional[float]]] = None,
) -> float:
    """Root-mean-square of reference − column over the window (whole trace by default)."""
    mask = trace.window(*window) if window is not None else np.ones(len(trace), dtype=bool)
    if not mask.any():
        raise ValueError(f"empty window {window} for a trace spanning [{trace.t[0]:g}, {trace.t[-1]:g}] s")
    error = trace[reference][mask] - trace[column][mask]
    return float(np.sqrt(np.mean(error**2)))


def chattering_index(tau_m: Sequence[float], dt: float) -> float:
    """Total variation of the torque per second (N·m/s)."""
    tau = np.asarray(tau_m, dtype=float)
    if len(tau) < 2:
        raise ValueError("chattering index needs at least 2 samples")
    return float(np.sum(np.abs(np.diff(tau))) / ((len(tau) - 1) * dt))


def boundary_layer(sigma: Sequence[float], steps: int = 3) -> float:
    """Width of the discrete-time sliding band: `steps` times the largest per-sample move of σ."""
    s = np.asarray(sigma, dtype=float)
    if len(s) < 2:
        return 0.0
    return float(steps * np.max(np.abs(np.diff(s))))


@dataclass
class LoopModel:
    """Nominal plant, controller and observer gains of the loop that produced a trace.

    Keys missing from the trace metadata fall back to the library defaults.
    """

    mode: str
    plant: PlantParams
    controller: Union[PositionControllerConfig, ForceControllerConfig, None]
    observer_gains: tuple[float, float, float]
    deriv_filter_bw: float = 200.0

    @classmethod
    def from_meta(cls, meta: Mapping[str, Any]) -> "LoopModel":
        mode = meta.get("mode", "position")
        if mode not in TRACKING_COLUMN:
            raise ValueError(f"unknown trace mode '{mode}'")
        plant = PlantParams(**meta.get("plant", {}))
        settings = dict(meta.get("controller", {}))
        if "ct" in settings:
            settings["ct"] = tuple(settings["ct"])
        controller: Union[PositionControllerConfig, ForceControllerConfig, None] = None
        if mode == "position":
            controller = PositionControllerConfig(**settings)
        elif mode == "force":
            controller = ForceControllerConfig(**settings)
        gains = meta.get("observer_gains") or tune_gains(500.0).as_tuple()
        return cls(mode, plant, controller, tuple(gains), float(meta.get("deriv_filter_bw", 200.0)))  # type: ignore[arg-type]

    @property
    def surface(self) -> Optional[str]:
        return self.controller.mode if self.controller is not None else None

    @property
    def input_gain(self) -> float:
        """Gain from τm to σ̇: αp for position, 1/Jm^n for force."""
        return self.plant.alpha_p if self.mode == "position" else 1.0 / self.plant.Jm_n

    @property
    def lifting_rate(self) -> float:
        """λ with σ̃ = σ̇ + λσ for the continuous-mode surface."""
        if isinstance(self.controller, PositionControllerConfig):
            return self.controller.ct[-1] - self.controller.c2p
        if isinstance(self.controller, ForceControllerConfig):
            return self.controller.ct[-1] - self.controller.c0F
        return 0.0


def switching_terms(
    trace: Trace, model: Optional[LoopModel] = None, rho: Optional[float] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Switching function s_k recomputed from σ and the controller mode, and the gain ρ_k of every sample."""
    model = model or LoopModel.from_meta(trace.meta)
    sigma = trace["sigma"]
    surface = model.surface
    if surface == "quasi":
        assert model.controller is not None
        switch = sigma / (np.abs(sigma) + model.controller.epsilon)
    elif surface is not None:
        switch = np.sign(sigma)
    else:
        switch = trace["switch"] if "switch" in trace else np.sign(sigma)
    if rho is not None:
        gains = np.full(len(trace), float(rho))
    elif "rho" in trace:
        gains = trace["rho"]
    else:
        gains = np.full(len(trace), float(trace.meta.get("rho", 0.0)))
    return switch, gains


def _derivative(values: np.ndarray, dt: float) -> np.ndarray:
    if len(values) < 2:
        return np.zeros_like(values)
    return np.gradient(values, dt)


def _model_channels(trace: Trace, plant: PlantParams) -> tuple[np.ndarray, np.ndarray]:
    """d2 and d4 predicted by the nominal model alone from the recorded state."""
    q, q_dot, theta, theta_dot = (trace[c] for c in ("q", "qd", "theta", "thetad"))
    d2 = plant.K * q + plant.bl_n / plant.Jl_n * q_dot
    d4 = plant.k_n / plant.Jm_n * (theta - q) + plant.bm_n / plant.Jm_n * theta_dot
    return d2, d4


def _estimated_channels(trace: Trace, model: LoopModel) -> tuple[np.ndarray, np.ndarray, float, float]:
    """(d̂2, d̂4, L1, L2) as used by the controller; model-only channels have no observer gains."""
    assert model.controller is not None
    if model.controller.estimate_terms:
        return trace["d2_hat"], trace["d4_hat"], model.observer_gains[0], model.observer_gains[1]
    d2, d4 = _model_channels(trace, model.plant)
    return d2, d4, 0.0, 0.0


def drift_mismatch(trace: Trace, model: Optional[LoopModel] = None) -> np.ndarray:
    """β − β̂ of the recorded surface at every sample, from the true and estimated disturbance columns.

    Position loop: K·(d4 − d̂4) + γ·(d2 − d̂2) with γ = c1 + (c2 − βl)(L1 − βl) + L2 − K,
    where the L terms account for the surface being built from d̂2 and the
    observer's own derivative estimates. Force loop: (d − d̂) plus the link
    terms that θ̈des and the feedforward leave out.
    """
    model = model or LoopModel.from_meta(trace.meta)
    n, dt = len(trace), trace.dt
    if model.controller is None:
        return np.zeros(n)
    p = model.plant
    d2_hat, d4_hat, L1, L2 = _estimated_channels(trace, model)

    if isinstance(model.controller, PositionControllerConfig):
        cfg = model.controller
        beta = p.bl_n / p.Jl_n
        gamma = cfg.c1p + (cfg.c2p - beta) * (L1 - beta) + L2 - p.K
        return p.K * (trace["d4_true"] - d4_hat) + gamma * (trace["d2_true"] - d2_hat)

    cfg = model.controller
    q_dot = trace["qd"]
    tau_ddot = _derivative(_derivative(trace["ref"], dt), dt)
    drift = trace["d4_true"] - d4_hat + tau_ddot / p.k_n
    drift = drift + (_derivative(q_dot, dt) if cfg.link_velocity_feedforward else cfg.c0F * q_dot)
    if cfg.use_link_accel:
        drift = drift - tau_ddot / p.k_n - filtered_derivative(q_dot, model.deriv_filter_bw, dt)
    return drift


def control_drift(trace: Trace, model: LoopModel, switch: np.ndarray, gains: np.ndarray) -> np.ndarray:
    """β̂ recovered from the applied torque and the switching term of the control law."""
    applied = model.input_gain * trace["tau_m"]
    if model.surface == "continuous":
        return applied - np.cumsum(trace.dt * gains * switch)
    return applied - gains * switch


def mismatch(trace: Trace, model: Optional[LoopModel] = None) -> np.ndarray:
    """Per-sample mismatch that the switching term of the surface actually switched on must dominate.

    For the continuous mode the surface is σ̃ = σ̇ + λσ, whose drift mismatch is
    d/dt(m + ψ) + λ(m − Σρs·dt), with ψ the part of σ̃ driven by the filtered
    acceleration estimates.
    """
    model = model or LoopModel.from_meta(trace.meta)
    m = drift_mismatch(trace, model)
    if model.surface != "continuous":
        return m

    dt, p = trace.dt, model.plant
    switch, gains = switching_terms(trace, model)
    applied = np.cumsum(dt * gains * switch)
    theta_dot = trace["thetad"]
    theta_ddot = trace["tau_m"] / p.Jm_n - trace["d4_true"]
    lag = theta_ddot - filtered_derivative(theta_dot, model.deriv_filter_bw, dt)
    _, d4_hat, _, _ = _estimated_channels(trace, model)
    if model.mode == "position":
        level = p.K * (trace["d4_true"] - d4_hat + lag)
    else:
        assert isinstance(model.controller, ForceControllerConfig)
        level = trace["d4_true"] - d4_hat + lag
        if not model.controller.use_link_accel:
            tau_ddot = _derivative(_derivative(trace["ref"], dt), dt)
            level = level + tau_ddot / p.k_n + filtered_derivative(trace["qd"], model.deriv_filter_bw, dt)
    return _derivative(level, dt) + model.lifting_rate * (m - applied)


@dataclass
class ReachingResult:
    time: float  # s, inf when the band is never reached
    bound: float  # s
    passed: bool


def verify_reaching(sigma: Sequence[float], dt: float, mu: float, layer: float) -> ReachingResult:
    """First entry of |σ| into the boundary layer against √2·|σ(t0)|/μ + 2dt."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    s = np.abs(np.asarray(sigma, dtype=float))
    bound = math.sqrt(2) / mu * float(s[0]) + 2 * dt
    inside = np.nonzero(s <= layer)[0]
    if len(inside) == 0:
        logger.info(f"σ never entered the boundary layer {layer:.3g}")
        return ReachingResult(math.inf, bound, False)
    time = float(inside[0] * dt)
    return ReachingResult(time, bound, time <= bound)


def dominance_bound(trace: Trace, model: Optional[LoopModel] = None) -> np.ndarray:
    """Largest mismatch over each sampling interval, one entry per interval.

    Between samples the torque is held while β̂ keeps moving with the state, so
    the mismatch at the end of an interval includes the change of β̂ across it.
    """
    model = model or LoopModel.from_meta(trace.meta)
    m = mismatch(trace, model)
    end = m[1:]
    if model.controller is not None and model.surface != "continuous":
        switch, gains = switching_terms(trace, model)
        end = end + np.diff(control_drift(trace, model, switch, gains))
    return np.maximum(np.abs(m[:-1]), np.abs(end))


def verify_lyapunov(
    trace: Trace,
    rho: Optional[float] = None,
    layer: Optional[float] = None,
    delta_beta: Optional[float] = None,
) -> int:
    """Counts samples outside the boundary layer where the switching term dominates yet V = σ²/2 does not decrease.

    Dominance compares ρ·|s_k| with the mismatch reconstructed from the true
    and estimated disturbances over the interval, or with `delta_beta` when a
    design bound is asserted instead of measured.
    """
    sigma = trace["sigma"]
    if len(sigma) < 2:
        return 0
    model = LoopModel.from_meta(trace.meta)
    switch, gains = switching_terms(trace, model, rho)
    if layer is None:
        layer = boundary_layer(sigma)
    bound = np.full(len(sigma) - 1, abs(delta_beta)) if delta_beta is not None else dominance_bound(trace, model)
    dominant = gains[:-1] * np.abs(switch[:-1]) > bound
    outside = np.abs(sigma[:-1]) > layer
    not_decreasing = sigma[1:] ** 2 - sigma[:-1] ** 2 >= 0
    violations = int(np.sum(outside & dominant & not_decreasing))
    if violations:
        logger.info(f"Lyapunov check found {violations} violations outside |σ| > {layer:.3g}")
    return violations
@dataclass
class ObserverErrorReport:
    """Estimation error of τdis against the input-to-state bound"""

    max_error: list[float]  # per channel, whole run
    steady_error: list[float]  # per channel, steady window
    steady_norm: float
    delta: float  # max ‖τ̈dis‖ over the steady window
    decay_rate: float  # min |Re λ| of the observer
    bound: float  # δ/decay_rate
    passed: bool


def observer_error_report(
    trace: Trace,
    window: Optional[tuple[Optional[float], Optional[float]]] = None,
    decay_rate: Optional[float] = None,
    factor: float = 2.0,
    atol: float = 1e-6,
) -> ObserverErrorReport:
    """Measured observer error against λmin⁻¹·δ, where δ bounds the second derivative of the true τdis.

    The steady window defaults to the second half of the run.
    """
    true = trace["dis_true"]
    error = true - trace["dis_hat"]
    if window is None:
        window = (trace.t[0] + 0.5 * (trace.t[-1] - trace.t[0]), None)
    mask = trace.window(*window)
    if mask.sum() < 3:
        raise ValueError(f"steady window {window} holds fewer than 3 samples")
    rate = decay_rate if decay_rate is not None else float(trace.meta["observer_decay_rate"])

    idx = np.nonzero(mask)[0]
    lo, hi = max(idx[0], 1), min(idx[-1], len(trace) - 2)
    second = (true[lo + 1 : hi + 2] - 2 * true[lo : hi + 1] + true[lo - 1 : hi]) / trace.dt**2
    delta = float(np.max(np.linalg.norm(second, axis=1))) if len(second) else 0.0

    steady = np.abs(error[mask])
    steady_norm = float(np.max(np.linalg.norm(error[mask], axis=1)))
    bound = delta / rate
    tolerance = atol * max(1.0, float(np.max(np.abs(true))))
    return ObserverErrorReport(
        max_error=[float(v) for v in np.max(np.abs(error), axis=0)],
        steady_error=[float(v) for v in np.max(steady, axis=0)],
        steady_norm=steady_norm,
        delta=delta,
        decay_rate=rate,
        bound=bound,
        passed=steady_norm <= factor * bound + tolerance,
    )


def overshoot(trace: Trace, column: str = "tau_env", target: Optional[float] = None) -> float:
    """Peak of the column above the target (final reference by default)."""
    goal = float(trace["ref"][-1]) if target is None else target
    return float(np.max(trace[column]) - goal)


def is_monotone(values: Sequence[float], increasing: bool = True, strict: bool = False, rtol: float = 1e-9) -> bool:
    """Whether the sequence is (strictly) increasing or decreasing, with a relative tolerance for ties."""
    v = np.asarray(values, dtype=float)
    for a, b in zip(v[:-1], v[1:]):
        step = b - a if increasing else a - b
        tol = rtol * max(abs(a), abs(b))
        if strict and step <= tol:
            return False
        if not strict and step < -tol:
            return False
    return True



@dataclass
class MetricsReport:
    """Summary metrics of one run"""

    rmse_tracking: float  # rad or N·m
    chattering_index: float  # N·m/s
    reaching_time: float  # s
    reaching_bound: float  # s
    reaching_passed: bool
    lyapunov_violations: int
    max_estimation_error: dict[str, float] = field(default_factory=dict)  # rad/s² per channel
    delta_beta_measured: float = 0.0
    boundary_layer: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(
    trace: Trace,
    mode: Optional[str] = None,
    window: Optional[tuple[Optional[float], Optional[float]]] = None,
    mu: Optional[float] = None,
) -> MetricsReport:
    """Tracking, chattering, reaching and Lyapunov metrics of a trace.

    Only the CSV columns, the gain schedule and the metadata are read, so a
    trace reloaded with its scenario reproduces the report of the original run.
    """
    mode = mode or trace.meta.get("mode", "position")
    if mode not in TRACKING_COLUMN:
        raise ValueError(f"unknown trace mode '{mode}'")
    mu = mu if mu is not None else (trace.meta.get("mu") or 1.0)

    sigma = trace["sigma"]
    layer = boundary_layer(sigma)
    m = mismatch(trace, LoopModel.from_meta({**trace.meta, "mode": mode}))
    reaching = verify_reaching(sigma, trace.dt, mu, layer)

    estimation = {"d4": float(np.max(np.abs(trace["d4_true"] - trace["d4_hat"])))}
    if mode != "force":
        estimation["d2"] = float(np.max(np.abs(trace["d2_true"] - trace["d2_hat"])))

    return MetricsReport(
        rmse_tracking=rmse(trace, TRACKING_COLUMN[mode], "ref", window),
        chattering_index=chattering_index(trace["tau_m"], trace.dt) if len(trace) > 1 else 0.0,
        reaching_time=reaching.time,
        reaching_bound=reaching.bound,
        reaching_passed=reaching.passed,
        lyapunov_violations=verify_lyapunov(trace, layer=layer),
        max_estimation_error=estimation,
        delta_beta_measured=float(np.max(np.abs(m))) if len(m) else 0.0,
        boundary_layer=layer,
    )
