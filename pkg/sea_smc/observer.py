"""Second-order and zero-order disturbance observers.

The second-order observer estimates the normalized disturbance vector τdis of
ξ̇ = A_n·ξ + b_n·τm − τdis together with its first two derivatives through the
auxiliary variables z1, z2, z3. The zero-order observer estimates the scalar
matched disturbance d of θ̈ = τm/Jm^n − d used by the force loop.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Union

import numpy as np
from scipy.linalg import expm

from sea_smc.dynamics import state_space_matrices
from sea_smc.integrators import Method, integrate_step
from sea_smc.schema import PlantParams

logger = logging.getLogger(__name__)

GainTuple = tuple[float, float, float]


def _routh_hurwitz(L1: float, L2: float, L3: float) -> bool:
    return L1 > 0 and L3 > 0 and L1 * L2 > L3


@dataclass(frozen=True)
class ObserverGains:
    """Gains of the error cubic λ³ + L1λ² + L2λ + L3"""

    L1: float
    L2: float
    L3: float
    g_dob: Optional[float] = None  # rad/s, when derived from a bandwidth

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.L1, self.L2, self.L3)):
            raise ValueError(f"observer gains must be finite, got ({self.L1}, {self.L2}, {self.L3})")
        if not _routh_hurwitz(self.L1, self.L2, self.L3):
            raise ValueError(
                f"observer gains ({self.L1:g}, {self.L2:g}, {self.L3:g}) are not Hurwitz: "
                f"need L1 > 0, L3 > 0 and L1·L2 > L3"
            )

    def as_tuple(self) -> GainTuple:
        return (self.L1, self.L2, self.L3)


def tune_gains(g_dob: float) -> ObserverGains:
    """Places the triple observer pole at −g_dob: (3g, 3g², g³)."""
    if not g_dob > 0:
        raise ValueError(f"observer bandwidth must be positive, got {g_dob}")
    return ObserverGains(3 * g_dob, 3 * g_dob**2, g_dob**3, g_dob)


def characteristic_roots(gains: Union[ObserverGains, GainTuple]) -> tuple[list[complex], bool]:
    """Roots of λ³ + L1λ² + L2λ + L3 in closed form, and whether all lie in the open left half-plane.

    Each root appears four times in the full 12×12 error dynamics. The closed
    form keeps repeated roots exact where a companion-matrix solver would split them.
    """
    a, b, c = gains.as_tuple() if isinstance(gains, ObserverGains) else gains
    shift = a / 3
    p = b - a * a / 3
    q = 2 * a**3 / 27 - a * b / 3 + c

    scale = max(abs(shift), math.sqrt(abs(b)), abs(c) ** (1 / 3), 1e-300)
    if abs(p) <= 1e-12 * scale**2 and abs(q) <= 1e-12 * scale**3:
        ys: list[complex] = [0j, 0j, 0j]
    else:
        disc = (q / 2) ** 2 + (p / 3) ** 3
        if disc > 0:
            u = float(np.cbrt(-q / 2 + math.sqrt(disc)))
            v = float(np.cbrt(-q / 2 - math.sqrt(disc)))
            real = -(u + v) / 2
            imag = math.sqrt(3) / 2 * (u - v)
            ys = [complex(u + v), complex(real, imag), complex(real, -imag)]
        else:
            radius = 2 * math.sqrt(-p / 3)
            arg = max(-1.0, min(1.0, (3 * q / (2 * p)) * math.sqrt(-3 / p)))
            phi = math.acos(arg) / 3
            ys = [complex(radius * math.cos(phi - 2 * math.pi * k / 3)) for k in range(3)]

    roots = [y - shift for y in ys]
    hurwitz = all(r.real < 0 for r in roots) and _routh_hurwitz(a, b, c)
    return roots, hurwitz


def slowest_decay_rate(gains: ObserverGains) -> float:
    """min |Re λ| over the observer roots."""
    roots, _ = characteristic_roots(gains)
    return min(abs(r.real) for r in roots)


@dataclass
class ObserverState:
    """Auxiliary variables of the second-order observer"""

    z1: np.ndarray = field(default_factory=lambda: np.zeros(4))
    z2: np.ndarray = field(default_factory=lambda: np.zeros(4))
    z3: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.z1, self.z2, self.z3])

    @classmethod
    def from_array(cls, z: np.ndarray) -> "ObserverState":
        z = np.asarray(z, dtype=float)
        return cls(z[0:4].copy(), z[4:8].copy(), z[8:12].copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.to_array())))


@dataclass
class DisturbanceEstimates:
    """Estimated normalized disturbance, its derivatives and the controller channels"""

    tau_dis: np.ndarray = field(default_factory=lambda: np.zeros(4))  # rad/s² per channel
    tau_dis_dot: np.ndarray = field(default_factory=lambda: np.zeros(4))
    tau_dis_ddot: np.ndarray = field(default_factory=lambda: np.zeros(4))
    d2: float = 0.0  # Kθ − q̈, rad/s²
    d2_dot: float = 0.0
    d2_ddot: float = 0.0
    d4: float = 0.0  # τm/Jm^n − θ̈, rad/s²

    def is_finite(self) -> bool:
        values = np.concatenate([self.tau_dis, self.tau_dis_dot, self.tau_dis_ddot])
        scalars = (self.d2, self.d2_dot, self.d2_ddot, self.d4)
        return bool(np.all(np.isfinite(values))) and all(math.isfinite(v) for v in scalars)


def initial_state(xi: np.ndarray, gains: ObserverGains) -> ObserverState:
    """Auxiliary state whose extracted estimates are all zero for the given measurement."""
    xi = np.asarray(xi, dtype=float)
    L1, L2, L3 = gains.as_tuple()
    return ObserverState((L1 - L2 + L3) * xi, (L2 - L3) * xi, L3 * xi)


def auxiliary_state(estimates: np.ndarray, xi: np.ndarray, gains: ObserverGains) -> ObserverState:
    """Inverse of the estimate extraction: z1..z3 for stacked rows (τ̂dis, τ̂̇dis, τ̂̈dis) at measurement ξ."""
    w = np.asarray(estimates, dtype=float)
    xi = np.asarray(xi, dtype=float)
    L1, L2, L3 = gains.as_tuple()
    z3 = w[2] + L3 * xi
    z2 = w[1] + L2 * xi - z3
    z1 = w[0] + L1 * xi - z2
    return ObserverState(z1, z2, z3)


def observer_step_derivative(
    gains: ObserverGains, A_n: np.ndarray, b_n: np.ndarray, xi: np.ndarray, tau_m: float, obs: ObserverState
) -> ObserverState:
    """Right-hand side of the auxiliary-variable observer driven by the measured state."""
    xi = np.asarray(xi, dtype=float)
    if not (np.all(np.isfinite(xi)) and math.isfinite(tau_m) and obs.is_finite()):
        raise ValueError("observer inputs must be finite")
    L1, L2, L3 = gains.as_tuple()
    a = L1 - L2 + L3
    b2 = L2 - L3
    u = A_n @ xi + b_n * tau_m + L1 * xi
    s = obs.z1 + obs.z2
    return ObserverState(
        z1=-a * s + obs.z2 + a * u - b2 * xi,
        z2=-b2 * s + obs.z3 + b2 * u - L3 * xi,
        z3=-L3 * s + L3 * u,
    )


def extract_estimates(
    obs: ObserverState, xi: np.ndarray, gains: ObserverGains, params: PlantParams
) -> DisturbanceEstimates:
    """Solves the auxiliary-variable definitions for the disturbance and maps it to the controller channels."""
    xi = np.asarray(xi, dtype=float)
    L1, L2, L3 = gains.as_tuple()
    tau_dis = obs.z1 - L1 * xi + obs.z2
    tau_dis_dot = obs.z2 - L2 * xi + obs.z3
    tau_dis_ddot = obs.z3 - L3 * xi
    return channel_estimates(xi, tau_dis, tau_dis_dot, tau_dis_ddot, params)


def channel_estimates(
    xi: np.ndarray,
    tau_dis: np.ndarray,
    tau_dis_dot: np.ndarray,
    tau_dis_ddot: np.ndarray,
    params: PlantParams,
) -> DisturbanceEstimates:
    """Nominal-model part of d2, ḋ2, d̈2 and d4 plus the given normalized disturbance.

    With zero disturbance arguments this is the model-only prediction used by
    conventional SMC.
    """
    tau_dis = np.asarray(tau_dis, dtype=float)
    q, q_dot, theta, theta_dot = np.asarray(xi, dtype=float)
    K = params.k_n / params.Jl_n
    beta = params.bl_n / params.Jl_n
    d2 = K * q + beta * q_dot + tau_dis[1]
    d2_dot = K * q_dot + beta * (K * theta - d2) + tau_dis_dot[1]
    d2_ddot = K * (K * theta - d2) + beta * (K * theta_dot - d2_dot) + tau_dis_ddot[1]
    d4 = params.k_n / params.Jm_n * (theta - q) + params.bm_n / params.Jm_n * theta_dot + tau_dis[3]
    return DisturbanceEstimates(tau_dis, tau_dis_dot, tau_dis_ddot, float(d2), float(d2_dot), float(d2_ddot), float(d4))


def zero_order_dob_step(g: float, Jm_n: float, x2: float, tau_m: float, z: float) -> tuple[float, float]:
    """Returns (ż, d̂) with d̂ = z − g·x2 and ż = g·(τm/Jm^n − d̂)."""
    if not g > 0:
        raise ValueError(f"observer bandwidth must be positive, got {g}")
    d_hat = z - g * x2
    return g * (tau_m / Jm_n - d_hat), d_hat


class SecondOrderDob:
    """Sampled second-order observer.

    The estimates w = (τ̂dis, τ̂̇dis, τ̂̈dis) obey the linear system
    ẇ = F·w + L·(A_n·ξ + b_n·τm − ξ̇), so each interval is propagated exactly
    with a matrix exponential. The measured state is fitted with the quadratic
    through the last three samples and the torque is the one held over the
    interval. The states are scaled by powers of L3^(1/3) to keep the
    exponential well conditioned at high bandwidth.
    """

    order = 2

    def __init__(self, gains: ObserverGains, params: PlantParams):
        self.gains = gains
        self.params = params
        self.A_n, self.b_n = state_space_matrices(params)
        L1, L2, L3 = gains.as_tuple()
        self._scale = L3 ** (1 / 3)
        c = self._scale
        self._F = np.array([[-L1, c, 0.0], [-L2 / c, 0.0, c], [-L3 / c**2, 0.0, 0.0]])
        self._L = np.array([L1, L2 / c, L3 / c**2])
        self._D = np.array([1.0, c, c * c])
        self._w: Optional[np.ndarray] = None  # scaled estimates, 3×4
        self._transitions: dict[float, tuple[np.ndarray, np.ndarray]] = {}
        self._t = 0.0
        self._h = 0.0
        self._xi = np.zeros(4)
        self._xi_prev: Optional[np.ndarray] = None
        self._tau = 0.0

    @property
    def state(self) -> Optional[ObserverState]:
        """Auxiliary variables z1..z3 of the current estimate, None before the first update."""
        if self._w is None:
            return None
        return auxiliary_state(self._D[:, None] * self._w, self._xi, self.gains)

    def reset(self, t: float, xi: np.ndarray) -> None:
        self._t = t
        self._h = 0.0
        self._xi = np.asarray(xi, dtype=float).copy()
        self._xi_prev = None
        self._w = np.zeros((3, 4))
        logger.debug(f"Observer reset at t={t:.6g} s with L=({self.gains.L1:g}, {self.gains.L2:g}, {self.gains.L3:g})")

    def hold(self, tau_m: float) -> None:
        """Records the torque applied over the next interval."""
        self._tau = tau_m

    def _transition(self, h: float) -> tuple[np.ndarray, np.ndarray]:
        key = float(f"{h:.12g}")
        if key not in self._transitions:
            G = np.zeros((6, 6))
            G[:3, :3] = self._F
            G[:3, 3] = self._L
            G[3, 4] = G[4, 5] = 1.0
            phi = expm(h * G)
            self._transitions[key] = (phi[:3, :3], phi[:3, 3:])
        return self._transitions[key]

    def update(self, t: float, xi: np.ndarray) -> DisturbanceEstimates:
        xi = np.asarray(xi, dtype=float)
        if self._w is None:
            self.reset(t, xi)
        elif t > self._t:
            h = t - self._t
            slope = (xi - self._xi) / h
            curvature = np.zeros(4)
            if self._xi_prev is not None and self._h > 0:
                curvature = 2 * (slope - (self._xi - self._xi_prev) / self._h) / (self._h + h)
            v = slope - 0.5 * curvature * h
            # Driving term A_n·ξ + b_n·τm − ξ̇ and its derivatives at the start of the interval
            drive = np.vstack(
                [
                    self.A_n @ self._xi + self.b_n * self._tau - v,
                    self.A_n @ v - curvature,
                    self.A_n @ curvature,
                ]
            )
            phi, gamma = self._transition(h)
            w = phi @ self._w + gamma @ drive
            if not np.all(np.isfinite(w)):
                raise ValueError(f"observer state became non-finite at t={t:.6g} s")
            self._w = w
            self._xi_prev, self._xi = self._xi, xi.copy()
            self._t, self._h = t, h
        obs = self.state
        assert obs is not None
        return extract_estimates(obs, xi, self.gains, self.params)


class ZeroOrderDob:
    """Sampled zero-order observer of the matched disturbance d = τm/Jm^n − θ̈."""

    order = 0

    def __init__(self, g: float, params: PlantParams, method: Method = "rk4"):
        if not g > 0:
            raise ValueError(f"observer bandwidth must be positive, got {g}")
        self.g = g
        self.params = params
        self.method = method
        self.z: Optional[float] = None
        self._t = 0.0
        self._x2 = 0.0
        self._tau = 0.0

    def reset(self, t: float, xi: np.ndarray) -> None:
        self._t = t
        self._x2 = float(xi[3])
        self.z = self.g * self._x2

    def hold(self, tau_m: float) -> None:
        self._tau = tau_m

    def update(self, t: float, xi: np.ndarray) -> DisturbanceEstimates:
        xi = np.asarray(xi, dtype=float)
        x2 = float(xi[3])
        if self.z is None:
            self.reset(t, xi)
        elif t > self._t:
            t0, h = self._t, t - self._t
            x20, slope = self._x2, (x2 - self._x2) / h
            tau = self._tau

            def f(s: float, z: np.ndarray) -> np.ndarray:
                z_dot, _ = zero_order_dob_step(self.g, self.params.Jm_n, x20 + (s - t0) * slope, tau, float(z[0]))
                return np.array([z_dot])

            self.z = float(integrate_step(f, np.array([self.z]), h, self.method, t0)[0])
            self._t = t
            self._x2 = x2
        assert self.z is not None
        d_hat = self.z - self.g * x2

        # Express d̂ on the motor channel of τdis for a uniform trace layout
        q, _, theta, theta_dot = xi
        tau_dis = np.zeros(4)
        tau_dis[3] = d_hat - self.params.k_n / self.params.Jm_n * (theta - q) - self.params.bm_n / self.params.Jm_n * theta_dot
        return DisturbanceEstimates(tau_dis=tau_dis, d4=d_hat)


ObserverOrder = Literal[0, 2]


@dataclass
class ObserverConfig:
    """Observer selection: second order for position control, zero or second order for force control"""

    order: ObserverOrder = 2
    g_dob: float = 500.0  # rad/s
    gains: Optional[ObserverGains] = None  # explicit L1..L3, overrides g_dob for order 2

    def __post_init__(self):
        if self.order not in (0, 2):
            raise ValueError(f"observer order must be 0 or 2, got {self.order}")
        if not self.g_dob > 0:
            raise ValueError(f"observer bandwidth must be positive, got {self.g_dob}")

    def resolved_gains(self) -> ObserverGains:
        return self.gains if self.gains is not None else tune_gains(self.g_dob)

    def build(self, params: PlantParams, method: Method = "rk4") -> Union[SecondOrderDob, ZeroOrderDob]:
        if self.order == 2:
            return SecondOrderDob(self.resolved_gains(), params)
        return ZeroOrderDob(self.g_dob, params, method)

    def decay_rate(self) -> float:
        """Slowest estimation-error decay rate (1/s)."""
        if self.order == 2:
            return slowest_decay_rate(self.resolved_gains())
        return self.g_dob
