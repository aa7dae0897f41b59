"""Schema for the plant, environment, disturbances and references of a scenario."""

import math
from dataclasses import dataclass, field, fields, replace
from typing import Literal

import numpy as np

from sea_smc.signals import Signal, Zero

NOMINAL_NAMES = ("Jm_n", "Jl_n", "bm_n", "bl_n", "k_n")
TRUE_NAMES = ("Jm", "Jl", "bm", "bl", "k")


@dataclass
class PlantParams:
    """Nominal and true SEA parameters, defaulting to a small benchtop SEA"""

    Jm_n: float = 2.2e-6  # kg·m²
    Jl_n: float = 4e-6  # kg·m²
    bm_n: float = 0.0  # N·m·s/rad
    bl_n: float = 0.0  # N·m·s/rad
    k_n: float = 0.14  # N·m/rad
    # True values, NaN means equal to nominal
    Jm: float = math.nan
    Jl: float = math.nan
    bm: float = math.nan
    bl: float = math.nan
    k: float = math.nan

    def __post_init__(self):
        for nominal, true in zip(NOMINAL_NAMES, TRUE_NAMES):
            if math.isnan(getattr(self, true)):
                setattr(self, true, getattr(self, nominal))
        for name in ("Jm_n", "Jl_n", "k_n", "Jm", "Jl", "k"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value}")
        for name in ("bm_n", "bl_n", "bm", "bl"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be nonnegative and finite, got {value}")

    @property
    def K(self) -> float:
        """Nominal spring-to-link gain k_n/Jl_n (1/s²)."""
        return self.k_n / self.Jl_n

    @property
    def alpha_p(self) -> float:
        """Position-loop input gain k_n/(Jm_n·Jl_n)."""
        return self.k_n / (self.Jm_n * self.Jl_n)

    def perturbed(self, **fractions: float) -> "PlantParams":
        """Returns a copy whose true parameters are nominal·(1 + fraction)."""
        changes = {}
        for name, fraction in fractions.items():
            if name not in TRUE_NAMES:
                raise ValueError(f"cannot perturb unknown parameter '{name}', expected one of {TRUE_NAMES}")
            changes[name] = getattr(self, f"{name}_n") * (1 + fraction)
        return replace(self, **changes)


@dataclass
class PlantState:
    """Link and motor state ξ = [q, q̇, θ, θ̇]"""

    q: float = 0.0  # rad
    q_dot: float = 0.0  # rad/s
    theta: float = 0.0  # rad
    theta_dot: float = 0.0  # rad/s

    def to_array(self) -> np.ndarray:
        return np.array([self.q, self.q_dot, self.theta, self.theta_dot], dtype=float)

    @classmethod
    def from_array(cls, x) -> "PlantState":
        return cls(*(float(v) for v in x))

    def is_finite(self) -> bool:
        return all(math.isfinite(getattr(self, f.name)) for f in fields(self))


ContactMode = Literal["always", "unilateral"]


@dataclass
class EnvironmentModel:
    """Mass-damper-spring environment touching the link"""

    Je: float = 0.0  # kg·m²
    De: float = 0.0  # N·m·s/rad
    Ke: float = 0.0  # N·m/rad
    qe: Signal = field(default_factory=Zero)  # rest angle, rad
    tau_a: Signal = field(default_factory=Zero)  # applied external torque, N·m
    contact_mode: ContactMode = "always"

    def __post_init__(self):
        for name in ("Je", "De", "Ke"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be nonnegative and finite, got {value}")
        if self.contact_mode not in ("always", "unilateral"):
            raise ValueError(f"contact_mode must be 'always' or 'unilateral', got '{self.contact_mode}'")


@dataclass
class DisturbanceProfile:
    """Scripted internal and external disturbance sources"""

    gravity_mgl: float = 0.0  # N·m, τg = mgl·sin(q)
    tau_m_ud: Signal = field(default_factory=Zero)  # motor-side unknown disturbance, N·m
    tau_l_ud: Signal = field(default_factory=Zero)  # link-side unknown disturbance, N·m
    perturbations: dict[str, float] = field(default_factory=dict)  # true parameter -> relative change

    def gravity(self, q: float) -> float:
        return self.gravity_mgl * math.sin(q)

    def apply(self, params: PlantParams) -> PlantParams:
        """Returns the plant with this profile's parameter perturbations applied."""
        if not self.perturbations:
            return params
        return params.perturbed(**self.perturbations)


ReferenceMode = Literal["position", "force"]


@dataclass
class ReferenceTrajectory:
    """Desired link angle (position mode) or spring torque (force mode) with its derivatives"""

    mode: ReferenceMode = "position"
    signal: Signal = field(default_factory=Zero)

    def __post_init__(self):
        if self.mode not in ("position", "force"):
            raise ValueError(f"reference mode must be 'position' or 'force', got '{self.mode}'")

    @property
    def order(self) -> int:
        return 4 if self.mode == "position" else 2

    def position(self, t: float) -> tuple[float, ...]:
        """q_des and its first four derivatives."""
        return self.signal.derivatives(t, 4)

    def force(self, t: float) -> tuple[float, ...]:
        """τs_des and its first two derivatives."""
        return self.signal.derivatives(t, 2)

    def values(self, t: float) -> tuple[float, ...]:
        return self.signal.derivatives(t, self.order)

    def check_consistency(self, horizon: float, samples: int = 16, rtol: float = 0.01, seed: int = 0) -> None:
        """Checks each derivative channel against a centered difference of the previous one at random times.

        Raises ValueError naming the first inconsistent channel.
        """
        rng = np.random.default_rng(seed)
        h = 1e-6 * max(1.0, horizon)
        times = rng.uniform(h, max(horizon, 2 * h) - h, size=samples)
        for t in times:
            lower = np.array(self.signal.derivatives(t - h, self.order))
            upper = np.array(self.signal.derivatives(t + h, self.order))
            exact = np.array(self.signal.derivatives(t, self.order))
            scale = 1e-9 * (1.0 + np.abs(exact))
            for n in range(self.order):
                estimate = (upper[n] - lower[n]) / (2 * h)
                if abs(estimate - exact[n + 1]) > rtol * max(abs(exact[n + 1]), abs(estimate)) + scale[n + 1] / h:
                    raise ValueError(
                        f"reference derivative {n + 1} is inconsistent at t={t:.6g}: "
                        f"analytic {exact[n + 1]:.6g}, finite difference {estimate:.6g}"
                    )
