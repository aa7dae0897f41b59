"""Fixed-step integrators."""

from typing import Callable, Literal

import numpy as np

Method = Literal["euler", "rk4"]
METHODS = ("euler", "rk4")

Derivative = Callable[[float, np.ndarray], np.ndarray]


def integrate_step(f: Derivative, x: np.ndarray, dt: float, method: Method = "rk4", t: float = 0.0) -> np.ndarray:
    """Advances ẋ = f(t, x) by one step of size dt.

    Any input held by `f` stays constant across the step. Raises ValueError
    when dt is not positive and FloatingPointError when the result is not finite.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)

    if method == "euler":
        x_next = x + dt * f(t, x)
    elif method == "rk4":
        k1 = f(t, x)
        k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
        k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
        k4 = f(t + dt, x + dt * k3)
        x_next = x + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    else:
        raise ValueError(f"unknown integration method '{method}', expected one of {METHODS}")

    if not np.all(np.isfinite(x_next)):
        raise FloatingPointError(f"integration produced a non-finite state {x_next} at t={t + dt:.6g}")
    return x_next
