"""Time signals used as references, disturbances and scripted external torques.

Every signal is a scalar function of time that also reports its analytic time
derivatives, so position references can feed the fourth-order sliding surface
without numeric differentiation.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.signal import butter, sosfiltfilt
from scipy.signal.windows import tukey

logger = logging.getLogger(__name__)

# Degree-9 transition with zero derivatives up to order 4 at both ends
SMOOTHSTEP = Polynomial([0, 0, 0, 0, 0, 126, -420, 540, -315, 70])


class Signal:
    """Scalar waveform of time."""

    def __call__(self, t: float) -> float:
        return self.derivatives(t, 0)[0]

    def derivatives(self, t: float, order: int) -> tuple[float, ...]:
        """Returns the value and its first `order` time derivatives at `t`."""
        raise NotImplementedError


@dataclass
class Zero(Signal):
    def derivatives(self, t: float, order: int) -> tuple[float, ...]:
        return (0.0,) * (order + 1)


@dataclass
class Constant(Signal):
    value: float = 0.0

    def derivatives(self, t: float, order: int) -> tuple[float, ...]:
        return (float(self.value),) + (0.0,) * order


@dataclass
class Step(Signal):
    """Step from `offset` to `offset + amplitude` at `t0`, optionally smoothed over `rise_time` seconds."""

    amplitude: float = 1.0
    t0: float = 0.0
    rise_time: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if self.rise_time < 0:
            raise ValueError(f"rise_time must be nonnegative, got {self.rise_time}")

    def derivatives(self, t: float, order: int) -> tuple[float, ...]:
        if self.rise_time == 0:
            value = self.offset + (self.amplitude if t >= self.t0 else 0.0)
            return (value,) + (0.0,) * order

        tau = (t - self.t0) / self.rise_time
        if tau <= 0:
            return (self.offset,) + (0.0,) * order
        if tau >= 1:
            return (self.offset + self.amplitude,) + (0.0,) * order

        out = [self.offset + self.amplitude * SMOOTHSTEP(tau)]
        poly = SMOOTHSTEP
        for n in range(1, order + 1):
            poly = poly.deriv()
            out.append(self.amplitude * poly(tau) / self.rise_time**n)
        return tuple(float(v) for v in out)


@dataclass
class Sine(Signal):
    amplitude: float = 1.0
    frequency: float = 1.0  # Hz
    phase: float = 0.0  # rad
    offset: float = 0.0

    def __post_init__(self):
        if self.frequency < 0:
            raise ValueError(f"frequency must be nonnegative, got {self.frequency}")

    def derivatives(self, t: float, order: int) -> tuple[float, ...]:
        w = 2 * math.pi * self.frequency
        arg = w * t + self.phase
        out = [self.offset + self.amplitude * math.sin(arg)]
        for n in range(1, order + 1):
            out.append(self.amplitude * w**n * math.sin(arg + n * math.pi / 2))
        return tuple(out)


@dataclass
class Pulse(Signal):
    """Raised-cosine pulse of peak `amplitude` over [start, stop]."""

    amplitude: float = 1.0
    start: float = 0.0
    stop: float = 1.0

    def __post_init__(self):
        if self.stop <= self.start:
            raise ValueError(f"pulse stop must be after start, got [{self.start}, {self.stop}]")

    def derivatives(self, t: float, order: int) -> tuple[float, ...]:
        if t <= self.start or t >= self.stop:
            return (0.0,) * (order + 1)
        w = 2 * math.pi / (self.stop - self.start)
        arg = w * (t - self.start)
        out = [0.5 * self.amplitude * (1 - math.cos(arg))]
        for n in range(1, order + 1):
            out.append(-0.5 * self.amplitude * w**n * math.cos(arg + n * math.pi / 2))
        return tuple(out)


@dataclass
class BandLimitedNoise(Signal):
    """Seeded low-pass Gaussian noise over [start, stop], tapered to zero at both ends.

    The record is generated once on a uniform grid and linearly interpolated,
    so the same seed always yields the same waveform.
    """

    std: float = 1.0
    cutoff: float = 5.0  # Hz
    start: float = 0.0
    stop: float = 1.0
    taper: float = 0.1  # fraction of the window in the cosine ramps
    seed: Sequence[int] = (0,)
    _t: np.ndarray = field(init=False, repr=False, compare=False)
    _v: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.std < 0:
            raise ValueError(f"std must be nonnegative, got {self.std}")
        if self.cutoff <= 0:
            raise ValueError(f"cutoff must be positive, got {self.cutoff}")
        if self.stop <= self.start:
            raise ValueError(f"random burst stop must be after start, got [{self.start}, {self.stop}]")
        if not 0 <= self.taper <= 1:
            raise ValueError(f"taper must be within [0, 1], got {self.taper}")

        duration = self.stop - self.start
        step = min(1 / (50 * self.cutoff), duration / 64)
        n = int(math.ceil(duration / step)) + 1
        step = duration / (n - 1)

        rng = np.random.default_rng(np.random.SeedSequence(list(self.seed)))
        white = rng.standard_normal(n)
        nyquist = 0.5 / step
        sos = butter(4, min(self.cutoff / nyquist, 0.99), output="sos")
        colored = sosfiltfilt(sos, white)
        spread = float(np.std(colored))
        if spread > 0:
            colored *= self.std / spread

        self._t = self.start + step * np.arange(n)
        self._v = colored * tukey(n, alpha=self.taper)
        logger.debug(f"Generated {n} noise samples over [{self.start}, {self.stop}] s with seed {tuple(self.seed)}")

    def derivatives(self, t: float, order: int) -> tuple[float, ...]:
        out = [float(np.interp(t, self._t, self._v, left=0.0, right=0.0))]
        values = self._v
        for _ in range(order):
            values = np.gradient(values, self._t)
            out.append(float(np.interp(t, self._t, values, left=0.0, right=0.0)))
        return tuple(out)


@dataclass
class Windowed(Signal):
    """Gates another signal to [start, stop)."""

    signal: Signal
    start: float = -math.inf
    stop: float = math.inf

    def derivatives(self, t: float, order: int) -> tuple[float, ...]:
        if self.start <= t < self.stop:
            return self.signal.derivatives(t, order)
        return (0.0,) * (order + 1)


@dataclass
class Sum(Signal):
    parts: list[Signal] = field(default_factory=list)

    def derivatives(self, t: float, order: int) -> tuple[float, ...]:
        total = np.zeros(order + 1)
        for part in self.parts:
            total += part.derivatives(t, order)
        return tuple(float(v) for v in total)


# Accepted parameters and their defaults per signal kind
SIGNAL_KINDS: dict[str, dict[str, float]] = {
    "zero": {},
    "constant": {"value": 0.0},
    "step": {"amplitude": 1.0, "t0": 0.0, "rise_time": 0.0, "offset": 0.0},
    "sine": {"amplitude": 1.0, "frequency": 1.0, "phase": 0.0, "offset": 0.0},
    "random": {"std": 1.0, "cutoff": 5.0, "start": 0.0, "stop": 1.0, "taper": 0.1},
    "pulse": {"amplitude": 1.0, "start": 0.0, "stop": 1.0},
}

# Kinds whose start/stop are part of the waveform rather than a gate
_INTRINSIC_WINDOW = {"random", "pulse"}


def build_signal(kind: str, params: dict[str, float], seed: Sequence[int] = (0,)) -> Signal:
    """Builds a signal of the given kind.

    Any kind except `random` and `pulse` also accepts `start` and `stop` to gate
    it in time. Unknown kinds or parameters raise ValueError.
    """
    if kind not in SIGNAL_KINDS:
        raise ValueError(f"unknown signal kind '{kind}', expected one of {sorted(SIGNAL_KINDS)}")

    allowed = dict(SIGNAL_KINDS[kind])
    gated = kind not in _INTRINSIC_WINDOW
    gate_keys = {"start", "stop"} if gated else set()
    unknown = set(params) - set(allowed) - gate_keys
    if unknown:
        raise ValueError(f"unknown parameter(s) {sorted(unknown)} for signal kind '{kind}'")

    values = {name: float(params.get(name, default)) for name, default in allowed.items()}

    signal: Signal
    if kind == "zero":
        signal = Zero()
    elif kind == "constant":
        signal = Constant(**values)
    elif kind == "step":
        signal = Step(**values)
    elif kind == "sine":
        signal = Sine(**values)
    elif kind == "pulse":
        signal = Pulse(**values)
    else:
        signal = BandLimitedNoise(seed=tuple(seed), **values)

    if gated and gate_keys & set(params):
        signal = Windowed(signal, float(params.get("start", -math.inf)), float(params.get("stop", math.inf)))
    return signal
