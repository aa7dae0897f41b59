"""Exceptions raised while loading and running scenarios."""

from typing import Optional


class ScenarioError(ValueError):
    """Invalid scenario file, key or value."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None, field: Optional[str] = None):
        self.message = message
        self.path = path
        self.line = line
        self.field = field
        super().__init__(str(self))

    def __str__(self) -> str:
        location = ""
        if self.path:
            location = f"{self.path}:"
        if self.line is not None:
            location += f"{self.line}:"
        if location:
            location += " "
        if self.field:
            location += f"{self.field}: "
        return f"{location}{self.message}"


class DivergenceError(RuntimeError):
    """The simulated state left the finite range at a given sample."""

    def __init__(self, message: str, sample: int, time: float = float("nan")):
        self.sample = sample
        self.time = time
        super().__init__(f"{message} (sample {sample}, t={time:.6g} s)")
