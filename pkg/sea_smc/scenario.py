"""Scenario files: flat `key = value` descriptions of a complete run.

Keys are dotted (`controller.rho`, `disturbance.link.load.kind`). Lines starting
with `#` are comments. A file may start from another one with `extends = <name>`
and override any of its keys. Every key is validated before anything is
simulated and errors point at the file, line and key that caused them.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from sea_smc.control import (
    ControllerConfig,
    ForceControllerConfig,
    OpenLoopConfig,
    PositionControllerConfig,
    surface_coefficients,
)
from sea_smc.errors import ScenarioError
from sea_smc.observer import ObserverConfig, ObserverGains
from sea_smc.schema import (
    NOMINAL_NAMES,
    TRUE_NAMES,
    DisturbanceProfile,
    EnvironmentModel,
    PlantParams,
    PlantState,
    ReferenceTrajectory,
)
from sea_smc.signals import SIGNAL_KINDS, Signal, Sum, Zero, build_signal
from sea_smc.sim import SimConfig, Trace, gain_schedule, load_trace, run_meta, run_scenario

logger = logging.getLogger(__name__)

SUFFIX = ".scenario"
PATH_ENV = "SEA_SMC_SCENARIO_PATH"
BUNDLED_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "scenarios")
OVERRIDE_SOURCE = "<override>"
RECORDED_SCENARIO = "scenario.scenario"  # written next to trace.csv by `sea-smc run`

# Scalar keys accepted outside the signal and named-disturbance sections
_SIM_KEYS = (
    "dt",
    "duration",
    "integrator",
    "motor_encoder_ppr",
    "link_encoder_ppr",
    "quantization",
    "deriv_filter_bw",
    "seed",
    "torque_limit",
    "start_on_reference",
    "plant_substeps",
    "divergence_limit",
)


@dataclass
class Entry:
    value: str
    line: Optional[int] = None  # None for command-line overrides
    source: Optional[str] = None


def parse_entries(text: str, path: Optional[str] = None) -> dict[str, Entry]:
    """Splits scenario text into ordered key/value entries."""
    entries: dict[str, Entry] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError("expected 'key = value'", path, number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or any(not part for part in key.split(".")) or " " in key:
            raise ScenarioError(f"malformed key '{key}'", path, number)
        if key in entries:
            raise ScenarioError(f"duplicate key, first set on line {entries[key].line}", path, number, key)
        entries[key] = Entry(value, number, path)
    return entries


def apply_overrides(entries: dict[str, Entry], overrides: Mapping[str, Optional[str]]) -> dict[str, Entry]:
    """Returns entries with overrides applied.

    An empty or None value removes the key together with every key below it,
    so `disturbance.link` drops all link-side sources.
    """
    merged = dict(entries)
    for key, value in overrides.items():
        key = key.strip()
        if value is None or str(value).strip() == "":
            for existing in [k for k in merged if k == key or k.startswith(key + ".")]:
                del merged[existing]
            continue
        merged[key] = Entry(str(value).strip(), None, OVERRIDE_SOURCE)
    return merged


def parse_override(text: str) -> tuple[str, str]:
    """Splits a command-line `key=value` override."""
    if "=" not in text:
        raise ScenarioError(f"override '{text}' must look like key=value", OVERRIDE_SOURCE)
    key, value = text.split("=", 1)
    if not key.strip():
        raise ScenarioError(f"override '{text}' has an empty key", OVERRIDE_SOURCE)
    return key.strip(), value.strip()


class _Reader:
    """Typed access to entries that remembers which keys were consumed."""

    def __init__(self, entries: dict[str, Entry], path: Optional[str]):
        self.entries = entries
        self.path = path
        self.used: set[str] = set()

    def error(self, key: str, message: str) -> ScenarioError:
        entry = self.entries.get(key)
        if entry is None:
            # Point at the first key of the section when the key itself is absent
            entry = next((e for k, e in self.entries.items() if k.startswith(key + ".")), None)
        if entry is None:
            return ScenarioError(message, self.path, None, key)
        return ScenarioError(message, entry.source or self.path, entry.line, key)

    def has(self, key: str) -> bool:
        return key in self.entries

    def has_section(self, prefix: str) -> bool:
        return any(k.startswith(prefix + ".") for k in self.entries)

    def children(self, prefix: str) -> list[str]:
        """Distinct next-level names under a prefix, in file order."""
        names: list[str] = []
        for key in self.entries:
            if key.startswith(prefix + "."):
                rest = key[len(prefix) + 1 :].split(".", 1)
                if len(rest) < 2:
                    raise self.error(key, f"expected {prefix}.<name>.<parameter>")
                if rest[0] not in names:
                    names.append(rest[0])
        return names

    def raw(self, key: str) -> Optional[str]:
        if key in self.entries:
            self.used.add(key)
            return self.entries[key].value
        return None

    def str(self, key: str, default: str, choices: Optional[tuple[str, ...]] = None) -> str:
        value = self.raw(key)
        if value is None:
            return default
        if choices is not None and value not in choices:
            raise self.error(key, f"expected one of {', '.join(choices)}, got '{value}'")
        return value

    def float(self, key: str, default: float) -> float:
        value = self.raw(key)
        if value is None:
            return default
        try:
            number = float(value)
        except ValueError:
            raise self.error(key, f"expected a number, got '{value}'") from None
        if math.isnan(number):
            raise self.error(key, "NaN is not allowed")
        return number

    def optional_float(self, key: str) -> Optional[float]:
        value = self.raw(key)
        if value is None or value.lower() == "none":
            return None
        self.used.discard(key)
        return self.float(key, 0.0)

    def int(self, key: str, default: int) -> int:
        number = self.float(key, float(default))
        if number != int(number):
            raise self.error(key, f"expected an integer, got '{self.entries[key].value}'")
        return int(number)

    def bool(self, key: str, default: bool) -> bool:
        value = self.raw(key)
        if value is None:
            return default
        if value.lower() in ("true", "yes", "1"):
            return True
        if value.lower() in ("false", "no", "0"):
            return False
        raise self.error(key, f"expected true or false, got '{value}'")

    def signal(self, prefix: str, seed: tuple[int, ...], default_kind: str = "zero") -> Signal:
        kind = self.str(f"{prefix}.kind", default_kind, tuple(SIGNAL_KINDS))
        params: dict[str, float] = {}
        for key in list(self.entries):
            if key.startswith(prefix + ".") and key != f"{prefix}.kind":
                name = key[len(prefix) + 1 :]
                if "." in name:
                    raise self.error(key, f"unexpected nested key under {prefix}")
                params[name] = self.float(key, 0.0)
        try:
            return build_signal(kind, params, seed)
        except ValueError as e:
            raise self.error(f"{prefix}.kind", str(e)) from None

    def unused(self) -> list[str]:
        return [k for k in self.entries if k not in self.used]


@dataclass
class ScenarioSpec:
    """A validated, runnable scenario"""

    name: str
    plant: PlantParams
    disturbance: DisturbanceProfile
    controller: ControllerConfig
    observer: ObserverConfig
    reference: ReferenceTrajectory
    sim: SimConfig
    initial: PlantState = field(default_factory=PlantState)
    environment: Optional[EnvironmentModel] = None
    description: str = ""
    source: Optional[str] = None
    values: dict[str, str] = field(default_factory=dict)  # resolved key/value text

    @property
    def mode(self) -> str:
        if isinstance(self.controller, PositionControllerConfig):
            return "position"
        if isinstance(self.controller, ForceControllerConfig):
            return "force"
        return "open_loop"

    @property
    def mu(self) -> float:
        return getattr(self.controller, "mu", 1.0)

    def run(self) -> Trace:
        return run_scenario(
            self.plant,
            self.environment,
            self.disturbance,
            self.controller,
            self.observer,
            self.reference,
            self.sim,
            self.initial,
            self.name,
        )


def _guard(reader: _Reader, key: str, build):
    """Runs a constructor and reports its ValueError against `key`."""
    try:
        return build()
    except ScenarioError:
        raise
    except ValueError as e:
        raise reader.error(key, str(e)) from None


def _switching_gain(reader: _Reader, sim: SimConfig, default: float) -> tuple[float, Optional[Signal]]:
    """Constant `controller.rho`, or a `controller.rho.<parameter>` waveform checked positive over the run."""
    if not reader.has_section("controller.rho"):
        return reader.float("controller.rho", default), None
    if reader.has("controller.rho"):
        raise reader.error("controller.rho", "give either a constant controller.rho or a controller.rho.kind waveform, not both")
    # Seeded apart from the numbered signals so adding a schedule leaves the disturbances unchanged
    schedule = reader.signal("controller.rho", (sim.rng_seed, 0))
    values = np.array([schedule(k * sim.dt) for k in range(sim.samples)])
    if not np.all(values > 0):
        k = int(np.argmax(~(values > 0)))
        raise reader.error("controller.rho.kind", f"switching gain must stay positive, got {values[k]:g} at t={k * sim.dt:g} s")
    return float(values[0]), schedule


def build_spec(entries: dict[str, Entry], path: Optional[str] = None, default_name: str = "scenario") -> ScenarioSpec:
    """Builds and validates a ScenarioSpec from parsed entries."""
    r = _Reader(entries, path)
    name = r.str("name", default_name)
    description = r.str("description", "")

    sim = _guard(
        r,
        "sim",
        lambda: SimConfig(
            dt=r.float("sim.dt", 5e-4),
            duration=r.float("sim.duration", 1.0),
            integrator=r.str("sim.integrator", "rk4", ("euler", "rk4")),  # type: ignore[arg-type]
            motor_encoder_ppr=r.int("sim.motor_encoder_ppr", 2048),
            link_encoder_ppr=r.int("sim.link_encoder_ppr", 1024),
            quantization_enabled=r.bool("sim.quantization", False),
            deriv_filter_bw=r.float("sim.deriv_filter_bw", 200.0),
            rng_seed=r.int("sim.seed", 0),
            torque_limit=r.optional_float("sim.torque_limit"),
            start_on_reference=r.bool("sim.start_on_reference", False),
            plant_substeps=r.int("sim.plant_substeps", 2),
            divergence_limit=r.float("sim.divergence_limit", 1e6),
        ),
    )
    for key in r.entries:
        if key.startswith("sim.") and key[4:] not in _SIM_KEYS:
            raise r.error(key, "unknown key")

    signal_count = 0

    def next_seed() -> tuple[int, ...]:
        nonlocal signal_count
        signal_count += 1
        return (sim.rng_seed, signal_count)

    # Plant
    nominal = {n: r.float(f"plant.{n}", getattr(PlantParams, n)) for n in NOMINAL_NAMES}
    true = {n: r.float(f"plant.{n}", nominal[f"{n}_n"]) for n in TRUE_NAMES}
    plant = _guard(r, "plant", lambda: PlantParams(**nominal, **true))
    perturbations = {}
    for key in list(r.entries):
        if key.startswith("plant.perturb."):
            target = key[len("plant.perturb.") :]
            if target not in TRUE_NAMES:
                raise r.error(key, f"cannot perturb '{target}', expected one of {', '.join(TRUE_NAMES)}")
            perturbations[target] = r.float(key, 0.0)

    initial = PlantState(
        q=r.float("initial.q", 0.0),
        q_dot=r.float("initial.q_dot", 0.0),
        theta=r.float("initial.theta", 0.0),
        theta_dot=r.float("initial.theta_dot", 0.0),
    )

    # Controller
    ctype = r.str("controller.type", "position", ("position", "force", "open_loop"))
    controller: ControllerConfig
    if ctype == "position":
        rho, schedule = _switching_gain(r, sim, 0.001)
        g = r.float("controller.g_smc", 30.0)
        c0, c1, c2 = surface_coefficients(g, 3) if g >= 0 else (0.0, 0.0, 0.0)
        ct = surface_coefficients(g, 4) if g >= 0 else (0.0,) * 4
        controller = _guard(
            r,
            "controller",
            lambda: PositionControllerConfig(
                c0p=r.float("controller.c0", c0),
                c1p=r.float("controller.c1", c1),
                c2p=r.float("controller.c2", c2),
                rho_p=rho,
                mode=r.str("controller.mode", "discontinuous", ("discontinuous", "quasi", "continuous")),  # type: ignore[arg-type]
                epsilon=r.float("controller.epsilon", 0.01),
                ct=tuple(r.float(f"controller.ct{j}", ct[j]) for j in range(4)),
                mu=r.float("controller.mu", 1.0),
                estimate_terms=r.bool("controller.estimate_terms", True),
                g_smc=g,
                rho_schedule=schedule,
            ),
        )
    elif ctype == "force":
        rho, schedule = _switching_gain(r, sim, 0.0035)
        c0F = r.float("controller.c0", r.float("controller.g_smc", 30.0))
        ct = surface_coefficients(c0F, 2) if c0F >= 0 else (0.0, 0.0)
        controller = _guard(
            r,
            "controller",
            lambda: ForceControllerConfig(
                c0F=c0F,
                rho_F=rho,
                mode=r.str("controller.mode", "discontinuous", ("discontinuous", "quasi", "continuous")),  # type: ignore[arg-type]
                epsilon=r.float("controller.epsilon", 0.01),
                ct=tuple(r.float(f"controller.ct{j}", ct[j]) for j in range(2)),
                mu=r.float("controller.mu", 1.0),
                use_link_accel=r.bool("controller.use_link_accel", True),
                link_velocity_feedforward=r.bool("controller.link_velocity_feedforward", True),
                estimate_terms=r.bool("controller.estimate_terms", True),
                rho_schedule=schedule,
            ),
        )
    else:
        controller = OpenLoopConfig(torque=r.signal("controller.torque", next_seed()))

    # Observer
    order = r.int("observer.order", 0 if ctype == "force" else 2)
    gains: Optional[ObserverGains] = None
    explicit = [k for k in ("observer.L1", "observer.L2", "observer.L3") if r.has(k)]
    if explicit:
        if len(explicit) != 3:
            raise r.error(explicit[0], "observer.L1, observer.L2 and observer.L3 must be given together")
        gains = _guard(
            r, "observer.L1", lambda: ObserverGains(r.float("observer.L1", 0), r.float("observer.L2", 0), r.float("observer.L3", 0))
        )
    observer = _guard(
        r, "observer.order", lambda: ObserverConfig(order=order, g_dob=r.float("observer.g_dob", 500.0), gains=gains)  # type: ignore[arg-type]
    )

    # Reference
    ref_mode = "force" if ctype == "force" else "position"
    reference = ReferenceTrajectory(ref_mode, r.signal("reference", next_seed()))  # type: ignore[arg-type]
    if ctype != "open_loop":
        _guard(r, "reference", lambda: reference.check_consistency(sim.duration))
    if ctype == "position" and order != 2:
        raise r.error("observer.order", "position control needs the second-order observer (order 2)")

    # Disturbances
    channels: dict[str, Signal] = {}
    for channel in ("motor", "link"):
        prefix = f"disturbance.{channel}"
        parts = [r.signal(f"{prefix}.{label}", next_seed()) for label in r.children(prefix)]
        channels[channel] = Sum(parts) if parts else Zero()
    disturbance = DisturbanceProfile(
        gravity_mgl=r.float("plant.gravity_mgl", 0.0),
        tau_m_ud=channels["motor"],
        tau_l_ud=channels["link"],
        perturbations=perturbations,
    )
    _guard(r, "plant.perturb", lambda: disturbance.apply(plant))

    # Environment
    environment: Optional[EnvironmentModel] = None
    if r.has_section("environment"):
        environment = _guard(
            r,
            "environment",
            lambda: EnvironmentModel(
                Je=r.float("environment.Je", 0.0),
                De=r.float("environment.De", 0.0),
                Ke=r.float("environment.Ke", 0.0),
                qe=r.signal("environment.qe", next_seed()),
                tau_a=r.signal("environment.tau_a", next_seed()),
                contact_mode=r.str("environment.contact", "always", ("always", "unilateral")),  # type: ignore[arg-type]
            ),
        )

    leftover = r.unused()
    if leftover:
        raise r.error(leftover[0], "unknown key")

    spec = ScenarioSpec(
        name=name,
        plant=plant,
        disturbance=disturbance,
        controller=controller,
        observer=observer,
        reference=reference,
        sim=sim,
        initial=initial,
        environment=environment,
        description=description,
        source=path,
        values={k: e.value for k, e in entries.items()},
    )
    logger.debug(f"Built scenario '{name}' with {len(entries)} keys from {path or 'text'}")
    return spec


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read()
    except OSError as e:
        raise ScenarioError(f"cannot read scenario: {e}", path) from None


def resolve_extends(entries: dict[str, Entry], path: Optional[str] = None, chain: tuple[str, ...] = ()) -> dict[str, Entry]:
    """Merges the scenario named by `extends` under these entries, which take precedence.

    The base is looked up next to the extending file first, then on the search
    path. Inherited entries keep the file and line they came from.
    """
    if "extends" not in entries:
        return entries
    entry = entries["extends"]
    here = os.path.dirname(os.path.abspath(path)) if path else None
    sibling = os.path.join(here, entry.value + SUFFIX) if here else None
    try:
        base_path = sibling if sibling and os.path.isfile(sibling) else resolve_scenario(entry.value)
    except ScenarioError:
        raise ScenarioError(f"base scenario '{entry.value}' not found", path, entry.line, "extends") from None
    key = os.path.abspath(base_path)
    visited = chain + ((os.path.abspath(path),) if path else ())
    if key in visited:
        raise ScenarioError(f"circular extends through '{entry.value}'", path, entry.line, "extends")
    base = resolve_extends(parse_entries(_read_text(base_path), base_path), base_path, visited)
    merged = dict(base)
    merged.update({k: e for k, e in entries.items() if k != "extends"})
    return merged


def parse_scenario(
    text: str, path: Optional[str] = None, overrides: Optional[Mapping[str, Optional[str]]] = None
) -> ScenarioSpec:
    entries = resolve_extends(parse_entries(text, path), path)
    if overrides:
        entries = apply_overrides(entries, overrides)
    default_name = os.path.splitext(os.path.basename(path))[0] if path else "scenario"
    return build_spec(entries, path, default_name)


def search_path() -> list[str]:
    """Directories searched for scenarios: SEA_SMC_SCENARIO_PATH entries, then the bundled set."""
    dirs = [d for d in os.getenv(PATH_ENV, "").split(os.pathsep) if d]
    return dirs + [BUNDLED_DIR]


def resolve_scenario(name_or_path: str) -> str:
    """Finds a scenario file by path or by name on the search path."""
    if os.path.isfile(name_or_path):
        return name_or_path
    candidates = [name_or_path] if name_or_path.endswith(SUFFIX) else [name_or_path + SUFFIX, name_or_path]
    for directory in search_path():
        for candidate in candidates:
            path = os.path.join(directory, candidate)
            if os.path.isfile(path):
                return path
    raise ScenarioError(f"scenario '{name_or_path}' not found in {os.pathsep.join(search_path())}")


def load_scenario(
    name_or_path: str,
    overrides: Optional[Mapping[str, Optional[str]]] = None,
    seed: Optional[int] = None,
    dt: Optional[float] = None,
    duration: Optional[float] = None,
) -> ScenarioSpec:
    """Loads a scenario by path or name; flags take precedence over `overrides`, which take precedence over the file."""
    path = resolve_scenario(name_or_path)
    text = _read_text(path)

    merged: dict[str, Optional[str]] = dict(overrides or {})
    for key, value in (("sim.seed", seed), ("sim.dt", dt), ("sim.duration", duration)):
        if value is not None:
            merged[key] = repr(value)
    logger.info(f"Loading scenario from {path}")
    return parse_scenario(text, path, merged)


def list_scenarios() -> list[tuple[str, str, str]]:
    """(name, path, description) of every scenario on the search path, earlier directories shadowing later ones."""
    found: dict[str, tuple[str, str, str]] = {}
    for directory in search_path():
        if not os.path.isdir(directory):
            continue
        for filename in sorted(os.listdir(directory)):
            if not filename.endswith(SUFFIX):
                continue
            name = filename[: -len(SUFFIX)]
            if name in found:
                continue
            path = os.path.join(directory, filename)
            description = ""
            try:
                entries = resolve_extends(parse_entries(_read_text(path), path), path)
                description = entries["description"].value if "description" in entries else ""
            except (OSError, ScenarioError) as e:
                logger.warning(f"Skipping unreadable scenario {path}: {e}")
                continue
            found[name] = (name, path, description)
    return sorted(found.values())


def dump_scenario(spec: ScenarioSpec) -> str:
    """Resolved key/value text that reproduces the run."""
    lines = [f"# Resolved from {spec.source or 'text'}"]
    lines += [f"{key} = {value}" for key, value in spec.values.items()]
    return "\n".join(lines) + "\n"


def load_recorded_run(trace_path: str, scenario_path: Optional[str] = None) -> Trace:
    """Reloads a saved trace with the metadata and gain schedule of the scenario that produced it.

    The scenario defaults to the `scenario.scenario` written next to the trace.
    """
    if scenario_path is None:
        scenario_path = os.path.join(os.path.dirname(os.path.abspath(trace_path)), RECORDED_SCENARIO)
    spec = load_scenario(scenario_path)
    recorded = load_trace(trace_path, spec.sim.dt)
    if len(recorded) != spec.sim.samples:
        logger.warning(f"{trace_path} holds {len(recorded)} samples, its scenario describes {spec.sim.samples}")
    return Trace(
        dt=recorded.dt,
        columns=recorded.columns,
        extras={"rho": gain_schedule(spec.controller, recorded.t)},
        meta=run_meta(spec.name, spec.plant, spec.controller, spec.observer, spec.sim),
    )
