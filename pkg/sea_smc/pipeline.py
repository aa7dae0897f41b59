"""PyFlyde components wrapping the scenario, simulation and analysis stages."""

import os
from typing import Optional

from flyde.io import Input, InputMode, Output
from flyde.node import Component, logger

from sea_smc.analysis import MetricsReport, compute_metrics
from sea_smc.errors import DivergenceError, ScenarioError
from sea_smc.scenario import ScenarioSpec, list_scenarios, load_scenario
from sea_smc.sim import Trace, save_trace


class ListScenarios(Component):
    """Streams the names of the scenarios on the search path."""

    inputs = {
        "prefix": Input(description="Only list names starting with this prefix", type=str, mode=InputMode.STICKY, value="")
    }

    outputs = {"name": Output(description="Scenario name", type=str)}

    def process(self, prefix: str = "") -> None:
        count = 0
        for name, _, _ in list_scenarios():
            if name.startswith(prefix):
                self.send("name", name)
                count += 1
        logger.info(f"Listed {count} scenarios")
        self.stop()


class LoadScenario(Component):
    """Loads and validates a scenario by name or path."""

    inputs = {
        "name": Input(description="Scenario name or path", type=str),
        "overrides": Input(description="Key/value overrides", type=dict, mode=InputMode.STICKY, value={}),
    }

    outputs = {"spec": Output(description="Validated scenario", type=ScenarioSpec)}

    def process(self, name: str, overrides: Optional[dict] = None) -> dict[str, ScenarioSpec]:
        try:
            spec = load_scenario(name, overrides)
        except ScenarioError as e:
            logger.error(f"Failed to load scenario {name}: {e}")
            raise
        return {"spec": spec}


class RunSimulation(Component):
    """Runs a scenario and emits its trace."""

    inputs = {"spec": Input(description="Validated scenario", type=ScenarioSpec)}

    outputs = {"trace": Output(description="Simulation trace", type=Trace)}

    def process(self, spec: ScenarioSpec) -> dict[str, Trace]:
        try:
            trace = spec.run()
        except DivergenceError as e:
            logger.error(f"Failed to run scenario {spec.name}: {e}")
            raise
        return {"trace": trace}


class ComputeMetrics(Component):
    inputs = {
        "trace": Input(description="Simulation trace", type=Trace),
        "start": Input(description="Start of the tracking window, s", type=float, mode=InputMode.STICKY, value=0.0),
    }

    outputs = {"metrics": Output(description="Metrics report", type=MetricsReport)}

    def process(self, trace: Trace, start: float = 0.0) -> dict[str, MetricsReport]:
        report = compute_metrics(trace, window=(start, None))
        logger.info(f"Scenario {trace.meta.get('name', '?')}: RMSE {report.rmse_tracking:.4g}")
        return {"metrics": report}


class SaveTrace(Component):
    """Writes a trace as `<name>.csv` into the output directory."""

    inputs = {
        "trace": Input(description="Simulation trace", type=Trace),
        "path": Input(description="Output directory", type=str, mode=InputMode.STICKY, value="./out"),
    }

    outputs = {"path": Output(description="Path to the written CSV", type=str)}

    def process(self, trace: Trace, path: str = "./out") -> dict[str, str]:
        os.makedirs(path, exist_ok=True)
        file_path = os.path.join(path, f"{trace.meta.get('name', 'trace')}.csv")
        save_trace(trace, file_path)
        return {"path": file_path}
