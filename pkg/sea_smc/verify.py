"""Acceptance checks: each one runs bundled scenarios and asserts a closed-loop property."""

import dataclasses
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional
from unittest import mock

import numpy as np

from sea_smc import control, observer
from sea_smc.analysis import (
    chattering_index,
    compute_metrics,
    is_monotone,
    observer_error_report,
    overshoot,
    rmse,
    verify_lyapunov,
)
from sea_smc.control import smc_gain_from_bound
from sea_smc.errors import DivergenceError
from sea_smc.observer import ZeroOrderDob, characteristic_roots, tune_gains
from sea_smc.scenario import BUNDLED_DIR, SUFFIX, load_scenario, parse_entries
from sea_smc.schema import PlantParams
from sea_smc.sim import CSV_COLUMNS, Trace, save_trace

logger = logging.getLogger(__name__)

Overrides = dict[str, Optional[str]]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    values: dict[str, Any] = field(default_factory=dict)
    runtime: float = 0.0  # s


def bundled_scenarios(aliases: bool = True) -> dict[str, str]:
    """Bundled scenario names mapped to their files; `aliases=False` leaves out files that only extend another."""
    found = {
        f[: -len(SUFFIX)]: os.path.join(BUNDLED_DIR, f) for f in sorted(os.listdir(BUNDLED_DIR)) if f.endswith(SUFFIX)
    }
    if aliases:
        return found
    return {name: path for name, path in found.items() if not _extends(path)}


def _extends(path: str) -> bool:
    with open(path, "r", encoding="utf-8") as f:
        return "extends" in parse_entries(f.read(), path)


class _Runner:
    """Runs bundled scenarios by name and reuses traces within one verification pass."""

    def __init__(self):
        self.paths = bundled_scenarios()
        self.cache: dict[tuple, Trace] = {}

    def __call__(self, name: str, overrides: Optional[Overrides] = None) -> Trace:
        key = (name, tuple(sorted((overrides or {}).items())))
        if key not in self.cache:
            self.cache[key] = load_scenario(self.paths[name], overrides).run()
        return self.cache[key]


def check_pole_placement(run: _Runner) -> CheckResult:
    errors = {}
    for g in (100.0, 500.0, 1000.0):
        roots, hurwitz = characteristic_roots(tune_gains(g))
        errors[f"{g:g}"] = max(abs(r + g) / g for r in roots) if hurwitz else math.inf
    worst = max(errors.values())
    return CheckResult("pole_placement", worst <= 1e-6, f"worst relative root error {worst:.2e}", {"errors": errors})


def _step_overrides(channel: str, amplitude: float, t0: float, duration: float) -> Overrides:
    return {
        "disturbance.link": None,
        f"disturbance.{channel}.step.kind": "step",
        f"disturbance.{channel}.step.amplitude": repr(amplitude),
        f"disturbance.{channel}.step.t0": repr(t0),
        "sim.duration": repr(duration),
    }


def check_observer_convergence(run: _Runner) -> CheckResult:
    # Second order: link-side step, estimate within 1% of truth 20 ms after it
    t0 = 0.01
    trace = run("dob_sweep", _step_overrides("link", 1e-4, t0, 0.1))
    mask = trace.window(t0 + 0.02, None)
    truth = trace["dis_true"][mask, 1]
    error = float(np.max(np.abs(truth - trace["dis_hat"][mask, 1])))
    relative = error / float(np.max(np.abs(truth)))

    # Zero order: constant d from rest, error must follow D·exp(−g·t)
    g, dt, D = 500.0, 5e-4, 100.0
    dob = ZeroOrderDob(g, PlantParams(), "rk4")
    worst = 0.0
    for k in range(int(round(5 / (g * dt))) + 1):
        t = k * dt
        if k == 0:
            dob.reset(t, np.zeros(4))
        d_hat = dob.update(t, np.array([0.0, 0.0, 0.0, -D * t])).d4
        expected = D * math.exp(-g * t)
        worst = max(worst, abs((D - d_hat) - expected) / expected)

    passed = relative <= 0.01 and worst <= 0.05
    detail = f"second-order error {relative:.2%} of truth after 20 ms, zero-order deviation from exp(-gt) {worst:.2%}"
    return CheckResult("observer_convergence", passed, detail, {"relative_error": relative, "exp_deviation": worst})


def check_iss_bound(run: _Runner) -> CheckResult:
    report = observer_error_report(run("dob_sweep"), window=(1.0, 2.0))
    ratio = report.steady_norm / report.bound if report.bound > 0 else math.inf
    return CheckResult(
        "iss_bound",
        report.passed,
        f"steady error {report.steady_norm:.3g} against bound {report.bound:.3g} (ratio {ratio:.3g})",
        {"steady_norm": report.steady_norm, "bound": report.bound, "ratio": ratio},
    )


def check_ablation(run: _Runner, duration: float = 8.0) -> CheckResult:
    # Ends before the burst and the conventional gain ramp
    overrides: Overrides = {"sim.duration": repr(duration)}
    conventional = rmse(run("tracking_conventional", overrides), window=(0.5, None))
    full = rmse(run("tracking", overrides), window=(0.5, None))
    ratio = conventional / full if full > 0 else math.inf
    passed = full < 0.01 and ratio >= 5
    return CheckResult(
        "ablation",
        passed,
        f"RMSE {conventional:.3g} rad without estimates, {full:.3g} rad with them (ratio {ratio:.3g})",
        {"rmse_conventional": conventional, "rmse_full": full, "ratio": ratio},
    )


def _tuned_reaching_run(run: _Runner, base: Overrides, mu: float, rounds: int = 6):
    """Iterates ρ = δβ + μ/√2 until the run's own measured δβ is no larger than the design value."""
    delta = 0.0
    for _ in range(rounds):
        rho = smc_gain_from_bound(delta, mu)
        trace = run("reaching", {**base, "controller.rho": repr(rho), "controller.mu": repr(mu)})
        report = compute_metrics(trace, mu=mu)
        if report.delta_beta_measured <= delta:
            return rho, report
        delta = 1.05 * report.delta_beta_measured
    return rho, report


def check_reaching(run: _Runner, cases: int = 10, seed: int = 5, target: float = 0.05) -> CheckResult:
    rng = np.random.default_rng(seed)
    failures, times = 0, []
    for i in range(cases):
        velocity = float(rng.choice([-1.0, 1.0]) * rng.uniform(2.0, 5.0))
        base: Overrides = {"initial.q_dot": repr(velocity), "initial.theta_dot": "0.0"}
        # σ(0) = q̇ − θ̇ for a zero reference with q = θ
        mu = math.sqrt(2) * abs(velocity) / target
        rho, report = _tuned_reaching_run(run, base, mu)
        times.append(report.reaching_time)
        if not report.reaching_passed:
            failures += 1
            logger.info(f"Reaching case {i} failed: {report.reaching_time:.4g} s > {report.reaching_bound:.4g} s at rho={rho:.4g}")
    return CheckResult("reaching", failures == 0, f"{failures} of {cases} initial conditions missed the bound", {"times": times})


def under_gained_overrides(design_bound: float, load: float = 1e-3) -> Overrides:
    """Model-only force regulation against a motor load it never estimates, with ρ sized for `design_bound`."""
    return {
        "controller.estimate_terms": "false",
        "controller.rho": repr(smc_gain_from_bound(design_bound, 1.0)),
        "disturbance.motor.load.kind": "constant",
        "disturbance.motor.load.value": repr(load),
        "sim.duration": "0.1",
    }


def check_lyapunov(run: _Runner, design_bound: float = 100.0) -> CheckResult:
    violations = {name: verify_lyapunov(run(name)) for name in bundled_scenarios(aliases=False)}
    clean = all(v == 0 for v in violations.values())

    # ρ sized for a δβ far below the load's: asserting that bound must expose the run
    under = run("reaching", under_gained_overrides(design_bound))
    negative = verify_lyapunov(under, delta_beta=design_bound)
    measured = compute_metrics(under).delta_beta_measured
    rho = float(under.meta["rho"])

    passed = clean and negative >= 1 and measured > rho
    dirty = [n for n, v in violations.items() if v]
    detail = f"under-gained run: {negative} violations, measured δβ {measured:.4g} against rho {rho:.4g}"
    if dirty:
        detail += f"; violations in {', '.join(dirty)}"
    return CheckResult(
        "lyapunov",
        passed,
        detail,
        {"violations": violations, "negative_control": negative, "delta_beta_measured": measured, "rho": rho},
    )


def check_quasi_tradeoff(run: _Runner) -> CheckResult:
    epsilons = (1e-3, 1e-2, 1e-1)
    errors, chatter = [], []
    for eps in epsilons:
        trace = run("quasi_tradeoff", {"controller.epsilon": repr(eps)})
        errors.append(rmse(trace))
        chatter.append(chattering_index(trace["tau_m"], trace.dt))
    passed = is_monotone(errors, increasing=True) and is_monotone(chatter, increasing=False)
    return CheckResult(
        "quasi_tradeoff",
        passed,
        "RMSE " + ", ".join(f"{e:.3g}" for e in errors) + "; chattering " + ", ".join(f"{c:.3g}" for c in chatter),
        {"epsilon": list(epsilons), "rmse": errors, "chattering": chatter},
    )


def check_continuous_smc(run: _Runner, rho: float = 1e5, factor: float = 10.0) -> CheckResult:
    """Continuous SMC at a high gain keeps the torque variation of the low-gain discontinuous law.

    The baseline is the same disturbed sine run with the discontinuous law at
    ρ = 0.001, where switching adds nothing measurable to the torque. At the
    high gain the discontinuous law must exceed `factor` times the baseline and
    the continuous law must stay below it.
    """
    baseline = run("switching_tradeoff", {"controller.rho": "0.001"})
    discontinuous = run("switching_tradeoff", {"controller.rho": repr(rho)})
    continuous = run("switching_tradeoff", {"controller.rho": repr(rho), "controller.mode": "continuous"})
    tv = {
        name: chattering_index(trace["tau_m"], trace.dt)
        for name, trace in (("baseline", baseline), ("discontinuous", discontinuous), ("continuous", continuous))
    }
    limit = factor * tv["baseline"]
    error = rmse(continuous, window=(0.5, None))
    passed = tv["continuous"] < limit < tv["discontinuous"]
    return CheckResult(
        "continuous_smc",
        passed,
        f"torque variation {tv['continuous']:.3g} N.m/s continuous, {tv['discontinuous']:.3g} discontinuous, "
        f"limit {limit:.3g} ({factor:g}x baseline); continuous RMSE {error:.3g} rad",
        {**tv, "limit": limit, "rmse_continuous": error},
    )


def check_chattering_suppression(run: _Runner, accuracy: float = 0.01) -> CheckResult:
    base: Overrides = {
        "disturbance.link": None,
        "disturbance.motor.load.kind": "step",
        "disturbance.motor.load.amplitude": "1e-4",
        "disturbance.motor.load.t0": "0.1",
        "disturbance.motor.load.rise_time": "0.05",
        "disturbance.motor.burst.kind": "random",
        "disturbance.motor.burst.std": "5e-5",
        "disturbance.motor.burst.cutoff": "5",
        "disturbance.motor.burst.start": "2",
        "disturbance.motor.burst.stop": "4",
        "sim.duration": "5",
    }
    with_dob = run("tracking", base)
    rho_dob = float(with_dob.meta["rho"])
    rmse_dob = rmse(with_dob, window=(0.5, None))
    chatter_dob = chattering_index(with_dob["tau_m"], with_dob.dt)

    without = {**base, "controller.estimate_terms": "false"}
    pilot = compute_metrics(run("tracking", without))
    rho_needed, rmse_needed, chatter_needed = math.inf, math.inf, math.inf
    for factor in (1, 2, 4):
        rho = factor * smc_gain_from_bound(pilot.delta_beta_measured, 1.0)
        try:
            trace = run("tracking", {**without, "controller.rho": repr(rho)})
        except DivergenceError as e:
            logger.info(f"Run without estimates diverged at rho={rho:.4g}: {e}")
            continue
        rmse_needed = rmse(trace, window=(0.5, None))
        chatter_needed = chattering_index(trace["tau_m"], trace.dt)
        if rmse_needed < accuracy:
            rho_needed = rho
            break

    ratio = rho_needed / rho_dob
    passed = rmse_dob < accuracy and ratio >= 10 and chatter_needed > chatter_dob
    return CheckResult(
        "chattering_suppression",
        passed,
        f"rho {rho_dob:.3g} with estimates vs {rho_needed:.3g} without (ratio {ratio:.3g}); "
        f"chattering {chatter_dob:.3g} vs {chatter_needed:.3g} N.m/s",
        {
            "rho_with": rho_dob,
            "rho_without": rho_needed,
            "ratio": ratio,
            "rmse_with": rmse_dob,
            "rmse_without": rmse_needed,
            "chattering_with": chatter_dob,
            "chattering_without": chatter_needed,
        },
    )


def check_force_tracking(run: _Runner) -> CheckResult:
    error = rmse(run("force_tracking"), column="tau_s", window=(1.0, 3.0))
    return CheckResult("force_tracking", error < 0.05, f"spring-torque RMSE {error:.3g} N.m after 1 s", {"rmse": error})


def check_force_overshoot(run: _Runner) -> CheckResult:
    trace = run("force_contact")
    target = float(trace["ref"][-1])
    peak = overshoot(trace, "tau_env", target)
    steady = rmse(trace, column="tau_s", window=(1.5, None)) / abs(target)
    passed = peak > 0 and steady < 0.01
    return CheckResult(
        "force_overshoot",
        passed,
        f"contact overshoot {peak:.3g} N.m, steady error {steady:.2%}",
        {"overshoot": peak, "steady_error": steady},
    )


def _final_state(trace: Trace) -> np.ndarray:
    return np.array([trace[c][-1] for c in ("q", "qd", "theta", "thetad")])


def check_determinism(run: _Runner) -> CheckResult:
    overrides: Overrides = {
        "sim.duration": "1",
        "disturbance.link.burst.start": "0.2",
        "disturbance.link.burst.stop": "0.8",
    }
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for i in range(2):
            path = os.path.join(tmp, f"trace{i}.csv")
            save_trace(load_scenario(run.paths["tracking"], overrides).run(), path)
            with open(path, "rb") as f:
                blobs.append(f.read())
    identical = blobs[0] == blobs[1]

    finals = [_final_state(run("free_oscillation", {"sim.dt": repr(dt)})) for dt in (5e-4, 2.5e-4, 1.25e-4)]
    coarse = float(np.linalg.norm(finals[0] - finals[1]))
    fine = float(np.linalg.norm(finals[1] - finals[2]))
    ratio = coarse / fine if fine > 0 else math.inf
    passed = identical and 12 <= ratio <= 20
    return CheckResult(
        "determinism",
        passed,
        f"identical CSV bytes: {identical}, halving-dt error ratio {ratio:.3g}",
        {"identical": identical, "ratio": ratio, "columns": list(CSV_COLUMNS)},
    )


def check_observer_bandwidth(run: _Runner) -> CheckResult:
    bandwidths = (100.0, 200.0, 400.0, 800.0)
    errors, noise = [], []
    for g in bandwidths:
        exact = run("dob_sweep", {"observer.g_dob": repr(g)})
        quantized = run("dob_sweep", {"observer.g_dob": repr(g), "sim.quantization": "true"})
        mask = exact.window(1.0, 2.0)
        residual = exact["dis_true"][mask, 1] - exact["dis_hat"][mask, 1]
        errors.append(float(np.sqrt(np.mean(residual**2))))
        noise.append(float(np.var(quantized["d2_hat"][mask] - exact["d2_hat"][mask])))
    passed = is_monotone(errors, increasing=False, strict=True) and is_monotone(noise, increasing=True)
    return CheckResult(
        "observer_bandwidth",
        passed,
        "steady RMS error " + ", ".join(f"{e:.3g}" for e in errors) + "; quantization noise " + ", ".join(f"{n:.3g}" for n in noise),
        {"g_dob": list(bandwidths), "rms_error": errors, "noise_variance": noise},
    )


def check_sign_flip_detected(run: _Runner) -> CheckResult:
    """A controller whose signum is flipped must fail the Lyapunov check."""
    original = control.sign
    with mock.patch.object(control, "sign", side_effect=lambda x: -original(x)):
        try:
            trace = load_scenario(run.paths["reaching"], {"sim.duration": "0.05"}).run()
        except DivergenceError as e:
            return CheckResult("sign_flip_detected", True, f"flipped signum diverged at sample {e.sample}")
    violations = verify_lyapunov(trace)
    return CheckResult("sign_flip_detected", violations >= 1, f"{violations} violations with the signum flipped")


def check_dropped_d4_detected(run: _Runner, threshold: float = 0.01) -> CheckResult:
    """Dropping the motor-side estimate from the position law must break sine tracking."""
    original = observer.extract_estimates

    def without_d4(*args, **kwargs):
        return dataclasses.replace(original(*args, **kwargs), d4=0.0)

    with mock.patch.object(observer, "extract_estimates", side_effect=without_d4):
        try:
            trace = load_scenario(run.paths["tracking"], {"sim.duration": "2"}).run()
        except DivergenceError as e:
            return CheckResult("dropped_d4_detected", True, f"run without the d4 estimate diverged at sample {e.sample}")
    error = rmse(trace, window=(0.5, None))
    return CheckResult("dropped_d4_detected", error > threshold, f"RMSE {error:.3g} rad without the d4 estimate")


CHECKS: dict[str, Callable[[_Runner], CheckResult]] = {
    "pole_placement": check_pole_placement,
    "observer_convergence": check_observer_convergence,
    "iss_bound": check_iss_bound,
    "ablation": check_ablation,
    "reaching": check_reaching,
    "lyapunov": check_lyapunov,
    "quasi_tradeoff": check_quasi_tradeoff,
    "continuous_smc": check_continuous_smc,
    "chattering_suppression": check_chattering_suppression,
    "force_tracking": check_force_tracking,
    "force_overshoot": check_force_overshoot,
    "determinism": check_determinism,
    "observer_bandwidth": check_observer_bandwidth,
    "sign_flip_detected": check_sign_flip_detected,
    "dropped_d4_detected": check_dropped_d4_detected,
}


def run_checks(only: Optional[Iterable[str]] = None) -> list[CheckResult]:
    """Runs the selected checks (all by default). An exception inside a check counts as its failure."""
    names = list(only) if only is not None else list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown check(s) {unknown}, expected some of {list(CHECKS)}")

    runner = _Runner()
    results = []
    for name in names:
        logger.info(f"Running check {name}")
        start = time.perf_counter()
        try:
            result = CHECKS[name](runner)
        except (ValueError, DivergenceError) as e:
            logger.error(f"Check {name} raised: {e}")
            result = CheckResult(name, False, f"{type(e).__name__}: {e}")
        result.runtime = time.perf_counter() - start
        logger.info(f"Check {name}: {'pass' if result.passed else 'FAIL'} ({result.runtime:.1f} s) {result.detail}")
        results.append(result)
    return results
