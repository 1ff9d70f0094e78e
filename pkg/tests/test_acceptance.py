"""Acceptance criteria 1-9. Each test records a PASS/FAIL line that the
terminal summary prints (see ``conftest.pytest_terminal_summary``)."""

import math
import time

import numpy as np
import pytest

from adaptire.cli import main as cli_main
from adaptire.esc import EscConfig, desired_yaw_moment, select_braked_wheel, sliding_surface
from adaptire.fitting.pipeline import fit_stage_pipeline
from adaptire.fitting.synthetic import SweepGrid, random_tree, sensitivities, synthesize_sweep_data
from adaptire.maneuver import (
    ManeuverSpec,
    amplitude_ramp,
    compare_adaptive_vs_fixed,
    load_maneuver,
    run_maneuver,
)
from adaptire.mf_core import BaseMfCoefficients, cornering_stiffness, lateral_force_array, peak_friction
from adaptire.rnn import SurfaceTemperatureRNN
from adaptire.thermal import (
    ThermalParameters,
    equilibrium_temperature,
    integrate_surface_temperature,
    simulate_drive_cycle,
)
from adaptire.vehicle import BicycleReference, Wheel, desired_yaw_rate

from conftest import DATA_DIR

RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def _grid_rms(truth, fitted, n=5):
    p = np.linspace(225.0, 300.0, n)
    d = np.linspace(2.4, 8.0, n)
    t = np.linspace(25.0, 90.0, n)
    fz = np.linspace(0.33, 1.67, n) * 4000.0
    P, D, T, F = (m.ravel() for m in np.meshgrid(p, d, t, fz, indexing="ij"))
    cs = fitted.stiffness(P, D, T, F) / truth.stiffness(P, D, T, F) - 1
    mu = fitted.peak_friction(D, T, F) / truth.peak_friction(D, T, F) - 1
    return float(np.sqrt(np.mean(cs**2))), float(np.sqrt(np.mean(mu**2)))


@pytest.fixture(scope="module")
def zero_noise_fit():
    start = time.perf_counter()
    fitted = fit_stage_pipeline(synthesize_sweep_data())
    return fitted, time.perf_counter() - start


def test_criterion_1_sensitivities(zero_noise_fit):
    fitted, elapsed = zero_noise_fit
    s = sensitivities(fitted)
    checks = {
        "cs +20% pressure @1.5Fz": (s["cs_pressure"], 0.08, 0.12),
        "cs -60% tread": (s["cs_tread"], 0.27, 0.33),
        "cs cold->hot": (s["cs_temperature"], -0.25, -0.20),
        "grip -60% tread": (s["grip_tread"], 0.08, 0.12),
        "grip cold->hot": (s["grip_temperature"], -0.12, -0.08),
    }
    ok = all(lo <= v <= hi for v, lo, hi in checks.values()) and elapsed < 60.0
    detail = ", ".join(f"{k} {v:+.4f}" for k, (v, _, _) in checks.items())
    record(1, ok, f"{detail}; fit {elapsed:.1f} s")


@pytest.mark.slow
def test_criterion_2_round_trip():
    worst_clean, worst_noisy = 0.0, 0.0
    for seed in range(20):
        truth = random_tree(np.random.default_rng(seed))
        clean = fit_stage_pipeline(synthesize_sweep_data(seed=seed, tree=truth))
        noisy = fit_stage_pipeline(synthesize_sweep_data(SweepGrid(noise_fraction=0.02), seed=seed, tree=truth))
        worst_clean = max(worst_clean, *_grid_rms(truth, clean))
        worst_noisy = max(worst_noisy, *_grid_rms(truth, noisy))
    ok = worst_clean < 1e-3 and worst_noisy < 0.05
    record(2, ok, f"worst rms zero-noise {worst_clean:.2e} (< 1e-3), 2% noise {worst_noisy:.4f} (< 0.05)")


def test_criterion_3_pressure_crossover(zero_noise_fit):
    s = sensitivities(zero_noise_fit[0])
    low, high = s["dcs_dp_low_load"], s["dcs_dp_high_load"]
    record(3, low < 0 < high, f"dCS/dp {low:.2f} N/rad/kPa at 0.33Fz, {high:.2f} at 1.5Fz")


def _random_base(rng):
    return BaseMfCoefficients(
        a1=rng.uniform(-5e-5, 0.0), a2=rng.uniform(0.8, 1.4), a3=rng.uniform(3e4, 1e5),
        a4=rng.uniform(2000.0, 6000.0), shape_c=rng.uniform(1.0, 1.9), curvature_e=rng.uniform(-2.0, 0.9),
    )


def test_criterion_4_analytic_identities():
    rng = np.random.default_rng(4)
    worst_slope, at_a4_exact, odd, bounded = 0.0, True, True, True
    for _ in range(10_000):
        c = _random_base(rng)
        fz = rng.uniform(500.0, 8000.0)
        alpha = rng.uniform(-1.5, 1.5)
        h = 1e-6
        slope = (lateral_force_array(c, h, fz) - lateral_force_array(c, -h, fz)) / (2 * h)
        worst_slope = max(worst_slope, abs(slope / cornering_stiffness(c, fz) - 1))
        peak = cornering_stiffness(c, c.a4)
        at_a4_exact &= peak == c.a3 and peak > cornering_stiffness(c, c.a4 * (1 + 1e-6))
        at_a4_exact &= peak > cornering_stiffness(c, c.a4 * (1 - 1e-6))
        fy = lateral_force_array(c, alpha, fz)
        odd &= lateral_force_array(c, -alpha, fz) == -fy
        bounded &= abs(fy) <= peak_friction(c, fz) * fz
    ok = worst_slope < 1e-6 and at_a4_exact and odd and bounded
    record(4, ok, f"slope rel err {worst_slope:.1e}, max at a4 {at_a4_exact}, odd {odd}, |Fy|<=D {bounded} (1e4 samples)")


def test_criterion_5_thermal():
    params = ThermalParameters(heat_capacity=3000.0, conductance=150.0, ambient=25.0)
    target = equilibrium_temperature(params, 3000.0, 20.0, 0.05)
    final = integrate_surface_temperature(25.0, params, 3000.0, 20.0, 0.05, duration=300.0, dt=0.1)[-1]
    tau, teq = params.time_constant, params.ambient + 3000.0 / params.conductance

    def err(dt):
        traj = integrate_surface_temperature(25.0, params, 3000.0, 20.0, 0.05, duration=10.0, dt=dt)
        return traj[-1] - (teq + (25.0 - teq) * math.exp(-10.0 / tau))

    e = [err(dt) for dt in (0.5, 0.25, 0.125)]
    ratio = (e[0] - e[1]) / (e[1] - e[2])
    ok = abs(target - 45.0) < 1e-12 and abs(final - target) < 0.1 and 1.8 <= ratio <= 2.2
    record(5, ok, f"equilibrium {target:.3f} C, reached {final:.4f} C, Richardson ratio {ratio:.3f}")


@pytest.mark.slow
def test_criterion_6_rnn():
    rng = np.random.default_rng(6)
    short = [simulate_drive_cycle(rng, duration=40.0) for _ in range(2)]
    X, y = [t.features() for t in short], [t.surface for t in short]
    model = SurfaceTemperatureRNN(epochs=1).fit(X, y)
    worst = 0.0
    for _ in range(50):
        theta = model.theta_ + 0.1 * rng.standard_normal(model.theta_.size)
        direction = rng.standard_normal(theta.size)
        direction /= np.linalg.norm(direction)
        _, grad = model.loss_and_gradient(X, y, theta)
        h = 1e-5
        numeric = (model.loss_and_gradient(X, y, theta + h * direction)[0]
                   - model.loss_and_gradient(X, y, theta - h * direction)[0]) / (2 * h)
        analytic = float(grad @ direction)
        worst = max(worst, abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-12))

    train_rng = np.random.default_rng(0)
    train = [simulate_drive_cycle(train_rng) for _ in range(20)]
    held = simulate_drive_cycle(np.random.default_rng([0, 1]))
    net = SurfaceTemperatureRNN(seed=0).fit([t.features() for t in train], [t.surface for t in train])
    rms = float(np.sqrt(np.mean((net.predict(held.features()) - held.surface) ** 2)))
    ok = worst < 1e-5 and rms <= 2.0
    record(6, ok, f"BPTT max rel err {worst:.1e} over 50 perturbations, held-out rms {rms:.3f} C")


TABLE = {
    (1, 1, 1): None, (1, 1, -1): Wheel.FRONT_LEFT, (1, -1, 1): Wheel.REAR_RIGHT, (1, -1, -1): None,
    (-1, 1, 1): None, (-1, 1, -1): Wheel.REAR_LEFT, (-1, -1, 1): Wheel.FRONT_RIGHT, (-1, -1, -1): None,
}


def _shipped_maneuvers():
    specs = []
    for path in sorted(DATA_DIR.glob("*.txt")):
        if "[maneuver]" in path.read_text():
            specs.append((path.name, load_maneuver(path)))
    return specs


def _linear_decay_rate(params, eta):
    cfg = EscConfig(sliding_gain=eta)
    cf, cr, u, delta, dt = 90000.0, 110000.0, 20.0, 0.02, 1e-4
    gamma_des = desired_yaw_rate(params, BicycleReference.from_stiffness(params, cf, cr), u, delta, 10.0)
    v, r = 0.0, gamma_des + 0.2
    times, slides = [], []
    for i in range(int(0.8 / dt)):
        fyf = cf * (delta - (v + params.lf * r) / u)
        fyr = cr * (-(v - params.lr * r) / u)
        s = sliding_surface(r, gamma_des)
        times.append(i * dt)
        slides.append(s)
        mz = desired_yaw_moment(params, fyf, fyr, s, 0.0, delta, cfg)
        v += dt * ((fyf * math.cos(delta) + fyr) / params.mass - u * r)
        r += dt * (params.lf * fyf * math.cos(delta) - params.lr * fyr + mz) / params.yaw_inertia
    return -np.polyfit(np.asarray(times), np.log(np.abs(slides)), 1)[0]


def test_criterion_7_esc_logic(vehicle, tree):
    table_ok = all(select_braked_wheel(0.2 * k[0], 0.05 * k[1], 800.0 * k[2]) is w for k, w in TABLE.items())
    usage = 0.0
    for _, spec in _shipped_maneuvers():
        for esc_on in (True, False):
            usage = max(usage, run_maneuver(spec, vehicle, tree, esc_enabled=esc_on).max_friction_usage)
    rate = _linear_decay_rate(vehicle, 5.0)
    ok = table_ok and usage <= 1.001 and abs(rate / 5.0 - 1) < 0.05
    record(7, ok, f"table exact {table_ok}, max friction usage {usage:.4f}, decay rate {rate:.3f} 1/s (eta 5)")


@pytest.mark.slow
def test_criterion_8_scenario(vehicle, tree):
    spec = ManeuverSpec()
    ramp = amplitude_ramp(spec, vehicle, tree, esc_enabled=False)
    spins = [a for a, s in ramp if s.spin_out]
    first = spins[0] if spins else None
    monotone = first is not None and all(s.spin_out for a, s in ramp if a >= first)
    esc_holds = first is not None and not run_maneuver(spec.with_amplitude(first), vehicle, tree).summary.spin_out

    scenario = load_maneuver(DATA_DIR / "compare_worn_hot_underinflated.txt")
    start = time.perf_counter()
    cmp = compare_adaptive_vs_fixed(scenario, vehicle, tree, scenario.conditions)
    elapsed = time.perf_counter() - start
    deltas = cmp.deltas
    better = all(v < 0 for v in deltas.values())
    ok = monotone and esc_holds and better and elapsed < 30.0
    shown = ", ".join(f"{k} {v:+.4g}" for k, v in deltas.items())
    record(8, ok, f"spin-out from {first} deg (monotone {monotone}), ESC on holds {esc_holds}; "
                  f"adaptive-fixed {shown}; compare {elapsed:.1f} s")


def _snapshot(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


@pytest.mark.slow
def test_criterion_9_determinism(tmp_path, capsys):
    short = tmp_path / "short.txt"
    short.write_text((DATA_DIR / "sine_with_dwell.txt").read_text())
    runs = {
        "synth": lambda out: ["synth", "--out", out, "--seed", 7, "--noise", 0.02],
        "fit": lambda out: ["fit", tmp_path / "synth_a" / "sweep.csv", "--out", out],
        "sim": lambda out: ["sim", "--maneuver", short, "--out", out, "--amplitude", 270],
        "compare": lambda out: ["compare", "--maneuver", DATA_DIR / "compare_worn_hot_underinflated.txt", "--out", out],
        "thermal-train": lambda out: ["thermal-train", "--out", out, "--seed", 3, "--traces", 4, "--epochs", 60],
    }
    same = {}
    for name, argv in runs.items():
        codes = [cli_main([str(a) for a in argv(tmp_path / f"{name}_{tag}")]) for tag in ("a", "b")]
        a, b = _snapshot(tmp_path / f"{name}_a"), _snapshot(tmp_path / f"{name}_b")
        same[name] = codes == [0, 0] and bool(a) and a == b
    capsys.readouterr()
    record(9, all(same.values()), ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()))
