import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptire.exceptions import WheelLiftError
from adaptire.fitting.synthetic import REFERENCE
from adaptire.thermal import GRAVITY
from adaptire.vehicle import (
    BicycleReference,
    CorneringStiffnessEstimator,
    VehicleParameters,
    axle_forces_from_measurements,
    desired_yaw_rate,
    dumps_vehicle,
    estimate_cornering_stiffness,
    initial_state,
    loads_vehicle,
    plant_step,
    reference_from_tire_model,
    understeer_gradient,
    wheel_loads,
)


def linear_bicycle(params, cf, cr, u, steer, duration, dt=1e-3):
    """Reference 2-DOF model; returns per-step arrays of time, delta, gamma, ay, yaw accel, Fyf, Fyr."""
    v = r = 0.0
    out = {k: [] for k in ("t", "delta", "gamma", "ay", "yaw_accel", "fyf", "fyr")}
    for i in range(int(round(duration / dt))):
        t = i * dt
        d = steer(t)
        fyf = cf * (d - (v + params.lf * r) / u)
        fyr = cr * (-(v - params.lr * r) / u)
        ay = (fyf * math.cos(d) + fyr) / params.mass
        yaw_accel = (params.lf * fyf * math.cos(d) - params.lr * fyr) / params.yaw_inertia
        for key, val in (("t", t), ("delta", d), ("gamma", r), ("ay", ay), ("yaw_accel", yaw_accel), ("fyf", fyf), ("fyr", fyr)):
            out[key].append(val)
        v += dt * (ay - u * r)
        r += dt * yaw_accel
    return {k: np.asarray(v) for k, v in out.items()}


def test_static_balance(vehicle):
    assert vehicle.front_static_load + vehicle.rear_static_load == pytest.approx(vehicle.mass * GRAVITY, rel=1e-15)
    assert vehicle.front_static_load * vehicle.lf == pytest.approx(vehicle.rear_static_load * vehicle.lr, rel=1e-14)


def test_understeer_examples():
    p = VehicleParameters(mass=9000.0 / GRAVITY)
    assert p.front_static_load == pytest.approx(5000.0) and p.rear_static_load == pytest.approx(4000.0)
    assert understeer_gradient(p, 80000.0, 80000.0) == pytest.approx(0.0125)
    sym = VehicleParameters(lf=1.35, lr=1.35)
    assert understeer_gradient(sym, 70000.0, 70000.0) == 0.0
    assert understeer_gradient(p, 80000.0, 100000.0) > understeer_gradient(p, 80000.0, 80000.0)
    with pytest.raises(ValueError):
        understeer_gradient(p, 0.0, 1.0)


def test_desired_yaw_rate_examples(vehicle):
    kus = vehicle.wheelbase * GRAVITY / 400.0  # characteristic speed 20 m/s
    ref = BicycleReference(80000.0, 80000.0, kus, 20.0)
    assert desired_yaw_rate(vehicle, ref, 20.0, 0.05, 10.0) == pytest.approx(20 * 0.05 / (2.7 * 2), rel=1e-12)
    assert desired_yaw_rate(vehicle, ref, 20.0, 0.05, 0.30) == pytest.approx(0.30 * 9.81 / 20, rel=1e-12)
    assert desired_yaw_rate(vehicle, ref, 20.0, 0.0, 1.0) == 0.0


def test_characteristic_speed_from_understeer(vehicle):
    ref = BicycleReference.from_stiffness(vehicle, 120000.0, 110000.0)
    assert ref.characteristic_speed == pytest.approx(math.sqrt(vehicle.wheelbase * GRAVITY / ref.understeer))
    over = BicycleReference.from_stiffness(vehicle, 120000.0, 60000.0)
    assert over.understeer < 0 and math.isinf(over.characteristic_speed)
    assert abs(desired_yaw_rate(vehicle, over, 30.0, 0.02, 1.0)) <= 9.81 / 30.0


@settings(max_examples=200, deadline=None)
@given(
    st.floats(40000.0, 200000.0), st.floats(40000.0, 200000.0), st.floats(1.0, 50.0),
    st.floats(-0.4, 0.4), st.floats(0.1, 1.5),
)
def test_desired_yaw_rate_odd_and_capped(cf, cr, u, delta, mu):
    p = VehicleParameters()
    ref = BicycleReference.from_stiffness(p, cf, cr)
    g = desired_yaw_rate(p, ref, u, delta, mu)
    assert desired_yaw_rate(p, ref, u, -delta, mu) == -g
    assert abs(g) <= mu * GRAVITY / u * (1 + 1e-12)


def test_front_and_rear_stiffness_move_target_oppositely(vehicle):
    def g(cf, cr):
        return desired_yaw_rate(vehicle, BicycleReference.from_stiffness(vehicle, cf, cr), 20.0, 0.02, 5.0)

    h = 100.0
    assert (g(100000.0 + h, 110000.0) - g(100000.0 - h, 110000.0)) > 0
    assert (g(100000.0, 110000.0 + h) - g(100000.0, 110000.0 - h)) < 0


def test_axle_force_inversion_example():
    fyf, fyr = axle_forces_from_measurements(VehicleParameters(), 3.0, 0.5, 0.0)
    assert fyf == pytest.approx(8000.0 / 2.7) and fyr == pytest.approx(4150.0 / 2.7)
    assert fyf == pytest.approx(2963.0, abs=0.5) and fyr == pytest.approx(1537.0, abs=0.5)
    assert axle_forces_from_measurements(VehicleParameters(), 0.0, 0.0, 0.1) == (0.0, 0.0)
    with pytest.raises(ValueError):
        axle_forces_from_measurements(VehicleParameters(), 1.0, 0.0, math.pi / 2)


def test_axle_force_inversion_recovers_model_forces(vehicle):
    run = linear_bicycle(vehicle, 90000.0, 100000.0, 20.0, lambda t: 0.03 * math.sin(2 * math.pi * t), 2.0)
    for i in range(0, len(run["t"]), 97):
        fyf, fyr = axle_forces_from_measurements(vehicle, run["ay"][i], run["yaw_accel"][i], run["delta"][i])
        assert fyf == pytest.approx(run["fyf"][i], rel=1e-9, abs=1e-9)
        assert fyr == pytest.approx(run["fyr"][i], rel=1e-9, abs=1e-9)


def test_vehicle_file_round_trip():
    p = VehicleParameters(mass=1620.5, front_roll_share=0.65)
    assert loads_vehicle(dumps_vehicle(p)) == p
    with pytest.raises(ValueError, match="unknown"):
        loads_vehicle("[vehicle]\nmas = 3\n")


# -- plant --------------------------------------------------------------------------------------


def test_straight_running_stays_straight(vehicle, tree):
    state = initial_state(vehicle, 25.0, REFERENCE)
    for _ in range(500):
        state = plant_step(vehicle, state, 0.0, np.zeros(4), tree, 1e-3)
    assert state.v == 0.0 and state.yaw_rate == 0.0 and state.heading == 0.0
    assert state.u < 25.0


def test_without_drag_speed_is_constant(tree):
    p = VehicleParameters(drag_coefficient=0.0)
    state = initial_state(p, 25.0, REFERENCE)
    for _ in range(200):
        state = plant_step(p, state, 0.0, np.zeros(4), tree, 1e-3)
    assert state.u == 25.0


def test_load_transfer_conserves_weight(vehicle):
    for ax, ay in ((0.0, 0.0), (-6.0, 0.0), (2.0, 7.5), (-3.0, -8.0)):
        assert wheel_loads(vehicle, ax, ay).sum() == pytest.approx(vehicle.mass * GRAVITY, rel=1e-12)


def test_loads_conserved_each_step(vehicle, tree):
    state = initial_state(vehicle, 22.0, REFERENCE)
    for i in range(1500):
        delta = 0.08 * math.sin(2 * math.pi * 0.7 * i * 1e-3)
        state = plant_step(vehicle, state, delta, np.array([0.0, 300.0, 0.0, 0.0]), tree, 1e-3)
        assert state.normal_loads.sum() == pytest.approx(vehicle.mass * GRAVITY, rel=1e-6)
        usage = np.hypot(state.lateral_forces, state.longitudinal_forces) / (state.peak_friction * state.normal_loads)
        assert usage.max() <= 1.001


def test_linear_range_matches_bicycle(vehicle, tree):
    u0, delta = 12.0, math.radians(1.0)
    state = initial_state(VehicleParameters(drag_coefficient=0.0), u0, REFERENCE)
    for _ in range(6000):
        state = plant_step(VehicleParameters(drag_coefficient=0.0), state, delta, np.zeros(4), tree, 1e-3)
    ref, mu = reference_from_tire_model(vehicle, tree, REFERENCE, REFERENCE)
    expected = desired_yaw_rate(vehicle, ref, state.u, delta, 10.0)
    assert state.yaw_rate == pytest.approx(expected, rel=0.05)


def test_right_steer_gives_positive_yaw(vehicle, tree):
    state = initial_state(vehicle, 20.0, REFERENCE)
    for _ in range(300):
        state = plant_step(vehicle, state, 0.02, np.zeros(4), tree, 1e-3)
    assert state.yaw_rate > 0 and state.ay > 0


def test_wheel_lift_raises(vehicle, tree):
    state = replace(initial_state(vehicle, 20.0, REFERENCE), ay=40.0)
    with pytest.raises(WheelLiftError, match="FrontRight|RearRight"):
        plant_step(vehicle, state, 0.0, np.zeros(4), tree, 1e-3)


def test_step_size_bound(vehicle, tree):
    with pytest.raises(ValueError):
        plant_step(vehicle, initial_state(vehicle, 20.0, REFERENCE), 0.0, np.zeros(4), tree, 0.005)


def test_locked_wheel_stops_spinning(vehicle, tree):
    state = initial_state(vehicle, 20.0, REFERENCE)
    for _ in range(400):
        state = plant_step(vehicle, state, 0.0, np.array([3000.0, 0.0, 0.0, 0.0]), tree, 1e-3)
    assert state.wheel_speeds[0] == 0.0
    assert state.slip_ratios[0] == pytest.approx(-1.0)


# -- estimator ----------------------------------------------------------------------------------


def test_rls_recovers_linear_model(vehicle):
    cf, cr = 80000.0, 90000.0
    run = linear_bicycle(vehicle, cf, cr, 20.0, lambda t: math.radians(2.0) * math.sin(2 * math.pi * 0.5 * t), 5.0)
    est_cf, est_cr, conf = estimate_cornering_stiffness(
        vehicle, run["t"], run["ay"], run["gamma"], np.full(run["t"].size, 20.0), run["delta"],
        prior=(60000.0, 120000.0), yaw_accel=run["yaw_accel"],
    )
    assert est_cf == pytest.approx(cf, rel=0.01) and est_cr == pytest.approx(cr, rel=0.01)
    assert np.isfinite(conf)


def test_rls_error_envelope_shrinks(vehicle):
    cf, cr = 80000.0, 90000.0
    run = linear_bicycle(vehicle, cf, cr, 20.0, lambda t: math.radians(2.0) * math.sin(2 * math.pi * 0.5 * t), 6.0)
    est = CorneringStiffnessEstimator(vehicle, 60000.0, 120000.0)
    errors = []
    for i in range(run["t"].size):
        est.update(20.0, run["gamma"][i], run["ay"][i], run["yaw_accel"][i], run["delta"][i])
        errors.append((est.stiffness[0] / cf - 1) ** 2 + (est.stiffness[1] / cr - 1) ** 2)
    envelope = [max(errors[k:k + 1000]) for k in range(0, len(errors), 1000)]
    assert all(b <= a for a, b in zip(envelope, envelope[1:]))


def test_rls_keeps_prior_without_excitation(vehicle):
    t = np.arange(0.0, 3.0, 1e-3)
    zeros = np.zeros_like(t)
    cf, cr, conf = estimate_cornering_stiffness(vehicle, t, zeros, zeros, np.full_like(t, 20.0), zeros, prior=(70000.0, 75000.0))
    assert (cf, cr) == pytest.approx((70000.0, 75000.0), rel=1e-15)
    assert conf == 2.0


def test_rls_requires_two_seconds(vehicle):
    t = np.arange(0.0, 1.0, 1e-3)
    with pytest.raises(ValueError, match="2 s"):
        estimate_cornering_stiffness(vehicle, t, t, t, t, t, prior=(1.0, 1.0))


def test_rls_on_two_track_plant(vehicle, tree):
    state = initial_state(vehicle, 20.0, REFERENCE)
    ref, _ = reference_from_tire_model(vehicle, tree, REFERENCE, REFERENCE)
    est = CorneringStiffnessEstimator(vehicle, 0.7 * ref.front_stiffness, 1.3 * ref.rear_stiffness)
    for i in range(6000):
        delta = math.radians(1.0) * math.sin(2 * math.pi * 0.5 * i * 1e-3)
        state = plant_step(vehicle, state, delta, np.zeros(4), tree, 1e-3)
        est.update(state.u, state.yaw_rate, state.ay, state.yaw_accel, delta)
    cf, cr = est.stiffness
    assert cf == pytest.approx(ref.front_stiffness, rel=0.10)
    assert cr == pytest.approx(ref.rear_stiffness, rel=0.10)
