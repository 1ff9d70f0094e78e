import numpy as np
import pytest

from adaptire.exceptions import UnderSampledError
from adaptire.fitting.pipeline import (
    AdaptedMfRegressor,
    fit_base_at_condition,
    fit_stage_pipeline,
    fit_with_report,
    observations_to_xy,
)
from adaptire.fitting.synthetic import (
    REFERENCE,
    SweepGrid,
    as_array,
    calibrated_tree,
    model_lateral_force,
    random_tree,
    read_sweep_csv,
    sensitivities,
    synthesize_sweep_data,
    write_sweep_csv,
)
from adaptire.mf_core import BaseMfCoefficients, lateral_force_array


def _grid_rms(truth, fitted, n=5):
    p = np.linspace(200.0, 300.0, n)
    d = np.linspace(2.4, 8.0, n)
    t = np.linspace(25.0, 90.0, n)
    fz = np.linspace(1500.0, 6500.0, n)
    P, D, T, F = (m.ravel() for m in np.meshgrid(p, d, t, fz, indexing="ij"))
    cs = fitted.stiffness(P, D, T, F) / truth.stiffness(P, D, T, F) - 1
    mu = fitted.peak_friction(D, T, F) / truth.peak_friction(D, T, F) - 1
    return float(np.sqrt(np.mean(cs**2))), float(np.sqrt(np.mean(mu**2)))


@pytest.fixture(scope="module")
def calibrated_data():
    return synthesize_sweep_data()


def test_grid_size_and_order(calibrated_data):
    assert len(calibrated_data) == 4 * 3 * 3 * 5 * 25 == SweepGrid().size
    arr = as_array(calibrated_data)
    assert np.all(arr[:25, 2] == 225.0) and np.all(arr[:25, 1] == arr[0, 1])


def test_base_fit_single_condition():
    truth = BaseMfCoefficients(a1=-3e-5, a2=1.15, a3=55000.0, a4=3800.0, shape_c=1.4, curvature_e=-0.5)
    loads = np.array([1500.0, 3000.0, 4500.0, 6000.0])
    alpha = np.deg2rad(np.linspace(-15, 15, 25))
    A, F = np.meshgrid(alpha, loads)
    fy = lateral_force_array(truth, A.ravel(), F.ravel())
    arr = np.column_stack([A.ravel(), F.ravel(), np.full(A.size, 250.0), np.full(A.size, 8.0), np.full(A.size, 25.0), fy])
    res = fit_base_at_condition(arr)
    np.testing.assert_allclose(res.coefficients, [55000.0, 3800.0, -3e-5, 1.15, 1.4, -0.5], rtol=1e-6)


def test_zero_noise_recovers_calibrated_tree(calibrated_data):
    fitted = fit_stage_pipeline(calibrated_data)
    cs_rms, mu_rms = _grid_rms(calibrated_tree(), fitted)
    assert cs_rms < 1e-6 and mu_rms < 1e-6


def test_report_lists_stages(calibrated_data):
    report = fit_with_report(calibrated_data)
    names = [s.stage.value for s in report.stages]
    assert names[0] == "BaseAtCondition" and names[-1] == "Joint"
    assert "coefficient" in report.to_text()


def test_noisy_random_tree_within_tolerance():
    truth = random_tree(np.random.default_rng(3))
    data = synthesize_sweep_data(SweepGrid(noise_fraction=0.02), seed=3, tree=truth)
    cs_rms, mu_rms = _grid_rms(truth, fit_stage_pipeline(data))
    assert cs_rms < 0.05 and mu_rms < 0.05


def test_two_temperatures_rejected(calibrated_data):
    arr = as_array(calibrated_data)
    subset = arr[arr[:, 4] < 80.0]
    with pytest.raises(UnderSampledError, match="temperature"):
        fit_stage_pipeline(subset)


def test_fitted_model_keeps_crossover(calibrated_data):
    s = sensitivities(fit_stage_pipeline(calibrated_data))
    assert s["dcs_dp_low_load"] < 0 < s["dcs_dp_high_load"]


def test_csv_round_trip(tmp_path, calibrated_data):
    path = tmp_path / "sweep.csv"
    write_sweep_csv(calibrated_data[:50], path)
    back = read_sweep_csv(path)
    np.testing.assert_allclose(as_array(back), as_array(calibrated_data[:50]), rtol=1e-15, atol=1e-18)


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        read_sweep_csv(path)


def test_regressor_api(calibrated_data):
    X, y = observations_to_xy(calibrated_data)
    model = AdaptedMfRegressor(joint_refinement=False).fit(X, y)
    assert model.score(X, y) > 0.999999
    assert model.get_params()["reference_pressure"] == REFERENCE.pressure
    np.testing.assert_allclose(model.predict(X[:10]), model_lateral_force(model.coefficients_, as_array(calibrated_data[:10])))
