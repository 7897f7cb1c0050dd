import warnings

import numpy as np
import pytest

from gaenkf.enkf import (
    ControlLayout,
    ControlVector,
    CycleConfig,
    Ensemble,
    PriorSpec,
    analysis,
    analysis_physical,
    anomalies,
    enkf_update,
    exact_cross,
    exact_mean,
    forecast,
    init_ensemble,
    kalman_gain,
    perturb,
    propagate,
    run_cycle,
    transform_batch,
    write_cycle_diagnostics,
)
from gaenkf.errors import ConfigurationError, ContractError, NumericalBlowupError, SingularMatrixError
from gaenkf.hydro import Grid, HydroState, PhysicalParams, SolverConfig, run_window, apply_control
from gaenkf.observation import GaugeObs, ObservationBatch, Subdomain, WsrObs, model_equivalents

LAYOUT1 = ControlLayout(1, 0)


def controls1(n):
    """``n`` distinct (friction, multiplier) rows."""
    return np.column_stack([np.arange(n) + 1.0, np.ones(n)])


def scalar_ensemble(n, mean, var, seed, exact_var=False):
    x = np.random.default_rng(seed).standard_normal(n)
    if exact_var:
        x = x - exact_mean(x[:, None])[0]
        x = x / np.sqrt(exact_cross(x[:, None], x[:, None])[0, 0] / (n - 1))
    return (mean + np.sqrt(var) * x)[:, None]


# ---------------------------------------------------------------- statistics


def test_exact_mean_and_constant_anomalies():
    a = np.array([[1e16, 3.0], [1.0, 3.0], [-1e16, 3.0]])
    np.testing.assert_array_equal(exact_mean(a), [1 / 3, 3.0])
    assert np.all(anomalies(a)[:, 1] == 0.0)


# ---------------------------------------------------------------- gain


def test_scalar_gain_is_half_for_unit_variances():
    x = scalar_ensemble(100, 0.0, 1.0, 0, exact_var=True)
    diag = kalman_gain(anomalies(x), anomalies(x), [1.0])
    assert diag.gain[0, 0] == pytest.approx(0.5, abs=1e-12)


def test_realized_gain_matches_sample_ratio():
    x = scalar_ensemble(100, 3.0, 2.0, 1)
    a = anomalies(x)
    p_hat = exact_cross(a, a)[0, 0] / 99
    diag = kalman_gain(a, a, [0.7])
    assert diag.gain[0, 0] == pytest.approx(p_hat / (p_hat + 0.7), abs=1e-12)


def test_kalman_oracle_large_ensemble():
    # x ~ N(2, 4), y = x, R = 1, observation 5: exact posterior N(4.4, 0.8)
    prior_mean, p, r, yo = 2.0, 4.0, 1.0, 5.0
    n = 10_000
    x = scalar_ensemble(n, prior_mean, p, 2019)
    yp = perturb([yo], [r], n, 1, 7)
    xa, _ = enkf_update(x, x, yp, [r])
    mean_a = prior_mean + p / (p + r) * (yo - prior_mean)
    var_a = p * r / (p + r)
    assert exact_mean(xa)[0] == pytest.approx(mean_a, rel=0.05)
    assert np.var(xa, ddof=1) == pytest.approx(var_a, rel=0.05)


def test_mean_realized_gain_over_repeated_analyses():
    p, r = 2.0, 1.0
    gains = []
    for seed in range(200):
        x = scalar_ensemble(100, 0.0, p, seed)
        _, diag = enkf_update(x, x, perturb([0.3], [r], 100, 1, 10_000 + seed), [r])
        gains.append(diag.gain[0, 0])
    assert np.mean(gains) == pytest.approx(p / (p + r), rel=0.02)


def test_zero_spread_ensemble_is_left_unchanged_bit_for_bit():
    x = np.tile([25.0, 12.0, 0.9], (20, 1))
    y = np.tile([3.0, 4.0], (20, 1))
    xa, diag = enkf_update(x, y, perturb([3.5, 3.0], [0.01, 0.01], 20, 2, 0), [0.01, 0.01])
    assert np.all(diag.gain == 0.0)
    assert np.array_equal(xa, x)


def test_gain_null_space():
    # the second control entry has zero sample covariance with the observation
    y = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    x = np.column_stack([2 * y[:, 0] + 5.0, [3.0, 3.0, 1.0, 1.0]])
    xa, diag = enkf_update(x, y, perturb([0.5], [0.2], 4, 1, 3), [0.2])
    assert abs(diag.gain[1, 0]) <= 1e-12
    np.testing.assert_array_equal(xa[:, 1], x[:, 1])
    assert np.all(diag.gain[0] != 0)


def test_member_order_invariance():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(30, 4))
    y = x[:, :2] @ rng.normal(size=(2, 3)) + rng.normal(scale=0.1, size=(30, 3))
    yp = perturb([0.1, 0.2, 0.3], [0.1, 0.2, 0.3], 30, 3, 5)
    xa, diag = enkf_update(x, y, yp, [0.1, 0.2, 0.3], inflation=1.2)
    perm = rng.permutation(30)
    xb, diag_b = enkf_update(x[perm], y[perm], yp[perm], [0.1, 0.2, 0.3], inflation=1.2)
    assert np.array_equal(xb, xa[perm])
    assert np.array_equal(diag_b.gain, diag.gain)
    assert np.array_equal(exact_mean(xb), exact_mean(xa))
    assert np.array_equal(exact_cross(anomalies(xb), anomalies(xb)),
                          exact_cross(anomalies(xa), anomalies(xa)))


def test_inflation_scales_anomalies_before_the_update():
    x = scalar_ensemble(10, 1.0, 1.0, 6)
    # a vanishing gain isolates the inflation step
    xa, _ = enkf_update(x, x, perturb([0.0], [1e30], 10, 1, 0), [1e30], inflation=2.0)
    np.testing.assert_allclose(anomalies(xa), 2.0 * anomalies(x), rtol=0, atol=1e-12)
    assert exact_mean(xa)[0] == pytest.approx(exact_mean(x)[0], abs=1e-12)


def test_bounds_are_enforced():
    x = scalar_ensemble(50, 1.0, 1.0, 8)
    xa, _ = enkf_update(x, x, perturb([-50.0], [0.01], 50, 1, 0), [0.01], bounds=([0.5], [5.0]))
    assert xa.min() >= 0.5


def test_singular_innovation_covariance_reports_condition():
    x = np.tile([1.0], (5, 1))
    with pytest.raises(SingularMatrixError) as err:
        kalman_gain(anomalies(x), np.zeros((5, 2)), [0.0, 0.0])
    assert err.value.condition_number is not None


def test_jitter_rescues_rank_deficient_covariance():
    x = scalar_ensemble(5, 0.0, 1.0, 2)
    y = np.hstack([x, x])
    diag = kalman_gain(anomalies(x), anomalies(y), [0.0, 0.0])
    assert np.all(np.isfinite(diag.gain))


def test_update_needs_two_members():
    with pytest.raises(ContractError):
        enkf_update(np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)), [1.0])


# ---------------------------------------------------------------- perturbations


def test_zero_noise_perturbations_vanish():
    out = perturb([1.0, 2.0], [0.0, 0.0], 7, 1, 3)
    assert np.array_equal(out, np.tile([1.0, 2.0], (7, 1)))


def test_gauge_perturbations_do_not_depend_on_wsr_count():
    a = perturb([1.0, 2.0], [0.1, 0.1], 9, 2, 11)
    b = perturb([1.0, 2.0, 0.0, 0.0], [0.1, 0.1, 0.2, 0.2], 9, 2, 11)
    assert np.array_equal(a, b[:, :2])


# ---------------------------------------------------------------- init_ensemble


def _prior(std=(5.0, 0.1, 0.1)):
    return PriorSpec(ControlLayout(1, 1), mean=[25.0, 1.0, 0.0], std=std,
                     lower=[5.0, 0.5, -1.0], upper=[80.0, 1.5, 1.0])


def test_init_ensemble_sample_std():
    ens = init_ensemble(_prior(), 50, 2019, HydroState(0.0, np.zeros((2, 2))))
    assert 3.5 <= np.std(ens.controls[:, 0], ddof=1) <= 6.5
    assert ens.controls.shape == (50, 3) and ens.depth.shape == (50, 2, 2)


def test_init_ensemble_zero_variance_and_determinism():
    s = HydroState(0.0, np.ones((2, 2)))
    ens = init_ensemble(_prior((0.0, 0.0, 0.0)), 5, 1, s)
    assert np.all(ens.controls == [25.0, 1.0, 0.0])
    a = init_ensemble(_prior(), 10, 42, s)
    b = init_ensemble(_prior(), 10, 42, s)
    assert np.array_equal(a.controls, b.controls)


def test_init_ensemble_errors():
    s = HydroState(0.0, np.zeros((2, 2)))
    with pytest.raises(ContractError):
        init_ensemble(_prior(), 1, 0, s)
    impossible = PriorSpec(ControlLayout(1, 0), mean=[25.0, 1.0], std=[5.0, 0.1],
                           lower=[90.0, 0.5], upper=[90.0, 1.5])
    with pytest.raises(ConfigurationError):
        init_ensemble(impossible, 4, 0, s, max_attempts=20)


def test_prior_from_blocks_layout():
    prior = PriorSpec.from_blocks([25, 12], [5, 3], (5, 80), 1.0, 0.15, (0.5, 1.5), 0.1, 3)
    assert prior.layout.size == 6
    np.testing.assert_array_equal(prior.mean, [25, 12, 1.0, 0, 0, 0])
    np.testing.assert_array_equal(prior.std, [5, 3, 0.15, 0.1, 0.1, 0.1])
    assert prior.layout.names[2] == "inflow_multiplier"


def test_control_vector_contracts():
    v = ControlVector([20.0, 10.0], 0.9, [0.1])
    assert np.array_equal(ControlVector.from_array(v.to_array(), v.layout).to_array(), v.to_array())
    with pytest.raises(ContractError):
        ControlVector([-1.0], 1.0, [0.0])
    with pytest.raises(ContractError):
        ControlVector([1.0], 1.0, [np.nan])
    with pytest.raises(ContractError):
        ControlVector.from_array([1.0, 2.0], ControlLayout(1, 1))


# ---------------------------------------------------------------- cycle on a small valley


@pytest.fixture(scope="module")
def valley():
    rows, cols = 12, 7
    r = np.arange(rows)[:, None]
    c = np.arange(cols)[None, :]
    bed = 5.0 + 0.05 * (rows - 1 - r) + np.where(c == 3, 0.0, 0.4 + 0.1 * np.abs(c - 3))
    zones = np.broadcast_to(np.where(c == 3, 0, 1), bed.shape)
    grid = Grid(200.0, bed, zones, inflow_cells=(3,), outlet_cells=(rows * cols - 4,),
                outlet_slope=5e-4, solver=SolverConfig(max_dt=60.0))
    base = PhysicalParams([30.0, 15.0], 1.0,
                          np.array([[0.0, 20.0], [3600.0, 60.0], [7200.0, 30.0]]))
    subs = [Subdomain.rectangle(0, grid, (2, 9), (0, 2)), Subdomain.rectangle(1, grid, (2, 9), (4, 6))]
    truth = ControlVector([24.0, 12.0], 0.85, [0.0, 0.0])
    prior = PriorSpec.from_blocks([30.0, 15.0], [5.0, 3.0], (5.0, 80.0), 1.0, 0.15, (0.5, 1.5),
                                  0.0, 2)
    params, s0 = apply_control(truth, base, HydroState(0.0, np.zeros((rows, cols))), subs)
    times = [1200.0, 2400.0, 3600.0]
    traj = run_window(s0, grid, params, 3600.0, times)
    gauges = [GaugeObs(g, t, 0.0, 0.02) for g in (3 * cols + 3, 8 * cols + 3) for t in times]
    wsrs = [WsrObs(s.id, 3600.0, 0.0, 0.25) for s in subs]
    clean = ObservationBatch(gauges, wsrs)
    values = model_equivalents(traj, grid, subs, clean)
    batch = ObservationBatch(
        [GaugeObs(o.station, o.time, v, o.error_std) for o, v in zip(gauges, values)],
        [WsrObs(o.subdomain, o.time, v, o.error_std_transformed)
         for o, v in zip(wsrs, values[len(gauges):])])
    return dict(grid=grid, base=base, subs=subs, truth=truth, prior=prior, batch=batch,
                values=values)


def _ensemble(v, n=20, seed=3):
    return init_ensemble(v["prior"], n, seed, HydroState(0.0, np.zeros(v["grid"].bed_elevation.shape)))


def test_forecast_zero_spread_gives_identical_equivalents(valley):
    v = valley
    prior = PriorSpec(v["prior"].layout, v["prior"].mean, 0.0, v["prior"].lower, v["prior"].upper)
    ens = init_ensemble(prior, 4, 0, HydroState(0.0, np.zeros((12, 7))))
    fc = forecast(ens, v["grid"], v["base"], v["subs"], CycleConfig((0.0, 3600.0), v["batch"]))
    assert np.all(fc.member_equivalents == fc.member_equivalents[0])
    assert fc.time == 3600.0


def test_forecast_is_permutation_equivariant(valley):
    v = valley
    ens = _ensemble(v, 6)
    cfg = CycleConfig((0.0, 3600.0), v["batch"])
    fc = forecast(ens, v["grid"], v["base"], v["subs"], cfg)
    perm = np.array([5, 3, 1, 0, 2, 4])
    shuffled = Ensemble(ens.controls[perm], ens.depth[perm], 0.0, ens.layout)
    fc2 = forecast(shuffled, v["grid"], v["base"], v["subs"], cfg)
    assert np.array_equal(fc2.member_equivalents, fc.member_equivalents[perm])


def test_truth_member_reproduces_noiseless_observations(valley):
    v = valley
    x = np.tile(v["truth"].to_array(), (2, 1))
    ens = Ensemble(x, np.zeros((2, 12, 7)), 0.0, v["prior"].layout)
    fc = forecast(ens, v["grid"], v["base"], v["subs"], CycleConfig((0.0, 3600.0), v["batch"]))
    assert np.array_equal(fc.member_equivalents[0], v["values"])


def test_forecast_blowup_names_member(valley):
    v = valley
    x = np.tile(v["truth"].to_array(), (3, 1))
    x[1, 2] = 1e306
    ens = Ensemble(x, np.zeros((3, 12, 7)), 0.0, v["prior"].layout)
    with pytest.raises(NumericalBlowupError) as err:
        forecast(ens, v["grid"], v["base"], v["subs"], CycleConfig((0.0, 3600.0), v["batch"]))
    assert err.value.member == 1


def test_transform_gauges_only_is_identity(valley):
    v = valley
    batch = v["batch"].without_wsr()
    fc = forecast(_ensemble(v), v["grid"], v["base"], v["subs"], CycleConfig((0.0, 3600.0), batch))
    tb = transform_batch(fc, batch, 1)
    assert np.array_equal(tb.equivalents, fc.member_equivalents)
    assert np.array_equal(tb.obs, batch.values)
    assert tb.phi.is_identity


def test_transform_wsr_median_maps_to_zero():
    ens = Ensemble(controls1(4), np.zeros((4, 1, 1)), 0.0, LAYOUT1,
                   member_equivalents=np.array([[0.1], [0.2], [0.4], [0.5]]))
    tb = transform_batch(ens, ObservationBatch((), [WsrObs(0, 1.0, 0.3, 0.25)]), 0)
    assert tb.obs[0] == 0.0
    assert tb.r_diag[0] == 0.0625


def test_transform_degenerate_wsr_falls_back_to_identity():
    ens = Ensemble(controls1(3), np.zeros((3, 1, 1)), 0.0, LAYOUT1,
                   member_equivalents=np.full((3, 1), 1.0))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        tb = transform_batch(ens, ObservationBatch((), [WsrObs(0, 1.0, 1.0, 0.25)]), 0)
    assert tb.degenerate_phi and tb.phi.is_identity
    assert any("identity" in str(w.message) for w in caught)


def test_transform_needs_forecast_and_observations():
    ens = Ensemble(controls1(3), np.zeros((3, 1, 1)), 0.0, LAYOUT1)
    with pytest.raises(ContractError):
        transform_batch(ens, ObservationBatch([GaugeObs(0, 1.0, 1.0, 0.1)]), 0)
    with pytest.raises(ContractError):
        transform_batch(ens, ObservationBatch(), 0)


def test_identity_ga_equals_physical_enkf_bit_for_bit(valley):
    v = valley
    batch = v["batch"].without_wsr()
    fc = forecast(_ensemble(v), v["grid"], v["base"], v["subs"], CycleConfig((0.0, 3600.0), batch))
    a, da = analysis(fc, transform_batch(fc, batch, 99), 1.1, (v["prior"].lower, v["prior"].upper))
    b, db = analysis_physical(fc, batch, 99, 1.1, (v["prior"].lower, v["prior"].upper))
    assert np.array_equal(a.controls, b.controls)
    assert np.array_equal(da.gain, db.gain)


def test_cycles_without_observations_are_free_runs(valley):
    v = valley
    ens = _ensemble(v, 5)
    e1, d1, r1 = run_cycle(ens, v["grid"], v["base"], v["subs"],
                           CycleConfig((0.0, 1800.0), extra_record_times=(1800.0,)))
    e2, d2, r2 = run_cycle(e1, v["grid"], v["base"], v["subs"], CycleConfig((1800.0, 3600.0)))
    assert d1 is None and d2 is None and not r1.analysed and not r2.analysed
    assert np.array_equal(e2.controls, ens.controls)
    _, free = propagate(ens.controls, ens.depth, 0.0, 3600.0, v["grid"], v["base"], v["subs"],
                        [1800.0])
    assert np.array_equal(e2.depth, free)
    assert e2.time == 3600.0


def test_gauge_only_cycle_has_no_transform(valley):
    v = valley
    cfg = CycleConfig((0.0, 3600.0), v["batch"].without_wsr(), rng_seed=2)
    ens, diag, rep = run_cycle(_ensemble(v), v["grid"], v["base"], v["subs"], cfg)
    assert rep.n_wsr == 0 and rep.phi is None and diag.gain.shape == (5, 6)
    assert np.all(ens.controls[:, ens.layout.corrections] == 0.0)


def test_cycle_contracts_toward_the_truth(valley):
    v = valley
    ens = _ensemble(v, 30, seed=5)
    scale = v["prior"].std[:3]
    before = np.linalg.norm((ens.mean_control()[:3] - v["truth"].to_array()[:3]) / scale)
    cfg = CycleConfig((0.0, 3600.0), v["batch"].without_wsr(), rng_seed=9,
                      bounds=(v["prior"].lower, v["prior"].upper))
    out, _, rep = run_cycle(ens, v["grid"], v["base"], v["subs"], cfg)
    after = np.linalg.norm((rep.mean_after[:3] - v["truth"].to_array()[:3]) / scale)
    assert after < before
    assert np.all(out.controls[:, :3] > 0)


def test_cycle_is_deterministic(valley, tmp_path):
    v = valley
    cfg = CycleConfig((0.0, 3600.0), v["batch"], inflation=1.1, rng_seed=4, correction_std=0.1)
    a = run_cycle(_ensemble(v), v["grid"], v["base"], v["subs"], cfg)
    b = run_cycle(_ensemble(v), v["grid"], v["base"], v["subs"], cfg)
    assert np.array_equal(a[0].controls, b[0].controls)
    assert np.array_equal(a[0].depth, b[0].depth)
    write_cycle_diagnostics(tmp_path / "d.csv", a[2], a[1], a[0].layout)
    text = (tmp_path / "d.csv").read_text()
    assert text.startswith("section,name,index,value")
    assert "innovation_transformed,wsr,rms" in text and "gain,correction_1" in text


def test_cycle_config_contracts(valley):
    with pytest.raises(ContractError):
        CycleConfig((10.0, 10.0))
    with pytest.raises(ContractError):
        CycleConfig((0.0, 10.0), inflation=0.9)
    with pytest.raises(ContractError):
        CycleConfig((0.0, 10.0), valley["batch"])
