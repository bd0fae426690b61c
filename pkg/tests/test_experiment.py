import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsamp.errors import DatasetError, ValidationError
from gsamp.estimators import ErrorMode, FilterOperator, Gsamp, SumAggregator, WeightScheme, glms
from gsamp.experiment import (
    MSE_CEILING,
    Dataset,
    EstimatorConfig,
    MseReport,
    RunConfig,
    SynthSpec,
    TrialError,
    build_estimator,
    load_dataset,
    monte_carlo,
    prepare,
    reference_estimators,
    run_grid,
    run_trial,
    synth_dataset,
    synth_signal,
    synthetic_benchmark,
    trial_noise,
    write_dataset,
)
from gsamp.noise import SasParams
from gsamp.sampling import ObservationMask
from gsamp.spectral import eigendecompose

from helpers import path_graph, random_connected_graph


def _write(tmp_path, stations, signal):
    s, x = tmp_path / "stations.csv", tmp_path / "signal.csv"
    s.write_text(stations)
    x.write_text(signal)
    return s, x


class TestLoadDataset:
    def test_well_formed(self, tmp_path):
        ds = load_dataset(*_write(tmp_path, "id,lat,lon\na,40,-100\nb,41,-101\n", "1,2,3\n4,5,6\n"))
        assert (ds.n_nodes, ds.n_steps) == (2, 3)
        assert ds.signal.tolist() == [[1, 2, 3], [4, 5, 6]]

    def test_dimension_mismatch_names_both_counts(self, tmp_path):
        with pytest.raises(DatasetError, match=r"2 stations.*3 signal rows"):
            load_dataset(*_write(tmp_path, "id,lat,lon\na,40,-100\nb,41,-101\n", "1,2\n3,4\n5,6\n"))

    def test_non_numeric_cell(self, tmp_path):
        with pytest.raises(DatasetError, match=r"row 2, column 3"):
            load_dataset(*_write(tmp_path, "id,lat,lon\na,40,-100\nb,41,-101\n", "1,2,3\n4,5,x\n"))

    def test_nan_cell(self, tmp_path):
        with pytest.raises(DatasetError, match=r"row 1, column 2"):
            load_dataset(*_write(tmp_path, "id,lat,lon\na,40,-100\n", "1,nan\n"))

    def test_bad_header_and_coordinates(self, tmp_path):
        with pytest.raises(DatasetError, match="header"):
            load_dataset(*_write(tmp_path, "lat,lon\n40,-100\n", "1,2\n"))
        with pytest.raises(DatasetError, match="row 2"):
            load_dataset(*_write(tmp_path, "id,lat,lon\na,95,-100\n", "1,2\n"))

    def test_ragged_rows(self, tmp_path):
        with pytest.raises(DatasetError, match="row 2 has 2 values, expected 3"):
            load_dataset(*_write(tmp_path, "id,lat,lon\na,40,-100\nb,41,-101\n", "1,2,3\n4,5\n"))

    def test_single_step_rejected(self, tmp_path):
        with pytest.raises(DatasetError, match="2 time steps"):
            load_dataset(*_write(tmp_path, "id,lat,lon\na,40,-100\n", "1\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="not found"):
            load_dataset(tmp_path / "nope.csv", tmp_path / "nope2.csv")

    def test_round_trip(self, tmp_path):
        ds = synthetic_benchmark(12, 5, 3, seed=4)
        write_dataset(ds, tmp_path / "s.csv", tmp_path / "x.csv")
        back = load_dataset(tmp_path / "s.csv", tmp_path / "x.csv")
        assert np.array_equal(back.signal, ds.signal)
        assert back.coords == ds.coords


class TestSynth:
    @pytest.fixture(scope="class")
    @staticmethod
    def basis():
        return eigendecompose(random_connected_graph(20, np.random.default_rng(5), 0.2).laplacian)

    def test_single_component_is_spatially_constant(self, basis):
        x = synth_signal(basis, 10, 1, SynthSpec(bandwidth=1))
        assert np.max(np.ptp(x, axis=0)) <= 1e-12

    def test_zero_frequency_is_static(self, basis):
        x = synth_signal(basis, 10, 1, SynthSpec(omega=0.0))
        assert np.max(np.abs(x - x[:, :1])) == 0.0

    def test_no_energy_above_band(self, basis):
        F = 8
        x = synth_signal(basis, 30, 2, SynthSpec(bandwidth=F))
        coeff = basis.eigenvectors.T @ x
        assert np.max(np.abs(coeff[F:])) <= 1e-10
        assert np.max(np.abs(coeff[:F])) > 1.0

    def test_deterministic(self):
        a = synthetic_benchmark(30, 10, 5, seed=3)
        b = synthetic_benchmark(30, 10, 5, seed=3)
        assert a.signal.tobytes() == b.signal.tobytes() and a.coords == b.coords
        assert synthetic_benchmark(30, 10, 5, seed=4).signal.tobytes() != a.signal.tobytes()

    def test_rejects_bad_sizes(self, basis):
        with pytest.raises(ValidationError):
            synth_signal(basis, 1, 0)
        with pytest.raises(ValidationError):
            synth_signal(basis, 5, 0, SynthSpec(bandwidth=21))

    def test_default_coordinates(self):
        ds = synth_dataset(path_graph(4), 3, seed=0)
        assert len(ds.coords) == 4 and ds.name == "synthetic-0"


class TestRunTrial:
    def test_identity_filter_on_static_signal(self):
        g = path_graph(4)
        x = np.tile(np.array([[1.0], [4.0], [2.0], [3.0]]), 6)
        ds = Dataset(tuple(range(4)), x)
        mask = ObservationMask(np.ones(4, bool))
        mse = run_trial(ds, g, mask, None, glms(mask, FilterOperator(np.eye(4), "exact"), 1.0), seed=0)
        assert mse.shape == (5,) and np.all(mse == 0.0)

    def test_identity_filter_tracks_previous_sample(self):
        g = path_graph(3)
        x = np.array([[0.0, 1, 3], [0, 2, 2], [0, 0, 5]])
        mask = ObservationMask(np.ones(3, bool))
        mse = run_trial(Dataset(tuple(range(3)), x), g, mask, None, glms(mask, FilterOperator(np.eye(3), "exact"), 1.0), 0)
        expected = [np.mean((x[:, t] - x[:, t - 1]) ** 2) for t in (1, 2)]
        np.testing.assert_allclose(mse, expected, rtol=0, atol=1e-15)

    def test_three_node_hand_trace(self):
        # x[0]=(1,2,3), x[1]=(2,2,2), x[2]=(3,2,1); nodes 0 and 1 observed.
        # init: node 2 copies its observed neighbour -> (1,2,2)
        # t=0: e=(0,0,0) -> x_hat[1]=(1,2,2), MSE = 1/3
        # t=1: e=(1,0,0); node 1 gets 0.5*1 (class W1) -> x_hat[2]=(1,2.5,2),
        #      MSE = (4 + 0.25 + 1)/3 = 1.75
        g = path_graph(3)
        x = np.array([[1.0, 2, 3], [2, 2, 2], [3, 2, 1]])
        mask = ObservationMask.from_indices(3, [0, 1])
        est = Gsamp(mask, ErrorMode.LMS, SumAggregator(g, mask, WeightScheme(0.5, 0, 1, 0)))
        mse = run_trial(Dataset(tuple(range(3)), x), g, mask, None, est, 0)
        np.testing.assert_allclose(mse, [1 / 3, 1.75], rtol=0, atol=1e-15)

    def test_divergence_raises_with_time_and_name(self):
        g = path_graph(3)
        # only the middle node moves, so at t=1 both ends receive 1e7 * 1
        x = np.array([[1.0, 1, 1, 1], [2, 3, 4, 5], [3, 3, 3, 3]])
        mask = ObservationMask(np.ones(3, bool))
        est = Gsamp(mask, ErrorMode.LMS, SumAggregator(g, mask, WeightScheme(1e7, 0, 0, 0)), name="boom")
        with pytest.raises(TrialError) as info:
            run_trial(Dataset(tuple(range(3)), x), g, mask, None, est, 0)
        assert info.value.estimator == "boom" and info.value.t == 2

    def test_size_mismatch(self):
        mask = ObservationMask(np.ones(3, bool))
        est = glms(mask, FilterOperator(np.eye(3), "exact"), 1.0)
        with pytest.raises(ValidationError):
            run_trial(Dataset((0, 1), np.zeros((2, 3))), path_graph(3), mask, None, est, 0)


@pytest.fixture(scope="module")
def small():
    ds = synthetic_benchmark(30, 20, 4, seed=2)
    return ds, RunConfig(k=4, observed=20, noise=SasParams(1.3, 0.1), trials=6, seed=2)


class TestMonteCarlo:
    def test_single_trial_matches_run_trial(self, small):
        ds, cfg = small
        cfg = RunConfig(k=4, observed=20, noise=cfg.noise, trials=1, seed=2)
        setup = prepare(cfg, ds)
        report = monte_carlo(cfg, ds, setup)
        for ec in cfg.estimators:
            est = build_estimator(ec, setup, cfg.noise.alpha)
            single = run_trial(ds, setup.graph, setup.mask, cfg.noise, est, cfg.seed, 0)
            assert report.mse_mean[ec.name].tobytes() == single.tobytes()

    def test_bitwise_repeatable(self, small):
        ds, cfg = small
        a, b = monte_carlo(cfg, ds), monte_carlo(cfg, ds, threads=3)
        for name in a.estimators:
            assert a.mse_mean[name].tobytes() == b.mse_mean[name].tobytes()
        assert a.metadata == b.metadata

    def test_estimator_order_does_not_matter(self, small):
        ds, cfg = small
        flipped = RunConfig(k=4, observed=20, noise=cfg.noise, trials=6, seed=2, estimators=cfg.estimators[::-1])
        a, b = monte_carlo(cfg, ds), monte_carlo(flipped, ds)
        assert b.estimators == a.estimators[::-1]
        for name in a.estimators:
            assert a.mse_mean[name].tobytes() == b.mse_mean[name].tobytes()

    def test_fresh_noise_per_trial(self):
        p = SasParams(1.3, 0.1)
        n0, n1 = trial_noise(p, (5, 4), 0, 0), trial_noise(p, (5, 4), 0, 1)
        assert not np.array_equal(n0, n1)
        assert len({tuple(row) for row in n0}) == 5

    def test_metadata_echo(self, small):
        ds, cfg = small
        meta = monte_carlo(cfg, ds).metadata
        assert meta["seed"] == 2 and "Philox" in meta["rng"]
        assert meta["config"]["noise"] == {"alpha": 1.3, "gamma": 0.1, "mu": 0.0}
        assert meta["dataset"] == {"name": ds.name, "n_nodes": 30, "n_steps": 20}
        assert len(meta["observed_nodes"]) == 20

    def test_diverged_trials_are_capped_and_listed(self, small):
        ds, _ = small
        wild = EstimatorConfig("wild", "gsamp", "lms", "sum", (50.0, 0.0, 50.0, 0.0))
        cfg = RunConfig(k=4, observed=20, noise=SasParams(2.0, 0.1), trials=3, seed=0, estimators=(wild,))
        report = monte_carlo(cfg, ds)
        assert [r for r, _ in report.diverged["wild"]] == [0, 1, 2]
        assert report.mse_mean["wild"][-1] == MSE_CEILING

    def test_sign_beats_glms_under_impulsive_noise(self):
        ds = synthetic_benchmark(60, 95, 5, seed=1)
        picks = [e for e in reference_estimators() if e.name in ("GSAMP (sum)", "GLMS")]
        cfg = RunConfig(observed=40, noise=SasParams(1.3, 0.1), trials=100, seed=1, estimators=tuple(picks))
        report = monte_carlo(cfg, ds)
        assert report.avg_mse["GSAMP (sum)"] < report.avg_mse["GLMS"]


class TestReportInvariants:
    def _report(self, values):
        return MseReport(("a",), np.arange(1, 3), {"a": np.array(values)}, {"a": 0.0}, {"a": []}, {})

    def test_rejects_negative_or_non_finite(self):
        for bad in ([0.0, -1.0], [np.nan, 1.0], [np.inf, 0.0]):
            with pytest.raises(ValidationError):
                self._report(bad)

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            MseReport((), np.arange(1, 3), {}, {}, {}, {})

    @settings(max_examples=100)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(["GSAMP (sum)", "GSAMP (median)", "GLMS", "G-Sign"]))
    def test_mse_nonnegative_and_zero_when_exact(self, seed, name):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 12))
        g = random_connected_graph(n, rng)
        x = rng.standard_normal((n, 1)) * np.ones((1, 4))
        ds = Dataset(tuple(range(n)), x)
        mask = ObservationMask(np.ones(n, bool))
        cfg = RunConfig(trials=1, observed=n, estimators=tuple(e for e in reference_estimators() if e.name == name))
        setup = prepare(cfg, ds, graph=g, mask=mask)
        est = build_estimator(cfg.estimators[0], setup, 2.0)
        assert np.all(run_trial(ds, g, mask, None, est, seed) == 0.0)
        noisy = run_trial(ds, g, mask, SasParams(1.3, 0.5), est, seed)
        assert np.all(noisy >= 0.0) and np.all(np.isfinite(noisy))


class TestGrid:
    def test_targets_only_for_reference_shape(self, small):
        ds, cfg = small
        rows = run_grid(cfg, ds, [SasParams(2.0, 0.1)])[0][2]
        assert all(r.target is None and not r.flagged for r in rows)
        assert sorted(r.rank for r in rows) == list(range(1, 8))

    def test_forced_comparison_flags_deviations(self, small):
        ds, cfg = small
        rows = run_grid(cfg, ds, [SasParams(2.0, 0.1)], compare_targets=True)[0][2]
        by = {r.estimator: r for r in rows}
        assert by["GLMS"].target == 325.0
        assert by["GLMS"].deviation == pytest.approx((by["GLMS"].avg_mse - 325) / 325)
        assert by["GLMS"].flagged == (abs(by["GLMS"].deviation) > 0.15)


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs", [{"k": 0}, {"trials": 0}, {"cutoff": 0.0}, {"cutoff": 1.5}, {"khop": 0}]
    )
    def test_run_config(self, kwargs):
        with pytest.raises(ValidationError):
            RunConfig(**kwargs)

    def test_duplicate_names(self):
        e = reference_estimators()[0]
        with pytest.raises(ValidationError, match="unique"):
            RunConfig(estimators=(e, e))

    @pytest.mark.parametrize(
        "kwargs",
        [{"kind": "kalman"}, {"mode": "l1"}, {"aggregator": "max"}, {"cheb_order": 0}, {"cheb_damping": "fejer"}, {"weights": (1, 2)}],
    )
    def test_estimator_config(self, kwargs):
        base = {"name": "x", "kind": "gsamp"} | kwargs
        with pytest.raises(ValidationError):
            EstimatorConfig(**base)

    def test_mode_resolution(self):
        assert EstimatorConfig("a", "gsamp").resolved_mode(2.0) is ErrorMode.LMS
        assert EstimatorConfig("a", "gsamp").resolved_mode(1.3) is ErrorMode.SIGN
        assert EstimatorConfig("a", "gsamp", "lms").resolved_mode(1.3) is ErrorMode.LMS
        assert EstimatorConfig("a", "gsd").resolved_mode(2.0) is ErrorMode.SIGN

    def test_literal_preset(self):
        lit = {e.name: e for e in reference_estimators(literal=True)}
        ref = {e.name: e for e in reference_estimators()}
        assert not lit["GSAMP (sum)"].include_self and ref["GSAMP (sum)"].normalize
        assert lit["GDLMS"].cheb_damping is None and ref["GDLMS"].cheb_damping == "jackson"
        assert [e.weights for e in ref.values()][:3] == [(1, 0, 2, 0), (0.7, 0, 0.7, 0), (0.7, 0, 1.95, 0)]


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2.0, 1.3, 0.9]), st.sampled_from(["GSAMP (sum)", "GSAMP (median)", "G-Sign"]))
def test_trials_are_deterministic(seed, alpha, name):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 10))
    g = random_connected_graph(n, rng)
    ds = Dataset(tuple(range(n)), rng.standard_normal((n, 6)))
    mask = ObservationMask(np.arange(n) % 2 == 0)
    cfg = RunConfig(trials=1, estimators=tuple(e for e in reference_estimators() if e.name == name))
    setup = prepare(cfg, ds, graph=g, mask=mask)
    est = build_estimator(cfg.estimators[0], setup, alpha)
    noise = SasParams(alpha, 0.2)
    a = run_trial(ds, g, mask, noise, est, seed, trial=3)
    b = run_trial(ds, g, mask, noise, est, seed, trial=3)
    assert a.tobytes() == b.tobytes()
