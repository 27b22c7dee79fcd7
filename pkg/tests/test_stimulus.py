"""Unit test for modules/stimulus/stimulus.py"""
from modules.stimulus.stimulus import (
    NoisyCurrentSpec,
    PoissonEnsembleSpec,
    binomial_drive,
    ensemble_to_stats,
    hold_ratio,
    noisy_current,
    poisson_train,
    spike_probability,
    stats_to_ensemble,
    synaptic_current,
    trace_diagnostics,
    white_noise_sigma,
)
from modules.lif_core.lif_core import CurrentTrace, LifParams, simulate_neuron
from nslif_files.common.exceptions import (
    InfeasibleTargetError,
    InvalidParameterError,
)
import itertools
import numpy as np
import pytest


def test_hold_ratio():
    assert hold_ratio(1.0, 0.1) == 10
    assert hold_ratio(0.1, 0.1) == 1
    with pytest.raises(InvalidParameterError):
        hold_ratio(0.25, 0.1)
    with pytest.raises(InvalidParameterError):
        hold_ratio(0.05, 0.1)


def test_noisy_current_holds_samples():
    trace = noisy_current(NoisyCurrentSpec(0.2, 0.5, sample_dt=1.0, seed=4), 100.0, 0.1)
    assert len(trace) == 1000
    held = trace.samples.reshape(100, 10)
    assert np.all(held == held[:, :1])
    assert np.unique(held[:, 0]).size == 100


def test_noisy_current_zero_std_is_constant():
    trace = noisy_current(NoisyCurrentSpec(0.3, 0.0), 50.0, 0.1)
    assert np.all(trace.samples == 0.3)


def test_noisy_current_statistics():
    trace = noisy_current(NoisyCurrentSpec(0.2, 0.4, sample_dt=1.0, seed=1), 100000.0, 1.0)
    assert trace.samples.mean() == pytest.approx(0.2, abs=0.01)
    assert trace.samples.std() == pytest.approx(0.4, rel=0.02)


def test_noisy_current_is_seeded():
    spec = NoisyCurrentSpec(0.0, 1.0, seed=9)
    assert np.array_equal(noisy_current(spec, 100.0, 0.1).samples, noisy_current(spec, 100.0, 0.1).samples)


def test_white_noise_sigma():
    assert white_noise_sigma(0.5, 1.0, 0.25) == pytest.approx(2.0)
    assert white_noise_sigma(0.5, 0.25, 0.25) == pytest.approx(1.0)
    with pytest.raises(InvalidParameterError):
        white_noise_sigma(0.5, 0.0, 0.25)


def test_spike_probability():
    assert spike_probability(100.0, 1.0) == pytest.approx(0.1)
    with pytest.raises(InvalidParameterError):
        spike_probability(1000.0, 1.0)
    with pytest.raises(InvalidParameterError):
        spike_probability(-1.0, 1.0)


def test_poisson_train_rate_and_grid():
    train = poisson_train(50.0, 400000.0, 1.0, seed=3)
    assert train.rate(400000.0) == pytest.approx(50.0, rel=0.03)
    # spikes sit on the step grid
    assert np.allclose(train.times, np.round(train.times))
    assert train.times.max() < 400000.0


def test_zero_rate_train_is_empty():
    assert poisson_train(0.0, 1000.0, 1.0, seed=0).count == 0


@pytest.mark.parametrize('seed', [0, 1, 2, 3, 4])
def test_poisson_train_count_window(seed):
    train = poisson_train(100.0, 10000.0, 0.1, seed=seed)
    assert 850 <= train.count <= 1150


def test_poisson_counts_have_unit_fano_factor():
    counts = []
    for trial in range(100):
        train = poisson_train(100.0, 10000.0, 1.0, seed=[5, trial])
        counts.extend(np.bincount((train.times // 1000.0).astype(int), minlength=10))
    counts = np.asarray(counts, dtype=float)
    assert counts.size == 1000
    assert counts.var() / counts.mean() == pytest.approx(1.0, abs=0.3)


def test_ensemble_to_stats():
    spec = PoissonEnsembleSpec(2, [0.1, -0.1], [100.0, 50.0])
    m_i, s2_i = ensemble_to_stats(spec, 5.0)
    assert m_i == pytest.approx(5.0 * (0.1 * 0.1 - 0.1 * 0.05))
    assert s2_i == pytest.approx(2.5 * (0.01 * 0.1 + 0.01 * 0.05))


@pytest.mark.parametrize('m_i, s_i', [(0.0, 0.3), (0.2, 0.4), (-0.3, 0.5), (0.5, 1.0)])
def test_stats_to_ensemble_reproduces_target(m_i, s_i):
    spec = stats_to_ensemble(m_i, s_i, 5.0, count=100)
    assert np.all(spec.rates >= 0)
    m, s2 = ensemble_to_stats(spec, 5.0)
    assert m == pytest.approx(m_i, abs=1e-12)
    assert np.sqrt(s2) == pytest.approx(s_i, rel=1e-12)


def test_stats_to_ensemble_infeasible():
    with pytest.raises(InfeasibleTargetError) as err:
        stats_to_ensemble(1.0, 0.1, 5.0, weight=0.5)
    assert 'needs |m_I|' in err.value.reason
    with pytest.raises(InfeasibleTargetError):
        stats_to_ensemble(0.2, 0.0, 5.0)
    with pytest.raises(InfeasibleTargetError):
        stats_to_ensemble(0.0, 0.3, 5.0, count=0)


def test_stats_to_ensemble_silent():
    spec = stats_to_ensemble(0.0, 0.0, 5.0, count=10)
    assert np.all(spec.rates == 0)


def test_realize_gives_one_train_per_source():
    spec = stats_to_ensemble(0.1, 0.3, 5.0, count=10, seed=2)
    trains, weights = spec.realize(1000.0, 1.0)
    assert len(trains) == 10
    assert np.array_equal(weights, spec.weights)
    assert [t.source_id for t in trains] == list(range(10))


def test_trial_seeds_give_independent_trains():
    spec = stats_to_ensemble(0.5, 0.4, 1.0, count=100)
    realised = [spec.realize(2000.0, 0.1, trial)[0] for trial in range(4)]
    for first, second in itertools.combinations(realised, 2):
        assert all(not np.array_equal(a.times, b.times) for a, b in zip(first, second))

    params = LifParams(tau_syn=1.0)
    outputs = [simulate_neuron(params, spec, 2000.0, 0.1, seed=trial).train for trial in (0, 1, 0)]
    assert outputs[0].count > 0
    assert not np.array_equal(outputs[0].times, outputs[1].times)
    assert np.array_equal(outputs[0].times, outputs[2].times)


def test_binomial_drive_mean_at_a_fine_step():
    spec = stats_to_ensemble(0.2, 0.4, 5.0, count=100)
    drive = binomial_drive(spec, 400000, 0.1, np.random.default_rng(3))
    assert drive.mean() / 0.1 * 5.0 == pytest.approx(0.2, abs=0.01)


def test_binomial_drive_mean_matches_ensemble():
    spec = stats_to_ensemble(0.2, 0.4, 5.0, count=100)
    rng = np.random.default_rng(0)
    drive = binomial_drive(spec, 200000, 1.0, rng)
    # mean increment per ms times tau_syn is the mean current
    assert drive.mean() * 5.0 == pytest.approx(0.2, abs=0.01)


def test_binomial_drive_shape():
    spec = stats_to_ensemble(0.0, 0.3, 5.0, count=20)
    drive = binomial_drive(spec, 50, 1.0, np.random.default_rng(1), size=(3, 4))
    assert drive.shape == (3, 4, 50)


def test_synaptic_current_statistics():
    """Poisson synapses reproduce the target current mean and std"""
    m_i, s_i, tau_syn, duration = 0.2, 0.4, 1.0, 10000.0
    spec = stats_to_ensemble(m_i, s_i, tau_syn, count=100, seed=7)
    trains, weights = spec.realize(duration, 0.1, 7)
    trace = synaptic_current(trains, weights, tau_syn, 0.1, duration)
    assert trace.samples.mean() == pytest.approx(m_i, rel=0.1)
    assert trace.samples.std() == pytest.approx(s_i, rel=0.1)


def test_synaptic_current_single_spike_decays():
    from modules.lif_core.lif_core import SpikeTrain
    trace = synaptic_current([SpikeTrain(0, [0.0])], [1.0], 5.0, 1.0, 20.0)
    step_mean = 5.0 * (1 - np.exp(-0.2))
    assert trace.samples[0] == pytest.approx(step_mean)
    assert trace.samples[10] == pytest.approx(step_mean * np.exp(-2.0))


def test_trace_diagnostics_white_noise():
    trace = noisy_current(NoisyCurrentSpec(0.0, 1.0, sample_dt=1.0, seed=0), 20000.0, 1.0)
    diag = trace_diagnostics(trace, 10.0)
    assert diag.autocorrelation_at(0.0) == pytest.approx(1.0)
    assert abs(diag.autocorrelation_at(1.0)) < 0.05
    widths = diag.histogram.bin_right - diag.histogram.bin_left
    assert float(np.sum(diag.histogram.density * widths)) == pytest.approx(1.0)
    # Parseval: the integral of the one sided spectrum is the variance
    df = diag.spectrum.frequency_hz.iloc[1]
    assert float(diag.spectrum.psd.sum() * df) == pytest.approx(diag.std ** 2, rel=1e-6)


def test_held_samples_are_correlated_within_the_hold():
    coarse = noisy_current(NoisyCurrentSpec(0.0, 1.0, sample_dt=10.0, seed=0), 20000.0, 1.0)
    fine = noisy_current(NoisyCurrentSpec(0.0, 1.0, sample_dt=1.0, seed=0), 20000.0, 1.0)
    assert trace_diagnostics(coarse, 20.0).autocorrelation_at(5.0) == pytest.approx(0.5, abs=0.1)
    assert abs(trace_diagnostics(fine, 20.0).autocorrelation_at(5.0)) < 0.05


def test_longer_holds_move_power_to_low_frequencies():
    def low_frequency_power(sample_dt):
        trace = noisy_current(NoisyCurrentSpec(0.0, 1.0, sample_dt=sample_dt, seed=2), 20000.0, 1.0)
        spectrum = trace_diagnostics(trace, 20.0).spectrum
        low = spectrum[(spectrum.frequency_hz > 0) & (spectrum.frequency_hz < 50.0)]
        return float(low.psd.mean())

    assert low_frequency_power(10.0) > 2 * low_frequency_power(1.0)


def test_constant_trace_has_undefined_autocorrelation():
    diag = trace_diagnostics(CurrentTrace(1.0, np.full(100, 0.3)), 10.0)
    assert not diag.autocorrelation_defined
    assert diag.autocorrelation_at(1.0) is None


def test_diagnostics_need_long_traces():
    with pytest.raises(InvalidParameterError):
        trace_diagnostics(CurrentTrace(1.0, np.zeros(10)), 10.0)


def test_diagnostics_csv(tmp_path):
    trace = noisy_current(NoisyCurrentSpec(0.0, 1.0, seed=0), 1000.0, 1.0)
    paths = trace_diagnostics(trace, 5.0).to_csv(str(tmp_path), prefix='x')
    assert sorted(paths) == ['autocorrelation', 'histogram', 'spectrum']
    assert (tmp_path / 'x_spectrum.csv').exists()
