"""
Input drives for single neuron experiments: noisy current sources, Poisson
spike trains and ensembles of them, plus the statistics of the current
they inject and the diagnostics of a current trace.

Rates are in Hz and times in ms, so a rate multiplied by a time constant
gets a 1/1000 factor (kHz * ms).
"""
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from nslif_files.common.exceptions import (
    InfeasibleTargetError,
    InvalidParameterError,
    StimulusError,
)
from nslif_files.common.nslif_utils import utils
from modules.lif_core.lif_core import CurrentTrace, SpikeTrain


def _steps(duration, dt):
    if not dt > 0:
        raise InvalidParameterError(f'dt must be > 0, got {dt}')
    if not duration > 0:
        raise InvalidParameterError(f'duration must be > 0, got {duration}')
    return int(round(duration / dt))


def hold_ratio(sample_dt, sim_dt):
    """Number of simulation steps every drawn sample is held for"""
    ratio = sample_dt / sim_dt
    steps = int(round(ratio))
    if steps < 1 or abs(ratio - steps) > 1e-9 * max(1.0, ratio):
        raise InvalidParameterError(
            f'sample_dt {sample_dt} ms is not a multiple of the simulation dt {sim_dt} ms'
        )
    return steps


@dataclass(frozen=True)
class NoisyCurrentSpec:
    mean: float
    std: float
    sample_dt: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.std < 0:
            raise InvalidParameterError(f'std must be >= 0, got {self.std}')
        if not self.sample_dt > 0:
            raise InvalidParameterError(f'sample_dt must be > 0, got {self.sample_dt}')

    def realize(self, duration, dt, seed=None):
        return noisy_current(self, duration, dt)


def noisy_current(spec: NoisyCurrentSpec, duration, sim_dt):
    """
    Gaussian samples of Normal(mean, std^2) drawn every sample_dt and held
    between draws.
    """
    n_steps = _steps(duration, sim_dt)
    ratio = hold_ratio(spec.sample_dt, sim_dt)
    n_draws = -(-n_steps // ratio)
    if spec.std == 0:
        values = np.full(n_draws, float(spec.mean))
    else:
        rng = np.random.default_rng(spec.seed)
        values = rng.normal(spec.mean, spec.std, n_draws)
    return CurrentTrace(sim_dt, np.repeat(values, ratio)[:n_steps])


def white_noise_sigma(s_i, dt, c_m):
    """
    Diffusion noise intensity (mV/sqrt(ms)) of a current with std s_i (nA)
    sampled every dt ms, sigma = s_i * sqrt(dt) / c_m.
    """
    if not dt > 0:
        raise InvalidParameterError(f'dt must be > 0, got {dt}')
    return s_i * np.sqrt(dt) / c_m


def spike_probability(rate, dt):
    """Probability of a spike in one step of dt ms at `rate` Hz"""
    rate = np.asarray(rate, dtype=float)
    if np.any(rate < 0):
        raise InvalidParameterError('rates must be >= 0')
    p = rate * dt / 1000.0
    if np.any(p >= 1):
        raise InvalidParameterError(
            f'rate {float(np.max(rate))} Hz is not representable at dt {dt} ms'
        )
    return p


def poisson_train(rate, duration, dt, seed, source_id=0):
    """
    Bernoulli(rate*dt) spike per step, spikes at the step start times.
    :param seed: an int, or a list of ints keying a sub stream, e.g. [trial_seed, source]
    """
    n_steps = _steps(duration, dt)
    p = spike_probability(rate, dt)
    if p == 0:
        return SpikeTrain(source_id, np.zeros(0))
    rng = np.random.default_rng(seed)
    steps = np.flatnonzero(rng.random(n_steps) < p)
    return SpikeTrain(source_id, steps * dt)


@dataclass
class PoissonEnsembleSpec:
    count: int
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rates: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duration: float = 10000.0
    seed: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        self.rates = np.asarray(self.rates, dtype=float).ravel()
        if not (self.count == self.weights.size == self.rates.size):
            raise InvalidParameterError(
                f'{self.count} sources but {self.weights.size} weights and {self.rates.size} rates'
            )
        if np.any(self.rates < 0):
            raise InvalidParameterError('source rates must be >= 0')

    def realize(self, duration, dt, seed=None):
        """One Poisson train per source, returns (trains, weights)"""
        base = self.seed if seed is None else seed
        # every source has its own stream of the (seed, source) pair
        trains = [
            poisson_train(rate, duration, dt, [int(base), i], source_id=i)
            for i, rate in enumerate(self.rates)
        ]
        return trains, self.weights


def ensemble_to_stats(spec: PoissonEnsembleSpec, tau_syn):
    """
    Mean (nA) and variance (nA^2) of the synaptic current of an ensemble,
    m = tau_syn * sum(w * rate), s^2 = tau_syn/2 * sum(w^2 * rate).
    """
    rates_khz = spec.rates / 1000.0
    m_i = tau_syn * float(np.sum(spec.weights * rates_khz))
    s2_i = 0.5 * tau_syn * float(np.sum(spec.weights ** 2 * rates_khz))
    return m_i, s2_i


def ensemble_weight(m_i, s_i, tau_syn, count, reference_rate=100.0):
    """
    Weight |w| shared by every source. Sources fire at reference_rate when
    m_i = 0; when that weight can't reach m_i with non negative rates the
    largest feasible weight is used, which silences one population.
    """
    if count <= 0:
        raise InfeasibleTargetError(m_i, s_i, 'no sources (count = 0)')
    if s_i < 0:
        raise InfeasibleTargetError(m_i, s_i, 's_I must be >= 0')
    if s_i == 0:
        if m_i != 0:
            raise InfeasibleTargetError(m_i, s_i, 'a non zero mean needs s_I > 0')
        return 0.0
    w = s_i * np.sqrt(2000.0 / (tau_syn * count * reference_rate))
    if m_i != 0:
        w = min(w, 2.0 * s_i ** 2 / abs(m_i))
    return float(w)


def stats_to_ensemble(
    m_i,
    s_i,
    tau_syn,
    count=100,
    split=0.5,
    duration=10000.0,
    seed=0,
    reference_rate=100.0,
    weight=None,
):
    """
    Poisson ensemble with identical |w|, `split` of the sources excitatory
    (+w) and the rest inhibitory (-w), whose current has mean m_i and std s_i.
    :param weight: force |w| instead of the default choice of ensemble_weight()
    """
    if not 0 <= split <= 1:
        raise InvalidParameterError(f'split must be in [0, 1], got {split}')
    if weight is None:
        w = ensemble_weight(m_i, s_i, tau_syn, count, reference_rate)
    else:
        w = float(weight)
        if count <= 0:
            raise InfeasibleTargetError(m_i, s_i, 'no sources (count = 0)')
    n_exc = int(round(count * split))
    n_inh = count - n_exc
    weights = np.concatenate([np.full(n_exc, w), np.full(n_inh, -w)])
    if w == 0:
        if m_i != 0 or s_i != 0:
            raise InfeasibleTargetError(m_i, s_i, 'zero weight')
        return PoissonEnsembleSpec(count, weights, np.zeros(count), duration, seed)

    # in kHz: n_exc*l_exc - n_inh*l_inh = a and n_exc*l_exc + n_inh*l_inh = b
    a = m_i / (tau_syn * w)
    b = 2.0 * s_i ** 2 / (tau_syn * w ** 2)
    total_exc = (a + b) / 2.0
    total_inh = (b - a) / 2.0
    # float residue of the largest feasible weight
    tol = 1e-12 * b
    if total_inh < -tol or total_exc < -tol:
        raise InfeasibleTargetError(
            m_i, s_i, f'needs |m_I| <= 2 s_I^2 / w = {2 * s_i ** 2 / w:.6g} nA'
        )
    total_exc, total_inh = max(total_exc, 0.0), max(total_inh, 0.0)
    if (total_exc > 0 and n_exc == 0) or (total_inh > 0 and n_inh == 0):
        raise InfeasibleTargetError(
            m_i, s_i, f'split {split} leaves no source for the required rates'
        )
    rate_exc = 1000.0 * total_exc / n_exc if n_exc else 0.0
    rate_inh = 1000.0 * total_inh / n_inh if n_inh else 0.0
    rates = np.concatenate([np.full(n_exc, rate_exc), np.full(n_inh, rate_inh)])
    return PoissonEnsembleSpec(count, weights, rates, duration, seed)


def binomial_drive(spec: PoissonEnsembleSpec, n_samples, dt, rng, size=()):
    """
    Summed synaptic increment (nA) of a two population ensemble per step of
    dt, the spike count of each population drawn as one Binomial variate.
    :param size: extra leading shape for drawing several realisations at once
    Returns an array of shape size + (n_samples,)
    """
    shape = tuple(size) + (n_samples,)
    increment = np.zeros(shape)
    for sign in (1.0, -1.0):
        members = np.sign(spec.weights) == sign
        n = int(np.count_nonzero(members))
        if not n:
            continue
        rate = spec.rates[members][0]
        p = float(spike_probability(rate, dt))
        if p == 0:
            continue
        w = spec.weights[members][0]
        increment += w * rng.binomial(n, p, size=shape)
    return increment


def synaptic_current(trains, weights, tau_syn, dt, duration):
    """
    Exponentially filtered synaptic current of weighted spike trains,
    as the mean current over every simulation step.
    """
    n_steps = _steps(duration, dt)
    arrivals = np.zeros(n_steps)
    for train, w in zip(trains, weights):
        idx = np.rint(train.times / dt).astype(int)
        idx = idx[idx < n_steps]
        np.add.at(arrivals, idx, w)
    decay = np.exp(-dt / tau_syn)
    start_of_step = lfilter([1.0], [1.0, -decay], arrivals)
    step_mean = tau_syn / dt * (1.0 - decay)
    return CurrentTrace(dt, start_of_step * step_mean)


@dataclass
class TraceDiagnostics:
    histogram: pd.DataFrame
    autocorrelation: pd.DataFrame
    spectrum: pd.DataFrame
    autocorrelation_defined: bool = True
    mean: float = 0.0
    std: float = 0.0

    def autocorrelation_at(self, lag_ms):
        if not self.autocorrelation_defined:
            return None
        lags = self.autocorrelation['lag_ms'].to_numpy()
        idx = int(np.argmin(np.abs(lags - lag_ms)))
        return float(self.autocorrelation['value'].iloc[idx])

    def to_csv(self, directory, prefix='trace'):
        paths = {}
        for name in ('histogram', 'autocorrelation', 'spectrum'):
            path = f'{directory}/{prefix}_{name}.csv'
            utils.write_csv(path, getattr(self, name))
            paths[name] = path
        return paths


def trace_diagnostics(trace: CurrentTrace, max_lag):
    """
    Sample histogram (Freedman-Diaconis bins, density), normalised
    autocorrelation up to max_lag ms, and the one sided periodogram (nA^2/Hz).
    """
    x = trace.samples
    if x.size == 0:
        raise StimulusError('empty current trace')
    max_lag_steps = int(round(max_lag / trace.dt))
    if x.size < 2 * max_lag_steps:
        raise InvalidParameterError(
            f'trace of {x.size} samples is shorter than twice the max lag ({max_lag} ms)'
        )

    density, edges = np.histogram(x, bins='fd', density=True)
    histogram = pd.DataFrame(
        {'bin_left': edges[:-1], 'bin_right': edges[1:], 'density': density}
    )

    centred = x - x.mean()
    variance = float(np.mean(centred ** 2))
    lags = np.arange(max_lag_steps + 1)
    defined = variance > 0
    if defined:
        acf = np.array(
            [np.dot(centred[: x.size - k], centred[k:]) for k in lags]
        ) / (x.size * variance)
    else:
        acf = np.full(lags.size, np.nan)
    autocorrelation = pd.DataFrame({'lag_ms': lags * trace.dt, 'value': acf})

    dt_s = trace.dt / 1000.0
    coeffs = np.fft.rfft(centred)
    psd = (np.abs(coeffs) ** 2) * dt_s / x.size
    # one sided: fold the negative frequencies except DC and Nyquist
    psd[1:] *= 2.0
    if x.size % 2 == 0:
        psd[-1] /= 2.0
    spectrum = pd.DataFrame(
        {'frequency_hz': np.fft.rfftfreq(x.size, d=dt_s), 'psd': psd}
    )
    return TraceDiagnostics(
        histogram, autocorrelation, spectrum, defined, float(x.mean()), float(np.sqrt(variance))
    )
