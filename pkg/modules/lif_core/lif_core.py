"""
Clock driven simulation of current based leaky integrate-and-fire neurons.

Units are fixed project wide: mV, ms, nA, nF, so R_m = tau_m / c_m is in
MOhm and R_m * I is in mV. Rates are in Hz.
"""
import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from nslif_files.common.exceptions import (
    InvalidParameterError,
    SimulationError,
    StimulusError,
)
from nslif_files.common.nslif_utils import utils

# remaining refractory time below this is treated as over (float residue of dt steps)
REFRAC_EPS = 1e-9


@dataclass(frozen=True)
class LifParams:
    c_m: float = 0.25
    tau_m: float = 20.0
    tau_refrac: float = 1.0
    v_reset: float = -65.0
    v_rest: float = -65.0
    v_thresh: float = -50.0
    i_offset: float = 0.1
    tau_syn: float = 5.0

    def __post_init__(self):
        for name in ('c_m', 'tau_m', 'tau_syn'):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f'{name} must be > 0, got {getattr(self, name)}')
        if self.tau_refrac < 0:
            raise InvalidParameterError(f'tau_refrac must be >= 0, got {self.tau_refrac}')
        if not self.v_thresh > self.v_rest:
            raise InvalidParameterError('v_thresh must be above v_rest')
        if self.v_reset > self.v_thresh:
            raise InvalidParameterError('v_reset must not be above v_thresh')
        if not all(np.isfinite(dataclasses.astuple(self))):
            raise InvalidParameterError('LIF parameters must be finite')

    @property
    def r_m(self):
        return self.tau_m / self.c_m

    @property
    def rheobase(self):
        """Smallest constant current (nA) that makes the neuron fire"""
        return (self.v_thresh - self.v_rest) / self.r_m

    @property
    def max_rate(self):
        if self.tau_refrac == 0:
            return float('inf')
        return 1000.0 / self.tau_refrac

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class NeuronState:
    v: float
    i_syn_exc: float = 0.0
    i_syn_inh: float = 0.0
    refrac_remaining: float = 0.0
    last_spike: Optional[float] = None

    @classmethod
    def at_rest(cls, params: LifParams):
        return cls(v=params.v_rest)

    @property
    def i_syn(self):
        return self.i_syn_exc + self.i_syn_inh


@dataclass
class SpikeTrain:
    source_id: int = 0
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).ravel()
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise StimulusError(f'spike times of source {self.source_id} are not strictly increasing')

    def __len__(self):
        return self.times.size

    @property
    def count(self):
        return self.times.size

    def rate(self, duration):
        """Mean firing rate (Hz) over `duration` ms"""
        return rate_from_train(self, duration)

    def to_frame(self):
        return pd.DataFrame({'time_ms': self.times, 'value': np.ones(self.times.size)})

    def to_csv(self, path):
        utils.write_csv(path, self.to_frame())


@dataclass
class CurrentTrace:
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).ravel()
        if not self.dt > 0:
            raise InvalidParameterError(f'dt must be > 0, got {self.dt}')
        if not np.all(np.isfinite(self.samples)):
            raise StimulusError('current trace has non finite samples')

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size * self.dt

    @property
    def times(self):
        return np.arange(self.samples.size) * self.dt

    def to_frame(self):
        return pd.DataFrame({'time_ms': self.times, 'value': self.samples})

    def to_csv(self, path):
        utils.write_csv(path, self.to_frame())


def rate_from_train(train: SpikeTrain, duration):
    if not duration > 0:
        raise InvalidParameterError(f'duration must be > 0, got {duration}')
    return train.count / (duration / 1000.0)


def isi(train: SpikeTrain):
    """Inter spike intervals (ms)"""
    return np.diff(train.times)


def _check_dt(dt):
    if not dt > 0 or not np.isfinite(dt):
        raise InvalidParameterError(f'dt must be > 0, got {dt}')


class LifPopulation(object):
    """
    Independent LIF neurons sharing one LifParams, advanced together.
    State arrays may have any shape, e.g. (neurons,) or (neurons, images).

    Within a step the synaptic current is taken at its mean over the step
    (it decays exponentially while the step lasts), the membrane uses the exact
    exponential solution for that constant current, and spikes arriving at the
    end of the step are added afterwards.
    """

    def __init__(self, params: LifParams, shape, dt):
        _check_dt(dt)
        self.params = params
        self.dt = dt
        self.shape = shape
        self.v = np.full(shape, params.v_rest, dtype=float)
        self.i_syn_exc = np.zeros(shape)
        self.i_syn_inh = np.zeros(shape)
        self.refrac = np.zeros(shape)
        self.decay_m = np.exp(-dt / params.tau_m)
        self.decay_syn = np.exp(-dt / params.tau_syn)
        # mean of exp(-t/tau_syn) over one step
        self.syn_mean = params.tau_syn / dt * (1.0 - self.decay_syn)

    @classmethod
    def from_state(cls, params, state: NeuronState, dt):
        pop = cls(params, (), dt)
        pop.v = np.asarray(state.v, dtype=float)
        pop.i_syn_exc = np.asarray(state.i_syn_exc, dtype=float)
        pop.i_syn_inh = np.asarray(state.i_syn_inh, dtype=float)
        pop.refrac = np.asarray(state.refrac_remaining, dtype=float)
        return pop

    @property
    def i_syn(self):
        return self.i_syn_exc + self.i_syn_inh

    def receive(self, increment):
        """
        Add arriving synaptic current (nA). Positive increments go to the
        excitatory synapse, negative ones to the inhibitory synapse.
        """
        increment = np.asarray(increment, dtype=float)
        self.i_syn_exc = self.i_syn_exc + np.maximum(increment, 0.0)
        self.i_syn_inh = self.i_syn_inh + np.minimum(increment, 0.0)

    def step(self, i_ext=0.0):
        """Advance by dt, returns a boolean array of the neurons that spiked"""
        p = self.params
        refractory = self.refrac > REFRAC_EPS
        # i_syn is the start of step value, a spike of weight w carries w*tau_syn of charge at any dt
        i_total = i_ext + p.i_offset + self.i_syn * self.syn_mean
        v_inf = p.v_rest + p.r_m * i_total
        v = v_inf + (self.v - v_inf) * self.decay_m
        # refractory neurons ignore their input
        v = np.where(refractory, p.v_reset, v)
        spiked = (v >= p.v_thresh) & ~refractory
        self.v = np.where(spiked, p.v_reset, v)
        self.refrac = np.where(
            spiked, p.tau_refrac, np.maximum(self.refrac - self.dt, 0.0)
        )
        self.i_syn_exc = self.i_syn_exc * self.decay_syn
        self.i_syn_inh = self.i_syn_inh * self.decay_syn
        return spiked

    def check_finite(self):
        if not (np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.i_syn))):
            raise SimulationError('non finite neuron state')


def lif_step(state: NeuronState, params: LifParams, i_ext, dt, t=None):
    """
    Advance one neuron by dt with external current i_ext (nA).
    :param t: time (ms) at the end of the step, recorded as last_spike on a spike
    Returns (new state, spiked)
    """
    if not np.isfinite(i_ext):
        raise StimulusError(f'non finite input current {i_ext}')
    pop = LifPopulation.from_state(params, state, dt)
    spiked = bool(pop.step(i_ext))
    last_spike = state.last_spike
    if spiked and t is not None:
        last_spike = t
    new_state = NeuronState(
        v=float(pop.v),
        i_syn_exc=float(pop.i_syn_exc),
        i_syn_inh=float(pop.i_syn_inh),
        refrac_remaining=float(pop.refrac),
        last_spike=last_spike,
    )
    return new_state, spiked


def euler_step(state: NeuronState, params: LifParams, i_ext, dt):
    """
    Forward Euler update of the membrane, for comparison with the exact step.
    Only the subthreshold membrane is integrated, no spike handling.
    """
    i_total = i_ext + params.i_offset + state.i_syn
    dv = (params.v_rest - state.v + params.r_m * i_total) / params.tau_m
    return dataclasses.replace(
        state,
        v=state.v + dt * dv,
        i_syn_exc=state.i_syn_exc * np.exp(-dt / params.tau_syn),
        i_syn_inh=state.i_syn_inh * np.exp(-dt / params.tau_syn),
    )


@dataclass
class SimulationResult:
    train: SpikeTrain
    # columns time_ms, v, i_syn when recording was asked for
    trace: Optional[pd.DataFrame] = None


def _bin_input_spikes(trains, weights, n_steps, dt, duration):
    """Sum of weights arriving at every step boundary 0..n_steps"""
    if weights is None or len(weights) != len(trains):
        raise InvalidParameterError('spike driven simulation needs one weight per input train')
    arrivals = np.zeros(n_steps + 1)
    for train, w in zip(trains, weights):
        times = train.times
        if times.size and (times[0] < 0 or times[-1] > duration):
            raise StimulusError(
                f'input spike of source {train.source_id} outside [0, {duration}] ms'
            )
        idx = np.rint(times / dt).astype(int)
        np.add.at(arrivals, idx, w)
    return arrivals


def simulate_neuron(
    params: LifParams,
    drive,
    duration,
    dt,
    seed=0,
    weights=None,
    record=False,
):
    """
    Simulate one neuron for `duration` ms.
    :param drive: a CurrentTrace (one sample per step), a list of input
        SpikeTrains with `weights` (nA added to i_syn per spike), None, or a
        stimulus spec with a `realize(duration, dt, seed)` method returning
        one of those
    :param record: also return the v and i_syn trace
    """
    if not duration > 0:
        raise InvalidParameterError(f'duration must be > 0, got {duration}')
    _check_dt(dt)
    if hasattr(drive, 'realize'):
        drive = drive.realize(duration, dt, seed)
        if isinstance(drive, tuple):
            drive, weights = drive

    n_steps = int(round(duration / dt))
    current = np.zeros(n_steps)
    arrivals = np.zeros(n_steps + 1)
    if isinstance(drive, CurrentTrace):
        if drive.samples.size < n_steps:
            raise InvalidParameterError(
                f'current trace has {drive.samples.size} samples, {n_steps} needed'
            )
        if not np.isclose(drive.dt, dt):
            raise InvalidParameterError(f'trace dt {drive.dt} differs from simulation dt {dt}')
        current = drive.samples[:n_steps]
    elif drive:
        arrivals = _bin_input_spikes(drive, weights, n_steps, dt, duration)

    pop = LifPopulation(params, (1,), dt)
    spikes = []
    if record:
        v_trace = np.empty(n_steps)
        i_trace = np.empty(n_steps)
    for n in range(n_steps):
        if arrivals[n]:
            pop.receive(arrivals[n])
        if record:
            i_trace[n] = pop.i_syn[0]
        if pop.step(current[n])[0]:
            spikes.append((n + 1) * dt)
        if record:
            v_trace[n] = pop.v[0]
    pop.check_finite()

    trace = None
    if record:
        trace = pd.DataFrame({
            'time_ms': (np.arange(n_steps) + 1) * dt,
            'v': v_trace,
            'i_syn': i_trace,
        })
    return SimulationResult(SpikeTrain(0, np.array(spikes)), trace)
