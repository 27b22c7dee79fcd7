from nslif_files.common.abstracts import Module
from nslif_files.common.exceptions import (
    CalibrationError,
    InfeasibleTargetError,
    InvalidParameterError,
    QuadratureError,
)
from nslif_files.common.nslif_utils import utils
from modules.lif_core.lif_core import LifParams, LifPopulation
from modules.stimulus.stimulus import (
    NoisyCurrentSpec,
    binomial_drive,
    hold_ratio,
    noisy_current,
    stats_to_ensemble,
    synaptic_current,
    trace_diagnostics,
    white_noise_sigma,
)
from modules.activations.activations import noisy_softplus
from dataclasses import dataclass, field
from multiprocessing import Pool
from scipy.special import erfcx
from scipy import integrate, optimize
from tqdm.auto import tqdm
import pandas as pd
import numpy as np
import os

# above this upper bound the integral overflows and the rate is 0 in double precision
SIEGERT_MAX_BOUND = 26.0
# samples of every noise/spike stream generated at once
BLOCK_SAMPLES = 1000
K_BOUNDS = (0.01, 2.0)


@dataclass(frozen=True)
class DiffusionStats:
    # mV/ms
    mu: float
    # mV/sqrt(ms)
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidParameterError(f'sigma must be >= 0, got {self.sigma}')


@dataclass(frozen=True)
class TuningSample:
    m_i: float
    s_i: float
    rate: float
    trials: int = 1
    rate_min: float = None
    rate_max: float = None

    def __post_init__(self):
        if self.rate_min is None:
            object.__setattr__(self, 'rate_min', self.rate)
        if self.rate_max is None:
            object.__setattr__(self, 'rate_max', self.rate)


@dataclass
class Calibration:
    k: float
    s: float
    tau_syn: float
    fit_rmse: float = 0.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.k > 0 or not self.s > 0:
            raise InvalidParameterError(f'calibration needs k > 0 and S > 0, got k={self.k} S={self.s}')

    def to_dict(self):
        return {
            'k': self.k,
            's': self.s,
            'tau_syn': self.tau_syn,
            'fit_rmse': self.fit_rmse,
            'provenance': self.provenance,
        }

    def save(self, path):
        utils.write_json(path, self.to_dict())

    @classmethod
    def load(cls, path):
        data = utils.read_json(path)
        return cls(
            float(data['k']),
            float(data['s']),
            float(data['tau_syn']),
            float(data.get('fit_rmse', 0.0)),
            data.get('provenance', {}),
        )


class TuningCurve(list):
    """
    List of TuningSample, with the (m_i, s_i, reason) of the grid points that
    could not be measured in `skipped`
    """

    def __init__(self, samples=(), skipped=()):
        super().__init__(samples)
        self.skipped = list(skipped)

    def to_frame(self):
        return tuning_curve_to_frame(self)


def rate_constant_current(params: LifParams, i):
    """
    Firing rate (Hz) for a constant total input current i (nA).
    Callers add params.i_offset when the neuron has a bias current.
    """
    drive = i * params.r_m
    threshold = params.v_thresh - params.v_rest
    if drive <= threshold:
        return 0.0
    period = params.tau_refrac - params.tau_m * np.log(1.0 - threshold / drive)
    return 1000.0 / period


def current_stats_to_diffusion(m_i, s_i, dt, params: LifParams):
    """mu = m_i / c_m, sigma = s_i * sqrt(dt) / c_m"""
    if not dt > 0:
        raise InvalidParameterError(f'dt must be > 0, got {dt}')
    return DiffusionStats(m_i / params.c_m, white_noise_sigma(s_i, dt, params.c_m))


def _siegert_integrand(u):
    return np.sqrt(np.pi) * erfcx(-u)


def siegert_rate(params: LifParams, stats: DiffusionStats, rtol=1e-8):
    """
    Mean rate (Hz) of a LIF neuron driven by white noise with drift mu and
    intensity sigma. Potentials are measured from v_rest, the lower bound of
    the integral sits at rest.
    """
    if stats.sigma == 0:
        return rate_constant_current(params, stats.mu * params.c_m)
    tau = params.tau_m
    scale = stats.sigma * np.sqrt(tau)
    lower = (0.0 - stats.mu * tau) / scale
    upper = (params.v_thresh - params.v_rest - stats.mu * tau) / scale
    if upper > SIEGERT_MAX_BOUND:
        return 0.0
    result = integrate.quad(
        _siegert_integrand, lower, upper, epsabs=0.0, epsrel=rtol, limit=200, full_output=1
    )
    value, abserr = result[0], result[1]
    if len(result) > 3 and abserr > 10 * rtol * abs(value):
        raise QuadratureError(
            f'Siegert integral on [{lower:.6g}, {upper:.6g}] did not converge: '
            f'value={value:.6g} abserr={abserr:.3g} ({result[3]})'
        )
    return 1000.0 / (params.tau_refrac + tau * value)


def _simulate_points(params, points, mode, duration, trials, dt, sample_dt, seed):
    """
    Spike counts of every (grid point, trial) neuron.
    :param points: list of (grid_index, m_i, s_i, ensemble spec or None)
    Returns rates with shape (len(points), trials)
    """
    # noise samples are held for sample_dt, Poisson spikes arrive on every step
    ratio = hold_ratio(sample_dt, dt) if mode == 'current' else 1
    n_steps = int(round(duration / dt))
    n_samples = -(-n_steps // ratio)
    pop = LifPopulation(params, (len(points), trials), dt)
    counts = np.zeros((len(points), trials))
    rngs = [
        [utils.rng(seed, trial, grid_index) for trial in range(trials)]
        for grid_index, _, _, _ in points
    ]
    for block_start in range(0, n_samples, BLOCK_SAMPLES):
        nb = min(BLOCK_SAMPLES, n_samples - block_start)
        draws = np.empty((len(points), trials, nb))
        for p, (_, m_i, s_i, spec) in enumerate(points):
            for trial in range(trials):
                rng = rngs[p][trial]
                if mode == 'poisson':
                    draws[p, trial] = binomial_drive(spec, nb, dt, rng)
                elif s_i == 0:
                    draws[p, trial] = m_i
                else:
                    draws[p, trial] = rng.normal(m_i, s_i, nb)
        for j in range(nb):
            sample = draws[:, :, j]
            if mode == 'poisson':
                pop.receive(sample)
                counts += pop.step()
                continue
            first = (block_start + j) * ratio
            for _ in range(first, min(first + ratio, n_steps)):
                counts += pop.step(sample)
    pop.check_finite()
    return counts / (duration / 1000.0)


def _simulate_chunk(task):
    return _simulate_points(*task)


def measure_tuning_curve(
    params: LifParams,
    m_grid,
    s_grid,
    mode='current',
    duration=10000.0,
    trials=10,
    dt=0.1,
    seed=0,
    sample_dt=1.0,
    sources=100,
    split=0.5,
    reference_rate=100.0,
    threads=1,
    progress=False,
):
    """
    Measure the firing rate for every (m, s) pair of the grids, averaged over
    `trials` independent runs.
    current mode: a noisy current source held every sample_dt ms.
    poisson mode: `sources` Poisson trains with a spike chance on every
    simulation step, whose synaptic current has mean m and std s.
    Every (grid point, trial) has its own random stream, so the result does
    not depend on `threads`.
    """
    m_grid = np.atleast_1d(np.asarray(m_grid, dtype=float))
    s_grid = np.atleast_1d(np.asarray(s_grid, dtype=float))
    if m_grid.size == 0 or s_grid.size == 0:
        raise InvalidParameterError('tuning curve grids must not be empty')
    if mode not in ('current', 'poisson'):
        raise InvalidParameterError(f'unknown mode {mode}, use current or poisson')
    if trials < 1:
        raise InvalidParameterError(f'trials must be >= 1, got {trials}')
    if np.any(s_grid < 0):
        raise InvalidParameterError('s grid values must be >= 0')
    hold_ratio(sample_dt, dt)

    points, skipped = [], []
    grid_index = 0
    for s_i in s_grid:
        for m_i in m_grid:
            spec = None
            if mode == 'poisson':
                try:
                    spec = stats_to_ensemble(
                        m_i, s_i, params.tau_syn, sources, split,
                        duration, seed, reference_rate,
                    )
                    if spec.rates.size and spec.rates.max() * dt / 1000.0 >= 1:
                        raise InfeasibleTargetError(
                            m_i, s_i,
                            f'source rate {spec.rates.max():.6g} Hz is not '
                            f'representable at {dt} ms',
                        )
                except InfeasibleTargetError as err:
                    skipped.append((float(m_i), float(s_i), err.reason))
                    grid_index += 1
                    continue
            points.append((grid_index, float(m_i), float(s_i), spec))
            grid_index += 1

    chunks = [points[i::max(threads, 1)] for i in range(max(threads, 1))]
    chunks = [chunk for chunk in chunks if chunk]
    tasks = [
        (params, chunk, mode, duration, trials, dt, sample_dt, seed)
        for chunk in chunks
    ]
    if threads > 1 and len(tasks) > 1:
        with Pool(len(tasks)) as pool:
            results = pool.map(_simulate_chunk, tasks)
    else:
        results = [
            _simulate_chunk(task)
            for task in tqdm(tasks, desc='Tuning curve', disable=not progress, leave=False)
        ]

    rates_by_index = {}
    for chunk, rates in zip(chunks, results):
        for (index, m_i, s_i, _), trial_rates in zip(chunk, rates):
            rates_by_index[index] = (m_i, s_i, trial_rates)

    samples = []
    for index in sorted(rates_by_index):
        m_i, s_i, trial_rates = rates_by_index[index]
        samples.append(TuningSample(
            m_i=m_i,
            s_i=s_i,
            rate=float(np.mean(trial_rates)),
            trials=trials,
            rate_min=float(np.min(trial_rates)),
            rate_max=float(np.max(trial_rates)),
        ))
    return TuningCurve(samples, skipped)


def tuning_curve_to_frame(samples):
    return pd.DataFrame(
        [
            {
                'm_i': s.m_i,
                's_i': s.s_i,
                'rate': s.rate,
                'rate_min': s.rate_min,
                'rate_max': s.rate_max,
                'trials': s.trials,
            }
            for s in samples
        ],
        columns=['m_i', 's_i', 'rate', 'rate_min', 'rate_max', 'trials'],
    )


def read_tuning_curve(path):
    frame = pd.read_csv(path)
    missing = {'m_i', 's_i', 'rate'} - set(frame.columns)
    if missing:
        raise CalibrationError(f'{path} lacks the columns {", ".join(sorted(missing))}')
    samples = []
    for row in frame.itertuples(index=False):
        row = row._asdict()
        samples.append(TuningSample(
            m_i=float(row['m_i']),
            s_i=float(row['s_i']),
            rate=float(row['rate']),
            trials=int(row.get('trials', 1)),
            rate_min=float(row.get('rate_min', row['rate'])),
            rate_max=float(row.get('rate_max', row['rate'])),
        ))
    return TuningCurve(samples)


def compare_response(params: LifParams, samples_by_source: dict, dt):
    """
    Table of the Siegert prediction next to every measured curve.
    :param samples_by_source: e.g. {'current': TuningCurve, 'poisson': TuningCurve}
    :param dt: resolution of the noise, anchors sigma = s_i*sqrt(dt)/c_m
    """
    points = []
    for samples in samples_by_source.values():
        for s in samples:
            if (s.m_i, s.s_i) not in points:
                points.append((s.m_i, s.s_i))
    rows = []
    for m_i, s_i in points:
        stats = current_stats_to_diffusion(m_i + params.i_offset, s_i, dt, params)
        row = {'m_i': m_i, 's_i': s_i, 'siegert_rate': siegert_rate(params, stats)}
        for source, samples in samples_by_source.items():
            match = [s.rate for s in samples if (s.m_i, s.s_i) == (m_i, s_i)]
            row[f'rate_{source}'] = match[0] if match else np.nan
        rows.append(row)
    return pd.DataFrame(rows)


def _fit_scale(f, rates):
    """Least squares S for rates ~ S*f, and the sum of squared residuals"""
    ff = float(np.dot(f, f))
    if ff == 0:
        return 0.0, float(np.dot(rates, rates))
    s = float(np.dot(f, rates)) / ff
    residual = rates - s * f
    return s, float(np.dot(residual, residual))


def calibrate(samples, tau_syn, k_bounds=K_BOUNDS):
    """
    Fit rate ~ S * noisy_softplus(m, s; k). The fit is linear in S, so k is
    found by a golden section search with the least squares S at every k.
    """
    samples = list(samples)
    if len(samples) < 10:
        raise CalibrationError(f'{len(samples)} tuning samples, at least 10 are needed')
    m = np.array([s.m_i for s in samples])
    sig = np.array([s.s_i for s in samples])
    rates = np.array([s.rate for s in samples])
    if np.unique(sig).size < 2:
        raise CalibrationError('tuning samples must span at least 2 noise levels')
    if not np.any(rates > 0):
        raise CalibrationError('all tuning samples have zero rate')

    def sse(k):
        return _fit_scale(noisy_softplus(m, sig, k), rates)[1]

    # coarse scan to bracket the minimum before the golden section search
    scan = np.geomspace(k_bounds[0], k_bounds[1], 64)
    errors = np.array([sse(k) for k in scan])
    best = int(np.argmin(errors))
    lo = scan[max(best - 1, 0)]
    hi = scan[min(best + 1, scan.size - 1)]
    try:
        if not 0 < best < scan.size - 1:
            raise ValueError('minimum on the edge of the k range')
        result = optimize.minimize_scalar(
            sse,
            bracket=(lo, scan[best], hi),
            method='golden',
            options={'xtol': 1e-12},
        )
    except ValueError:
        # flat or edge minimum, no valid bracket
        result = optimize.minimize_scalar(
            sse, bounds=(lo, hi), method='bounded', options={'xatol': 1e-12},
        )
    k = float(np.clip(result.x, *k_bounds))
    s, residual = _fit_scale(noisy_softplus(m, sig, k), rates)
    if not s > 0:
        raise CalibrationError(f'fitted S={s} is not positive')
    rmse = float(np.sqrt(residual / rates.size))
    return Calibration(k, s, tau_syn, rmse)


class Module(Module):
    # Name: short name of the module. Do not use spaces
    name = 'Response'
    description = 'Measure LIF tuning curves and calibrate Noisy Softplus'
    authors = ['nslif developers']
    commands = (
        ('tuning-curve', 'Measure the firing rate over a grid of noisy input currents.'),
        ('calibrate', 'Fit (k, S) of Noisy Softplus to a measured tuning curve.'),
    )

    @classmethod
    def add_arguments(cls, command, parser, conf):
        lif = conf.lif_params()
        stim = conf.stimulus()
        resp = conf.response()
        parser.add_argument('--out', required=True, metavar='<dir>',
                            help='Output directory.')
        parser.add_argument('--mode', choices=('current', 'poisson'),
                            default='poisson' if command == 'calibrate' else resp['mode'],
                            help='Noisy current source or Poisson synapses.')
        parser.add_argument('--dt', type=float, default=stim['dt'], metavar='<ms>',
                            help='Simulation step.')
        parser.add_argument('--sample-dt', type=float, default=stim['sample_dt'], metavar='<ms>',
                            help='Hold time of the noise samples, anchors the Siegert noise level.')
        parser.add_argument('--tau-syn', type=float, default=lif['tau_syn'], metavar='<ms>',
                            help='Synaptic time constant.')
        parser.add_argument('--i-offset', type=float, default=lif['i_offset'], metavar='<nA>',
                            help='Bias current of the neuron.')
        parser.add_argument('--trials', type=int, default=resp['trials'],
                            help='Independent runs per grid point.')
        parser.add_argument('--duration', type=float, default=resp['duration'], metavar='<ms>',
                            help='Duration of every run.')
        parser.add_argument('--seed', type=int, default=0, help='Base random seed.')
        parser.add_argument('--m-grid', type=utils.parse_grid, default=resp['m_grid'],
                            metavar='<start:stop:step>', help='Mean currents (nA).')
        parser.add_argument('--s-grid', type=utils.parse_grid, default=resp['s_grid'],
                            metavar='<start:stop:step>', help='Current standard deviations (nA).')
        parser.add_argument('--sources', type=int, default=stim['sources'],
                            help='Poisson sources driving the neuron.')
        parser.add_argument('--threads', type=int, default=resp['threads'],
                            help='Worker processes for the grid.')
        if command == 'tuning-curve':
            parser.add_argument('--max-lag', type=float, default=resp['max_lag'], metavar='<ms>',
                                help='Largest autocorrelation lag of the diagnostics.')
            parser.add_argument('--diag-mean', type=float, default=0.0, metavar='<nA>',
                                help='Mean current of the diagnosed trace.')
            parser.add_argument('--diag-std', type=float, default=0.2, metavar='<nA>',
                                help='Standard deviation of the diagnosed trace.')
        else:
            parser.add_argument('--tuning-curve', metavar='<csv>',
                                help='Measured tuning curve to fit. Measured anew if not given.')

    def params_from_args(self, args):
        lif = self.conf.lif_params() if self.conf else {}
        lif.update(tau_syn=args.tau_syn, i_offset=args.i_offset)
        return LifParams(**lif)

    def measure(self, args, params):
        self.print(
            f'Measuring {args.m_grid.size}x{args.s_grid.size} grid in {args.mode} mode, '
            f'{args.trials} trials of {args.duration} ms', 1, 0
        )
        curve = measure_tuning_curve(
            params,
            args.m_grid,
            args.s_grid,
            mode=args.mode,
            duration=args.duration,
            trials=args.trials,
            dt=args.dt,
            seed=args.seed,
            sample_dt=args.sample_dt,
            sources=args.sources,
            threads=args.threads,
            progress=True,
        )
        for m_i, s_i, reason in curve.skipped:
            self.print(f'Skipped m_I={m_i} s_I={s_i}: {reason}', 0, 2)
        path = os.path.join(args.out, 'tuning_curve.csv')
        utils.write_csv(path, curve.to_frame())
        self.print(f'Tuning curve written to {path}', 2, 0)
        if curve.skipped:
            utils.write_csv(
                os.path.join(args.out, 'skipped.csv'),
                pd.DataFrame(curve.skipped, columns=['m_i', 's_i', 'reason']),
            )
        return curve

    def diagnosed_trace(self, args, params):
        """The current trace whose statistics are written next to the tuning curve"""
        if args.mode == 'current':
            spec = NoisyCurrentSpec(args.diag_mean, args.diag_std, args.sample_dt, args.seed)
            return noisy_current(spec, args.duration, args.dt)
        ensemble = stats_to_ensemble(
            args.diag_mean, args.diag_std, params.tau_syn, args.sources,
            duration=args.duration, seed=args.seed,
        )
        trains, weights = ensemble.realize(args.duration, args.dt)
        return synaptic_current(trains, weights, params.tau_syn, args.dt, args.duration)

    def cmd_tuning_curve(self, args):
        params = self.params_from_args(args)
        curve = self.measure(args, params)
        comparison = compare_response(params, {args.mode: curve}, args.sample_dt)
        utils.write_csv(os.path.join(args.out, 'siegert.csv'), comparison)

        trace = self.diagnosed_trace(args, params)
        diagnostics = trace_diagnostics(trace, args.max_lag)
        diagnostics.to_csv(args.out, prefix='trace')
        self.print(
            f'Diagnosed trace mean={diagnostics.mean:.4g} nA std={diagnostics.std:.4g} nA', 2, 0
        )
        return {
            'samples': len(curve),
            'skipped': len(curve.skipped),
            'trace_mean': diagnostics.mean,
            'trace_std': diagnostics.std,
            'autocorrelation_defined': diagnostics.autocorrelation_defined,
            'autocorrelation_half_sample': diagnostics.autocorrelation_at(args.sample_dt / 2),
        }

    def cmd_calibrate(self, args):
        params = self.params_from_args(args)
        if args.tuning_curve:
            self.print(f'Reading tuning curve {args.tuning_curve}', 2, 0)
            curve = read_tuning_curve(args.tuning_curve)
            provenance = {
                'tuning_curve': args.tuning_curve,
                'tuning_curve_sha256': utils.get_hash_from_file(args.tuning_curve),
            }
        else:
            curve = self.measure(args, params)
            provenance = {'mode': args.mode, 'seed': args.seed, 'trials': args.trials,
                          'duration': args.duration, 'dt': args.dt, 'sample_dt': args.sample_dt}
        calibration = calibrate(curve, args.tau_syn)
        calibration.provenance = provenance
        path = os.path.join(args.out, 'calibration.json')
        calibration.save(path)
        self.print(
            f'Calibrated k={calibration.k:.4f} S={calibration.s:.2f} '
            f'(rmse {calibration.fit_rmse:.3f} Hz) written to {path}', 1, 0
        )
        return {'k': calibration.k, 's': calibration.s, 'tau_syn': calibration.tau_syn,
                'fit_rmse': calibration.fit_rmse}

    def run_command(self, command, args):
        if command == 'tuning-curve':
            return self.cmd_tuning_curve(args)
        if command == 'calibrate':
            return self.cmd_calibrate(args)
        return super().run_command(command, args)
