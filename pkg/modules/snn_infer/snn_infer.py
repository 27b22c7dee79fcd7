from nslif_files.common.abstracts import Module
from nslif_files.common.exceptions import (
    InvalidParameterError,
    UnsupportedLayerError,
)
from nslif_files.common.nslif_utils import utils
from modules.lif_core.lif_core import LifParams, LifPopulation
from modules.stimulus.stimulus import spike_probability
from modules.activations.activations import ActivationKind, CombinedScale
from modules.annet.annet import (
    AVGPOOL,
    CONV,
    DENSE,
    LayerSpec,
    WeightStore,
    activation_from_args,
    add_activation_arguments,
    add_dataset_arguments,
    encode_input,
    evaluate_ann,
    forward,
    predicted_rates,
)
from modules.dataio.dataio import Dataset, load_experiment_data, subsample
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import List, Optional
from scipy import sparse
from tqdm.auto import tqdm
import pandas as pd
import numpy as np
import os

# images used to compare measured and predicted layer rates
RATE_CHECK_IMAGES = 20


@dataclass
class SpikingNetwork:
    params: LifParams
    layers: List[LayerSpec]
    # neurons per layer, input layer first
    sizes: List[int]
    # one (post x pre) matrix of weights (nA) per layer
    matrices: list
    architecture: str = ''

    @property
    def input_size(self):
        return self.sizes[0]

    @property
    def output_size(self):
        return self.sizes[-1]

    def fan_in(self, layer):
        """Connections into every neuron of layer `layer` (1 is the first hidden layer)"""
        return np.diff(self.matrices[layer - 1].indptr)

    def fan_out(self, layer):
        """Outgoing connections of every neuron of layer `layer` (0 is the input)"""
        if layer == len(self.matrices):
            return np.zeros(self.sizes[-1], dtype=np.int64)
        return np.bincount(self.matrices[layer].indices, minlength=self.sizes[layer])

    def fan_outs(self):
        return [self.fan_out(layer) for layer in range(len(self.sizes))]

    def connections(self, layer):
        """The (pre_id, post_id, weight) list feeding layer `layer`"""
        coo = self.matrices[layer - 1].tocoo()
        return pd.DataFrame({'pre_id': coo.col, 'post_id': coo.row, 'weight': coo.data})

    @property
    def connection_count(self):
        return int(sum(m.nnz for m in self.matrices))


def _conv_matrix(w, in_shape, out_shape):
    maps, channels, k, _ = w.shape
    _, rows, cols = in_shape
    _, oh, ow = out_shape
    o, c, a, b, i, j = np.meshgrid(
        np.arange(maps), np.arange(channels), np.arange(k), np.arange(k),
        np.arange(oh), np.arange(ow), indexing='ij',
    )
    post = (o * oh + i) * ow + j
    pre = (c * rows + i + a) * cols + j + b
    data = w[o, c, a, b]
    return sparse.csr_matrix(
        (data.ravel(), (post.ravel(), pre.ravel())),
        shape=(maps * oh * ow, channels * rows * cols),
    )


def _pool_matrix(stride, in_shape, out_shape):
    channels, rows, cols = in_shape
    _, oh, ow = out_shape
    c, i, j, a, b = np.meshgrid(
        np.arange(channels), np.arange(oh), np.arange(ow),
        np.arange(stride), np.arange(stride), indexing='ij',
    )
    post = (c * oh + i) * ow + j
    pre = (c * rows + i * stride + a) * cols + j * stride + b
    data = np.full(post.size, 1.0 / stride ** 2)
    return sparse.csr_matrix(
        (data, (post.ravel(), pre.ravel())),
        shape=(channels * oh * ow, channels * rows * cols),
    )


def _dense_matrix(w):
    post, pre = np.indices(w.shape)
    # zero weights stay in the structure, fan-in counts every connection
    return sparse.csr_matrix((w.ravel(), (post.ravel(), pre.ravel())), shape=w.shape)


def build_snn(weights: WeightStore, params: LifParams):
    """
    Unroll the weight sharing of a trained network into per connection
    weights. The trained values are used as they are, in nA.
    """
    in_shape = tuple(weights.input_shape)
    sizes = [int(np.prod(in_shape))]
    matrices = []
    for layer, w, out_shape in zip(weights.layers, weights.weights, weights.shapes):
        if layer.kind == CONV:
            matrix = _conv_matrix(w, in_shape, out_shape)
        elif layer.kind == AVGPOOL:
            matrix = _pool_matrix(layer.size, in_shape, out_shape)
        elif layer.kind == DENSE:
            matrix = _dense_matrix(w)
        else:
            raise UnsupportedLayerError(f'no spiking version of layer kind {layer.kind}')
        matrix.sort_indices()
        matrices.append(matrix)
        sizes.append(int(np.prod(out_shape)))
        in_shape = out_shape
    return SpikingNetwork(params, list(weights.layers), sizes, matrices, weights.architecture)


@dataclass
class InferenceResult:
    image_index: int
    # output spike count of every class
    counts: np.ndarray
    prediction: int
    checkpoints: np.ndarray
    # cumulative output counts at every checkpoint, (checkpoints, classes)
    checkpoint_counts: np.ndarray
    synaptic_events: int
    # spike count of every neuron, input layer first
    layer_counts: list = field(default_factory=list)
    duration: float = 1000.0
    # no output neuron fired, the prediction is the tie-break class 0
    degenerate: bool = False
    logged_events: Optional[int] = None

    def layer_rates(self):
        return [c / (self.duration / 1000.0) for c in self.layer_counts]

    def predictions_over_time(self):
        return np.argmax(self.checkpoint_counts, axis=1)

    def to_dict(self):
        return {
            'image_index': self.image_index,
            'prediction': self.prediction,
            'counts': self.counts.tolist(),
            'synaptic_events': self.synaptic_events,
            'degenerate': self.degenerate,
        }


def input_spikes(image, n_steps, dt, rate_scale, rng):
    """Bernoulli(pixel * rate_scale * dt) input spikes, (steps, pixels)"""
    p = spike_probability(np.asarray(image, dtype=float).ravel() * rate_scale, dt)
    return rng.random((n_steps, p.size)) < p


def _checkpoint_steps(checkpoints, duration, dt):
    checkpoints = np.asarray(checkpoints, dtype=float)
    if checkpoints.size == 0:
        checkpoints = np.array([duration])
    if np.any(checkpoints <= 0) or np.any(checkpoints > duration + 1e-9):
        raise InvalidParameterError(f'checkpoints must lie in (0, {duration}] ms')
    if np.any(np.diff(checkpoints) <= 0):
        raise InvalidParameterError('checkpoints must be increasing')
    return checkpoints, np.rint(checkpoints / dt).astype(int)


def default_checkpoints(duration, step):
    if not step > 0:
        raise InvalidParameterError(f'checkpoint step must be > 0, got {step}')
    points = np.arange(step, duration + step / 2, step)
    points = points[points < duration - 1e-9]
    return np.append(points, duration)


def simulate_batch(net: SpikingNetwork, images, indices, duration, dt, rate_scale, seed,
                   checkpoints=(), onset=0.0, log_events=False):
    """
    Present several images at once, one column of every population per image.
    Input spikes of image i come from the stream utils.rng(seed, i), so the
    result of an image does not depend on the batch it runs in.
    :param onset: silent time (ms) before the input starts, checkpoints count from it
    Returns a list of InferenceResult
    """
    if not duration > 0:
        raise InvalidParameterError(f'duration must be > 0, got {duration}')
    if onset < 0:
        raise InvalidParameterError(f'onset must be >= 0, got {onset}')
    images = np.asarray(images, dtype=float)
    if images.min(initial=0) < 0 or images.max(initial=0) > 1:
        raise InvalidParameterError('pixel values must lie in [0, 1]')
    batch = len(indices)
    n_steps = int(round(duration / dt))
    onset_steps = int(round(onset / dt))
    checkpoints, cp_steps = _checkpoint_steps(checkpoints, duration, dt)

    spikes_in = np.stack([
        input_spikes(image, n_steps, dt, rate_scale, utils.rng(seed, index))
        for image, index in zip(images, indices)
    ], axis=2)
    pops = [LifPopulation(net.params, (size, batch), dt) for size in net.sizes[1:]]
    counts = [np.zeros((size, batch)) for size in net.sizes]
    previous = [np.zeros((size, batch)) for size in net.sizes[1:]]
    structure = [_structure(m) for m in net.matrices] if log_events else None
    logged = np.zeros(batch)
    cp_counts = np.zeros((len(cp_steps), net.output_size, batch))
    next_cp = 0

    for n in range(onset_steps + n_steps):
        if n >= onset_steps:
            fired = spikes_in[n - onset_steps].astype(float)
        else:
            fired = np.zeros((net.input_size, batch))
        counts[0] += fired
        # every hidden layer hears the previous layer one step late
        arriving = [fired] + previous[:-1]
        if log_events:
            # events are logged when emitted, delivery may fall after the last step
            logged += (structure[0] @ fired).sum(axis=0)
        for layer, (pop, matrix, pre) in enumerate(zip(pops, net.matrices, arriving)):
            if pre.any():
                pop.receive(matrix @ pre)
            previous[layer] = pop.step().astype(float)
            counts[layer + 1] += previous[layer]
            if log_events and layer + 1 < len(structure):
                logged += (structure[layer + 1] @ previous[layer]).sum(axis=0)
        while next_cp < len(cp_steps) and n + 1 - onset_steps == cp_steps[next_cp]:
            for pop in pops:
                pop.check_finite()
            cp_counts[next_cp] = counts[-1]
            next_cp += 1
    for pop in pops:
        pop.check_finite()

    fan_outs = net.fan_outs()
    results = []
    for column, index in enumerate(indices):
        out = counts[-1][:, column].astype(np.int64)
        events = int(sum(int(c[:, column] @ f) for c, f in zip(counts, fan_outs)))
        results.append(InferenceResult(
            image_index=int(index),
            counts=out,
            prediction=int(np.argmax(out)),
            checkpoints=checkpoints,
            checkpoint_counts=cp_counts[:, :, column].astype(np.int64),
            synaptic_events=events,
            layer_counts=[c[:, column].astype(np.int64) for c in counts],
            duration=float(duration),
            degenerate=bool(out.max() == 0),
            logged_events=int(logged[column]) if log_events else None,
        ))
    return results


def _structure(matrix):
    """the connections of a weight matrix, every one of weight 1"""
    ones = matrix.copy()
    ones.data = np.ones_like(matrix.data)
    return ones


def infer(net: SpikingNetwork, image, duration=1000.0, dt=1.0, rate_scale=100.0, seed=0,
          checkpoints=(), image_index=0, onset=0.0, log_events=False):
    """
    Present one image as Poisson trains for `duration` ms and classify it by
    the output neuron that fired the most, ties to the lowest class.
    """
    image = np.asarray(image, dtype=float)
    return simulate_batch(
        net, image[None], [image_index], duration, dt, rate_scale, seed,
        checkpoints, onset, log_events,
    )[0]


@dataclass
class SnnEvaluation:
    error_rate: float
    # time_ms, accuracy
    accuracy_curve: pd.DataFrame
    results: List[InferenceResult]
    # layer, mean_rate, max_rate
    layer_stats: pd.DataFrame

    @property
    def accuracy(self):
        return 1.0 - self.error_rate

    @property
    def degenerate(self):
        return sum(r.degenerate for r in self.results)

    @property
    def synaptic_events(self):
        return sum(r.synaptic_events for r in self.results)

    def events_per_second(self):
        duration = sum(r.duration for r in self.results) / 1000.0
        return self.synaptic_events / duration if duration else 0.0


def _evaluate_chunk(task):
    net, images, indices, duration, dt, rate_scale, seed, checkpoints, batch_size = task
    results = []
    for start in range(0, len(indices), batch_size):
        results += simulate_batch(
            net, images[start:start + batch_size], indices[start:start + batch_size],
            duration, dt, rate_scale, seed, checkpoints,
        )
    return results


def evaluate_snn(net: SpikingNetwork, dataset: Dataset, duration=1000.0, dt=1.0, seed=0,
                 rate_scale=100.0, checkpoints=(), threads=1, batch_size=16, progress=False):
    """
    Classify every image of the dataset, with accuracy at every checkpoint.
    Image i of the dataset always uses the input stream of index i, results do
    not depend on `threads` or `batch_size`.
    """
    if len(dataset) == 0:
        raise InvalidParameterError('empty evaluation set')
    if batch_size < 1:
        raise InvalidParameterError(f'batch_size must be >= 1, got {batch_size}')
    checkpoints = np.asarray(checkpoints if len(checkpoints) else [duration], dtype=float)
    indices = np.arange(len(dataset))
    workers = max(1, min(threads, len(dataset)))
    chunks = np.array_split(indices, workers) if workers > 1 else [
        indices[i:i + batch_size] for i in range(0, len(indices), batch_size)
    ]
    tasks = [
        (net, dataset.images[chunk], chunk, duration, dt, rate_scale, seed, checkpoints, batch_size)
        for chunk in chunks
    ]
    if workers > 1:
        with Pool(workers) as pool:
            parts = pool.map(_evaluate_chunk, tasks)
    else:
        parts = [
            _evaluate_chunk(task)
            for task in tqdm(tasks, desc='SNN inference', disable=not progress, leave=False)
        ]
    results = sorted((r for part in parts for r in part), key=lambda r: r.image_index)

    labels = dataset.labels
    over_time = np.array([r.predictions_over_time() for r in results])
    accuracy = (over_time == labels[:, None]).mean(axis=0)
    curve = pd.DataFrame({'time_ms': checkpoints, 'accuracy': accuracy})
    predictions = np.array([r.prediction for r in results])
    error = float(np.mean(predictions != labels))
    return SnnEvaluation(error, curve, results, layer_statistics(results, net))


def layer_statistics(results, net: SpikingNetwork):
    rows = []
    for layer in range(len(net.sizes)):
        rates = np.array([r.layer_rates()[layer] for r in results])
        rows.append({
            'layer': layer,
            'name': 'input' if layer == 0 else net.layers[layer - 1].token,
            'neurons': net.sizes[layer],
            'mean_rate': float(rates.mean()),
            'max_rate': float(rates.max()),
        })
    return pd.DataFrame(rows)


@dataclass
class ConvolutionReport:
    # image, neuron, measured_rate and one predicted_<kind> column per activation
    table: pd.DataFrame
    # Euclidean distance between predicted and measured rates per activation
    distances: dict


def convolve_rates_experiment(kernel, images, duration=1000.0, dt=1.0, params: LifParams = None,
                              kinds=None, scale: CombinedScale = None, rate_scale=100.0, seed=0):
    """
    Convolve Poisson coded images with one trained kernel on a layer of LIF
    neurons and compare the measured rates to the rates every activation
    predicts.
    :param kernel: k x k weights (nA)
    :param kinds: dict of label -> ActivationKind
    """
    kernel = np.asarray(kernel, dtype=float)
    kernel = kernel.reshape((1, 1) + kernel.shape[-2:])
    if kernel.shape[-1] != kernel.shape[-2]:
        raise InvalidParameterError(f'kernel must be square, got {kernel.shape[-2:]}')
    images = np.asarray(images, dtype=float)
    if images.ndim == 2:
        images = images[None]
    params = params or LifParams(i_offset=0.0)
    scale = scale or CombinedScale(tau_syn=params.tau_syn)
    kinds = kinds or {
        'noisy-softplus': ActivationKind.noisy_softplus(),
        'relu': ActivationKind.relu(),
        'softplus': ActivationKind.softplus(),
    }
    layer = LayerSpec(CONV, 1, kernel.shape[-1])
    weights = WeightStore([layer], [kernel], (1,) + images.shape[1:])
    net = build_snn(weights, params)

    measured = simulate_batch(net, images, np.arange(len(images)), duration, dt, rate_scale, seed)
    frames = []
    for index, (image, result) in enumerate(zip(images, measured)):
        frame = pd.DataFrame({
            'image': index,
            'neuron': np.arange(net.output_size),
            'measured_rate': result.layer_rates()[-1],
        })
        x = encode_input(image, rate_scale, scale.tau_syn)[0]
        for label, kind in kinds.items():
            y = forward(weights, x, kind, scale)[-1].y
            frame[f'predicted_{label}'] = y.ravel() * 1000.0 / scale.tau_syn
        frames.append(frame)
    table = pd.concat(frames, ignore_index=True)
    distances = {
        label: float(np.sqrt(np.sum((table[f'predicted_{label}'] - table['measured_rate']) ** 2)))
        for label in kinds
    }
    return ConvolutionReport(table, distances)


@dataclass
class EnergyReport:
    joules: float
    watts: float
    events_per_second: float
    duration: float

    def to_dict(self):
        return {
            'joules': self.joules,
            'watts': self.watts,
            'events_per_second': self.events_per_second,
            'duration_ms': self.duration,
        }


def energy_estimate(source, e_syn, duration, fan_out=None):
    """
    Energy of the synaptic events, E = sum_j rate_j * N_j * T * e_syn.
    :param source: an InferenceResult or SnnEvaluation (measured events), the
        synaptic events per second, or per layer rates (Hz) with `fan_out`
        holding the outgoing connections of every neuron
    :param e_syn: energy of one synaptic event (nJ)
    :param duration: T in ms
    """
    if not e_syn > 0:
        raise InvalidParameterError(f'e_syn must be > 0, got {e_syn}')
    if not duration > 0:
        raise InvalidParameterError(f'duration must be > 0, got {duration}')
    if isinstance(source, InferenceResult):
        events = source.synaptic_events / (source.duration / 1000.0)
    elif isinstance(source, SnnEvaluation):
        events = source.events_per_second()
    elif np.isscalar(source):
        events = float(source)
    else:
        if fan_out is None or len(fan_out) != len(source):
            raise InvalidParameterError('per layer rates need one fan-out array per layer')
        events = float(sum(np.dot(np.ravel(r), np.ravel(f)) for r, f in zip(source, fan_out)))
    if events < 0:
        raise InvalidParameterError(f'event rate must be >= 0, got {events}')
    seconds = duration / 1000.0
    joules = events * seconds * e_syn * 1e-9
    return EnergyReport(joules, joules / seconds, events, duration)


def rate_correlation(measured, predicted):
    """Pearson r between measured and predicted rates of every layer, NaN for constant layers"""
    correlations = []
    for m, p in zip(measured, predicted):
        m, p = np.ravel(m).astype(float), np.ravel(p).astype(float)
        if m.size < 2 or m.std() == 0 or p.std() == 0:
            correlations.append(float('nan'))
        else:
            correlations.append(float(np.corrcoef(m, p)[0, 1]))
    return correlations


class Module(Module):
    # Name: short name of the module. Do not use spaces
    name = 'SNNInfer'
    description = 'Run trained weights on spiking LIF networks and estimate their energy'
    authors = ['nslif developers']
    commands = (
        ('eval-snn', 'Classify held-out images with the spiking network.'),
        ('convolve-rates', 'Compare measured and predicted rates of one trained kernel.'),
        ('energy', 'Energy of the synaptic events of a spiking network.'),
    )

    @classmethod
    def add_arguments(cls, command, parser, conf):
        snn = conf.snn()
        if command == 'energy':
            parser.add_argument('--out', metavar='<dir>', help='Output directory.')
            parser.add_argument('--events-per-sec', type=float, metavar='<events/s>',
                                help='Synaptic events per second.')
            parser.add_argument('--results', metavar='<json>',
                                help='metrics.json of an eval-snn run providing the event rate.')
            parser.add_argument('--duration', type=float, required=True, metavar='<s>',
                                help='Running time in seconds.')
            parser.add_argument('--esyn-nj', type=float, default=conf.esyn_nj(), metavar='<nJ>',
                                help='Energy of one synaptic event.')
            return
        parser.add_argument('--out', required=True, metavar='<dir>', help='Output directory.')
        parser.add_argument('--weights', required=True, metavar='<json>', help='Weight manifest.')
        parser.add_argument('--architecture', default=None,
                            help='Expected architecture of the weights.')
        add_dataset_arguments(parser, conf)
        add_activation_arguments(parser, conf)
        parser.add_argument('--duration', type=float, default=snn['duration'], metavar='<ms>',
                            help='Presentation time of every image.')
        parser.add_argument('--dt', type=float, default=snn['dt'], metavar='<ms>',
                            help='Simulation step.')
        parser.add_argument('--i-offset', type=float, default=snn['i_offset'], metavar='<nA>',
                            help='Bias current of the spiking neurons.')
        if command == 'eval-snn':
            parser.add_argument('--snn-size', type=int, default=500,
                                help='Held-out images classified by the spiking network.')
            parser.add_argument('--checkpoint-step', type=float, default=snn['checkpoint_step'],
                                metavar='<ms>', help='Step of the accuracy over time curve.')
            parser.add_argument('--threads', type=int, default=snn['threads'],
                                help='Worker processes.')
            parser.add_argument('--batch-size', type=int, default=snn['batch_size'],
                                help='Images simulated together by one worker.')
            parser.add_argument('--esyn-nj', type=float, default=conf.esyn_nj(), metavar='<nJ>',
                                help='Energy of one synaptic event.')
        else:
            parser.add_argument('--map', type=int, default=0,
                                help='Feature map of the first conv layer to use.')
            parser.add_argument('--images', type=int, default=10,
                                help='Number of held-out images to convolve.')

    def snn_params(self, args, scale):
        lif = self.conf.lif_params() if self.conf else {}
        lif.update(i_offset=args.i_offset, tau_syn=scale.tau_syn)
        return LifParams(**lif)

    def load(self, args):
        weights = WeightStore.load(args.weights, args.architecture)
        kind, scale = activation_from_args(args, weights.metadata)
        self.print(f'Loaded {weights.architecture} weights from {args.weights}', 2, 0)
        _, test_set = load_experiment_data(
            args.train_images, args.train_labels, args.test_images, args.test_labels,
            args.train_size, args.test_size, args.seed,
        )
        return weights, kind, scale, test_set

    def cmd_eval_snn(self, args):
        weights, kind, scale, test_set = self.load(args)
        if args.snn_size and args.snn_size < len(test_set):
            test_set = subsample(test_set, args.snn_size, args.seed)
        params = self.snn_params(args, scale)
        net = build_snn(weights, params)
        self.print(
            f'Spiking network of {sum(net.sizes)} neurons and {net.connection_count} '
            f'connections, {len(test_set)} images of {args.duration} ms', 1, 0
        )
        evaluation = evaluate_snn(
            net, test_set, args.duration, args.dt, args.seed, args.rate_scale,
            default_checkpoints(args.duration, args.checkpoint_step),
            args.threads, args.batch_size, progress=True,
        )
        if evaluation.degenerate:
            self.print(f'{evaluation.degenerate} images produced no output spikes', 0, 2)
        ann_error = evaluate_ann(weights, test_set, kind, scale, args.rate_scale)

        utils.write_csv(os.path.join(args.out, 'accuracy_curve.csv'), evaluation.accuracy_curve)
        utils.write_csv(os.path.join(args.out, 'layer_rates.csv'), evaluation.layer_stats)
        results_path = os.path.join(args.out, 'snn_results.json')
        utils.write_json(results_path, {
            'images': [r.to_dict() for r in evaluation.results],
            'labels': test_set.labels,
        })
        self.print(f'Per image results written to {results_path}', 2, 0)
        for row in evaluation.accuracy_curve.itertuples():
            self.print(f'{row.time_ms:g} ms accuracy {100 * row.accuracy:.2f}%', 3, 0)

        measured, predicted = [], []
        for result in evaluation.results[:RATE_CHECK_IMAGES]:
            measured.append(result.layer_rates())
            predicted.append(predicted_rates(
                weights, test_set.images[result.image_index], kind, scale, args.rate_scale
            ))
        # every (image, neuron) pair of the checked images
        correlation = rate_correlation(
            [np.concatenate(layer) for layer in list(zip(*measured))[1:]],
            [np.concatenate(layer) for layer in list(zip(*predicted))[1:]],
        )
        # per neuron averages for the predicted event rate
        predicted = [np.mean(layer, axis=0) for layer in zip(*predicted)]
        predicted_events = energy_estimate(predicted, args.esyn_nj, args.duration, net.fan_outs())

        events = evaluation.events_per_second()
        energy = energy_estimate(events, args.esyn_nj, args.duration)
        self.print(
            f'SNN error {100 * evaluation.error_rate:.2f}%, ANN error {100 * ann_error:.2f}%, '
            f'{events:.4g} synaptic events/s', 1, 0
        )
        return {
            'snn_error': evaluation.error_rate,
            'ann_error': ann_error,
            'accuracy_drop': evaluation.error_rate - ann_error,
            'images': len(test_set),
            'degenerate': evaluation.degenerate,
            'events_per_second': events,
            'predicted_events_per_second': predicted_events.events_per_second,
            'rate_correlation': correlation,
            'energy_per_image_j': energy.joules,
            'architecture': weights.architecture,
            'activation': kind.to_dict(),
        }

    def cmd_convolve_rates(self, args):
        weights, kind, scale, test_set = self.load(args)
        first = weights.weights[0]
        if weights.layers[0].kind != CONV:
            raise UnsupportedLayerError('convolve-rates needs a network starting with a conv layer')
        if not 0 <= args.map < first.shape[0]:
            raise InvalidParameterError(f'map {args.map} out of range, the layer has {first.shape[0]}')
        images = test_set.images[:args.images]
        kinds = {
            'noisy-softplus': ActivationKind.noisy_softplus(kind.k),
            'relu': ActivationKind.relu(),
            'softplus': ActivationKind.softplus(kind.k, args.softplus_sigma),
        }
        report = convolve_rates_experiment(
            first[args.map, 0], images, args.duration, args.dt,
            self.snn_params(args, scale), kinds, scale, args.rate_scale, args.seed,
        )
        utils.write_csv(os.path.join(args.out, 'convolve_rates.csv'), report.table)
        for label, distance in report.distances.items():
            self.print(f'{label}: distance {distance:.2f} Hz', 1, 0)
        return {'distances': report.distances, 'images': len(images), 'map': args.map}

    def cmd_energy(self, args):
        if args.results:
            results = utils.read_json(args.results)
            try:
                events = float(results.get('metrics', results)['events_per_second'])
            except KeyError:
                raise InvalidParameterError(f'{args.results} holds no events_per_second')
        elif args.events_per_sec is not None:
            events = args.events_per_sec
        else:
            raise InvalidParameterError('energy needs --events-per-sec or --results')
        report = energy_estimate(events, args.esyn_nj, args.duration * 1000.0)
        self.print(
            f'{report.events_per_second:.4g} events/s for {args.duration:g} s: '
            f'{report.joules:.6g} J, {report.watts:.6g} W', 1, 0
        )
        metrics = report.to_dict()
        metrics['esyn_nj'] = args.esyn_nj
        return metrics

    def run_command(self, command, args):
        if command == 'eval-snn':
            return self.cmd_eval_snn(args)
        if command == 'convolve-rates':
            return self.cmd_convolve_rates(args)
        if command == 'energy':
            return self.cmd_energy(args)
        return super().run_command(command, args)
