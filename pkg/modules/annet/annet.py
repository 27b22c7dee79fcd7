from nslif_files.common.abstracts import Module
from nslif_files.common.exceptions import (
    InvalidParameterError,
    ManifestError,
    ShapeMismatchError,
    TrainingDivergedError,
)
from nslif_files.common.nslif_utils import to_builtin, utils
from modules.activations.activations import (
    ActivationKind,
    CombinedScale,
    combined_forward,
    combined_grad,
)
from modules.dataio.dataio import Dataset, encode_labels, load_experiment_data
from dataclasses import dataclass, field
from typing import List, Optional
from numpy.lib.stride_tricks import sliding_window_view
from tqdm.auto import tqdm
import pandas as pd
import numpy as np
import json
import os
import re

CONV = 'conv'
AVGPOOL = 'avgpool'
DENSE = 'dense'
MANIFEST_VERSION = 1
MNIST_SHAPE = (1, 28, 28)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    # output maps (conv), stride (avgpool) or output units (dense)
    size: int
    kernel_size: int = 0
    # overrides the network activation for this layer when set
    activation: Optional[ActivationKind] = None
    trainable: bool = True

    def __post_init__(self):
        if self.kind not in (CONV, AVGPOOL, DENSE):
            raise ShapeMismatchError(f'unknown layer kind {self.kind}')
        if self.size < 1:
            raise ShapeMismatchError(f'layer size must be >= 1, got {self.size}')
        if self.kind == CONV and self.kernel_size < 1:
            raise ShapeMismatchError('conv layers need a kernel size >= 1')
        if self.kind == AVGPOOL:
            # pooling weights are fixed
            object.__setattr__(self, 'trainable', False)

    @property
    def token(self):
        if self.kind == CONV:
            return f'{self.size}c{self.kernel_size}'
        if self.kind == AVGPOOL:
            return f'{self.size}s'
        return f'{self.size}fc'


def parse_architecture(text):
    """
    Parse descriptions like 6c5-2s-12c5-2s-10fc: NcK is a conv layer of N maps
    with KxK kernels, Ns an average pooling of stride N, Nfc a dense layer.
    """
    layers = []
    for token in str(text).strip().lower().split('-'):
        conv = re.fullmatch(r'(\d+)c(\d+)', token)
        pool = re.fullmatch(r'(\d+)s', token)
        dense = re.fullmatch(r'(\d+)fc', token)
        if conv:
            layers.append(LayerSpec(CONV, int(conv.group(1)), int(conv.group(2))))
        elif pool:
            layers.append(LayerSpec(AVGPOOL, int(pool.group(1))))
        elif dense:
            layers.append(LayerSpec(DENSE, int(dense.group(1))))
        else:
            raise ShapeMismatchError(f'bad layer {token!r} in architecture {text!r}')
    if not layers:
        raise ShapeMismatchError('empty architecture')
    return layers


def architecture_string(layers):
    return '-'.join(layer.token for layer in layers)


def layer_shapes(layers, input_shape=MNIST_SHAPE):
    """Output shape of every layer, (maps, rows, cols) or (units,)"""
    shapes = []
    shape = tuple(input_shape)
    for layer in layers:
        if layer.kind == DENSE:
            shape = (layer.size,)
        elif len(shape) != 3:
            raise ShapeMismatchError(f'{layer.token} can not follow a dense layer')
        elif layer.kind == CONV:
            side = shape[1] - layer.kernel_size + 1
            cols = shape[2] - layer.kernel_size + 1
            if side < 1 or cols < 1:
                raise ShapeMismatchError(
                    f'{layer.token} kernel does not fit a {shape[1]}x{shape[2]} input'
                )
            shape = (layer.size, side, cols)
        else:
            if shape[1] % layer.size or shape[2] % layer.size:
                raise ShapeMismatchError(
                    f'pooling stride {layer.size} does not divide {shape[1]}x{shape[2]}'
                )
            shape = (shape[0], shape[1] // layer.size, shape[2] // layer.size)
        shapes.append(shape)
    return shapes


def weight_shape(layer, in_shape):
    if layer.kind == CONV:
        return (layer.size, in_shape[0], layer.kernel_size, layer.kernel_size)
    if layer.kind == DENSE:
        return (layer.size, int(np.prod(in_shape)))
    return None


@dataclass
class WeightStore:
    layers: List[LayerSpec]
    # one tensor per layer, None for pooling layers
    weights: list
    input_shape: tuple = MNIST_SHAPE
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        if len(self.weights) != len(self.layers):
            raise ShapeMismatchError(
                f'{len(self.weights)} weight tensors for {len(self.layers)} layers'
            )
        in_shape = self.input_shape
        for layer, w, out_shape in zip(self.layers, self.weights, layer_shapes(self.layers, self.input_shape)):
            expected = weight_shape(layer, in_shape)
            if expected is None:
                if w is not None:
                    raise ShapeMismatchError(f'{layer.token} has no weights')
            else:
                if w is None or tuple(w.shape) != expected:
                    found = None if w is None else tuple(w.shape)
                    raise ShapeMismatchError(f'{layer.token} expects weights {expected}, got {found}')
                if not np.all(np.isfinite(w)):
                    raise InvalidParameterError(f'{layer.token} has non finite weights')
            in_shape = out_shape

    @property
    def architecture(self):
        return architecture_string(self.layers)

    @property
    def fingerprint(self):
        return f'{self.architecture}@{"x".join(str(d) for d in self.input_shape)}'

    @property
    def shapes(self):
        return layer_shapes(self.layers, self.input_shape)

    @classmethod
    def initialize(cls, layers, input_shape=MNIST_SHAPE, seed=0, metadata=None):
        """Glorot uniform weights in +-sqrt(6/(fan_in+fan_out))"""
        rng = np.random.default_rng(seed)
        weights = []
        in_shape = tuple(input_shape)
        for layer, out_shape in zip(layers, layer_shapes(layers, input_shape)):
            shape = weight_shape(layer, in_shape)
            if shape is None:
                weights.append(None)
            else:
                receptive = int(np.prod(shape[2:])) if len(shape) == 4 else 1
                fan_in = shape[1] * receptive
                fan_out = shape[0] * receptive
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                weights.append(rng.uniform(-limit, limit, shape))
            in_shape = out_shape
        return cls(list(layers), weights, input_shape, dict(metadata or {}, init_seed=seed))

    def copy(self):
        return WeightStore(
            list(self.layers),
            [None if w is None else w.copy() for w in self.weights],
            self.input_shape,
            json.loads(json.dumps(to_builtin(self.metadata))),
        )

    def quantized(self):
        """Copy with every tensor rounded to the float32 storage precision"""
        store = self.copy()
        store.weights = [
            None if w is None else w.astype('<f4').astype(np.float64) for w in store.weights
        ]
        return store

    def save(self, path):
        """
        Write the JSON manifest to `path` and the little-endian float32
        tensors, row-major, to the .bin file next to it.
        """
        blob_path = os.path.splitext(path)[0] + '.bin'
        tensors, offset = [], 0
        utils.ensure_dir(os.path.dirname(path) or '.')
        with open(blob_path, 'wb') as blob:
            for index, w in enumerate(self.weights):
                if w is None:
                    continue
                data = np.ascontiguousarray(w, dtype='<f4').tobytes()
                blob.write(data)
                tensors.append({
                    'layer': index,
                    'shape': list(w.shape),
                    'offset': offset,
                    'nbytes': len(data),
                    'dtype': '<f4',
                })
                offset += len(data)
        manifest = {
            'version': MANIFEST_VERSION,
            'architecture': self.architecture,
            'input_shape': list(self.input_shape),
            'activation': self.metadata.get('activation'),
            'calibration': self.metadata.get('calibration'),
            'seed': self.metadata.get('seed'),
            'blob': os.path.basename(blob_path),
            'blob_sha256': utils.get_hash_from_file(blob_path),
            'tensors': tensors,
            'metadata': self.metadata,
        }
        utils.write_json(path, manifest)
        return blob_path

    @classmethod
    def load(cls, path, architecture=None):
        """
        Read a manifest and its blob.
        :param architecture: when given, the stored architecture must match it
        """
        try:
            manifest = utils.read_json(path)
        except (OSError, ValueError) as err:
            raise ManifestError(f'can not read weight manifest {path}: {err}')
        if manifest.get('version') != MANIFEST_VERSION:
            raise ManifestError(f'{path}: unsupported manifest version {manifest.get("version")}')
        try:
            layers = parse_architecture(manifest['architecture'])
            input_shape = tuple(manifest['input_shape'])
        except (KeyError, ShapeMismatchError) as err:
            raise ManifestError(f'{path}: bad architecture entry: {err}')
        if architecture is not None and architecture_string(parse_architecture(architecture)) != manifest['architecture']:
            raise ManifestError(
                f'{path} holds a {manifest["architecture"]} network, '
                f'{architecture} was requested'
            )
        blob_path = os.path.join(os.path.dirname(path), manifest.get('blob', ''))
        try:
            with open(blob_path, 'rb') as f:
                blob = f.read()
        except OSError as err:
            raise ManifestError(f'can not read weight blob {blob_path}: {err}')
        weights = [None] * len(layers)
        for tensor in manifest.get('tensors', []):
            end = tensor['offset'] + tensor['nbytes']
            if end > len(blob):
                raise ManifestError(f'{blob_path} is truncated, tensor of layer {tensor["layer"]} ends at byte {end}')
            data = np.frombuffer(blob[tensor['offset']:end], dtype='<f4')
            weights[tensor['layer']] = data.reshape(tensor['shape']).astype(np.float64)
        try:
            return cls(layers, weights, input_shape, manifest.get('metadata', {}))
        except ShapeMismatchError as err:
            raise ManifestError(f'{path}: {err}')


@dataclass
class DualSignal:
    net: np.ndarray
    # None unless the activation uses the noise channel
    var: Optional[np.ndarray]
    y: np.ndarray


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 50
    lr0: float = 0.1
    lr_decay: float = 0.9
    seed: int = 0
    label_offset: float = 0.0
    activation: ActivationKind = field(default_factory=ActivationKind)
    scale: CombinedScale = field(default_factory=CombinedScale)
    # rate of a white pixel (Hz)
    rate_scale: float = 100.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidParameterError(f'batch_size must be >= 1, got {self.batch_size}')
        if self.epochs < 0:
            raise InvalidParameterError(f'epochs must be >= 0, got {self.epochs}')
        # lr0 = 0 is allowed, it leaves the weights untouched
        if self.lr0 < 0:
            raise InvalidParameterError(f'lr0 must be >= 0, got {self.lr0}')
        if not 0 < self.lr_decay <= 1:
            raise InvalidParameterError(f'lr_decay must be in (0, 1], got {self.lr_decay}')
        if self.label_offset < 0:
            raise InvalidParameterError(f'label_offset must be >= 0, got {self.label_offset}')

    def learning_rate(self, epoch):
        return self.lr0 * self.lr_decay ** epoch

    def to_dict(self):
        return {
            'epochs': self.epochs,
            'batch_size': self.batch_size,
            'lr0': self.lr0,
            'lr_decay': self.lr_decay,
            'seed': self.seed,
            'label_offset': self.label_offset,
            'activation': self.activation.to_dict(),
            'scale': {'s': self.scale.s, 'tau_syn': self.scale.tau_syn},
            'rate_scale': self.rate_scale,
        }


def encode_input(images, rate_scale, tau_syn):
    """
    Pixels in [0, 1] to the network input x = rate * tau_syn, rate = pixel * rate_scale Hz.
    Returns float64 (N, 1, rows, cols)
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        images = images[None]
    return images[:, None] * (rate_scale * tau_syn / 1000.0)


def im2col(x, k):
    """(N, C, H, W) -> (N*oh*ow, C*k*k) patches"""
    n, c = x.shape[:2]
    windows = sliding_window_view(x, (k, k), axis=(2, 3))
    oh, ow = windows.shape[2:4]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
    return cols, oh, ow


def col2im(cols, x_shape, k):
    n, c, h, w = x_shape
    oh, ow = h - k + 1, w - k + 1
    patches = cols.reshape(n, oh, ow, c, k, k)
    image = np.zeros(x_shape)
    for a in range(k):
        for b in range(k):
            image[:, :, a:a + oh, b:b + ow] += patches[:, :, :, :, a, b].transpose(0, 3, 1, 2)
    return image


def _layer_kind(layer, kind):
    return layer.activation or kind


def _linear(layer, w, x):
    """net and var channels of one layer for input x (batched)"""
    n = x.shape[0]
    if layer.kind == CONV:
        cols, oh, ow = im2col(x, layer.kernel_size)
        w_flat = w.reshape(w.shape[0], -1)
        net = (cols @ w_flat.T).reshape(n, oh, ow, -1).transpose(0, 3, 1, 2)
        var = (cols @ (0.5 * w_flat ** 2).T).reshape(n, oh, ow, -1).transpose(0, 3, 1, 2)
        return net, var
    if layer.kind == AVGPOOL:
        s = layer.size
        _, c, h, wd = x.shape
        blocks = x.reshape(n, c, h // s, s, wd // s, s)
        net = blocks.mean(axis=(3, 5))
        # every connection weighs 1/s^2
        var = 0.5 / s ** 2 * net
        return net, var
    flat = x.reshape(n, -1)
    return flat @ w.T, flat @ (0.5 * w ** 2).T


def forward(weights: WeightStore, x, kind: ActivationKind, scale: CombinedScale, sigma_override=None):
    """
    Dual channel forward pass: per layer net = W.x, var = (W*W/2).x and
    y = combined_forward(kind, net, sqrt(var)).
    :param x: network input (x = rate * tau_syn), one image (C, H, W) or a batch
    :param sigma_override: per layer var arrays used instead of the computed ones
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.shape == tuple(weights.input_shape)
    if single:
        x = x[None]
    if x.shape[1:] != tuple(weights.input_shape):
        raise ShapeMismatchError(f'input of shape {x.shape[1:]}, network expects {weights.input_shape}')
    duals = []
    for index, (layer, w) in enumerate(zip(weights.layers, weights.weights)):
        layer_kind = _layer_kind(layer, kind)
        net, var = _linear(layer, w, x)
        if not layer_kind.needs_sigma:
            var = None
        elif sigma_override is not None:
            var = sigma_override[index]
        sigma = None if var is None else np.sqrt(var)
        y = combined_forward(layer_kind, net, sigma, scale)
        duals.append(DualSignal(net, var, y))
        x = y
    if single:
        duals = [
            DualSignal(d.net[0], None if d.var is None else d.var[0], d.y[0]) for d in duals
        ]
    return duals


def loss(duals, target):
    """1/2 sum (y - target)^2 averaged over the batch"""
    y = duals[-1].y
    y = y.reshape(-1, y.shape[-1]) if y.ndim > 1 else y[None]
    target = np.asarray(target, dtype=float).reshape(y.shape)
    return 0.5 * float(np.sum((y - target) ** 2)) / y.shape[0]


def backward(weights: WeightStore, duals, target, x, kind: ActivationKind, scale: CombinedScale, loss_scale=1.0):
    """
    Gradients of loss() with respect to every trainable weight, the sigma
    channel held constant. Returns one array per layer, None for pooling.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape == tuple(weights.input_shape):
        x = x[None]
        duals = [
            DualSignal(d.net[None], None if d.var is None else d.var[None], d.y[None]) for d in duals
        ]
    n = x.shape[0]
    target = np.asarray(target, dtype=float).reshape(duals[-1].y.shape)
    delta = loss_scale * (duals[-1].y - target) / n
    grads = [None] * len(weights.layers)
    for index in range(len(weights.layers) - 1, -1, -1):
        layer, w, dual = weights.layers[index], weights.weights[index], duals[index]
        layer_kind = _layer_kind(layer, kind)
        sigma = None if dual.var is None else np.sqrt(dual.var)
        g = delta * combined_grad(layer_kind, dual.net, sigma, scale)
        x_in = duals[index - 1].y if index else x
        if layer.kind == CONV:
            k = layer.kernel_size
            cols, _, _ = im2col(x_in, k)
            g_flat = g.transpose(0, 2, 3, 1).reshape(-1, g.shape[1])
            if layer.trainable:
                grads[index] = (g_flat.T @ cols).reshape(w.shape)
            if index:
                delta = col2im(g_flat @ w.reshape(w.shape[0], -1), x_in.shape, k)
        elif layer.kind == AVGPOOL:
            s = layer.size
            if index:
                delta = np.repeat(np.repeat(g, s, axis=2), s, axis=3) / s ** 2
        else:
            flat = x_in.reshape(n, -1)
            if layer.trainable:
                grads[index] = g.T @ flat
            if index:
                delta = (g @ w).reshape(x_in.shape)
    return grads


def _layers_kind_name(kind):
    return kind.variant if kind.variant != 'softplus' else f'softplus({kind.fixed_sigma})'


def train(dataset: Dataset, layers, cfg: TrainConfig, weights: WeightStore = None, progress=False, printer=None):
    """
    Minibatch SGD on 1/2 sum (y - target)^2 with lr_e = lr0 * lr_decay^e.
    Starts from `weights` when given, else from a seeded Glorot init.
    Returns the trained WeightStore and the loss of every batch.
    """
    if len(dataset) == 0:
        raise InvalidParameterError('empty training set')
    images = dataset.images
    input_shape = (1,) + tuple(images.shape[1:])
    if weights is None:
        weights = WeightStore.initialize(layers, input_shape, cfg.seed)
    else:
        weights = weights.copy()
        if architecture_string(layers) != weights.architecture:
            raise ShapeMismatchError(
                f'weights are {weights.architecture}, training asked for {architecture_string(layers)}'
            )
    x_all = encode_input(images, cfg.rate_scale, cfg.scale.tau_syn)
    targets = encode_labels(dataset.labels, cfg.label_offset)
    rows = []
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate(epoch)
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(dataset))
        batches = range(0, len(dataset), cfg.batch_size)
        for batch, start in enumerate(tqdm(
            batches, desc=f'Epoch {epoch + 1}/{cfg.epochs}', disable=not progress, leave=False
        )):
            idx = order[start:start + cfg.batch_size]
            duals = forward(weights, x_all[idx], cfg.activation, cfg.scale)
            batch_loss = loss(duals, targets[idx])
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(epoch, batch, batch_loss)
            grads = backward(weights, duals, targets[idx], x_all[idx], cfg.activation, cfg.scale)
            for w, g in zip(weights.weights, grads):
                if g is not None:
                    w -= lr * g
            rows.append({'epoch': epoch, 'batch': batch, 'loss': batch_loss})
        if printer:
            epoch_loss = np.mean([r['loss'] for r in rows if r['epoch'] == epoch])
            printer(f'Epoch {epoch + 1}/{cfg.epochs} lr={lr:.4g} loss={epoch_loss:.5f}', 3, 0)
    weights.metadata.update({
        'activation': cfg.activation.to_dict(),
        'scale': {'s': cfg.scale.s, 'tau_syn': cfg.scale.tau_syn},
        'epochs': weights.metadata.get('epochs', 0) + cfg.epochs,
        'seed': cfg.seed,
        'train_config': cfg.to_dict(),
        'train_size': len(dataset),
    })
    return weights, pd.DataFrame(rows, columns=['epoch', 'batch', 'loss'])


def fine_tune(weights: WeightStore, dataset: Dataset, cfg: TrainConfig = None, progress=False, printer=None):
    """
    Continue training with Noisy Softplus and offset labels, one epoch and an
    offset of 0.01 unless cfg says otherwise.
    """
    if cfg is None:
        cfg = TrainConfig(epochs=1, label_offset=0.01)
    previous = dict(weights.metadata)
    tuned, curve = train(dataset, weights.layers, cfg, weights, progress, printer)
    tuned.metadata['fine_tuned'] = {
        'from_activation': previous.get('activation'),
        'epochs': cfg.epochs,
        'label_offset': cfg.label_offset,
        'activation': cfg.activation.to_dict(),
        'seed': cfg.seed,
    }
    tuned.metadata['epochs'] = previous.get('epochs', 0) + cfg.epochs
    return tuned, curve


def predict_ann(weights: WeightStore, dataset: Dataset, kind, scale, rate_scale=100.0, batch_size=500):
    """Predicted class of every image, argmax with ties to the lowest index"""
    predictions = np.empty(len(dataset), dtype=np.int64)
    for start in range(0, len(dataset), batch_size):
        x = encode_input(dataset.images[start:start + batch_size], rate_scale, scale.tau_syn)
        y = forward(weights, x, kind, scale)[-1].y
        predictions[start:start + batch_size] = np.argmax(y.reshape(y.shape[0], -1), axis=1)
    return predictions


def evaluate_ann(weights: WeightStore, dataset: Dataset, kind, scale=None, rate_scale=100.0, batch_size=500):
    """Error rate of the artificial network on a dataset"""
    if len(dataset) == 0:
        raise InvalidParameterError('empty evaluation set')
    scale = scale or CombinedScale()
    predictions = predict_ann(weights, dataset, kind, scale, rate_scale, batch_size)
    return float(np.mean(predictions != dataset.labels))


def predicted_rates(weights: WeightStore, image, kind, scale, rate_scale=100.0):
    """
    Firing rates (Hz) the network predicts for one image, y/tau_syn per layer,
    the input layer first.
    """
    x = encode_input(image, rate_scale, scale.tau_syn)[0]
    duals = forward(weights, x, kind, scale)
    rates = [x.ravel() * 1000.0 / scale.tau_syn]
    rates += [d.y.ravel() * 1000.0 / scale.tau_syn for d in duals]
    return rates


def activation_from_args(args, metadata=None):
    """
    ActivationKind and CombinedScale from the command line, a calibration
    file or the metadata stored with trained weights, in that order.
    """
    metadata = metadata or {}
    k, s, tau_syn = args.k, args.s, args.tau_syn
    if getattr(args, 'calibration', None):
        calibration = utils.read_json(args.calibration)
        k, s, tau_syn = float(calibration['k']), float(calibration['s']), float(calibration['tau_syn'])
    if args.activation:
        kind = ActivationKind.from_name(args.activation, k, args.softplus_sigma)
    elif 'activation' in metadata:
        kind = ActivationKind.from_dict(metadata['activation'])
    else:
        kind = ActivationKind.from_name('noisy-softplus', k)
    if not args.activation and 'scale' in metadata and not getattr(args, 'calibration', None):
        s, tau_syn = metadata['scale']['s'], metadata['scale']['tau_syn']
    return kind, CombinedScale(s, tau_syn)


def add_activation_arguments(parser, conf, default_activation=None):
    act = conf.activation()
    lif = conf.lif_params()
    parser.add_argument('--activation', choices=('noisy-softplus', 'relu', 'softplus'),
                        default=default_activation,
                        help='Activation function. Defaults to the one stored with the weights.')
    parser.add_argument('--k', type=float, default=act['k'], help='Noisy Softplus shape factor.')
    parser.add_argument('--s', type=float, default=act['s'], metavar='<Hz>',
                        help='Rate scale factor S.')
    parser.add_argument('--tau-syn', type=float, default=lif['tau_syn'], metavar='<ms>',
                        help='Synaptic time constant.')
    parser.add_argument('--softplus-sigma', type=float, default=act['softplus_sigma'], metavar='<nA>',
                        help='Static noise level of the softplus activation.')
    parser.add_argument('--calibration', metavar='<json>',
                        help='Calibration file providing k, S and tau_syn.')


def add_dataset_arguments(parser, conf):
    data = conf.dataset()
    training = conf.training()
    parser.add_argument('--train-images', default=data['train_images'], metavar='<idx>',
                        help='Training images IDX file.')
    parser.add_argument('--train-labels', default=data['train_labels'], metavar='<idx>',
                        help='Training labels IDX file.')
    parser.add_argument('--test-images', default=data['test_images'], metavar='<idx>',
                        help='Held-out images IDX file. Split from the training files when empty.')
    parser.add_argument('--test-labels', default=data['test_labels'], metavar='<idx>',
                        help='Held-out labels IDX file.')
    parser.add_argument('--train-size', type=int, default=training['train_size'],
                        help='Stratified training subset size.')
    parser.add_argument('--test-size', type=int, default=training['test_size'],
                        help='Stratified held-out subset size.')
    parser.add_argument('--rate-scale', type=float, default=training['rate_scale'], metavar='<Hz>',
                        help='Input rate of a white pixel.')
    parser.add_argument('--seed', type=int, default=training['seed'], help='Random seed.')


class Module(Module):
    # Name: short name of the module. Do not use spaces
    name = 'ANNet'
    description = 'Train bias-free ConvNets with Noisy Softplus and evaluate them'
    authors = ['nslif developers']
    commands = (
        ('train', 'Train a network on MNIST.'),
        ('finetune', 'Fine tune trained weights with Noisy Softplus and offset labels.'),
        ('eval-ann', 'Error rate of the artificial network.'),
    )

    @classmethod
    def add_arguments(cls, command, parser, conf):
        training = conf.training()
        parser.add_argument('--out', required=True, metavar='<dir>', help='Output directory.')
        add_dataset_arguments(parser, conf)
        if command == 'train':
            add_activation_arguments(parser, conf, conf.activation()['kind'])
            parser.add_argument('--architecture', default=training['architecture'],
                                help='Network description, e.g. 6c5-2s-12c5-2s-10fc.')
        else:
            add_activation_arguments(
                parser, conf, 'noisy-softplus' if command == 'finetune' else None
            )
            parser.add_argument('--weights', required=True, metavar='<json>',
                                help='Weight manifest.')
            parser.add_argument('--architecture', default=None,
                                help='Expected architecture of the weights.')
        if command in ('train', 'finetune'):
            tune = conf.finetune()
            finetune = command == 'finetune'
            parser.add_argument('--epochs', type=int,
                                default=tune['epochs'] if finetune else training['epochs'])
            parser.add_argument('--batch-size', type=int, default=training['batch_size'])
            parser.add_argument('--lr0', type=float, default=training['lr0'],
                                help='Learning rate of the first epoch.')
            parser.add_argument('--lr-decay', type=float, default=training['lr_decay'],
                                help='Learning rate decay per epoch.')
            parser.add_argument('--label-offset', type=float,
                                default=tune['label_offset'] if finetune else training['label_offset'],
                                help='Added to every one-hot target value.')

    def load_data(self, args):
        train_set, test_set = load_experiment_data(
            args.train_images, args.train_labels, args.test_images, args.test_labels,
            args.train_size, args.test_size, args.seed,
        )
        self.print(
            f'Loaded {len(train_set)} training and {len(test_set)} held-out images', 2, 0
        )
        return train_set, test_set

    def train_config(self, args, kind, scale):
        return TrainConfig(
            epochs=args.epochs,
            batch_size=args.batch_size,
            lr0=args.lr0,
            lr_decay=args.lr_decay,
            seed=args.seed,
            label_offset=args.label_offset,
            activation=kind,
            scale=scale,
            rate_scale=args.rate_scale,
        )

    def save_results(self, args, weights, curve, test_set, kind, scale):
        path = os.path.join(args.out, 'weights.json')
        weights = weights.quantized()
        weights.save(path)
        utils.write_csv(os.path.join(args.out, 'loss_curve.csv'), curve)
        error = evaluate_ann(weights, test_set, kind, scale, args.rate_scale)
        self.print(f'Weights written to {path}', 2, 0)
        self.print(f'ANN held-out error {100 * error:.2f}% on {len(test_set)} images', 1, 0)
        epoch_loss = curve.groupby('epoch')['loss'].mean() if len(curve) else pd.Series(dtype=float)
        return {
            'weights': path,
            'architecture': weights.architecture,
            'activation': kind.to_dict(),
            'ann_error': error,
            'test_size': len(test_set),
            'initial_loss': float(epoch_loss.iloc[0]) if len(epoch_loss) else None,
            'final_loss': float(epoch_loss.iloc[-1]) if len(epoch_loss) else None,
        }

    def cmd_train(self, args):
        layers = parse_architecture(args.architecture)
        kind, scale = activation_from_args(args)
        train_set, test_set = self.load_data(args)
        cfg = self.train_config(args, kind, scale)
        self.print(
            f'Training {architecture_string(layers)} with {_layers_kind_name(kind)} '
            f'for {cfg.epochs} epochs', 1, 0
        )
        weights, curve = train(train_set, layers, cfg, progress=True, printer=self.print)
        if getattr(args, 'calibration', None):
            weights.metadata['calibration'] = utils.read_json(args.calibration)
        return self.save_results(args, weights, curve, test_set, kind, scale)

    def cmd_finetune(self, args):
        weights = WeightStore.load(args.weights, args.architecture)
        kind, scale = activation_from_args(args, weights.metadata)
        train_set, test_set = self.load_data(args)
        cfg = self.train_config(args, kind, scale)
        self.print(
            f'Fine tuning {weights.architecture} with {_layers_kind_name(kind)}, '
            f'label offset {cfg.label_offset}, {cfg.epochs} epoch(s)', 1, 0
        )
        tuned, curve = fine_tune(weights, train_set, cfg, progress=True, printer=self.print)
        tuned.metadata['fine_tuned']['weights'] = args.weights
        return self.save_results(args, tuned, curve, test_set, kind, scale)

    def cmd_eval_ann(self, args):
        weights = WeightStore.load(args.weights, args.architecture)
        kind, scale = activation_from_args(args, weights.metadata)
        _, test_set = self.load_data(args)
        error = evaluate_ann(weights, test_set, kind, scale, args.rate_scale)
        self.print(f'ANN error {100 * error:.2f}% on {len(test_set)} images', 1, 0)
        return {'ann_error': error, 'test_size': len(test_set), 'activation': kind.to_dict(),
                'architecture': weights.architecture}

    def run_command(self, command, args):
        if command == 'train':
            return self.cmd_train(args)
        if command == 'finetune':
            return self.cmd_finetune(args)
        if command == 'eval-ann':
            return self.cmd_eval_ann(args)
        return super().run_command(command, args)
