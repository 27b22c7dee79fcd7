"""
MNIST datasets: IDX file reading and writing, label encoding and
deterministic stratified subsets.
"""
from dataclasses import dataclass, field
import gzip
import os
import struct

import numpy as np

from nslif_files.common.exceptions import (
    CountMismatchError,
    InvalidParameterError,
    MagicMismatchError,
    TruncatedFileError,
)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
CLASSES = 10


@dataclass
class Dataset:
    # N x 28 x 28 float32 in [0, 1]
    images: np.ndarray
    # N class indices
    labels: np.ndarray
    split: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.images.shape[0] != self.labels.shape[0]:
            raise CountMismatchError(self.images.shape[0], self.labels.shape[0])
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise InvalidParameterError('pixel values must lie in [0, 1]')
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= CLASSES):
            raise InvalidParameterError(f'labels must be class indices 0..{CLASSES - 1}')

    def __len__(self):
        return self.labels.shape[0]

    def take(self, indices, **split):
        indices = np.asarray(indices, dtype=np.int64)
        meta = dict(self.split)
        meta.update(split)
        return Dataset(self.images[indices], self.labels[indices], meta)

    def class_histogram(self):
        return np.bincount(self.labels, minlength=CLASSES)


def _open(path):
    if str(path).endswith('.gz'):
        return gzip.open(path, 'rb')
    return open(path, 'rb')


def _read_idx(path, magic, header_dims):
    """Returns (dims, payload bytes) of an IDX file"""
    with _open(path) as f:
        data = f.read()
    header_size = 4 * (1 + header_dims)
    if len(data) < header_size:
        raise TruncatedFileError(path, header_size, len(data))
    found = struct.unpack('>I', data[:4])[0]
    if found != magic:
        raise MagicMismatchError(path, hex(magic), hex(found))
    dims = struct.unpack(f'>{header_dims}I', data[4:header_size])
    expected = header_size + int(np.prod(dims))
    if len(data) < expected:
        raise TruncatedFileError(path, expected, len(data))
    return dims, data[header_size:expected]


def load_idx(images_path, labels_path):
    """Load an IDX image/label file pair, pixels scaled to [0, 1]"""
    (count, rows, cols), pixels = _read_idx(images_path, IMAGES_MAGIC, 3)
    (label_count,), labels = _read_idx(labels_path, LABELS_MAGIC, 1)
    if count != label_count:
        raise CountMismatchError(count, label_count)
    images = np.frombuffer(pixels, dtype=np.uint8).reshape(count, rows, cols)
    labels = np.frombuffer(labels, dtype=np.uint8).astype(np.int64)
    return Dataset(
        images.astype(np.float32) / np.float32(255.0),
        labels,
        {'images': os.path.basename(str(images_path)), 'size': int(count)},
    )


def write_idx(dataset: Dataset, images_path, labels_path):
    """Serialise a dataset back to IDX files (gzip when the name ends in .gz)"""
    count = len(dataset)
    rows, cols = dataset.images.shape[1:]
    pixels = np.rint(dataset.images.astype(np.float64) * 255.0).astype(np.uint8)
    for path, header, payload in (
        (images_path, struct.pack('>IIII', IMAGES_MAGIC, count, rows, cols), pixels.tobytes()),
        (labels_path, struct.pack('>II', LABELS_MAGIC, count), dataset.labels.astype(np.uint8).tobytes()),
    ):
        parent = os.path.dirname(str(path))
        if parent:
            os.makedirs(parent, exist_ok=True)
        opener = gzip.open if str(path).endswith('.gz') else open
        with opener(path, 'wb') as f:
            f.write(header)
            f.write(payload)


def encode_labels(labels, offset=0.0, classes=CLASSES):
    """One-hot target vectors with `offset` added to every entry"""
    if offset < 0:
        raise InvalidParameterError(f'label offset must be >= 0, got {offset}')
    labels = np.asarray(labels, dtype=np.int64).ravel()
    targets = np.zeros((labels.size, classes))
    targets[np.arange(labels.size), labels] = 1.0
    return targets + offset


def _stratified_indices(labels, n, rng):
    """n indices with class counts as close to n/classes as the data allows"""
    by_class = [np.flatnonzero(labels == c) for c in range(CLASSES)]
    quota = np.full(CLASSES, n // CLASSES)
    # the remainder goes to randomly chosen classes
    quota[rng.permutation(CLASSES)[: n % CLASSES]] += 1
    chosen, leftover = [], []
    for members, q in zip(by_class, quota):
        picked = rng.permutation(members)
        chosen.append(picked[:q])
        leftover.append(picked[q:])
    chosen = np.concatenate(chosen)
    missing = n - chosen.size
    if missing > 0:
        # some classes were too small, fill up from the other ones
        pool = np.concatenate(leftover)
        chosen = np.concatenate([chosen, rng.choice(pool, missing, replace=False)])
    return np.sort(chosen)


def subsample(dataset: Dataset, n, seed):
    """Deterministic stratified subset of n items, in the original order"""
    if n > len(dataset):
        raise InvalidParameterError(f'cannot take {n} items from a dataset of {len(dataset)}')
    if n < 0:
        raise InvalidParameterError(f'n must be >= 0, got {n}')
    if n == len(dataset):
        return dataset
    rng = np.random.default_rng(seed)
    indices = _stratified_indices(dataset.labels, n, rng)
    return dataset.take(indices, subsample=int(n), seed=int(seed))


def split(dataset: Dataset, n_train, n_test, seed):
    """Disjoint stratified train and held-out subsets"""
    if n_train + n_test > len(dataset):
        raise InvalidParameterError(
            f'{n_train} + {n_test} items requested from a dataset of {len(dataset)}'
        )
    rng = np.random.default_rng(seed)
    train_idx = _stratified_indices(dataset.labels, n_train, rng)
    rest = np.setdiff1d(np.arange(len(dataset)), train_idx)
    test_idx = rest[_stratified_indices(dataset.labels[rest], n_test, rng)]
    return (
        dataset.take(train_idx, part='train', seed=int(seed)),
        dataset.take(test_idx, part='test', seed=int(seed)),
    )


def load_experiment_data(train_images, train_labels, test_images=None, test_labels=None,
                         train_size=None, test_size=None, seed=0):
    """
    Training and held-out sets for one run. With no held-out files the two
    sets are disjoint stratified parts of the training files.
    A size of None or 0 keeps the whole file.
    """
    train_full = load_idx(train_images, train_labels)
    if test_images:
        test_full = load_idx(test_images, test_labels)
        train_set = subsample(train_full, train_size or len(train_full), seed)
        test_set = subsample(test_full, test_size or len(test_full), seed + 1)
        return train_set, test_set
    if not test_size:
        raise InvalidParameterError('a held-out size is needed to split the training files')
    n_train = train_size or len(train_full) - test_size
    return split(train_full, n_train, test_size, seed)
