"""
This file will contain the fixtures that are commonly needed by all other test files
for example: the outputqueue, small datasets written as IDX files, etc..
"""
import pytest
import os, sys, inspect
from multiprocessing import Queue
import numpy as np


# add this dir to path for imports to work
current_dir = os.path.dirname(
    os.path.abspath(inspect.getfile(inspect.currentframe()))
)
sys.path.insert(0, current_dir)


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: end to end runs of several minutes')


def do_nothing(*arg):
    """Used to override the print function because using the self.print causes broken pipes"""
    pass


@pytest.fixture
def outputQueue():
    """This outputqueue will be passed to all module constructors that need it"""
    outputQueue = Queue()
    outputQueue.put = do_nothing
    return outputQueue


def synthetic_images(count, seed=0, side=28):
    """
    MNIST-like images: class c is a bright horizontal bar at rows 2c+4..2c+6
    over weak uniform noise, labels cycle through the 10 classes.
    """
    rng = np.random.default_rng(seed)
    labels = np.arange(count) % 10
    images = rng.uniform(0.0, 0.1, (count, side, side))
    for image, label in zip(images, labels):
        row = 2 * label + 4
        image[row:row + 3, 4:side - 4] = rng.uniform(0.8, 1.0, (3, side - 8))
    # IDX stores bytes, keep the values exactly representable
    return np.rint(images * 255) / 255, labels


@pytest.fixture
def tiny_dataset():
    from modules.dataio.dataio import Dataset
    images, labels = synthetic_images(60)
    return Dataset(images, labels)


@pytest.fixture
def idx_files(tmp_path):
    """Training (200 images) and held-out (60 images) IDX files"""
    from modules.dataio.dataio import Dataset, write_idx
    paths = {}
    for part, count, seed in (('train', 200, 1), ('test', 60, 2)):
        images, labels = synthetic_images(count, seed)
        images_path = str(tmp_path / f'{part}-images-idx3-ubyte')
        labels_path = str(tmp_path / f'{part}-labels-idx1-ubyte')
        write_idx(Dataset(images, labels), images_path, labels_path)
        paths[f'{part}_images'] = images_path
        paths[f'{part}_labels'] = labels_path
    return paths
