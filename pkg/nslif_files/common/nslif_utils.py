import hashlib
import json
import os
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd
from git import Repo


class Utils(object):
    name = 'utils'
    description = 'Common functions used by different modules of nslif.'
    authors = ['nslif developers']

    def __init__(self):
        # this format will be used accross all modules and logfiles of nslif
        self.log_format = '%Y/%m/%d %H:%M:%S.%f%z'
        # floats in csv files are written with enough digits to be re-read exactly
        # for the values we produce, and the same way on every run
        self.float_format = '%.10g'

    def convert_format(self, ts, required_format: str):
        if required_format == 'iso':
            return ts.astimezone(timezone.utc).isoformat()
        return ts.strftime(required_format)

    def now(self):
        return datetime.now(timezone.utc)

    def derive_seed(self, base_seed: int, index: int) -> int:
        """
        Seed of one independent stream, seed = base_seed XOR index.
        Results never depend on how trials or images are scheduled.
        """
        return int(base_seed) ^ int(index)

    def rng(self, base_seed: int, index: int = 0, *keys):
        """
        numpy Generator for trial/image `index`, optionally keyed further
        (e.g. by grid point) so streams of different keys don't collide
        """
        seed = self.derive_seed(base_seed, index)
        if keys:
            return np.random.default_rng([seed, *[int(k) for k in keys]])
        return np.random.default_rng(seed)

    def parse_grid(self, text: str):
        """
        Parse a grid given as 'start:stop:step' (stop included) or as a comma
        separated list of values. Returns a 1d numpy array.
        """
        text = str(text).strip()
        if not text:
            raise ValueError('empty grid')
        if ':' in text:
            parts = [float(p) for p in text.split(':')]
            if len(parts) != 3:
                raise ValueError(f'bad grid {text}, use start:stop:step')
            start, stop, step = parts
            if step <= 0 or stop < start:
                raise ValueError(f'bad grid {text}, step must be > 0 and stop >= start')
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            # round away the accumulated float error so 0.1 steps print as 0.1
            return np.round(start + step * np.arange(count), 12)
        return np.array([float(v) for v in text.split(',') if v.strip()])

    def get_hash_from_file(self, filename):
        """
        Compute the sha256 hash of a file
        """
        # The size of each read from the file
        BLOCK_SIZE = 65536
        file_hash = hashlib.sha256()
        with open(filename, 'rb') as f:
            fb = f.read(BLOCK_SIZE)
            while len(fb) > 0:
                file_hash.update(fb)
                fb = f.read(BLOCK_SIZE)
        return file_hash.hexdigest()

    def get_config_hash(self, config: dict) -> str:
        """sha256 of the canonical json form of a run configuration"""
        canonical = json.dumps(config, sort_keys=True, default=str)
        return hashlib.sha256(canonical.encode()).hexdigest()

    def ensure_dir(self, path):
        Path(path).mkdir(parents=True, exist_ok=True)
        return path

    def write_json(self, path, data: dict):
        """Write json with sorted keys so reruns produce identical bytes"""
        parent = os.path.dirname(path)
        if parent:
            self.ensure_dir(parent)
        with open(path, 'w') as f:
            json.dump(to_builtin(data), f, indent=2, sort_keys=True)
            f.write('\n')

    def read_json(self, path):
        with open(path) as f:
            return json.load(f)

    def write_csv(self, path, frame: pd.DataFrame):
        parent = os.path.dirname(path)
        if parent:
            self.ensure_dir(parent)
        frame.to_csv(path, index=False, float_format=self.float_format)

    def get_branch_info(self):
        """
        Returns a tuple containing (commit,branch)
        """
        try:
            repo = Repo('.')
            # add branch name and commit
            branch = repo.active_branch.name
            commit = repo.active_branch.commit.hexsha
            return (commit, branch)
        except Exception:
            # not a git checkout, there's no repo metadata to add
            return False


def to_builtin(value):
    """Convert numpy scalars and arrays nested in dicts/lists to python types"""
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


utils = Utils()
