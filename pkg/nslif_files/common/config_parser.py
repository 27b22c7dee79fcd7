import configparser
from nslif_files.common.argparse import ArgumentParser


class ConfigParser(object):
    name = 'ConfigParser'
    description = 'Parse and sanitize nslif.conf values. used by all modules'
    authors = ['nslif developers']

    def __init__(self, configfile=None):
        self.configfile = configfile or self.get_config_file()
        self.config = self.read_config_file()

    def read_config_file(self):
        """
        reads nslif configuration file, config/nslif.conf is the default file
        """
        config = configparser.ConfigParser(interpolation=None, comment_prefixes='#')
        try:
            with open(self.configfile) as source:
                config.read_file(source)
        except (IOError, TypeError):
            # no config file, every getter falls back to its default
            pass
        return config

    def get_config_file(self):
        parser = self.get_parser()
        return parser.get_configfile()

    def get_parser(self, help=False):
        parser = ArgumentParser(
            usage='./nslif.py -c <configfile> [options] <command>', add_help=help
        )
        return parser

    def read_configuration(self, section, name, default_value):
        """
        Read the configuration file for what nslif.py needs.
        """
        try:
            return self.config.get(section, name)
        except (
            configparser.NoOptionError,
            configparser.NoSectionError,
            NameError,
            ValueError
        ):
            # There is a conf, but there is no option,
            # or no section or no configuration file specified
            return default_value

    def get_float(self, section, name, default):
        value = self.read_configuration(section, name, default)
        try:
            return float(value)
        except (TypeError, ValueError):
            return default

    def get_int(self, section, name, default):
        value = self.read_configuration(section, name, default)
        try:
            return int(value)
        except (TypeError, ValueError):
            return default

    def get_str(self, section, name, default):
        value = self.read_configuration(section, name, default)
        if value is None:
            return default
        return str(value).strip()

    def verbose(self):
        return self.get_int('modes', 'verbose', 1)

    def debug(self):
        return self.get_int('modes', 'debug', 0)

    def output_dir(self):
        return self.get_str('modes', 'output', 'output/')

    def lif_params(self):
        """keyword arguments of LifParams"""
        return {
            'c_m': self.get_float('lif', 'cm', 0.25),
            'tau_m': self.get_float('lif', 'tau_m', 20.0),
            'tau_refrac': self.get_float('lif', 'tau_refrac', 1.0),
            'v_reset': self.get_float('lif', 'v_reset', -65.0),
            'v_rest': self.get_float('lif', 'v_rest', -65.0),
            'v_thresh': self.get_float('lif', 'v_thresh', -50.0),
            'i_offset': self.get_float('lif', 'i_offset', 0.1),
            'tau_syn': self.get_float('lif', 'tau_syn', 5.0),
        }

    def stimulus(self):
        return {
            'dt': self.get_float('stimulus', 'dt', 0.1),
            'sample_dt': self.get_float('stimulus', 'sample_dt', 1.0),
            'sources': self.get_int('stimulus', 'sources', 100),
            'excitatory_fraction': self.get_float('stimulus', 'excitatory_fraction', 0.5),
            'reference_rate': self.get_float('stimulus', 'reference_rate', 100.0),
        }

    def response(self):
        return {
            'mode': self.get_str('response', 'mode', 'current'),
            'm_grid': self.get_str('response', 'm_grid', '-0.5:1.0:0.05'),
            's_grid': self.get_str('response', 's_grid', '0.0:1.0:0.2'),
            'duration': self.get_float('response', 'duration', 10000.0),
            'trials': self.get_int('response', 'trials', 10),
            'threads': self.get_int('response', 'threads', 1),
            'max_lag': self.get_float('response', 'max_lag', 20.0),
        }

    def activation(self):
        return {
            'kind': self.get_str('activation', 'kind', 'noisy-softplus'),
            'k': self.get_float('activation', 'k', 0.30),
            's': self.get_float('activation', 's', 201.0),
            'softplus_sigma': self.get_float('activation', 'softplus_sigma', 0.45),
        }

    def training(self):
        return {
            'architecture': self.get_str('training', 'architecture', '6c5-2s-12c5-2s-10fc'),
            'epochs': self.get_int('training', 'epochs', 20),
            'batch_size': self.get_int('training', 'batch_size', 50),
            'lr0': self.get_float('training', 'lr0', 0.1),
            'lr_decay': self.get_float('training', 'lr_decay', 0.9),
            'label_offset': self.get_float('training', 'label_offset', 0.0),
            'rate_scale': self.get_float('training', 'rate_scale', 100.0),
            'seed': self.get_int('training', 'seed', 0),
            'train_size': self.get_int('training', 'train_size', 10000),
            'test_size': self.get_int('training', 'test_size', 2000),
        }

    def finetune(self):
        return {
            'epochs': self.get_int('finetune', 'epochs', 1),
            'label_offset': self.get_float('finetune', 'label_offset', 0.01),
        }

    def snn(self):
        return {
            'duration': self.get_float('snn', 'duration', 1000.0),
            'dt': self.get_float('snn', 'dt', 1.0),
            'i_offset': self.get_float('snn', 'i_offset', 0.0),
            'checkpoint_step': self.get_float('snn', 'checkpoint_step', 10.0),
            'threads': self.get_int('snn', 'threads', 1),
            'batch_size': self.get_int('snn', 'batch_size', 16),
        }

    def esyn_nj(self):
        return self.get_float('energy', 'esyn_nj', 8.0)

    def dataset(self):
        return {
            'train_images': self.get_str('dataset', 'train_images', ''),
            'train_labels': self.get_str('dataset', 'train_labels', ''),
            'test_images': self.get_str('dataset', 'test_images', ''),
            'test_labels': self.get_str('dataset', 'test_labels', ''),
        }

    def snapshot(self):
        """every section of the parsed config file as a plain dict"""
        return {
            section: dict(self.config.items(section))
            for section in self.config.sections()
        }
