#!/usr/bin/env python3
# nslif. Train artificial networks with Noisy Softplus and run the weights
# unmodified on spiking networks of leaky integrate-and-fire neurons.

# This program is free software; you can redistribute it and/or
# modify it under the terms of the GNU General Public License
# as published by the Free Software Foundation; either version 2
# of the License, or (at your option) any later version.

# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.

from nslif_files.common.abstracts import Module
from nslif_files.common.argparse import ArgumentParser
from nslif_files.common.config_parser import ConfigParser
from nslif_files.common.exceptions import NslifError
from nslif_files.common.nslif_utils import to_builtin, utils
from nslif_files.core.outputProcess import OutputProcess

import sys
import os
import time
import pkgutil
import inspect
import modules
import importlib
import traceback
import warnings
from multiprocessing import Queue

version = '0.1.0'


class Main:
    def __init__(self, outputqueue=None):
        self.name = 'Main'
        # tests pass their own queue, no OutputProcess is started then
        self.outputqueue = outputqueue
        self.output_process = None
        self.conf = None
        self.args = None

    def print(self, text, verbose=1, debug=0):
        """
        Function to use to print text using the outputqueue of nslif.
        :param verbose:
            0 - don't print
            1 - basic operation/proof of work
            2 - log I/O operations and filenames
            3 - log per epoch/per checkpoint progress
        :param debug:
            0 - don't print
            1 - print exceptions
            2 - unsupported and unhandled cases (skipped samples, degenerate inputs)
            3 - red warnings that needs examination - developer warnings
        :param text: text to print. Can include format like f'Test {here}'
        """
        levels = f'{verbose}{debug}'
        self.outputqueue.put(f'{levels}|{self.name}|{text}')

    def get_modules(self):
        """
        Get modules from the 'modules' folder.
        Returns a dict of module name -> Module class
        """
        plugins = {}
        # Walk recursively through all modules and packages found on the modules folder.
        for loader, module_name, ispkg in pkgutil.walk_packages(
                modules.__path__, f'{modules.__name__}.'
        ):
            # If current item is a package, skip.
            if ispkg:
                continue
            # to avoid loading everything in the dir,
            # only load modules that have the same name as the dir name
            parts = module_name.split('.')
            if len(parts) != 3 or parts[1] != parts[2]:
                continue

            # Try to import the module, otherwise skip.
            try:
                module = importlib.import_module(module_name)
            except ImportError as e:
                print(
                    'Something wrong happened while importing the module {0}: {1}'.format(
                        module_name, e
                    )
                )
                continue

            # Walk through all members of currently imported modules.
            for member_name, member_object in inspect.getmembers(module):
                # Check if current member is a class.
                if inspect.isclass(member_object) and (issubclass(
                        member_object, Module
                ) and member_object is not Module):
                    plugins[member_object.name] = member_object
        return plugins

    def get_command_module(self, plugins, command):
        for plugin in plugins.values():
            if command in dict(plugin.commands):
                return plugin
        return None

    def setup_print_levels(self):
        """
        setup debug and verbose levels
        """
        # Any verbosity passed as parameter overrides the configuration. Only check its value
        if self.args.verbose is None:
            self.args.verbose = self.conf.verbose()
        if self.args.verbose < 0:
            self.args.verbose = 0

        # Any debug passed as parameter overrides the configuration. Only check its value
        if self.args.debug is None:
            self.args.debug = self.conf.debug()
        if self.args.debug < 0:
            self.args.debug = 0

    def start_output_process(self, output_dir):
        if self.outputqueue is not None:
            return
        self.outputqueue = Queue()
        self.output_process = OutputProcess(
            self.outputqueue,
            self.args.verbose,
            self.args.debug,
            stderr=os.path.join(output_dir, 'errors.log'),
            nslif_logfile=os.path.join(output_dir, 'nslif.log'),
        )
        self.output_process.start()

    def stop_output_process(self):
        if self.output_process is None:
            return
        self.outputqueue.put('stop_process')
        self.output_process.join()
        self.output_process = None

    def config_snapshot(self, command):
        """The resolved configuration of this run: config file values and every option"""
        options = {
            key: value for key, value in vars(self.args).items()
            if key not in ('out', 'config', 'verbose', 'debug', 'version')
        }
        return to_builtin({
            'command': command,
            'config_file': self.conf.configfile,
            'config': self.conf.snapshot(),
            'options': options,
        })

    def write_run_files(self, command, metrics, started, wall_time):
        """
        Write config_snapshot.json and metrics.json to the output dir.
        Everything except the timing field is the same for identical runs.
        """
        out = getattr(self.args, 'out', None)
        if not out:
            return None
        snapshot = self.config_snapshot(command)
        utils.write_json(os.path.join(out, 'config_snapshot.json'), snapshot)
        path = os.path.join(out, 'metrics.json')
        utils.write_json(path, {
            'command': command,
            'version': version,
            'seed': getattr(self.args, 'seed', None),
            'config_hash': utils.get_config_hash(snapshot),
            'metrics': metrics or {},
            'timing': {
                'started': utils.convert_format(started, 'iso'),
                'wall_time_s': wall_time,
            },
        })
        self.print(f'Metrics written to {path}', 2, 0)
        return path

    def run(self, argv=None):
        """
        Parse the command line and run one command.
        Returns the exit code: 0 success, 1 runtime failure, 2 usage error
        """
        argv = sys.argv[1:] if argv is None else list(argv)
        try:
            configfile = ArgumentParser(add_help=False).get_configfile(argv)
            self.conf = ConfigParser(configfile)
            plugins = self.get_modules()
            parser = ArgumentParser(
                prog='nslif.py',
                usage='./nslif.py [-c <configfile>] [-v <level>] [-e <level>] <command> [options]',
                description='nslif: Noisy Softplus trained spiking networks',
            )
            self.args = parser.parse_arguments(argv, plugins, self.conf)
        except SystemExit as e:
            return e.code if isinstance(e.code, int) else 2

        if self.args.version:
            print(f'nslif {version}')
            return 0
        command = self.args.command
        if not command:
            parser.print_help()
            return 2

        self.setup_print_levels()
        output_dir = getattr(self.args, 'out', None) or self.conf.output_dir()
        utils.ensure_dir(output_dir)
        self.start_output_process(output_dir)
        module = self.get_command_module(plugins, command)(self.outputqueue, self.conf)

        started = utils.now()
        start_time = time.time()
        try:
            with warnings.catch_warnings():
                # floating point warnings of numpy, diverging runs are checked for non finite values
                warnings.simplefilter('ignore', RuntimeWarning)
                metrics = module.run_command(command, self.args)
            self.write_run_files(command, metrics, started, time.time() - start_time)
            return 0
        except KeyboardInterrupt:
            self.print('Interrupted', 0, 1)
            return 1
        except (NslifError, OSError) as e:
            self.print(f'{command} failed: {e}', 0, 1)
            return 1
        except Exception as inst:
            exception_line = sys.exc_info()[2].tb_lineno
            self.print(f'Problem running {command} line {exception_line}', 0, 1)
            self.print(str(type(inst)), 0, 1)
            self.print(str(inst), 0, 1)
            self.print(traceback.format_exc(), 0, 1)
            return 1
        finally:
            self.stop_output_process()


if __name__ == '__main__':
    nslif = Main()
    sys.exit(nslif.run())
