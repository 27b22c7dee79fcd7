from nslif_files.common.nslif_utils import utils
import multiprocessing
import sys
from pathlib import Path
import os
import traceback
from tqdm.auto import tqdm


class OutputProcess(multiprocessing.Process):
    """
    A class to process the output of everything nslif needs. Manages all the output
    If any nslif module needs to output anything to screen, or logs,
    it should use always the output queue. Then this output class will handle how to deal with it
    """

    def __init__(
        self,
        inputqueue,
        verbose,
        debug,
        stderr='output/errors.log',
        nslif_logfile='output/nslif.log'
    ):
        multiprocessing.Process.__init__(self)
        self.verbose = verbose
        self.debug = debug
        self.errors_logfile = stderr
        self.nslif_logfile = nslif_logfile
        self.name = 'Output'
        self.queue = inputqueue
        self.create_logfile(self.errors_logfile)
        self.create_logfile(self.nslif_logfile)
        # self.quiet manages if we should really print stuff or not
        self.quiet = False
        if self.verbose > 2:
            print(
                f'Verbosity: {str(self.verbose)}. Debugging: {str(self.debug)}'
            )

    def log_branch_info(self, logfile):
        branch_info = utils.get_branch_info()
        if branch_info:
            # it's false when there's no .git/
            commit, branch = branch_info[0], branch_info[1]
            now = utils.convert_format(utils.now(), utils.log_format)
            with open(logfile, 'a') as f:
                f.write(f'Using {branch} - {commit} - {now}\n\n')

    def create_logfile(self, path):
        """
        creates nslif.log and errors.log if they don't exist
        """
        p = Path(os.path.dirname(path) or '.')
        p.mkdir(parents=True, exist_ok=True)
        open(path, 'a').close()
        self.log_branch_info(path)

    def log_line(self, sender, msg):
        """
        Log line to nslif.log
        """
        with open(self.nslif_logfile, 'a') as nslif_logfile:
            date_time = utils.convert_format(utils.now(), utils.log_format)
            nslif_logfile.write(f'{date_time} {sender}{msg}\n')

    def log_error(self, sender, msg):
        """
        Log error line to errors.log
        """
        with open(self.errors_logfile, 'a') as errors_logfile:
            date_time = utils.convert_format(utils.now(), utils.log_format)
            errors_logfile.write(f'{date_time} {sender}{msg}\n')

    def process_line(self, line):
        """
        Extract the verbosity level, the sender and the message from the line.
        The line is separated by | and the fields are:
        1. The level. A two digit number
            first digit: verbosity level
            second digit: debug level
            both levels range from 0 to 3

            verbosity:
                0 - don't print
                1 - basic operation/proof of work
                2 - log I/O operations and filenames
                3 - log per epoch/per checkpoint progress

            debug:
                0 - don't print
                1 - print exceptions
                2 - unsupported and unhandled cases (skipped samples, degenerate inputs)
                3 - red warnings that needs examination - developer warnings

            Messages should be about verbosity or debugging, but not both simultaneously
        2. The sender
        3. The message
        """
        fields = line.split('|')
        level = fields[0]
        if not level.isdigit() or len(level) != 2:
            level = '00'
        sender = f'[{fields[1]}] ' if len(fields) > 1 else ''
        # If there are more | inside the msg, we don't care, just print them
        msg = '|'.join(fields[2:])
        return (level, sender, msg)

    def output_line(self, level, sender, msg):
        """
        Print depending on the debug and verbose levels
        """
        verbose_level, debug_level = int(level[0]), int(level[1])
        if debug_level == 3:
            msg = f'\033[0;35;40m{msg}\033[00m'

        # There should be a level 0 that we never print. So its >, and not >=
        if ((
            0 < verbose_level <= 3
            and verbose_level <= self.verbose
        ) or (
            0 < debug_level <= 3
            and debug_level <= self.debug
        )):
            # we use tqdm.write() instead of print() to make sure we
            # don't break the progress bars of training and inference
            tqdm.write(f'{sender}{msg}')
            self.log_line(sender, msg)

        # errors always go to errors.log, even without -e 1
        if debug_level == 1:
            self.log_error(sender, msg)

    def shutdown_gracefully(self):
        self.log_line('[Output Process]', ' Stopping output process.')

    def run(self):
        while True:
            try:
                line = self.queue.get()
                if line == 'quiet':
                    self.quiet = True
                elif line in ('stop_process', 'stop'):
                    self.shutdown_gracefully()
                    return True
                elif not self.quiet:
                    # output to terminal and logs or logs only?
                    if line.startswith('log-only'):
                        (level, sender, msg) = self.process_line(line[len('log-only'):])
                        self.log_line(sender, msg)
                    else:
                        (level, sender, msg) = self.process_line(line)
                        self.output_line(level, sender, msg)

            except KeyboardInterrupt:
                self.shutdown_gracefully()
                return True
            except Exception:
                exception_line = sys.exc_info()[2].tb_lineno
                print(
                    f'\tProblem with OutputProcess() line {exception_line}',
                )
                print(traceback.format_exc())
