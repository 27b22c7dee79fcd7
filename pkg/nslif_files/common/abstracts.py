# File containing some abstract definitions for nslif


# This is the abstract Module class to check against. Do not modify
class Module(object):
    name = ''
    description = 'Template abstract module'
    authors = ['Template abstract Author']
    # nslif.py subcommands served by this module
    commands = ()

    def __init__(self, outputqueue, conf=None):
        # All the printing output should be sent to the outputqueue.
        # The outputqueue is connected to another process called OutputProcess
        self.outputqueue = outputqueue
        self.conf = conf

    def print(self, text, verbose=1, debug=0):
        """
        Function to use to print text using the outputqueue of nslif.
        nslif then decides how, when and where to print this text
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
        :param text: text to print. Can include format like 'Test {}'.format('here')
        """
        levels = f'{verbose}{debug}'
        self.outputqueue.put(f'{levels}|{self.name}|{text}')

    @classmethod
    def add_arguments(cls, command, parser, conf):
        """
        Register the options of one subcommand on its parser, defaults are
        taken from the ConfigParser `conf`
        """

    def run_command(self, command, args):
        """
        Execute a subcommand. Returns the dict of metrics written by the command
        """
        raise NotImplementedError(f'{self.name} does not implement {command}')
