"""
Console logging for the command-line tools.

Library modules only call logging.getLogger(__name__); handlers are
installed here, once, by the CLI.
"""
import sys
import logging

import colorlog

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

TRACE_LOGGERS = ('solvers.recovery',)
VERBOSE_LOGGERS = ('solvers.sdp',)
PACKAGE_LOGGERS = ('core', 'solvers', 'apps', 'oracle', 'storage')


def setup_logging(level: int = logging.WARNING, trace: bool = False, verbose: bool = False) -> logging.Logger:
    """
    Install a colorized stderr handler on the root logger

    Args:
        level: Root level for all package loggers
        trace: Stream per-step bisection lines (DEBUG on solvers.recovery)
        verbose: Stream interior-point iteration lines (DEBUG on solvers.sdp)

    Returns:
        The configured root logger
    """
    handler = colorlog.StreamHandler(sys.stderr)
    handler.setFormatter(colorlog.ColoredFormatter(
        '%(log_color)s' + LOG_FORMAT,
        log_colors={
            'DEBUG': 'cyan',
            'INFO': 'green',
            'WARNING': 'yellow',
            'ERROR': 'red',
            'CRITICAL': 'red,bg_white',
        }
    ))

    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(level)
    for name in PACKAGE_LOGGERS + TRACE_LOGGERS + VERBOSE_LOGGERS:
        logging.getLogger(name).setLevel(logging.NOTSET)

    debug_loggers = (TRACE_LOGGERS if trace else ()) + (VERBOSE_LOGGERS if verbose else ())
    if debug_loggers:
        root.setLevel(min(level, logging.DEBUG))
        # everything else stays at the requested level
        for name in PACKAGE_LOGGERS:
            logging.getLogger(name).setLevel(level)
        for name in debug_loggers:
            logging.getLogger(name).setLevel(logging.DEBUG)

    return root
