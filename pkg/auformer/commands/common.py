"""
Shared plumbing for the command modules
"""

import json
import logging
import sys
from functools import wraps

import click

from auformer.errors import ConfigurationError

logger = logging.getLogger(__name__)

EXIT_RUNTIME = 1
EXIT_USAGE = 2


def emit(document):
    click.echo(json.dumps(document, indent=2, sort_keys=True))


def handle_errors(func):
    """
    Decorator mapping failures to an error document and an exit code

    ConfigurationError exits with 2, every other failure with 1.

    Args:
        func (callable): Command body

    Returns:
        callable: Wrapped command body
    """
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except click.exceptions.Exit:
            raise
        except ConfigurationError as e:
            emit({"status": "error", "error": str(e)})
            sys.exit(EXIT_USAGE)
        except Exception as e:
            logger.exception(f"{func.__name__} failed")
            emit({"status": "error", "error": str(e)})
            sys.exit(EXIT_RUNTIME)
    return wrapper


ablation_option = click.option(
    "--ablation", "ablation", multiple=True, metavar="KEY=on|off",
    help="Override an ablation switch (petl, collab, mrf, ca, gamma, margin) or adapter=moke|adapter|lora.")
