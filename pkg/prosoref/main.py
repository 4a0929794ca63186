import logging
from typing import Optional, Sequence

import click

from prosoref.common.enum import ExitCode
from prosoref.core.config import get_settings
from prosoref.core.exceptions import ProsorefError, setup_logger
from prosoref.modules.evaluation.commands import evaluation
from prosoref.modules.features.commands import features
from prosoref.modules.listening.commands import listening
from prosoref.modules.prosody.commands import prosody
from prosoref.modules.textless.commands import textless
from prosoref.modules.vae.commands import vae

logger = logging.getLogger("prosoref")

cli = click.CommandCollection(
    sources=[features, prosody, textless, vae, evaluation, listening],
    help="Prosody reference signals: extraction, aggregation, encoding and evaluation.",
)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns 0 on success, 1 on usage errors, 2 on data errors."""
    try:
        settings = get_settings()
        setup_logger(settings.log.value, dev=settings.dev, config_path=settings.log_config)
        result = cli.main(
            args=list(argv) if argv is not None else None,
            prog_name="prosoref",
            standalone_mode=False,
        )
    except click.ClickException as e:
        e.show()
        return ExitCode.USAGE
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return ExitCode.USAGE
    except ProsorefError as e:
        logger.debug("command failed", exc_info=True)
        click.echo(f"error: {e}", err=True)
        return int(e.exit_code)

    return int(result) if isinstance(result, int) else int(ExitCode.OK)
