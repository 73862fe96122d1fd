"""
Base class for linksim management commands.

Subclasses implement run(**options) instead of handle(). Failures are
reported through CommandError so `manage.py` exits with status 2 for
configuration problems and 1 for runtime failures.
"""
import logging

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core.errors import ConfigurationError, LinkSimError

logger = logging.getLogger(__name__)


class LinkSimCommand(BaseCommand):

    def add_config_argument(self, parser, required=True):
        parser.add_argument(
            '--config',
            type=str,
            required=required,
            help='Path to a scenario JSON file',
        )

    def add_run_arguments(self, parser):
        parser.add_argument('--seed', type=int, help='Master seed (overrides the scenario seed)')
        parser.add_argument('--out', type=str, help='Output directory')
        parser.add_argument(
            '--workers',
            type=int,
            default=settings.LINKSIM_WORKERS,
            help='Worker processes (results do not depend on this)',
        )

    def handle(self, *args, **options):
        workers = options.get('workers')
        if workers is not None and workers < 1:
            raise CommandError(f'--workers must be >= 1, got {workers}', returncode=2)
        try:
            return self.run(**options)
        except ConfigurationError as exc:
            raise CommandError(str(exc), returncode=2) from exc
        except LinkSimError as exc:
            logger.debug("%s failed", self.__class__.__module__, exc_info=True)
            raise CommandError(str(exc), returncode=1) from exc

    def run(self, **options):
        raise NotImplementedError('subclasses of LinkSimCommand must provide a run() method')
