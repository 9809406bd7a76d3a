"""Shared plumbing for the widthsearch management commands."""

from __future__ import annotations

import json
import logging

from django.core.management.base import BaseCommand, CommandError

from ..exceptions import InputError, WidthSearchError, flatten_errors

logger = logging.getLogger("evolution")

VERBOSITY_LEVELS = {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG, 3: logging.DEBUG}


class WidthSearchCommand(BaseCommand):
    """Maps domain errors onto exit codes: 2 for user input, 1 for the rest."""

    def execute(self, *args, **options):
        logger.setLevel(VERBOSITY_LEVELS.get(options.get("verbosity", 1), logging.INFO))
        try:
            return super().execute(*args, **options)
        except InputError as exc:
            raise CommandError(str(exc), returncode=2) from exc
        except WidthSearchError as exc:
            logger.error("%s failed: %s", self.__module__.rsplit(".", 1)[-1], exc)
            raise CommandError(str(exc), returncode=1) from exc
        except OSError as exc:
            raise CommandError(f"I/O failure: {exc}", returncode=1) from exc

    def valid_serializer(self, serializer_class, data, **kwargs):
        serializer = serializer_class(data=data, **kwargs)
        if not serializer.is_valid():
            raise InputError(flatten_errors(serializer.errors))
        return serializer

    def validated(self, serializer_class, data, **kwargs) -> dict:
        return self.valid_serializer(serializer_class, data, **kwargs).validated_data

    @staticmethod
    def json_text(payload) -> str:
        return json.dumps(payload, indent=2)

    def emit_json(self, payload) -> None:
        self.stdout.write(self.json_text(payload))
