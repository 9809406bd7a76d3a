"""Domain errors and the API exception handler."""

from __future__ import annotations

import logging

from rest_framework import status
from rest_framework.response import Response
from rest_framework.views import exception_handler

logger = logging.getLogger(__name__)


class WidthSearchError(Exception):
    """Base class for every error raised by the search engine."""

    code = "error"


class InputError(WidthSearchError):
    """The caller handed in something invalid (user-input error)."""

    code = "input_error"


class ShapeError(InputError):
    code = "shape_error"


class FormatError(InputError):
    code = "format_error"


class NumericError(WidthSearchError):
    code = "numeric_error"


class TrainingError(WidthSearchError):
    """Training diverged; ``epoch`` is the zero-based epoch index."""

    code = "training_error"

    def __init__(self, message: str, epoch: int):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch


class SearchError(WidthSearchError):
    """An individual could not be evaluated."""

    code = "search_error"

    def __init__(self, message: str, individual_id: int | None = None):
        suffix = f" (individual {individual_id})" if individual_id is not None else ""
        super().__init__(f"{message}{suffix}")
        self.individual_id = individual_id


def custom_exception_handler(exc, context):
    if isinstance(exc, InputError):
        return Response(
            {
                "error": exc.code,
                "message": str(exc),
                "status_code": status.HTTP_400_BAD_REQUEST,
            },
            status=status.HTTP_400_BAD_REQUEST,
        )

    response = exception_handler(exc, context)

    if response is not None:
        response.data = {
            "error": _error_code(response.status_code),
            "message": flatten_errors(response.data),
            "status_code": response.status_code,
        }
    else:
        logger.exception("Unhandled exception in view: %s", exc)
        response = Response(
            {
                "error": "internal_error",
                "message": "An unexpected error occurred.",
            },
            status=status.HTTP_500_INTERNAL_SERVER_ERROR,
        )

    return response


def _error_code(status_code: int) -> str:
    mapping = {
        400: "validation_error",
        404: "not_found",
        405: "method_not_allowed",
    }
    return mapping.get(status_code, "error")


def flatten_errors(data) -> str:
    """Flatten DRF's nested error dicts into one readable message."""
    if isinstance(data, str):
        return data
    if isinstance(data, list):
        return "; ".join(flatten_errors(item) for item in data)
    if isinstance(data, dict):
        parts = []
        for field, errors in data.items():
            if field == "detail":
                return str(errors)
            parts.append(f"{field}: {flatten_errors(errors)}")
        return "; ".join(parts) if parts else str(data)
    return str(data)
