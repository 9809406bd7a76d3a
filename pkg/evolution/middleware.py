"""Request logging for the read-only run API.

Each API request is logged with the run it touched, so a run's traffic can
be grepped by its uuid. Health checks go to DEBUG.
"""

from __future__ import annotations

import logging
import time

from django.http import HttpRequest, HttpResponse

logger = logging.getLogger("evolution")

QUIET_VIEWS = frozenset({"evolution:health"})


def run_label(request: HttpRequest) -> str:
    match = getattr(request, "resolver_match", None)
    if match is None:
        return "-"
    pk = match.kwargs.get("pk")
    return str(pk) if pk is not None else "-"


class RequestLoggingMiddleware:
    def __init__(self, get_response):
        self.get_response = get_response

    def __call__(self, request: HttpRequest) -> HttpResponse:
        start = time.perf_counter()
        response = self.get_response(request)
        duration_ms = int((time.perf_counter() - start) * 1000)

        if not request.path.startswith("/api/"):
            return response
        match = getattr(request, "resolver_match", None)
        level = logging.DEBUG if match is not None and match.view_name in QUIET_VIEWS else logging.INFO
        logger.log(
            level,
            "%s %s %d %dms run=%s",
            request.method,
            request.get_full_path(),
            response.status_code,
            duration_ms,
            run_label(request),
        )
        return response
