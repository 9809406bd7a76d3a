"""Read-only API views over recorded search runs."""

from __future__ import annotations

import logging

from django.shortcuts import get_object_or_404
from django.utils import timezone
from django_filters.rest_framework import DjangoFilterBackend
from rest_framework import generics
from rest_framework.request import Request
from rest_framework.response import Response
from rest_framework.views import APIView

from .models import IndividualRecord, SearchRun
from .serializers import (
    IndividualRecordSerializer,
    SearchRunDetailSerializer,
    SearchRunSerializer,
)

logger = logging.getLogger(__name__)


class SearchRunListView(generics.ListAPIView):
    """
    GET /api/v1/runs/?spec_name=<name>&status=<status>

    Returns paginated search runs, newest first.
    """

    serializer_class = SearchRunSerializer
    queryset = SearchRun.objects.all()
    filter_backends = [DjangoFilterBackend]
    filterset_fields = ["spec_name", "status", "seed"]


class SearchRunDetailView(generics.RetrieveAPIView):
    """
    GET /api/v1/runs/<uuid:pk>/

    Returns the merged configuration and best individual of one run.
    """

    serializer_class = SearchRunDetailSerializer
    queryset = SearchRun.objects.all()
    lookup_field = "pk"


class IndividualListView(generics.ListAPIView):
    """
    GET /api/v1/runs/<uuid:pk>/individuals/?event=<event>&mutation_tag=<tag>

    Returns the run log of one run in individual-id order.
    """

    serializer_class = IndividualRecordSerializer
    filter_backends = [DjangoFilterBackend]
    filterset_fields = ["event", "mutation_tag"]

    def get_queryset(self):
        run = get_object_or_404(SearchRun, pk=self.kwargs["pk"])
        return IndividualRecord.objects.filter(run=run).order_by("individual_id")


class HealthCheckView(APIView):
    """
    GET /api/v1/health/

    Lightweight health check for uptime monitoring and deploy checks.
    """

    def get(self, request: Request) -> Response:
        running = SearchRun.objects.filter(status="running").count()
        logger.debug("Health check: %d running searches", running)
        return Response(
            {
                "status": "healthy",
                "service": "widthsearch",
                "running_searches": running,
                "timestamp": timezone.now().isoformat(),
            }
        )
