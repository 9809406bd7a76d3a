import logging
import uuid

import pytest
from rest_framework.test import APIClient

from evolution.models import IndividualRecord, RunStatus, SearchRun

pytestmark = pytest.mark.django_db


@pytest.fixture
def client():
    return APIClient()


@pytest.fixture
def search_run():
    run = SearchRun.objects.create(
        spec_name="plain-cnn",
        seed=3,
        config={"p1": 2},
        run_dir="/tmp/run",
        param_budget=5000,
        status=RunStatus.COMPLETED,
        best_individual_id=2,
        best_fitness=0.75,
        best_params=4900,
        best_widths=[6, 8, 8],
        steps=1,
    )
    for individual_id, event, tag in [(1, "seed", "A"), (2, "seed", "G"), (3, "grow", "A")]:
        IndividualRecord.objects.create(
            run=run,
            individual_id=individual_id,
            parent_id=0 if event == "seed" else 2,
            event=event,
            mutation_tag=tag,
            params=1000 * individual_id,
            fitness=0.25 * individual_id,
            best_fitness=0.75,
            population_size=individual_id,
            widths=[4, 4, 4],
        )
    return run


def test_health(client):
    SearchRun.objects.create(spec_name="resnet18", run_dir="/tmp/a")
    response = client.get("/api/v1/health/")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "healthy"
    assert body["service"] == "widthsearch"
    assert body["running_searches"] == 1


def test_run_list_counts_individuals(client, search_run):
    response = client.get("/api/v1/runs/")
    assert response.status_code == 200
    results = response.json()["results"]
    assert len(results) == 1
    assert results[0]["individual_count"] == 3
    assert results[0]["spec_name"] == "plain-cnn"


def test_run_list_filters_by_status(client, search_run):
    SearchRun.objects.create(spec_name="vgg16", run_dir="/tmp/b", status=RunStatus.FAILED)
    response = client.get("/api/v1/runs/", {"status": "failed"})
    assert [run["spec_name"] for run in response.json()["results"]] == ["vgg16"]


def test_run_detail(client, search_run):
    response = client.get(f"/api/v1/runs/{search_run.pk}/")
    assert response.status_code == 200
    body = response.json()
    assert body["best_widths"] == [6, 8, 8]
    assert body["config"] == {"p1": 2}


def test_unknown_run_is_not_found(client):
    response = client.get(f"/api/v1/runs/{uuid.uuid4()}/")
    assert response.status_code == 404
    assert response.json()["error"] == "not_found"


def test_individuals_in_id_order(client, search_run):
    response = client.get(f"/api/v1/runs/{search_run.pk}/individuals/")
    assert [row["individual_id"] for row in response.json()["results"]] == [1, 2, 3]


def test_individuals_filter_by_event_and_tag(client, search_run):
    url = f"/api/v1/runs/{search_run.pk}/individuals/"
    assert [row["individual_id"] for row in client.get(url, {"event": "grow"}).json()["results"]] == [3]
    assert [row["individual_id"] for row in client.get(url, {"mutation_tag": "A"}).json()["results"]] == [1, 3]


def test_individuals_of_unknown_run_is_not_found(client):
    assert client.get(f"/api/v1/runs/{uuid.uuid4()}/individuals/").status_code == 404


def test_api_is_read_only(client, search_run):
    assert client.post("/api/v1/runs/", {}, format="json").status_code == 405


@pytest.fixture
def api_log(caplog):
    logger = logging.getLogger("evolution")
    logger.addHandler(caplog.handler)
    caplog.set_level(logging.DEBUG, logger="evolution")
    yield caplog
    logger.removeHandler(caplog.handler)


def test_request_log_names_the_run(client, search_run, api_log):
    client.get(f"/api/v1/runs/{search_run.pk}/individuals/", {"event": "grow"})
    (record,) = [r for r in api_log.records if r.getMessage().startswith("GET /api/v1/runs/")]
    assert record.levelno == logging.INFO
    assert record.getMessage().endswith(f"run={search_run.pk}")
    assert "?event=grow" in record.getMessage()


def test_run_list_request_has_no_run(client, api_log):
    client.get("/api/v1/runs/")
    (record,) = [r for r in api_log.records if r.getMessage().startswith("GET /api/v1/runs/")]
    assert record.getMessage().endswith("run=-")


def test_health_requests_log_at_debug(client, api_log):
    client.get("/api/v1/health/")
    (record,) = [r for r in api_log.records if r.getMessage().startswith("GET /api/v1/health/")]
    assert record.levelno == logging.DEBUG
