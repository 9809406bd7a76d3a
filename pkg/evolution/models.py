import uuid

from django.db import models


class RunStatus(models.TextChoices):
    RUNNING = "running", "Running"
    COMPLETED = "completed", "Completed"
    BUDGET_NOT_REACHED = "budget_not_reached", "Budget not reached"
    FAILED = "failed", "Failed"


class SearchRun(models.Model):
    """One invocation of the ``search`` command recorded with ``--record``."""

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    spec_name = models.CharField(max_length=100, db_index=True)
    seed = models.BigIntegerField(default=0)
    config = models.JSONField(default=dict, help_text="Merged run configuration echo.")
    run_dir = models.CharField(max_length=500)
    status = models.CharField(max_length=20, choices=RunStatus.choices, default=RunStatus.RUNNING)

    param_budget = models.BigIntegerField(default=0)
    best_individual_id = models.PositiveIntegerField(null=True, blank=True)
    best_fitness = models.FloatField(null=True, blank=True)
    best_params = models.BigIntegerField(null=True, blank=True)
    best_widths = models.JSONField(default=list, blank=True)
    steps = models.PositiveIntegerField(default=0)
    error = models.TextField(blank=True, default="")

    created_at = models.DateTimeField(auto_now_add=True, db_index=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ["-created_at"]

    def __str__(self):
        return f"{self.spec_name} seed={self.seed} ({self.status})"


class IndividualRecord(models.Model):
    """One run-log event: an individual entering the population."""

    run = models.ForeignKey(SearchRun, on_delete=models.CASCADE, related_name="individuals")
    individual_id = models.PositiveIntegerField()
    parent_id = models.PositiveIntegerField(null=True, blank=True)
    event = models.CharField(max_length=20, db_index=True)
    mutation_tag = models.CharField(max_length=10, blank=True, db_index=True)
    params = models.BigIntegerField()
    fitness = models.FloatField()
    best_fitness = models.FloatField()
    population_size = models.PositiveIntegerField()
    widths = models.JSONField(default=list)
    wallclock_s = models.FloatField(default=0.0)

    class Meta:
        ordering = ["run", "individual_id"]
        constraints = [
            models.UniqueConstraint(fields=["run", "individual_id"], name="unique_individual_per_run"),
        ]

    def __str__(self):
        return f"#{self.individual_id} {self.event} fitness={self.fitness:.4f}"
