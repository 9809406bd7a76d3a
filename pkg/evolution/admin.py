from django.contrib import admin

from .models import IndividualRecord, SearchRun


class IndividualRecordInline(admin.TabularInline):
    model = IndividualRecord
    extra = 0
    fields = ["individual_id", "parent_id", "event", "mutation_tag", "params", "fitness", "population_size"]
    readonly_fields = fields
    can_delete = False


@admin.register(SearchRun)
class SearchRunAdmin(admin.ModelAdmin):
    list_display = [
        "spec_name",
        "seed",
        "status",
        "param_budget",
        "best_params",
        "best_fitness",
        "steps",
        "created_at",
    ]
    list_filter = ["status", "spec_name", "created_at"]
    search_fields = ["spec_name", "run_dir"]
    readonly_fields = [
        "id",
        "config",
        "best_widths",
        "created_at",
        "finished_at",
    ]
    date_hierarchy = "created_at"
    inlines = [IndividualRecordInline]


@admin.register(IndividualRecord)
class IndividualRecordAdmin(admin.ModelAdmin):
    list_display = ["run", "individual_id", "parent_id", "event", "mutation_tag", "params", "fitness"]
    list_filter = ["event", "mutation_tag"]
    search_fields = ["run__spec_name"]
    readonly_fields = ["widths"]
