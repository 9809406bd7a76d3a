from rest_framework import serializers

from .exceptions import InputError
from .models import IndividualRecord, SearchRun
from .services.architecture import ArchitectureSpec, LayerKind, ShortcutKind
from .services.fixtures import FIXTURE_SPECS
from .services.growth import AccountingMode, Genotype, GrowthContext, GrowthFunctionId, accumulate

_GROWTH_CHOICES = [tag.value for tag in GrowthFunctionId]


class LayerSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=[k.value for k in LayerKind])
    kernel = serializers.IntegerField(min_value=1, default=3)
    stride = serializers.IntegerField(min_value=1, default=1)
    shortcut = serializers.ChoiceField(choices=[s.value for s in ShortcutKind], default=ShortcutKind.NONE.value)
    width = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    pool = serializers.ChoiceField(choices=["max", "avg"], default="max")
    rate = serializers.FloatField(min_value=0.0, max_value=0.999, default=0.0)
    downsample = serializers.BooleanField(required=False)


class ArchitectureSpecSerializer(serializers.Serializer):
    """Validates an architecture spec document."""

    name = serializers.CharField(max_length=100, default="custom")
    input_dims = serializers.ListField(
        child=serializers.IntegerField(min_value=1),
        min_length=3,
        max_length=3,
        default=[32, 32, 3],
    )
    classes = serializers.IntegerField(min_value=1, default=10)
    layers = LayerSerializer(many=True, allow_empty=False)

    def validate(self, attrs):
        try:
            ArchitectureSpec.from_dict({**attrs, "layers": [dict(layer) for layer in attrs["layers"]]})
        except InputError as exc:
            raise serializers.ValidationError(str(exc)) from exc
        return attrs

    def to_spec(self) -> ArchitectureSpec:
        data = self.validated_data
        return ArchitectureSpec.from_dict({**data, "layers": [dict(layer) for layer in data["layers"]]})


class GenotypeSerializer(serializers.Serializer):
    base_widths = serializers.ListField(child=serializers.FloatField(min_value=1.0), allow_empty=False)
    multipliers = serializers.ListField(child=serializers.FloatField(min_value=1.0), required=False)
    history = serializers.ListField(child=serializers.ChoiceField(choices=_GROWTH_CHOICES), default=list)
    mode = serializers.ChoiceField(choices=[m.value for m in AccountingMode], default=AccountingMode.COMPOUND.value)
    lam = serializers.FloatField(default=0.2)

    def validate_lam(self, value: float) -> float:
        if value <= 0:
            raise serializers.ValidationError("lam must be > 0.")
        return value

    def validate(self, attrs):
        multipliers = attrs.get("multipliers")
        if multipliers is not None and len(multipliers) != len(attrs["base_widths"]):
            raise serializers.ValidationError("multipliers and base_widths must have the same length.")
        return attrs

    def to_genotype(self, spec: ArchitectureSpec | None = None) -> Genotype:
        """Without stored multipliers, they are replayed from the history on ``spec``."""
        data = dict(self.validated_data)
        if "multipliers" not in data and spec is not None:
            ctx = GrowthContext.for_spec(spec, data["lam"])
            data["multipliers"] = list(accumulate(data["history"], ctx, data["mode"]))
        return Genotype.from_dict(data)


class ScheduleSerializer(serializers.Serializer):
    widths = serializers.ListField(child=serializers.IntegerField(min_value=2), allow_empty=False)

    def validate_widths(self, value: list[int]) -> list[int]:
        odd = [w for w in value if w % 2]
        if odd:
            raise serializers.ValidationError(f"widths must be even, got {odd}.")
        return value


class DatasetSourceSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=["synthetic", "binary"], default="synthetic")
    paths = serializers.ListField(child=serializers.CharField(), default=list)
    test_paths = serializers.ListField(child=serializers.CharField(), default=list)
    class_count = serializers.IntegerField(min_value=1, default=10)
    seed = serializers.IntegerField(default=0)
    count = serializers.IntegerField(min_value=1, default=2000)
    test_count = serializers.IntegerField(min_value=1, default=500)
    dims = serializers.ListField(
        child=serializers.IntegerField(min_value=1),
        min_length=3,
        max_length=3,
        default=[16, 16, 3],
    )
    holdout = serializers.IntegerField(min_value=0, required=False, allow_null=True)

    def validate(self, attrs):
        if attrs["kind"] == "binary" and not attrs["paths"]:
            raise serializers.ValidationError("binary datasets need at least one path.")
        if attrs["kind"] == "synthetic" and attrs["count"] < attrs["class_count"]:
            raise serializers.ValidationError("count must be >= class_count.")
        return attrs


class RunConfigSerializer(serializers.Serializer):
    """A merged search/eval configuration (flags > file > settings)."""

    spec = serializers.JSONField(help_text="Fixture name, spec file path or inline spec.")
    dataset = DatasetSourceSerializer(required=False)
    output_dir = serializers.CharField(required=False, allow_null=True)
    run_root = serializers.CharField()

    # budget
    param_budget = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    reference = serializers.JSONField(required=False, allow_null=True)
    budget_multiple = serializers.FloatField(min_value=1.0, required=False, allow_null=True)

    # search
    fitness = serializers.ChoiceField(choices=["validation", "budget_distance"], default="validation")
    lam = serializers.FloatField()
    p1 = serializers.IntegerField(min_value=1)
    p2 = serializers.IntegerField(min_value=1)
    k = serializers.IntegerField(min_value=1)
    child_epochs = serializers.IntegerField(min_value=0)
    init_epochs = serializers.IntegerField(min_value=0)
    budget_fraction = serializers.FloatField(max_value=1.0)
    generation_cap = serializers.IntegerField(min_value=0)
    seed = serializers.IntegerField()
    base_width = serializers.IntegerField(min_value=2, required=False, allow_null=True)
    mode = serializers.ChoiceField(choices=[m.value for m in AccountingMode], default=AccountingMode.COMPOUND.value)
    pool = serializers.ListField(child=serializers.ChoiceField(choices=_GROWTH_CHOICES), required=False)
    inherit_weights = serializers.BooleanField(default=True)
    param_weight = serializers.FloatField(min_value=0.0, default=0.0)
    flop_weight = serializers.FloatField(min_value=0.0, default=0.0)
    workers = serializers.IntegerField(min_value=1)
    noise = serializers.BooleanField(default=True)
    noise_delta = serializers.FloatField(min_value=0.0, max_value=1.0)
    noise_per_filter = serializers.BooleanField(default=False)

    # training
    batch_size = serializers.IntegerField(min_value=1)
    momentum = serializers.FloatField(min_value=0.0, max_value=0.999999)
    l_max = serializers.FloatField(min_value=0.0)
    T0 = serializers.FloatField(min_value=1.0)
    T_mult = serializers.FloatField(min_value=1.0)
    weight_decay = serializers.FloatField(min_value=0.0)
    warmup_epochs = serializers.IntegerField(min_value=0, default=0)
    augment = serializers.BooleanField(default=False)
    pad = serializers.IntegerField(min_value=0, default=4)
    flip = serializers.BooleanField(default=True)
    cutout = serializers.IntegerField(min_value=0, default=0)

    def validate_spec(self, value):
        if isinstance(value, dict):
            inner = ArchitectureSpecSerializer(data=value)
            inner.is_valid(raise_exception=True)
            return value
        if not isinstance(value, str) or not value:
            raise serializers.ValidationError("spec must be a fixture name, a file path or an object.")
        if value not in FIXTURE_SPECS and not value.endswith(".json"):
            raise serializers.ValidationError(
                f"unknown fixture {value!r}; choose from {sorted(FIXTURE_SPECS)} or give a .json path."
            )
        return value

    def validate_lam(self, value: float) -> float:
        if value <= 0:
            raise serializers.ValidationError("lam must be > 0.")
        return value

    def validate_budget_fraction(self, value: float) -> float:
        if value <= 0:
            raise serializers.ValidationError("budget_fraction must lie in (0, 1].")
        return value

    def validate(self, attrs):
        if not attrs["k"] <= attrs["p1"] <= attrs["p2"]:
            raise serializers.ValidationError("need k <= p1 <= p2.")
        return attrs


class SearchRunSerializer(serializers.ModelSerializer):
    """Lightweight serializer for listing runs."""

    individual_count = serializers.SerializerMethodField()

    class Meta:
        model = SearchRun
        fields = [
            "id",
            "spec_name",
            "seed",
            "status",
            "param_budget",
            "best_fitness",
            "best_params",
            "steps",
            "individual_count",
            "created_at",
        ]

    def get_individual_count(self, obj: SearchRun) -> int:
        return obj.individuals.count()


class SearchRunDetailSerializer(serializers.ModelSerializer):
    class Meta:
        model = SearchRun
        fields = [
            "id",
            "spec_name",
            "seed",
            "status",
            "config",
            "run_dir",
            "param_budget",
            "best_individual_id",
            "best_fitness",
            "best_params",
            "best_widths",
            "steps",
            "error",
            "created_at",
            "finished_at",
        ]
        read_only_fields = fields


class IndividualRecordSerializer(serializers.ModelSerializer):
    class Meta:
        model = IndividualRecord
        fields = [
            "individual_id",
            "parent_id",
            "event",
            "mutation_tag",
            "params",
            "fitness",
            "best_fitness",
            "population_size",
            "widths",
            "wallclock_s",
        ]
        read_only_fields = fields
