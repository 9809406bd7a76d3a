from .architecture import ArchitectureSpec, ChannelSchedule, build_initial_model, flop_count, param_count
from .growth import Genotype, GrowthContext, GrowthFunctionId, apply_increment, realize_schedule
from .search import EvolutionEngine, SearchConfig, run_search
from .training import TrainConfig, train
from .widen import NoiseSpec, widen_network

__all__ = [
    "ArchitectureSpec",
    "ChannelSchedule",
    "EvolutionEngine",
    "Genotype",
    "GrowthContext",
    "GrowthFunctionId",
    "NoiseSpec",
    "SearchConfig",
    "TrainConfig",
    "apply_increment",
    "build_initial_model",
    "flop_count",
    "param_count",
    "realize_schedule",
    "run_search",
    "train",
    "widen_network",
]
