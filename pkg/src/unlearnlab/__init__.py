from .taxonomy import DomainLevel, LabelTaxonomy, Dataset, generate_synthetic
from .tasks import ScenarioSpec, build_task, classify_scenario
from .engines import ENGINES, EngineConfig, get_engine, pretrain
from .evalkit import compute_metrics, compute_gap
from .config import load_config
from .pipeline import sweep
from .cli import main
