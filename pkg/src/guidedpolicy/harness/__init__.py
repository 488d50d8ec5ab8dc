from .batch import aggregate_curves, batch_runs
from .config import ExperimentConfig, load_config, profile, substream
from .manifest import RunManifest, StaleArtifact
from .report import report, results_table
