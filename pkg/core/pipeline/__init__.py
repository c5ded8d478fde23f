from .context import RunContext, artifact_key, derive_seed
from .executor import StageExecutor, StageGraph, StageNode, TopologicalSorter
from .manifest import MANIFEST_FILE, RunManifest, StageRecord
from .registry import StageRegistry, StageSpec, register_stage, stage_registry
from .runner import open_run, run_stages
from .stages import (
    BUDGET_CSV,
    DIAGNOSTICS_CSV,
    DIVERSITY_CSV,
    FINETUNE_PNG,
    LABEL_SWEEP_CSV,
    PIPELINE,
    TABLE_FILES,
    TRAVERSAL_PNG,
    resolve_targets,
)

__all__ = [
    'RunContext', 'artifact_key', 'derive_seed', 'StageExecutor', 'StageGraph', 'StageNode', 'TopologicalSorter',
    'MANIFEST_FILE', 'RunManifest', 'StageRecord', 'StageRegistry', 'StageSpec', 'register_stage', 'stage_registry',
    'open_run', 'run_stages', 'BUDGET_CSV', 'DIAGNOSTICS_CSV', 'DIVERSITY_CSV', 'FINETUNE_PNG', 'LABEL_SWEEP_CSV',
    'PIPELINE', 'TABLE_FILES', 'TRAVERSAL_PNG', 'resolve_targets',
]
