from typing import Any, Dict, Iterable, Sequence

from loguru import logger

from core.dataio import ArtifactStore, ArtifactStoreConfig
from .context import RunContext
from .executor import StageExecutor, StageGraph, StageNode
from .manifest import RunManifest


def open_run(
    config: Any, command: str, config_digest: str, seed: int, jobs: int = 1, show_progress: bool = True
) -> RunContext:
    store = ArtifactStore(ArtifactStoreConfig(config.paths.artifact_dir, cache_size=config.paths.cache_size))
    manifest = RunManifest(
        command=command, seed=seed, config_hash=config_digest, config=config.model_dump(mode="json")
    )
    return RunContext(config=config, store=store, manifest=manifest, seed=seed, jobs=jobs, show_progress=show_progress)


def run_stages(ctx: RunContext, stages: Sequence[str], env_ids: Iterable[str], **options: Any) -> Dict[str, Dict[str, Any]]:
    """Run `stages` for each environment in dependency order; the manifest is written either way."""
    graph = StageGraph.build(stages, env_ids, **options)
    records = {}

    def on_start(node: StageNode) -> None:
        records[node.node_id] = ctx.manifest.start_stage(node.spec.name, node.env_id)

    def on_complete(node: StageNode, output: Dict[str, Any], seconds: float) -> None:
        record = records[node.node_id]
        record.status, record.seconds, record.summary = "ok", round(seconds, 3), output

    def on_error(node: StageNode, error: BaseException) -> None:
        record = records[node.node_id]
        record.status, record.error = "failed", str(error)

    try:
        results = StageExecutor().execute(graph, ctx, on_start, on_complete, on_error)
    except BaseException:
        ctx.manifest.finish("failed")
        raise
    else:
        ctx.manifest.finish("ok")
        logger.debug(f"artifact cache {ctx.store.get_cache_stats()}")
        return results
    finally:
        ctx.manifest.write(ctx.out_dir)
