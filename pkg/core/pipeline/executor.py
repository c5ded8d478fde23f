import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

from loguru import logger

from .registry import StageRegistry, StageSpec, stage_registry


@dataclass
class StageNode:
    node_id: str
    spec: StageSpec
    env_id: str
    options: Dict[str, Any] = field(default_factory=dict)


class StageGraph:
    """Stages for one or more environments, wired producer -> consumer per environment."""

    def __init__(self, registry: StageRegistry = stage_registry):
        self.registry = registry
        self.nodes: Dict[str, StageNode] = {}
        self.edges: Dict[str, List[str]] = {}

    def add_stage(self, name: str, env_id: str, **options: Any) -> str:
        spec = self.registry.get(name)
        node_id = f"{env_id}:{name}"
        self.nodes[node_id] = StageNode(node_id, spec, env_id, options)
        self.edges.setdefault(node_id, [])
        self._connect()
        return node_id

    def _connect(self) -> None:
        for consumer in self.nodes.values():
            for artifact in (*consumer.spec.requires, *consumer.spec.after):
                for producer in self.nodes.values():
                    if producer is consumer or producer.env_id != consumer.env_id:
                        continue
                    if artifact in producer.spec.produces and consumer.node_id not in self.edges[producer.node_id]:
                        self.edges[producer.node_id].append(consumer.node_id)

    def get_edges_from_node(self, node_id: str) -> List[str]:
        return self.edges.get(node_id, [])

    @classmethod
    def build(cls, stages: Sequence[str], env_ids: Iterable[str], registry: StageRegistry = stage_registry, **options: Any) -> "StageGraph":
        graph = cls(registry)
        for env_id in env_ids:
            for name in stages:
                graph.add_stage(name, env_id, **options)
        return graph


class TopologicalSorter:

    @staticmethod
    def kahn_sort(graph: StageGraph) -> List[str]:
        in_degree = {node_id: 0 for node_id in graph.nodes}
        for targets in graph.edges.values():
            for target in targets:
                in_degree[target] += 1

        queue = deque(node_id for node_id, degree in in_degree.items() if degree == 0)
        order = []
        while queue:
            node_id = queue.popleft()
            order.append(node_id)
            for target in graph.get_edges_from_node(node_id):
                in_degree[target] -= 1
                if in_degree[target] == 0:
                    queue.append(target)

        if len(order) != len(graph.nodes):
            raise ValueError("Stage graph contains a cycle")
        return order

    @staticmethod
    def dfs_sort(graph: StageGraph) -> List[str]:
        state = {node_id: 0 for node_id in graph.nodes}
        order: List[str] = []

        def visit(node_id: str) -> None:
            if state[node_id] == 1:
                raise ValueError("Stage graph contains a cycle")
            if state[node_id] == 2:
                return
            state[node_id] = 1
            for target in graph.get_edges_from_node(node_id):
                visit(target)
            state[node_id] = 2
            order.append(node_id)

        for node_id in graph.nodes:
            visit(node_id)
        return order[::-1]


class StageExecutor:
    """Runs a StageGraph in dependency order, stopping at the first failure."""

    def __init__(self, topology_sorter: str = "kahn"):
        if topology_sorter == "kahn":
            self._sort = TopologicalSorter.kahn_sort
        elif topology_sorter == "dfs":
            self._sort = TopologicalSorter.dfs_sort
        else:
            raise ValueError(f"Unknown topology sorter: {topology_sorter}")

    def execute(
        self,
        graph: StageGraph,
        ctx: Any,
        on_stage_start: Optional[Callable[[StageNode], None]] = None,
        on_stage_complete: Optional[Callable[[StageNode, Dict[str, Any], float], None]] = None,
        on_stage_error: Optional[Callable[[StageNode, BaseException], None]] = None,
    ) -> Dict[str, Dict[str, Any]]:
        results: Dict[str, Dict[str, Any]] = {}
        for node_id in self._sort(graph):
            node = graph.nodes[node_id]
            if on_stage_start:
                on_stage_start(node)
            logger.info(f"stage {node_id} started")
            started = time.perf_counter()
            try:
                output = node.spec.func(ctx, node.env_id, **node.options) or {}
            except BaseException as e:
                logger.error(f"stage {node_id} failed: {e}")
                if on_stage_error:
                    on_stage_error(node, e)
                raise
            elapsed = time.perf_counter() - started
            results[node_id] = output
            logger.info(f"stage {node_id} finished in {elapsed:.1f}s")
            if on_stage_complete:
                on_stage_complete(node, output, elapsed)
        return results
