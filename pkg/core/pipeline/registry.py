from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

StageFunc = Callable[..., Dict[str, object]]


@dataclass(frozen=True)
class StageSpec:
    """A pipeline command run for one environment.

    `requires` and `produces` name artifact suffixes (``dataset``, ``vae``, ...).
    `after` orders the stage behind producers it reads only when present.
    """

    name: str
    func: StageFunc
    requires: Tuple[str, ...] = ()
    produces: Tuple[str, ...] = ()
    after: Tuple[str, ...] = ()
    description: str = ""


class StageRegistry:

    def __init__(self):
        self._stages: Dict[str, StageSpec] = {}

    def register_stage(
        self,
        name: Optional[str] = None,
        requires: Tuple[str, ...] = (),
        produces: Tuple[str, ...] = (),
        after: Tuple[str, ...] = (),
        description: Optional[str] = None,
    ) -> Callable[[StageFunc], StageFunc]:
        """Decorator registering `func(ctx, env_id, **options)` as a stage."""

        def decorator(func: StageFunc) -> StageFunc:
            stage_name = name or func.__name__.replace("_", "-")
            if stage_name in self._stages:
                raise ValueError(f"Stage '{stage_name}' is already registered")
            doc = description if description is not None else (func.__doc__ or "").strip().split("\n")[0]
            self._stages[stage_name] = StageSpec(stage_name, func, tuple(requires), tuple(produces), tuple(after), doc)
            return func

        return decorator

    def get(self, name: str) -> StageSpec:
        if name not in self._stages:
            raise KeyError(f"Unknown stage '{name}', registered: {sorted(self._stages)}")
        return self._stages[name]

    def names(self) -> List[str]:
        return list(self._stages)

    def __contains__(self, name: str) -> bool:
        return name in self._stages


stage_registry = StageRegistry()
register_stage = stage_registry.register_stage
