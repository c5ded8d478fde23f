from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from loguru import logger
from pydantic import BaseModel, Field

from core.dataio import file_checksum

MANIFEST_FILE = "manifest.json"


class StageRecord(BaseModel):
    stage: str
    env_id: str
    status: str = "running"
    seconds: Optional[float] = None
    summary: Dict[str, Any] = Field(default_factory=dict)
    error: Optional[str] = None


class RunManifest(BaseModel):
    """What a run read and wrote, enough to re-derive it."""

    command: str
    seed: int
    config_hash: str
    config: Dict[str, Any]
    started_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished_at: Optional[str] = None
    status: str = "running"
    stages: List[StageRecord] = Field(default_factory=list)
    # artifact name -> sha256 of its container, inputs and outputs alike
    artifacts: Dict[str, str] = Field(default_factory=dict)
    # output file name -> sha256
    outputs: Dict[str, str] = Field(default_factory=dict)

    def start_stage(self, stage: str, env_id: str) -> StageRecord:
        record = StageRecord(stage=stage, env_id=env_id)
        self.stages.append(record)
        return record

    def record_artifact(self, key: str, checksum: str) -> None:
        self.artifacts[key] = checksum

    def record_output(self, path: Union[str, Path]) -> None:
        path = Path(path)
        self.outputs[path.name] = file_checksum(path)

    def finish(self, status: str) -> None:
        self.status = status
        self.finished_at = datetime.now(timezone.utc).isoformat()

    def write(self, directory: Union[str, Path]) -> Path:
        path = Path(directory) / MANIFEST_FILE
        path.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        logger.info(f"manifest written to {path}")
        return path

    @classmethod
    def read(cls, path: Union[str, Path]) -> "RunManifest":
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))
