import hashlib
import importlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Type, Union

import numpy as np
import torch

from core.errors import ContainerFormatError
from .container import FORMAT_VERSION, read_container, write_container

PathLike = Union[str, Path]

_ARTIFACT_KINDS: Dict[str, Type] = {}

# kinds defined outside dataio, imported on first load
_KIND_MODULES = {
    "replay": "core.sac.replay_buffer",
    "policy": "core.sac.agent",
    "vae": "core.imagination.model",
}


def register_artifact(kind: str) -> Callable[[Type], Type]:
    """Class decorator: the class provides `to_sections()` and `from_sections(sections, meta)`."""

    def decorator(cls: Type) -> Type:
        cls.ARTIFACT_KIND = kind
        _ARTIFACT_KINDS[kind] = cls
        return cls

    return decorator


def save_artifact(artifact: Any, path: PathLike, version: Tuple[int, int] = FORMAT_VERSION) -> Path:
    kind = getattr(artifact, "ARTIFACT_KIND", None)
    if kind not in _ARTIFACT_KINDS:
        raise ContainerFormatError(f"{type(artifact).__name__} is not a registered artifact type")
    sections, meta = artifact.to_sections()
    return write_container(path, sections, {"kind": kind, "meta": meta}, version=version)


def load_artifact(path: PathLike, expected_kind: Optional[str] = None) -> Any:
    sections, envelope, _ = read_container(path)
    kind = envelope.get("kind")
    if kind not in _ARTIFACT_KINDS and kind in _KIND_MODULES:
        importlib.import_module(_KIND_MODULES[kind])
    if kind not in _ARTIFACT_KINDS:
        raise ContainerFormatError(f"{path}: unknown artifact kind {kind!r}")
    if expected_kind is not None and kind != expected_kind:
        raise ContainerFormatError(f"{path}: expected a '{expected_kind}' artifact, found '{kind}'")
    return _ARTIFACT_KINDS[kind].from_sections(sections, envelope.get("meta", {}))


def file_checksum(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@register_artifact("parameters")
@dataclass
class ParameterSet:
    """Named network state dicts, sectioned as ``<network>/<parameter>``."""

    networks: Dict[str, Dict[str, torch.Tensor]]
    meta: Dict[str, Any] = field(default_factory=dict)

    def to_sections(self) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
        sections = {}
        for net_name, state in self.networks.items():
            for param_name, tensor in state.items():
                sections[f"{net_name}/{param_name}"] = tensor.detach().cpu().numpy()
        return sections, self.meta

    @classmethod
    def from_sections(cls, sections: Dict[str, np.ndarray], meta: Dict[str, Any]) -> "ParameterSet":
        networks: Dict[str, Dict[str, torch.Tensor]] = {}
        for name, array in sections.items():
            net_name, param_name = name.split("/", 1)
            networks.setdefault(net_name, {})[param_name] = torch.from_numpy(np.array(array))
        return cls(networks=networks, meta=meta)

    def checksum(self) -> str:
        return parameter_checksum(self.networks)


def parameter_checksum(networks: Dict[str, Dict[str, torch.Tensor]]) -> str:
    digest = hashlib.sha256()
    for net_name in sorted(networks):
        for param_name in sorted(networks[net_name]):
            digest.update(f"{net_name}/{param_name}".encode("utf-8"))
            digest.update(networks[net_name][param_name].detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()
