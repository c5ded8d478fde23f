from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch
import torch.nn as nn
import torch.nn.functional as F

from core.dataio.artifacts import parameter_checksum, register_artifact
from core.envs.base import ObservationKind
from core.errors import RuleError, ShapeMismatchError
from core.nets import LatentSpec, NetSettings, build_vae

ENCODE_MODES = ("mean", "sample")
_CURVE_PREFIX = "__curve__/"

ArrayLike = Union[np.ndarray, torch.Tensor]


@register_artifact("vae")
@dataclass
class VaeModel:
    """Trained encoders and decoder. Inference always runs the networks in eval mode."""

    env_id: str
    obs_kind: ObservationKind
    obs_shape: Tuple[int, ...]
    latent_spec: LatentSpec
    net_settings: NetSettings
    encoder_z: nn.Module
    encoder_c: nn.Module
    decoder: nn.Module
    training_meta: Dict[str, Any] = field(default_factory=dict)
    loss_curve: pd.DataFrame = field(default_factory=pd.DataFrame)

    @classmethod
    def build(
        cls, env_id: str, obs_kind: ObservationKind, obs_shape: Sequence[int], latent_spec: LatentSpec, net_settings: NetSettings
    ) -> "VaeModel":
        encoder_z, encoder_c, decoder = build_vae(obs_kind, latent_spec, obs_shape, net_settings)
        return cls(env_id, ObservationKind(obs_kind), tuple(obs_shape), latent_spec, net_settings, encoder_z, encoder_c, decoder)

    @property
    def n_classes(self) -> int:
        return self.latent_spec.c_dim

    def modules(self) -> Dict[str, nn.Module]:
        return {"encoder_z": self.encoder_z, "encoder_c": self.encoder_c, "decoder": self.decoder}

    def parameters(self):
        for module in self.modules().values():
            yield from module.parameters()

    def train(self, mode: bool = True) -> "VaeModel":
        for module in self.modules().values():
            module.train(mode)
        return self

    def eval(self) -> "VaeModel":
        return self.train(False)

    # ------------------------------------------------------------- inference

    def _batch(self, observation: ArrayLike) -> Tuple[torch.Tensor, bool]:
        x = torch.as_tensor(np.asarray(observation, dtype=np.float32)) if not isinstance(observation, torch.Tensor) else observation.float()
        if tuple(x.shape) == self.obs_shape:
            return x.unsqueeze(0), True
        if tuple(x.shape[1:]) != self.obs_shape:
            raise ShapeMismatchError(
                "observation shape does not match the model", actual=tuple(x.shape), expected=self.obs_shape
            )
        return x, False

    def encode(
        self, observation: ArrayLike, mode: str = "mean", generator: Optional[torch.Generator] = None
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """(z, class_probs) for one observation or a batch."""
        if mode not in ENCODE_MODES:
            raise ValueError(f"encode mode must be one of {ENCODE_MODES}, got '{mode}'")
        x, single = self._batch(observation)
        self.eval()
        with torch.no_grad():
            mu, log_var = self.encoder_z(x)
            if mode == "sample":
                eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype)
                z = mu + torch.exp(0.5 * log_var) * eps
            else:
                z = mu
            probs = F.softmax(self.encoder_c(x), dim=-1)
        if single:
            return z[0], probs[0]
        return z, probs

    def decode(self, z: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        single = z.dim() == 1
        if single:
            z, c = z.unsqueeze(0), c.unsqueeze(0)
        self.eval()
        with torch.no_grad():
            x = self.decoder(z, c)
        return x[0] if single else x

    def one_hot(self, classes: Union[int, Sequence[int], torch.Tensor]) -> torch.Tensor:
        """One-hot codes for 1-based class labels."""
        index = torch.as_tensor(classes, dtype=torch.long)
        if bool((index < 1).any()) or bool((index > self.n_classes).any()):
            raise RuleError(f"class labels must lie in 1..{self.n_classes}, got {index.tolist()}")
        return F.one_hot(index - 1, self.n_classes).float()

    def predict_class(self, observation: ArrayLike) -> Union[int, np.ndarray]:
        """1-based argmax of the classification head."""
        _, probs = self.encode(observation)
        labels = probs.argmax(dim=-1) + 1
        return int(labels) if labels.dim() == 0 else labels.numpy()

    def imagine(
        self, observation: ArrayLike, target_classes: Sequence[int], mode: str = "mean", generator: Optional[torch.Generator] = None
    ) -> np.ndarray:
        """Re-render `observation` through each class of `target_classes` in turn."""
        if len(target_classes) == 0:
            raise RuleError("imagination needs at least one target class")
        codes = [self.one_hot(c) for c in target_classes]
        x, single = self._batch(observation)
        for code in codes:
            z, _ = self.encode(x, mode=mode, generator=generator)
            x = self.decode(z, code.expand(z.shape[0], -1))
        if self.obs_kind == ObservationKind.PIXEL:
            x = x.clamp(0.0, 1.0)
        out = x.numpy().astype(np.float32)
        return out[0] if single else out

    def reconstruct(self, observation: ArrayLike) -> np.ndarray:
        """decode(encode_mean(x).z, one_hot(predicted class))."""
        x, single = self._batch(observation)
        z, probs = self.encode(x)
        recon = self.decode(z, F.one_hot(probs.argmax(-1), self.n_classes).float()).numpy()
        return recon[0] if single else recon

    # ----------------------------------------------------------- persistence

    def networks(self) -> Dict[str, Dict[str, torch.Tensor]]:
        return {name: module.state_dict() for name, module in self.modules().items()}

    def checksum(self) -> str:
        return parameter_checksum(self.networks())

    def to_sections(self) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
        sections = {}
        for net_name, state in self.networks().items():
            for param_name, tensor in state.items():
                sections[f"{net_name}/{param_name}"] = tensor.detach().cpu().numpy()
        for column in self.loss_curve.columns:
            sections[_CURVE_PREFIX + column] = self.loss_curve[column].to_numpy(dtype=np.float64)
        meta = {
            "env_id": self.env_id,
            "obs_kind": self.obs_kind.value,
            "obs_shape": list(self.obs_shape),
            "latent_spec": self.latent_spec.model_dump(),
            "net_settings": self.net_settings.model_dump(),
            "training_meta": self.training_meta,
            "curve_columns": list(self.loss_curve.columns),
        }
        return sections, meta

    @classmethod
    def from_sections(cls, sections: Dict[str, np.ndarray], meta: Dict[str, Any]) -> "VaeModel":
        model = cls.build(
            meta["env_id"], ObservationKind(meta["obs_kind"]), tuple(meta["obs_shape"]),
            LatentSpec(**meta["latent_spec"]), NetSettings(**meta["net_settings"]),
        )
        states: Dict[str, Dict[str, torch.Tensor]] = {}
        for name, array in sections.items():
            if name.startswith(_CURVE_PREFIX):
                continue
            net_name, param_name = name.split("/", 1)
            states.setdefault(net_name, {})[param_name] = torch.from_numpy(np.array(array))
        for name, module in model.modules().items():
            module.load_state_dict(states[name])
        model.training_meta = meta.get("training_meta", {})
        columns = meta.get("curve_columns", [])
        model.loss_curve = pd.DataFrame({c: sections[_CURVE_PREFIX + c] for c in columns}, columns=columns)
        return model.eval()


def encode(model: VaeModel, observation: ArrayLike, mode: str = "mean", generator: Optional[torch.Generator] = None):
    return model.encode(observation, mode=mode, generator=generator)


def imagine(model: VaeModel, observation: ArrayLike, target_class_sequence: Sequence[int]) -> np.ndarray:
    return model.imagine(observation, target_class_sequence)
