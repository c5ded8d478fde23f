from .artifacts import ParameterSet, file_checksum, load_artifact, parameter_checksum, register_artifact, save_artifact
from .cache_strategy import LRUCacheStrategy
from .container import FORMAT_VERSION, MAGIC, read_container, write_container
from .datasets import (
    DatasetMeta,
    DatasetSink,
    LabelBudget,
    LabeledSample,
    LabelSet,
    ObservationDataset,
    collect,
    label_random_subset,
    quantize_observation,
    reveal_labels,
)
from .store import PRODUCERS, ArtifactStore, ArtifactStoreConfig, FileStorage, producer_of

# save(artifact, path) / load(path)
save = save_artifact
load = load_artifact

__all__ = [
    'ParameterSet', 'file_checksum', 'load_artifact', 'parameter_checksum', 'register_artifact', 'save_artifact',
    'save', 'load', 'LRUCacheStrategy', 'FORMAT_VERSION', 'MAGIC', 'read_container', 'write_container',
    'DatasetMeta', 'DatasetSink', 'LabelBudget', 'LabeledSample', 'LabelSet', 'ObservationDataset',
    'collect', 'label_random_subset', 'quantize_observation', 'reveal_labels',
    'PRODUCERS', 'ArtifactStore', 'ArtifactStoreConfig', 'FileStorage', 'producer_of',
]
