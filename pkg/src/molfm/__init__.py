"""molfm: multi-modal molecular property model (SELFIES + graph + conformer ensemble)."""

__version__ = "0.1.0"

from .config import AblationVariant, ModelConfig, TrainConfig  # noqa: F401
from .records import MoleculeRecord, boltzmann_weights, build_vocab, parse_dataset  # noqa: F401
