"""Self-supervised heterogeneous graph embeddings by cross-view contrast."""

from .config import RunConfig
from .model import HeCo
from .train import train

__all__ = ["HeCo", "RunConfig", "train"]
__version__ = "0.1.0"
