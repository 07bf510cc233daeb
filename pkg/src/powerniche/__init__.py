"""Power-niche user analysis and reweighted BPR training for implicit-feedback recommenders."""

from .interactions import InteractionDataset, Quadrant, UserProfile, load_dataset
from .training import ReweightConfig, Variant

__version__ = "0.1.0"
__all__ = ["InteractionDataset", "Quadrant", "ReweightConfig", "UserProfile", "Variant", "load_dataset"]
