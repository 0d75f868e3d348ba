"""Any-time super-resolution: one weight-shared supernet, per-patch routing."""

__version__ = "0.1.0"

from .edge import EdgeOperator, edge_map, edge_score, to_gray  # noqa: F401
from .supernet import (ParameterStore, SupernetConfig, build, flops,  # noqa: F401
                       forward, load_checkpoint, save_checkpoint)
