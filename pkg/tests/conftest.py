from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from uamcp.scenario import config_from_dict


def tiny_config(mode: str = "ca_cp", **overrides):
    """A quick desk-scale scenario for integration tests."""
    doc = {
        "n_uas": 12,
        "area_side": 2000.0,
        "grid_spacing": 500.0,
        "duration": 30.0,
        "spawn_window": 6.0,
        "route_duration_range": [15.0, 24.0],
        "mode": mode,
        "gs_grid_dim": 3 if mode == "central" else 0,
        "seed": 11,
    }
    doc.update(overrides)
    return config_from_dict(doc)
