"""Carved linear octree meshes and matrix-free finite elements.

Configs are dicts (or JSON strings) with the same keys the `carve` CLI reads.
"""

import json
import tempfile
from pathlib import Path

from ._core import ConfigError, default_config
from ._core import Mesh as _Mesh
from ._core import run as _run
from ._core import solve as _solve

__all__ = ["ConfigError", "Mesh", "default_config", "run", "solve", "study"]

_STUDY_OUTPUT = {
    "mesh": "summary.json",
    "solve": "report.json",
    "convergence": "convergence.json",
    "condition": "condition.json",
    "dof-compare": "dof_compare.json",
    "sdf-study": "sdf_study.json",
    "matvec-bench": "bench.json",
}


def _text(config):
    return config if isinstance(config, str) else json.dumps(config)


def Mesh(config, workers=1, order=0):
    """Build a mesh; `order` 0 takes the config's order."""
    return _Mesh(_text(config), workers, order)


def solve(config, workers=1):
    """Poisson solve; returns the report fields plus u, exact, g and node coords."""
    return _solve(_text(config), workers)


def run(command, config, out, workers=1, seed=1):
    """Run a CLI command writing its files to `out`; returns the exit status."""
    return _run(command, _text(config), str(out), workers, seed)


def study(command, config, workers=1, seed=1):
    """Run a command in a scratch directory and return its JSON document."""
    with tempfile.TemporaryDirectory() as tmp:
        status = run(command, config, tmp, workers, seed)
        doc = json.loads((Path(tmp) / _STUDY_OUTPUT[command]).read_text())
    doc["exit_status"] = status
    return doc
