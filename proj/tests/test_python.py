import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest
import scipy.sparse

import carve

SCHEMAS = Path(__file__).resolve().parents[1] / "schemas"

DISK_HOLE = {
    "dimension": 2,
    "shape": {"kind": "complement", "of": {"kind": "sphere", "center": [0.5, 0.5], "radius": 0.3}},
    "refinement": {"base_level": 3, "boundary_level": 5},
}


def test_uniform_square_counts():
    mesh = carve.Mesh({"dimension": 2, "refinement": {"base_level": 3, "boundary_level": 3}})
    assert mesh.num_elements == 64
    assert mesh.num_dofs == 81
    assert mesh.leaves().shape == (64, 4)
    assert mesh.boundary().sum() == 32


def test_matvec_matches_assembled_matrix():
    for order in (1, 2):
        mesh = carve.Mesh({**DISK_HOLE, "ranks": 3}, workers=2, order=order)
        u = np.random.default_rng(order).uniform(-1, 1, mesh.num_dofs)
        a = scipy.sparse.csr_matrix(mesh.assemble(), shape=(mesh.num_dofs, mesh.num_dofs))
        y = mesh.matvec(u)
        assert np.max(np.abs(y - a @ u)) <= 1e-12 * np.max(np.abs(y))
        assert abs(a - a.T).max() < 1e-12


def test_mass_matrix_sums_to_area():
    mesh = carve.Mesh({"dimension": 2, "refinement": {"base_level": 4, "boundary_level": 4}}, order=2)
    ones = np.ones(mesh.num_dofs)
    assert ones @ mesh.matvec(ones, mass=True) == pytest.approx(1.0, rel=1e-12)


def test_rank_count_does_not_change_the_mesh():
    ref = carve.Mesh(DISK_HOLE)
    for ranks in (2, 4):
        mesh = carve.Mesh({**DISK_HOLE, "ranks": ranks})
        assert np.array_equal(mesh.leaves(), ref.leaves())
        assert np.array_equal(mesh.coords(), ref.coords())
        assert sum(mesh.rank_elements()) == mesh.num_elements


def test_solve_on_disk_hole():
    out = carve.solve({**DISK_HOLE, "solver": {"rel_tol": 1e-10, "abs_tol": 1e-12}})
    assert out["converged"]
    assert out["u"].shape == (out["dofs"],)
    assert out["l2"] < 0.05
    assert out["coords"].shape == (out["dofs"], 3)


def test_condition_study_document():
    doc = carve.study("condition", {"condition": {"lengths": [1, 2, 4], "level": 5}})
    doc.pop("exit_status")
    jsonschema.validate(doc, json.loads((SCHEMAS / "condition.schema.json").read_text()))
    dofs = [r["dofs"] for r in doc["rows"] if r["variant"] == "incomplete"]
    assert dofs == [1089, 561, 297]


def test_errors():
    with pytest.raises(carve.ConfigError):
        carve.Mesh({"dimension": 5})
    with pytest.raises(RuntimeError, match="carved"):
        carve.Mesh({"dimension": 2, "shape": {"kind": "box", "lo": [-1, -1], "hi": [2, 2]}})
