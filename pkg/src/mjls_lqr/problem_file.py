"""JSON problem files.

A problem file is one JSON object with explicit dimensions and nested
row-major arrays. Modes are numbered from 1 in anything a user reads, but
arrays are simply listed in mode order. Per-mode matrices may instead be
given as a schedule: a list over grid nodes of per-mode lists.

Example::

    {
      "name": "two-mode toy",
      "num_modes": 2, "state_dim": 1, "input_dim": 1,
      "A": [[[0.0]], [[1.0]]],
      "B": [[[1.0]], [[1.0]]],
      "Q": [[[1.0]], [[1.0]]],
      "R": [[[1.0]], [[1.0]]],
      "Q_terminal": [[[0.0]], [[0.0]]],
      "generator": [[-1.0, 1.0], [1.0, -1.0]],
      "phi": [1.0, 0.0],
      "horizon": 1.0,
      "initial_state": {"x0": [1.0]},
      "solver": {"method": "rk4", "num_steps": 1000},
      "mc": {"num_paths": 10000, "master_seed": 42}
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ShapeError, ValidationError
from .model import DeterministicState, GaussianState, ProblemInstance

_num_array = {"type": "array"}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": [
        "num_modes", "state_dim", "input_dim", "A", "B", "Q", "R", "Q_terminal",
        "generator", "phi", "horizon", "initial_state",
    ],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "num_modes": {"type": "integer", "minimum": 1},
        "state_dim": {"type": "integer", "minimum": 1},
        "input_dim": {"type": "integer", "minimum": 1},
        "A": _num_array,
        "B": _num_array,
        "Q": _num_array,
        "R": _num_array,
        "Q_terminal": _num_array,
        "generator": _num_array,
        "phi": {"type": "array", "items": {"type": "number"}},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "initial_state": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["x0"],
                    "properties": {"x0": {"type": "array", "items": {"type": "number"}}},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["mean", "covariances"],
                    "properties": {
                        "mean": {"type": "array", "items": {"type": "number"}},
                        "covariances": {"type": "array", "items": {"type": ["array", "null"]}},
                    },
                },
            ]
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["rk4", "backward_euler"]},
                "num_steps": {"type": "integer", "minimum": 1},
            },
        },
        "mc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "num_paths": {"type": "integer", "minimum": 2},
                "master_seed": {"type": "integer", "minimum": 0},
            },
        },
    },
}


@dataclass(frozen=True)
class ProblemFile:
    problem: ProblemInstance
    method: str | None = None
    num_steps: int | None = None
    num_paths: int | None = None
    master_seed: int | None = None
    description: str = ""


def _path(err):
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def _array(doc, key, shape_tail, allow_schedule=True):
    try:
        a = np.array(doc[key], dtype=float)
    except (TypeError, ValueError):
        raise ShapeError("ragged or non-numeric array", field=key) from None
    if a.shape[-len(shape_tail):] != shape_tail or a.ndim not in (
        (len(shape_tail), len(shape_tail) + 1) if allow_schedule else (len(shape_tail),)
    ):
        raise ShapeError(f"expected shape {shape_tail}, got {a.shape}", field=key)
    if not np.all(np.isfinite(a)):
        raise ValidationError("non-finite entries", field=key)
    return a


def parse_problem(doc):
    """Validate a decoded JSON document and build a :class:`ProblemFile`."""
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ValidationError(e.message, field=_path(e))
    N, n, m = doc["num_modes"], doc["state_dim"], doc["input_dim"]
    A = _array(doc, "A", (N, n, n))
    B = _array(doc, "B", (N, n, m))
    Q = _array(doc, "Q", (N, n, n))
    R = _array(doc, "R", (N, m, m))
    QT = _array(doc, "Q_terminal", (N, n, n), allow_schedule=False)
    lam = _array(doc, "generator", (N, N), allow_schedule=False)
    phi = _array(doc, "phi", (N,), allow_schedule=False)

    init = doc["initial_state"]
    if "x0" in init:
        x0 = np.array(init["x0"], dtype=float)
        if x0.shape != (n,):
            raise ShapeError(f"expected length {n}", field="initial_state.x0")
        state = DeterministicState(x0)
    else:
        mean = np.array(init["mean"], dtype=float)
        if mean.shape != (n,):
            raise ShapeError(f"expected length {n}", field="initial_state.mean")
        covs = init["covariances"]
        if len(covs) != N:
            raise ShapeError(f"expected {N} entries", field="initial_state.covariances")
        stack = np.zeros((N, n, n))
        for i, c in enumerate(covs):
            if c is None:
                if phi[i] > 0:
                    raise ValidationError("required for modes with positive phi", field=f"initial_state.covariances.{i}")
                continue
            c = np.array(c, dtype=float)
            if c.shape != (n, n):
                raise ShapeError(f"expected ({n}, {n})", field=f"initial_state.covariances.{i}")
            stack[i] = c
        state = GaussianState(mean, stack)

    problem = ProblemInstance(
        A=A, B=B, Q=Q, R=R, Q_terminal=QT, generator=lam, phi=phi,
        horizon=doc["horizon"], initial_state=state, name=doc.get("name", ""),
    )
    solver = doc.get("solver", {})
    mc = doc.get("mc", {})
    return ProblemFile(
        problem,
        method=solver.get("method"),
        num_steps=solver.get("num_steps"),
        num_paths=mc.get("num_paths"),
        master_seed=mc.get("master_seed"),
        description=doc.get("description", ""),
    )


def load_problem(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}", field=str(path)) from None
    return parse_problem(doc)


def serialize_problem(pf):
    """Inverse of :func:`parse_problem`."""
    if isinstance(pf, ProblemInstance):
        pf = ProblemFile(pf)
    p = pf.problem
    doc = {}
    if p.name:
        doc["name"] = p.name
    if pf.description:
        doc["description"] = pf.description
    doc.update(
        num_modes=p.num_modes,
        state_dim=p.state_dim,
        input_dim=p.input_dim,
        A=p.A.tolist(),
        B=p.B.tolist(),
        Q=p.Q.tolist(),
        R=p.R.tolist(),
        Q_terminal=p.Q_terminal.tolist(),
        generator=p.generator.tolist(),
        phi=p.phi.tolist(),
        horizon=p.horizon,
    )
    s = p.initial_state
    if isinstance(s, DeterministicState):
        doc["initial_state"] = {"x0": s.x0.tolist()}
    else:
        doc["initial_state"] = {"mean": s.mean.tolist(), "covariances": s.covariances.tolist()}
    solver = {k: v for k, v in (("method", pf.method), ("num_steps", pf.num_steps)) if v is not None}
    mc = {k: v for k, v in (("num_paths", pf.num_paths), ("master_seed", pf.master_seed)) if v is not None}
    if solver:
        doc["solver"] = solver
    if mc:
        doc["mc"] = mc
    return doc


def bundled_path(name):
    """Path of a problem file shipped in ``mjls_lqr/data``."""
    return Path(str(resources.files("mjls_lqr") / "data" / f"{name}.json"))


def bundled_names():
    return sorted(p.name[:-5] for p in resources.files("mjls_lqr").joinpath("data").iterdir() if p.name.endswith(".json"))
