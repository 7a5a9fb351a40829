"""Butcher tableaux and their flat-vector parameterization.

A tableau is the coefficient table ``(a, w)`` of an s-stage Runge-Kutta
method; the node vector ``c`` is always derived as the row sums of ``a``
(the autonomy conditions), never stored as a free parameter.  The flat
vector layout used by the optimizer is:

* explicit: strictly lower ``a`` entries row by row (a21; a31, a32; ...),
  then ``w`` -- ``s*(s+1)/2`` numbers total;
* implicit: all of ``a`` row-major, then ``w`` -- ``s*(s+1)`` numbers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np


class DimensionError(ValueError):
    """Vector or matrix has the wrong length/shape for the stage count."""


class TableauFormatError(ValueError):
    """Tableau file is malformed or internally inconsistent."""


def vector_length(stages: int, explicit: bool) -> int:
    """Length of the flat parameter vector for an s-stage method."""
    return stages * (stages + 1) // 2 if explicit else stages * (stages + 1)


@dataclass(frozen=True)
class ButcherTableau:
    """Coefficients of one Runge-Kutta method.

    ``a`` is the full s-by-s matrix (structural zeros included for explicit
    methods), ``w`` the weight vector, ``c`` the derived node vector.
    """

    stages: int
    a: np.ndarray
    w: np.ndarray
    explicit: bool
    c: np.ndarray = field(init=False)

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        w = np.array(self.w, dtype=float)
        s = self.stages
        if s < 1:
            raise DimensionError(f"stages must be positive, got {s}")
        if a.shape != (s, s):
            raise DimensionError(f"a must be {s}x{s}, got {a.shape}")
        if w.shape != (s,):
            raise DimensionError(f"w must have length {s}, got {w.shape}")
        if self.explicit and np.any(np.triu(a) != 0.0):
            raise TableauFormatError(
                "explicit tableau has nonzero entries on or above the diagonal"
            )
        a.setflags(write=False)
        w.setflags(write=False)
        c = a.sum(axis=1)
        c.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "c", c)

    def to_vector(self) -> np.ndarray:
        """Flatten to the optimization vector (inverse of ``from_vector``)."""
        if self.explicit:
            lower = [self.a[i, j] for i in range(self.stages) for j in range(i)]
            return np.array(lower + list(self.w), dtype=float)
        return np.concatenate([self.a.ravel(), self.w])


def from_vector(x: np.ndarray, stages: int, explicit: bool) -> ButcherTableau:
    """Rebuild a tableau from its flat parameter vector."""
    x = np.asarray(x, dtype=float)
    expect = vector_length(stages, explicit)
    if x.shape != (expect,):
        raise DimensionError(
            f"vector of length {expect} required for stages={stages} "
            f"explicit={explicit}, got shape {x.shape}"
        )
    s = stages
    a = np.zeros((s, s))
    if explicit:
        k = 0
        for i in range(s):
            for j in range(i):
                a[i, j] = x[k]
                k += 1
        w = x[k:]
    else:
        a = x[: s * s].reshape(s, s)
        w = x[s * s:]
    return ButcherTableau(stages=s, a=a, w=w, explicit=explicit)


def to_vector(t: ButcherTableau) -> np.ndarray:
    return t.to_vector()


def save_tableau(t: ButcherTableau, path: str | Path) -> None:
    """Write a tableau as JSON; floats keep full round-trip precision."""
    doc = {
        "stages": t.stages,
        "explicit": t.explicit,
        "a": [[float(v) for v in row] for row in t.a],
        "w": [float(v) for v in t.w],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_tableau(path: str | Path) -> ButcherTableau:
    """Read a tableau from JSON; any stored ``c`` is ignored and recomputed."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise TableauFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise TableauFormatError(f"{path}: top-level JSON object required")
    for key in ("stages", "explicit", "a", "w"):
        if key not in doc:
            raise TableauFormatError(f"{path}: missing key {key!r}")
    s = doc["stages"]
    if not isinstance(s, int) or s < 1:
        raise TableauFormatError(f"{path}: stages must be a positive integer")
    a = doc["a"]
    if len(a) != s or any(len(row) != s for row in a):
        raise DimensionError(f"{path}: a must be a {s}x{s} matrix")
    if len(doc["w"]) != s:
        raise DimensionError(f"{path}: w must have length {s}")
    try:
        return ButcherTableau(stages=s, a=np.array(a, dtype=float),
                              w=np.array(doc["w"], dtype=float),
                              explicit=bool(doc["explicit"]))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, (DimensionError, TableauFormatError)):
            raise
        raise TableauFormatError(f"{path}: {exc}") from exc


def fixture_path(name: str) -> Path:
    """Path of a tableau shipped with the package (e.g. ``"rk4"``)."""
    if not name.endswith(".json"):
        name += ".json"
    return Path(str(resources.files("rkevolve") / "fixtures" / name))


def load_fixture(name: str) -> ButcherTableau:
    return load_tableau(fixture_path(name))


def classical_rk4() -> ButcherTableau:
    """The classical four-stage, fourth-order method."""
    a = np.zeros((4, 4))
    a[1, 0] = 0.5
    a[2, 1] = 0.5
    a[3, 2] = 1.0
    w = np.array([1 / 6, 1 / 3, 1 / 3, 1 / 6])
    return ButcherTableau(stages=4, a=a, w=w, explicit=True)


def euler() -> ButcherTableau:
    """Forward Euler as a one-stage tableau."""
    return ButcherTableau(stages=1, a=np.zeros((1, 1)), w=np.array([1.0]),
                          explicit=True)


def heun() -> ButcherTableau:
    """Heun's two-stage, second-order method."""
    a = np.zeros((2, 2))
    a[1, 0] = 1.0
    return ButcherTableau(stages=2, a=a, w=np.array([0.5, 0.5]), explicit=True)


def midpoint() -> ButcherTableau:
    """Explicit midpoint rule: the two-stage method with w=(0,1), a21=1/2."""
    a = np.zeros((2, 2))
    a[1, 0] = 0.5
    return ButcherTableau(stages=2, a=a, w=np.array([0.0, 1.0]), explicit=True)
