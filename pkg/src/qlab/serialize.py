"""JSON interchange: complex numbers travel as [re, im] pairs."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .channels import CpMap, HolevoMap, KrausMap
from .core import NORM_TOL, Ensemble, JointDistribution, PureState
from .errors import InvalidInput


class FileFormatError(InvalidInput):
    """A file parsed as JSON but does not describe the expected object."""


def _read_json(path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInput(f"{path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _complex(value, where: str) -> complex:
    if (
        not isinstance(value, list)
        or len(value) != 2
        or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value)
    ):
        raise FileFormatError(f"{where}: expected [re, im], got {value!r}")
    return complex(value[0], value[1])


def _vector(value, where: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise FileFormatError(f"{where}: expected a nonempty list of [re, im] pairs")
    return np.array([_complex(x, f"{where}[{k}]") for k, x in enumerate(value)])


def _matrix(value, where: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise FileFormatError(f"{where}: expected a nonempty list of rows")
    rows = [_vector(r, f"{where}[{k}]") for k, r in enumerate(value)]
    if len({len(r) for r in rows}) != 1:
        raise FileFormatError(f"{where}: rows differ in length")
    return np.array(rows)


def _field(doc: dict, key: str, where: str):
    if not isinstance(doc, dict):
        raise FileFormatError(f"{where}: expected a JSON object")
    if key not in doc:
        raise FileFormatError(f"{where}: missing field {key!r}")
    return doc[key]


def _dim(doc, where: str) -> int:
    dim = _field(doc, "dim", where)
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise FileFormatError(f"{where}: field 'dim' must be a positive integer")
    return dim


def parse_states(raw, dim: int, where: str) -> list[PureState]:
    if not isinstance(raw, list) or not raw:
        raise FileFormatError(f"{where}: expected a nonempty list of states")
    states = []
    for k, vec in enumerate(raw):
        v = _vector(vec, f"{where}[{k}]")
        if v.size != dim:
            raise FileFormatError(f"{where}[{k}]: length {v.size} differs from dim {dim}")
        try:
            # unit vectors are kept as written so that files round-trip exactly
            unit = abs(np.linalg.norm(v) - 1.0) <= NORM_TOL
            states.append(PureState(v) if unit else PureState.from_vector(v))
        except InvalidInput as exc:
            raise FileFormatError(f"{where}[{k}]: {exc}") from exc
    return states


def _weights(raw, n: int, where: str) -> np.ndarray:
    if not isinstance(raw, list) or len(raw) != n:
        raise FileFormatError(f"{where}: expected {n} weights")
    if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in raw):
        raise FileFormatError(f"{where}: weights must be numbers")
    return np.array(raw, dtype=float)


def ensemble_from_json(doc, where: str = "ensemble") -> Ensemble:
    """``{"dim": d, "states": [[[re, im], ...], ...], "weights": [...]}``; weights default to uniform."""
    dim = _dim(doc, where)
    states = parse_states(_field(doc, "states", where), dim, f"{where}.states")
    raw = doc.get("weights")
    weights = np.full(len(states), 1.0 / len(states)) if raw is None else _weights(raw, len(states), f"{where}.weights")
    try:
        return Ensemble(weights, states)
    except InvalidInput as exc:
        raise FileFormatError(f"{where}: {exc}") from exc


def ensemble_to_json(e: Ensemble) -> dict:
    return {"dim": e.dim, "states": [encode_vector(s.amplitudes) for s in e.states], "weights": e.weights.tolist()}


def load_ensemble(path) -> Ensemble:
    return ensemble_from_json(_read_json(path), str(path))


def joint_from_json(doc, where: str = "joint") -> tuple[JointDistribution, list[PureState], list[PureState]]:
    """``{"dim1", "dim2", "states1", "states2", "probs": [[...], ...]}``."""
    d1 = _dim({"dim": _field(doc, "dim1", where)}, f"{where}.dim1")
    d2 = _dim({"dim": _field(doc, "dim2", where)}, f"{where}.dim2")
    s1 = parse_states(_field(doc, "states1", where), d1, f"{where}.states1")
    s2 = parse_states(_field(doc, "states2", where), d2, f"{where}.states2")
    probs = _field(doc, "probs", where)
    if not isinstance(probs, list) or len(probs) != len(s1):
        raise FileFormatError(f"{where}.probs: expected {len(s1)} rows")
    rows = [_weights(r, len(s2), f"{where}.probs[{k}]") for k, r in enumerate(probs)]
    try:
        return JointDistribution(np.array(rows)), s1, s2
    except InvalidInput as exc:
        raise FileFormatError(f"{where}.probs: {exc}") from exc


def load_joint(path):
    return joint_from_json(_read_json(path), str(path))


def channel_from_json(doc, where: str = "channel") -> CpMap:
    """Kraus form ``{"representation": "kraus", "kraus": [M, ...]}`` or
    Holevo form ``{"representation": "holevo", "terms": [{"R": M, "X": M}, ...]}``."""
    rep = _field(doc, "representation", where)
    try:
        if rep == "kraus":
            ops = _field(doc, "kraus", where)
            if not isinstance(ops, list) or not ops:
                raise FileFormatError(f"{where}.kraus: expected a nonempty list of matrices")
            mats = [_matrix(m, f"{where}.kraus[{k}]") for k, m in enumerate(ops)]
            if len({m.shape for m in mats}) != 1:
                raise FileFormatError(f"{where}.kraus: operators differ in shape")
            return KrausMap(np.array(mats))
        if rep == "holevo":
            terms = _field(doc, "terms", where)
            if not isinstance(terms, list) or not terms:
                raise FileFormatError(f"{where}.terms: expected a nonempty list")
            R = [_matrix(_field(t, "R", f"{where}.terms[{k}]"), f"{where}.terms[{k}].R") for k, t in enumerate(terms)]
            X = [_matrix(_field(t, "X", f"{where}.terms[{k}]"), f"{where}.terms[{k}].X") for k, t in enumerate(terms)]
            if len({m.shape for m in R}) != 1 or len({m.shape for m in X}) != 1:
                raise FileFormatError(f"{where}.terms: R_k (or X_k) differ in shape")
            return HolevoMap(np.array(R), np.array(X))
    except FileFormatError:
        raise
    except InvalidInput as exc:
        raise FileFormatError(f"{where}: {exc}") from exc
    raise FileFormatError(f"{where}.representation: expected 'kraus' or 'holevo', got {rep!r}")


def channel_to_json(m: CpMap) -> dict:
    if isinstance(m, HolevoMap):
        return {
            "representation": "holevo",
            "terms": [{"R": encode_matrix(R), "X": encode_matrix(X)} for R, X in zip(m.R, m.X)],
        }
    return {"representation": "kraus", "kraus": [encode_matrix(k) for k in m.to_kraus().kraus]}


def load_channel(path) -> CpMap:
    return channel_from_json(_read_json(path), str(path))


def encode_vector(v) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=complex)]


def encode_matrix(a) -> list:
    return [encode_vector(row) for row in np.asarray(a, dtype=complex)]


def dumps(doc) -> str:
    """Stable rendering: sorted keys, fixed separators, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=True) + "\n"


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture file such as ``"trine.json"``."""
    path = resources.files("qlab") / "fixtures" / name
    if not path.is_file():
        raise InvalidInput(f"no bundled fixture named {name!r}")
    return Path(str(path))
