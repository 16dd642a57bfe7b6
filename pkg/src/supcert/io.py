"""Serialization: deterministic JSON, plan records and the binary operator dump.

Binary operator dump layout (all little-endian)::

    offset  size  field
    0       4     magic b"SUPK"
    4       2     format version (uint16, currently 1)
    6       2     d, the matrix dimension (uint16)
    8       4     number of Kraus operators K_n (uint32)
    12      4     number of completion operators F_m (uint32)
    16      ...   embedding, then each K_n, then each F_m; every matrix is
                  d*d complex128 values (real, imaginary) in row-major order
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .basis import DEFAULT_TOL, GramBasis, build_basis
from .errors import BadShape, SupcertError
from .kraus import IndexFunctionSet, TransformPlan
from .state import PureState, make_state

MAGIC = b"SUPK"
VERSION = 1
_HEADER = struct.Struct("<4sHHII")


class CorruptFile(SupcertError):
    pass


# --------------------------------------------------------------------------
# JSON


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    text = format(x, ".17g")
    return "0" if text == "-0" else text


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return "null" if obj is None else ("true" if obj else "false")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = sorted((str(k), v) for k, v in obj.items())
        body = ",\n".join(f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in items)
        return "{\n" + body + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        body = ",\n".join(pad + _encode(v, indent, level + 1) for v in obj)
        return "[\n" + body + "\n" + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with sorted keys and floats written to 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


def complex_matrix_to_list(m: np.ndarray) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def complex_matrix_from_list(rows) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise BadShape("operator matrices must be square lists of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


# --------------------------------------------------------------------------
# Input records


def basis_from_dict(data: dict, tol: float = DEFAULT_TOL) -> GramBasis:
    try:
        return build_basis(data["d"], data["mu"], tol)
    except KeyError as exc:
        raise BadShape(f"basis needs key {exc}") from exc


def state_from_dict(basis: GramBasis, data: dict, tol: float = DEFAULT_TOL) -> PureState:
    try:
        coeffs = data["coeffs"]
    except KeyError as exc:
        raise BadShape("state needs key 'coeffs'") from exc
    return make_state(basis, coeffs, normalize=bool(data.get("normalize", False)), tol=tol)


def load_problem(path, tol: float = DEFAULT_TOL):
    """Read {"basis": ..., "psi": ..., "phi": ...} and build the objects."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict) or not {"basis", "psi", "phi"} <= data.keys():
        raise BadShape("input must hold 'basis', 'psi' and 'phi'")
    basis = basis_from_dict(data["basis"], tol)
    return basis, state_from_dict(basis, data["psi"], tol), state_from_dict(basis, data["phi"], tol)


# --------------------------------------------------------------------------
# Plans


def plan_to_dict(plan: TransformPlan) -> dict:
    fns = plan.index_functions.to_dict()
    return {
        "dimension": plan.d,
        "probs": plan.probs.tolist(),
        "index_functions": fns["fns"],
        "swap_pairs": fns["swap_pairs"],
        "table_row": fns["table_row"],
        "pattern": fns["pattern"],
        "case_signature": list(plan.case_signature),
        "residual_min_eig": plan.residual_min_eig,
        "residual_psd": plan.residual_psd,
        "gram": plan.gram.tolist(),
        "embedding": complex_matrix_to_list(plan.embedding),
        "source": {"coeffs": plan.source.tolist(), "map": [i + 1 for i in plan.source_map]},
        "target": {"coeffs": plan.target.tolist(), "map": [i + 1 for i in plan.target_map]},
        "kraus": [complex_matrix_to_list(k) for k in plan.kraus_ops],
        "completion": None if plan.completion is None else [complex_matrix_to_list(f) for f in plan.completion],
        "completion_targets": [i + 1 for i in plan.completion_targets],
        "region": plan.report.region if plan.report is not None else None,
    }


def plan_from_dict(data: dict) -> TransformPlan:
    """Rebuild a plan record from JSON; nothing is recomputed except the residual."""
    try:
        d = int(data["dimension"])
        fns = tuple(tuple(v - 1 for v in f) for f in data["index_functions"])
        swaps = tuple(tuple(v - 1 for v in pair) for pair in data["swap_pairs"])
        kraus_ops = tuple(complex_matrix_from_list(k) for k in data["kraus"])
        completion = data.get("completion")
        if completion is not None:
            completion = tuple(complex_matrix_from_list(f) for f in completion)
        embedding = complex_matrix_from_list(data["embedding"])
        residual = np.eye(d) - sum(k.conj().T @ k for k in kraus_ops)
        return TransformPlan(
            index_functions=IndexFunctionSet(fns, swaps, data.get("table_row"), data.get("pattern", "table")),
            probs=np.asarray(data["probs"], dtype=float),
            kraus_ops=kraus_ops,
            residual=residual,
            residual_min_eig=float(data.get("residual_min_eig", float("nan"))),
            residual_psd=bool(data.get("residual_psd", False)),
            completion=completion,
            completion_targets=tuple(v - 1 for v in data.get("completion_targets", [])),
            case_signature=tuple(data.get("case_signature", [])),
            gram=np.asarray(data["gram"], dtype=float),
            embedding=embedding,
            source=np.asarray(data["source"]["coeffs"], dtype=float),
            target=np.asarray(data["target"]["coeffs"], dtype=float),
            source_map=tuple(v - 1 for v in data["source"]["map"]),
            target_map=tuple(v - 1 for v in data["target"]["map"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BadShape(f"malformed plan record: {exc}") from exc


def load_plan(path) -> TransformPlan:
    return plan_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# --------------------------------------------------------------------------
# Binary operator dump


def write_operators(path, plan: TransformPlan) -> None:
    d = plan.d
    completion = plan.completion or ()
    header = _HEADER.pack(MAGIC, VERSION, d, len(plan.kraus_ops), len(completion))
    mats = [plan.embedding, *plan.kraus_ops, *completion]
    body = b"".join(np.ascontiguousarray(m, dtype="<c16").tobytes() for m in mats)
    Path(path).write_bytes(header + body)


def read_operators(path):
    """Return (embedding, kraus_ops, completion_ops) from a binary dump."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CorruptFile("operator file shorter than its header")
    magic, version, d, n_kraus, n_free = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CorruptFile("bad magic; not an operator dump")
    if version != VERSION:
        raise CorruptFile(f"unsupported operator dump version {version}")
    count = 1 + n_kraus + n_free
    expected = _HEADER.size + count * d * d * 16
    if len(raw) != expected:
        raise CorruptFile(f"operator file has {len(raw)} bytes, expected {expected}")
    flat = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).reshape(count, d, d)
    mats = [np.array(m, dtype=complex) for m in flat]
    return mats[0], mats[1 : 1 + n_kraus], mats[1 + n_kraus :]
