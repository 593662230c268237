"""File formats: density-matrix / RDM / report / verdict JSON, time-series
CSV, run manifests and key-value config files."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import fields
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .densmat import DensityMatrixExpansion, ValidationError
from .fock import SlaterDeterminant, SpinOrbitalBasis
from .rdm import ReducedDensityMatrix
from .reconstruct import ObservationSeries

TIMESERIES_VERSION = "reduced-purities-timeseries/1"


class SchemaError(ValueError):
    """Input file does not follow the expected layout; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _complex_to_json(z) -> dict:
    return {"re": float(np.real(z)), "im": float(np.imag(z))}


def _complex_from_json(obj, where: str) -> complex:
    if isinstance(obj, (int, float)):
        return complex(obj)
    if not isinstance(obj, dict) or "re" not in obj:
        raise SchemaError(where, "expected an object {re, im}")
    try:
        return complex(float(obj["re"]), float(obj.get("im", 0.0)))
    except (TypeError, ValueError) as exc:
        raise SchemaError(where, f"non-numeric value ({exc})") from None


def _matrix_to_json(a: np.ndarray) -> list:
    return [[_complex_to_json(z) for z in row] for row in a]


def _matrix_from_json(rows, where: str) -> np.ndarray:
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise SchemaError(where, "expected a list of rows")
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise SchemaError(where, "matrix must be square")
    return np.array([[_complex_from_json(z, f"{where}[{i}][{j}]") for j, z in enumerate(r)]
                     for i, r in enumerate(rows)], dtype=complex)


# -- density matrices -------------------------------------------------------

def basis_to_json(basis: SpinOrbitalBasis) -> dict:
    return {"orbitals": [{"index": int(i), "spin": s} for i, s in basis.orbitals]}


def basis_from_json(obj) -> SpinOrbitalBasis:
    try:
        orbs = obj["orbitals"]
        return SpinOrbitalBasis(tuple((int(o["index"]), str(o["spin"])) for o in orbs))
    except (KeyError, TypeError) as exc:
        raise SchemaError("basis.orbitals", f"expected [{{index, spin}}] entries ({exc})") from None
    except ValueError as exc:
        raise SchemaError("basis.orbitals", str(exc)) from None


def density_to_json(rho: DensityMatrixExpansion, basis: Optional[SpinOrbitalBasis] = None) -> dict:
    basis = basis or SpinOrbitalBasis.restricted(rho.K // 2)
    return {
        "basis": basis_to_json(basis),
        "determinants": [d.to_string() for d in rho.dets],
        "coefficients": _matrix_to_json(rho.coeffs),
    }


def density_from_json(obj, check: bool = True) -> tuple[DensityMatrixExpansion, SpinOrbitalBasis]:
    if not isinstance(obj, dict):
        raise SchemaError("<root>", "expected a JSON object")
    for key in ("basis", "determinants", "coefficients"):
        if key not in obj:
            raise SchemaError(key, "missing")
    basis = basis_from_json(obj["basis"])
    dets_raw = obj["determinants"]
    if not isinstance(dets_raw, list) or not dets_raw:
        raise SchemaError("determinants", "expected a non-empty list of occupation strings")
    dets = []
    for k, s in enumerate(dets_raw):
        if not isinstance(s, str):
            raise SchemaError(f"determinants[{k}]", "expected an occupation string")
        try:
            d = SlaterDeterminant.from_string(s)
        except ValueError as exc:
            raise SchemaError(f"determinants[{k}]", str(exc)) from None
        if d.K != basis.K:
            raise SchemaError(f"determinants[{k}]", f"length {d.K} does not match basis size {basis.K}")
        dets.append(d)
    a = _matrix_from_json(obj["coefficients"], "coefficients")
    if a.shape[0] != len(dets):
        raise SchemaError("coefficients", f"{a.shape[0]} rows for {len(dets)} determinants")
    try:
        rho = DensityMatrixExpansion(dets, a, check=check)
    except ValidationError as exc:
        raise SchemaError("coefficients", str(exc)) from None
    return rho, basis


def read_density(path) -> tuple[DensityMatrixExpansion, SpinOrbitalBasis]:
    return density_from_json(_load_json(path))


def write_density(path, rho: DensityMatrixExpansion, basis: Optional[SpinOrbitalBasis] = None):
    _dump_json(path, density_to_json(rho, basis))


# -- reduced density matrices -----------------------------------------------

def rdm_to_json(gamma: ReducedDensityMatrix) -> dict:
    """Elements of ``Gamma`` (with the 1/r! prefactor) over ascending tuples."""
    return {
        "order": gamma.r,
        "K": gamma.K,
        "N": gamma.N,
        "tuples": [list(t) for t in gamma.tuples],
        "elements": _matrix_to_json(gamma.elements),
    }


def rdm_from_json(obj) -> ReducedDensityMatrix:
    try:
        r, K, N = int(obj["order"]), int(obj["K"]), int(obj["N"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError("order/K/N", f"missing or non-integer ({exc})") from None
    return ReducedDensityMatrix(r, K, N, _matrix_from_json(obj["elements"], "elements"))


def rdm_to_csv(gamma: ReducedDensityMatrix) -> str:
    """Dense ``r! Gamma`` as CSV: rows are creator tuples, columns annihilator tuples."""
    D = gamma.matrix()
    labels = ["-".join(map(str, t)) for t in gamma.tuples]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["creators\\annihilators"] + labels)
    for lab, row in zip(labels, D):
        w.writerow([lab] + [_fmt_complex(z) for z in row])
    return buf.getvalue()


def _fmt_complex(z) -> str:
    z = complex(z)
    return repr(z.real) if z.imag == 0 else f"{z.real!r}{z.imag:+.17g}j"


# -- time series ------------------------------------------------------------

def timeseries_header(labels) -> list[str]:
    return ["t_fs"] + [f"pop_{l}" for l in labels] + ["P1", "P2", "P1_stderr", "P2_stderr"]


def write_timeseries(path, times, orbital_populations, P1, P2, P1_stderr=None, P2_stderr=None,
                     labels=None):
    pops = np.asarray(orbital_populations, dtype=float)
    labels = labels or [str(k) for k in range(pops.shape[1])]
    n = len(times)
    P1_stderr = np.full(n, np.nan) if P1_stderr is None else P1_stderr
    P2_stderr = np.full(n, np.nan) if P2_stderr is None else P2_stderr
    with open(path, "w", newline="") as fh:
        fh.write(f"# {TIMESERIES_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(timeseries_header(labels))
        for k in range(n):
            w.writerow([repr(float(times[k]))] + [repr(float(x)) for x in pops[k]]
                       + [repr(float(v)) for v in (P1[k], P2[k], P1_stderr[k], P2_stderr[k])])


def read_timeseries(path, n_electrons: Optional[int] = None) -> ObservationSeries:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# {TIMESERIES_VERSION}":
            raise SchemaError("header", f"expected '# {TIMESERIES_VERSION}', got {first!r}")
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError("header", "missing column header")
    head = rows[0]
    pop_cols = [k for k, h in enumerate(head) if h.startswith("pop_")]
    need = {"t_fs", "P1", "P2"}
    if not need <= set(head) or not pop_cols:
        raise SchemaError("header", f"columns {sorted(need)} and pop_* are required")
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise SchemaError("data", str(exc)) from None
    if data.ndim != 2 or data.shape[0] == 0:
        raise SchemaError("data", "no rows")
    col = {h: k for k, h in enumerate(head)}
    pops = data[:, pop_cols]
    N = n_electrons if n_electrons is not None else int(round(pops[0].sum()))
    return ObservationSeries(data[:, col["t_fs"]], pops, data[:, col["P1"]], data[:, col["P2"]], N)


# -- manifests, configs ----------------------------------------------------

def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def manifest(command: str, config: dict, outputs: dict, extra: Optional[dict] = None) -> dict:
    doc = {
        "tool": "reduced-purities",
        "version": __version__,
        "command": command,
        "config": config,
        "config_sha256": config_hash(config),
        "outputs": outputs,
    }
    if extra:
        doc.update(extra)
    return doc


def read_config(path, schema) -> dict:
    """``key = value`` lines (``#`` comments) converted by the dataclass field
    types of ``schema``.  Unknown keys raise :class:`SchemaError`."""
    types = {f.name: f.type for f in fields(schema)}
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"line {lineno}", "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise SchemaError(key, f"unknown key (line {lineno})")
        out[key] = _convert(value, str(types[key]), key)
    return out


def _convert(value: str, type_name: str, key: str):
    if value.lower() in ("none", "") and "Optional" in type_name:
        return None
    try:
        if "bool" in type_name:
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if "int" in type_name:
            return int(value)
        if "float" in type_name:
            return float(value)
    except ValueError:
        raise SchemaError(key, f"cannot parse {value!r} as {type_name}") from None
    return value


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError("<json>", str(exc)) from None


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")


load_json = _load_json
dump_json = _dump_json
