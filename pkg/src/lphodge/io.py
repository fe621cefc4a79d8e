"""Field files: one JSON header line followed by raw little-endian complex128 samples.

Forms are stored as a directory of field files plus ``manifest.json``; a
filter bank is stored the same way with one real multiplier per band.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .grid import DataError, GridFunction, GridSpec
from .hodge import Form
from .littlewood_paley import FilterBank

__all__ = [
    "write_gfn",
    "read_gfn",
    "form_filename",
    "write_form",
    "read_form",
    "export_filter_bank",
    "read_filter_bank_multipliers",
]

_DTYPE = np.dtype("<c16")


def _header(spec: GridSpec) -> dict:
    return {"d": spec.d, "n": spec.n, "period": spec.period, "dtype": "c128", "layout": "row-major"}


def _write_raw(path, spec: GridSpec, data: np.ndarray) -> None:
    head = json.dumps(_header(spec), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(head + b"\n")
        fh.write(np.ascontiguousarray(data, dtype=_DTYPE).tobytes())


def write_gfn(path, f: GridFunction) -> None:
    _write_raw(path, f.spec, f.samples)


def _read_raw(path) -> tuple[GridSpec, np.ndarray]:
    with open(path, "rb") as fh:
        line = fh.readline()
        body = fh.read()
    try:
        head = json.loads(line)
        spec = GridSpec(int(head["d"]), int(head["n"]), float(head["period"]))
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: bad header ({exc})") from exc
    if head.get("dtype") != "c128" or head.get("layout") != "row-major":
        raise DataError(f"{path}: unsupported dtype/layout {head.get('dtype')}/{head.get('layout')}")
    want = spec.n**spec.d * _DTYPE.itemsize
    if len(body) != want:
        raise DataError(f"{path}: expected {want} bytes of samples, found {len(body)}")
    return spec, np.frombuffer(body, dtype=_DTYPE).reshape(spec.shape).astype(complex)


def read_gfn(path) -> GridFunction:
    spec, data = _read_raw(path)
    return GridFunction(spec, data)


def form_filename(I) -> str:
    return "I_" + "_".join(str(a) for a in I) + ".gfn"


def write_form(directory, form: Form) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for I in form.indices:
        name = form_filename(I)
        write_gfn(directory / name, form[I])
        files[name] = list(I)
    manifest = {"d": form.d, "l": form.l, "spec": form.spec.to_dict(), "files": files}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return directory


def read_form(directory) -> Form:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise DataError(f"{directory}: unreadable manifest ({exc})") from exc
    coeffs = {tuple(I): read_gfn(directory / name) for name, I in manifest["files"].items()}
    spec = next(iter(coeffs.values())).spec
    return Form(spec, int(manifest["l"]), coeffs)


def export_filter_bank(directory, bank: FilterBank) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for j in bank.bands:
        name = f"band_{j}.gfn"
        _write_raw(directory / name, bank.spec, bank.multiplier(j))
        files[name] = j
    manifest = dict(bank.manifest())
    manifest["files"] = files
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return directory


def read_filter_bank_multipliers(directory) -> dict:
    """Multipliers keyed by band index, as written by :func:`export_filter_bank`."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    return {int(j): _read_raw(directory / name)[1].real for name, j in manifest["files"].items()}


def ensure_writable(directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if not os.access(directory, os.W_OK):
        raise OSError(f"output directory {directory} is not writable")
    return directory
