"""System manifests, reduction configs, and report serialization.

A system is stored as one JSON manifest that lists, per member (C, K, B and
each coupling N_j), the pairs of coefficient DSL string and Matrix Market
file holding the constant term, plus the dimensions and structure tag.
Reduction configs and verification reports are plain JSON as well; all
writers sort keys and use shortest round-trip float formatting, so equal
inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import os

import numpy as np
import scipy.io as sio
import scipy.sparse as sps

from .matfun import AffineMatrixFn, StructuredSystem
from .scalarfun import parse_scalar

__all__ = [
    "write_system_manifest",
    "read_system_manifest",
    "write_json",
    "read_json",
]

MANIFEST_FORMAT = "pbmor-system"
MANIFEST_VERSION = 1


def write_json(path, payload):
    """Write a JSON document deterministically (sorted keys, stable floats)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_matrix(path, mat):
    if sps.issparse(mat):
        sio.mmwrite(path, mat.tocoo())
    else:
        sio.mmwrite(path, np.asarray(mat))


def _read_matrix(path):
    mat = sio.mmread(path)
    if sps.issparse(mat):
        return mat.tocsr()
    return np.asarray(mat)


def _member_entries(name, fn, directory, written):
    entries = []
    for idx, (coeff, mat) in enumerate(fn.terms):
        filename = f"{name}_{idx}.mtx"
        _write_matrix(os.path.join(directory, filename), mat)
        written.append(filename)
        entries.append({"coeff": coeff.to_dsl(), "matrix": filename})
    return entries


def _member_from_entries(entries, directory):
    terms = []
    for entry in entries:
        coeff = parse_scalar(entry["coeff"])
        mat = _read_matrix(os.path.join(directory, entry["matrix"]))
        terms.append((coeff, mat))
    return AffineMatrixFn(terms)


def write_system_manifest(system, directory, name="system"):
    """Write a system as ``<name>.json`` plus Matrix Market files.

    Returns the manifest path.  Constant matrices land in files named
    ``<member>_<term index>.mtx`` next to the manifest.
    """
    os.makedirs(directory, exist_ok=True)
    written = []
    doc = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "dimensions": {"n": system.n, "m": system.m, "p": system.p, "d": system.d},
        "structure": system.structure,
        "members": {
            "C": _member_entries(f"{name}_C", system.C, directory, written),
            "K": _member_entries(f"{name}_K", system.K, directory, written),
            "B": _member_entries(f"{name}_B", system.B, directory, written),
            "N": [
                _member_entries(f"{name}_N{j}", Nj, directory, written)
                for j, Nj in enumerate(system.N)
            ],
        },
    }
    if system.delay is not None:
        doc["delay"] = system.delay
    if system.second_order is not None:
        so = system.second_order
        doc["second_order"] = {
            key: _member_entries(f"{name}_so_{key}", so[key], directory, written)
            for key in ("M", "D", "K", "Bu", "Cp", "Cv")
        }
        doc["second_order"]["Np"] = [
            _member_entries(f"{name}_so_Np{j}", part, directory, written)
            for j, part in enumerate(so["Np"])
        ]
        doc["second_order"]["Nv"] = [
            _member_entries(f"{name}_so_Nv{j}", part, directory, written)
            for j, part in enumerate(so["Nv"])
        ]
    path = os.path.join(directory, f"{name}.json")
    write_json(path, doc)
    return path


def read_system_manifest(path):
    """Reconstruct a StructuredSystem from a manifest written here."""
    doc = read_json(path)
    if doc.get("format") != MANIFEST_FORMAT:
        raise ValueError(f"{path} is not a {MANIFEST_FORMAT} manifest")
    directory = os.path.dirname(os.path.abspath(path))
    members = doc["members"]
    C = _member_from_entries(members["C"], directory)
    K = _member_from_entries(members["K"], directory)
    B = _member_from_entries(members["B"], directory)
    N = [_member_from_entries(entries, directory) for entries in members["N"]]
    second_order = None
    if "second_order" in doc:
        so_doc = doc["second_order"]
        second_order = {
            key: _member_from_entries(so_doc[key], directory)
            for key in ("M", "D", "K", "Bu", "Cp", "Cv")
        }
        second_order["Np"] = tuple(
            _member_from_entries(entries, directory) for entries in so_doc["Np"]
        )
        second_order["Nv"] = tuple(
            _member_from_entries(entries, directory) for entries in so_doc["Nv"]
        )
    dims = doc["dimensions"]
    system = StructuredSystem(
        C=C, K=K, B=B, N=N, d=dims["d"],
        structure=doc.get("structure", "custom"),
        second_order=second_order,
        delay=doc.get("delay"),
    )
    expected = (dims["n"], dims["m"], dims["p"])
    if (system.n, system.m, system.p) != tuple(expected):
        raise ValueError(
            f"manifest dimensions {expected} disagree with matrices "
            f"({system.n}, {system.m}, {system.p})"
        )
    return system
