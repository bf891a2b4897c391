"""On-disk formats: CSV series, self-describing binary fields, JSON reports."""

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .grid import ComplexField, ComplexField2P, GridSpec

FIELD_MAGIC = b"KGSFLD01"


class FormatError(ValueError):
    pass


def _fmt(x):
    return repr(float(x))


def write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = [[float(v) for v in row] for row in r]
    return header, np.array(data).reshape(len(data), len(header))


def write_series(path, series):
    return write_rows(path, ["t", "integrand", "running_integral", "dt_weight"], series.rows())


def write_steps(path, traj):
    log = traj.step_arrays()
    return write_rows(path, ["t", "norm", "boundary_mass", "v_norm"],
                      zip(log["t"], log["norm"], log["boundary_mass"], log["v_norm"]))


def write_field(path, field, t=None):
    """Magic, little-endian uint32 header length, JSON header, then '<c16' samples in row-major order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"d": field.grid.d, "n": field.grid.n, "L": field.grid.L, "arity": field.arity,
              "shape": list(field.values.shape), "dtype": "<c16", "t": t}
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        fh.write(np.ascontiguousarray(field.values, dtype="<c16").tobytes())
    return path


def read_field(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(FIELD_MAGIC))
        if magic != FIELD_MAGIC:
            raise FormatError(f"{path}: not a field file (bad magic {magic!r})")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        data = np.frombuffer(fh.read(), dtype="<c16")
    shape = tuple(header["shape"])
    if data.size != int(np.prod(shape)):
        raise FormatError(f"{path}: expected {int(np.prod(shape))} samples, found {data.size}")
    grid = GridSpec(header["d"], header["n"], header["L"])
    cls = ComplexField if header["arity"] == 1 else ComplexField2P
    return cls(grid, data.reshape(shape).astype(complex)), header


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "as_dict"):
        return obj.as_dict()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_default)
        fh.write("\n")
    return path


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def array_digest(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()
