"""Matrix files and CSV report tables.

Matrix file layout (all little-endian)::

    offset  size  content
    0       4     magic b"UTLM"
    4       4     format version, uint32 (= 1)
    8       8     rows, uint64
    16      8     cols, uint64
    24      8*r*c float64 entries, row-major
"""
from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

import numpy as np

from .errors import MatrixFormatError

__all__ = [
    "MAGIC",
    "VERSION",
    "write_matrix",
    "read_matrix",
    "CsvTable",
    "format_value",
    "save_model",
    "load_model",
]

MAGIC = b"UTLM"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def write_matrix(path, m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    rows, cols = m.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, rows, cols))
        fh.write(np.ascontiguousarray(m, dtype="<f8").tobytes())


def read_matrix(path):
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise MatrixFormatError("truncated magic", len(data))
    if data[:4] != MAGIC:
        raise MatrixFormatError(f"bad magic {data[:4]!r}", 0)
    if len(data) < _HEADER.size:
        raise MatrixFormatError("truncated header", len(data))
    _, version, rows, cols = _HEADER.unpack_from(data)
    if version != VERSION:
        raise MatrixFormatError(f"unsupported format version {version}", 4)
    need = _HEADER.size + 8 * rows * cols
    if len(data) < need:
        raise MatrixFormatError(f"truncated payload: expected {need} bytes, found {len(data)}", len(data))
    if len(data) > need:
        raise MatrixFormatError(f"{len(data) - need} trailing bytes", need)
    m = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=_HEADER.size)
    return m.reshape(rows, cols).astype(np.float64)


def format_value(v):
    """17 significant digits for floats, which round-trips every double."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    if v is None:
        return ""
    return str(v)


@dataclass
class CsvTable:
    header: List[str]
    rows: List[list] = field(default_factory=list)
    comments: List[str] = field(default_factory=list)
    #: named in-run assertions and whether they held
    checks: Dict[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.header)) != len(self.header):
            raise ValueError(f"duplicate column names in {self.header}")

    def add(self, *values):
        if len(values) != len(self.header):
            raise ValueError(f"row has {len(values)} values, header has {len(self.header)}")
        self.rows.append(list(values))

    def column(self, name):
        i = self.header.index(name)
        return [r[i] for r in self.rows]

    def records(self):
        return [dict(zip(self.header, r)) for r in self.rows]

    def check(self, name, ok):
        self.checks[name] = bool(self.checks.get(name, True) and ok)

    @property
    def failed_checks(self):
        return sorted(k for k, ok in self.checks.items() if not ok)

    def to_csv(self):
        buf = io.StringIO()
        for line in self.comments:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for r in self.rows:
            w.writerow([format_value(v) for v in r])
        return buf.getvalue()

    def write(self, path):
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text):
        comments = []
        body = []
        for line in text.splitlines():
            if line.startswith("#"):
                comments.append(line[1:].strip())
            elif line:
                body.append(line)
        reader = csv.reader(body)
        header = next(reader)
        return cls(header=header, rows=[list(r) for r in reader], comments=comments)


# ---------------------------------------------------------------------------
# model directories
# ---------------------------------------------------------------------------

_MODEL_FILES = {"wstar": "wstar.utlm", "zstar": "zstar.utlm", "p": "p.utlm", "noise_h": "noise.utlm"}


def save_model(model, directory):
    """Write the matrices of a generative model into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for attr, name in _MODEL_FILES.items():
        m = getattr(model, attr)
        if m is not None:
            write_matrix(d / name, m)


def load_model(directory, s=None):
    """Rebuild a model from ``save_model`` output; ``Z*`` and ``W*`` are required."""
    from dataclasses import replace

    from .genmodel import synthesize

    d = Path(directory)
    wstar = read_matrix(d / _MODEL_FILES["wstar"])
    zstar = read_matrix(d / _MODEL_FILES["zstar"])
    model = replace(synthesize(wstar, zstar, 0.0, s=s), seed=None)
    noise = d / _MODEL_FILES["noise_h"]
    p_file = d / _MODEL_FILES["p"]
    updates = {}
    if noise.exists():
        updates["noise_h"] = read_matrix(noise)
    if p_file.exists():
        updates["p"] = read_matrix(p_file)
    for k, v in updates.items():
        v.setflags(write=False)
    return replace(model, **updates) if updates else model
