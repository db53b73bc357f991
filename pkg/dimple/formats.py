"""File formats: SMT1 signed triplets, label CSVs, factor CSVs and dense blocks.

SMT1 is a text format for signed adjacency tensors::

    SMT1 <n> <L>
    <l> <i> <j> <v>
    ...

with 1-based indices, one line per nonzero entry with ``i < j`` and
``v`` in {-1, 1}. The lower triangle is implied by symmetry.

Dense blocks store a float64 tensor as the 8-byte magic ``DIMPLEP1``,
three little-endian uint64 dimensions and the C-order data.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import FormatError
from .tensor_core import validate_adjacency

SMT1_MAGIC = "SMT1"
DENSE_MAGIC = b"DIMPLEP1"


def write_smt1(A: np.ndarray, path: Path) -> int:
    """Write a signed adjacency tensor; returns the number of triplet lines."""
    A = validate_adjacency(np.asarray(A))
    n, _, L = A.shape
    count = 0
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(f"{SMT1_MAGIC} {n} {L}\n")
        for l in range(L):
            rows, cols = np.nonzero(np.triu(A[:, :, l], k=1))
            for i, j in zip(rows, cols):
                f.write(f"{l + 1} {i + 1} {j + 1} {int(A[i, j, l])}\n")
            count += rows.size
    return count


def _parse_ints(parts: list[str], line_no: int, path: Path) -> list[int]:
    try:
        return [int(p) for p in parts]
    except ValueError as e:
        raise FormatError(f"{path}:{line_no}: expected integers, got {' '.join(parts)!r}") from e


def read_smt1(path: Path) -> np.ndarray:
    """Load an SMT1 file into a dense ``int8`` tensor of shape ``(n, n, L)``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Tensor file not found: {path}")
    with path.open("r", encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 3 or header[0] != SMT1_MAGIC:
            raise FormatError(f"{path}: header must be 'SMT1 n L', got {' '.join(header)!r}")
        n, L = _parse_ints(header[1:], 1, path)
        if n < 1 or L < 1:
            raise FormatError(f"{path}: need n >= 1 and L >= 1, got n={n}, L={L}")
        A = np.zeros((n, n, L), dtype=np.int8)
        for line_no, line in enumerate(f, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise FormatError(f"{path}:{line_no}: expected 'l i j v', got {line.strip()!r}")
            l, i, j, v = _parse_ints(parts, line_no, path)
            if not (1 <= l <= L and 1 <= i <= n and 1 <= j <= n):
                raise FormatError(f"{path}:{line_no}: index out of range for n={n}, L={L}")
            if i == j:
                raise FormatError(f"{path}:{line_no}: diagonal entry ({i}, {i}) in layer {l}")
            if v not in (-1, 1):
                raise FormatError(f"{path}:{line_no}: value must be -1 or 1, got {v}")
            if A[i - 1, j - 1, l - 1] != 0:
                raise FormatError(f"{path}:{line_no}: duplicate entry ({i}, {j}) in layer {l}")
            A[i - 1, j - 1, l - 1] = v
            A[j - 1, i - 1, l - 1] = v
    return A


def write_labels_csv(labels: Iterable[int], path: Path, *, column: str = "group") -> None:
    """Write 1-based labels as ``layer,<column>`` rows."""
    with Path(path).open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["layer", column])
        for l, label in enumerate(labels, start=1):
            writer.writerow([l, int(label)])


def write_clustering_csv(labels: Iterable[int], path: Path) -> None:
    write_labels_csv(labels, path, column="label")


def read_labels_csv(path: Path) -> np.ndarray:
    """Read a ``layer,group`` or ``layer,label`` CSV; rows must list layers 1..L in order."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or len(header) != 2 or header[0] != "layer":
            raise FormatError(f"{path}: expected header 'layer,group' or 'layer,label', got {header!r}")
        labels = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            layer, label = _parse_ints(row, line_no, path)
            if layer != len(labels) + 1:
                raise FormatError(f"{path}:{line_no}: expected layer {len(labels) + 1}, got {layer}")
            labels.append(label)
    return np.asarray(labels, dtype=np.int64)


def write_factor_csv(U: np.ndarray, path: Path, *, name: str = "U") -> None:
    """Dense CSV with the header line ``# factor <name> n=<rows> r=<cols>``."""
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2:
        raise FormatError(f"factor must be a matrix, got shape {U.shape}")
    header = f"factor {name} n={U.shape[0]} r={U.shape[1]}"
    np.savetxt(path, U, delimiter=",", fmt="%.17g", header=header, comments="# ")


def read_factor_csv(path: Path) -> np.ndarray:
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        header = f.readline().split()
    if len(header) != 5 or header[:2] != ["#", "factor"]:
        raise FormatError(f"{path}: missing '# factor <name> n=<n> r=<r>' header")
    try:
        n, r = (int(field.split("=", 1)[1]) for field in header[3:])
    except (IndexError, ValueError) as e:
        raise FormatError(f"{path}: bad factor header {' '.join(header)!r}") from e
    U = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if U.shape != (n, r):
        raise FormatError(f"{path}: header says {n}x{r}, data is {U.shape[0]}x{U.shape[1]}")
    return U


def write_matrix_csv(Y: np.ndarray, path: Path) -> None:
    """Plain CSV dump of a score matrix, one row per layer."""
    np.savetxt(path, np.asarray(Y, dtype=np.float64), delimiter=",", fmt="%.17g")


def write_dense_block(P: np.ndarray, path: Path) -> None:
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 3:
        raise FormatError(f"dense blocks hold 3-way tensors, got shape {P.shape}")
    with Path(path).open("wb") as f:
        f.write(DENSE_MAGIC)
        f.write(np.asarray(P.shape, dtype="<u8").tobytes())
        f.write(np.ascontiguousarray(P, dtype="<f8").tobytes())


def read_dense_block(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] != DENSE_MAGIC:
        raise FormatError(f"{path}: not a dense block (bad magic {data[:8]!r})")
    if len(data) < 32:
        raise FormatError(f"{path}: truncated header")
    shape = tuple(int(s) for s in np.frombuffer(data, dtype="<u8", count=3, offset=8))
    expected = 32 + 8 * int(np.prod(shape))
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for shape {shape}, got {len(data)}")
    return np.frombuffer(data, dtype="<f8", offset=32).reshape(shape).astype(np.float64)
