"""Pairwise evolutionary distances and their on-disk formats.

Two alignment-based distances are provided: the proportion of differing
sites (p) and the two-parameter transition/transversion correction (K80).
Both use pairwise deletion: a site counts for a pair only when both
sequences hold a plain A/C/G/T there.  Tree-derived path-length matrices
share the same container so downstream clustering code does not care where
a matrix came from.

Matrices are stored condensed (upper triangle, row major).  NaN encodes an
undefined entry: an empty site overlap, or a saturated K80 pair whose log
argument is not positive.
"""

from __future__ import annotations

import enum
import logging
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .errors import DuplicateId, EmptyInput, LengthMismatch

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, typing only
    from .io_formats import Alignment

log = logging.getLogger(__name__)

# Residue codes: A=0, C=1, G=2, T=3; anything else (gaps, ambiguity codes,
# N) is 255 and excluded by pairwise deletion.  With this code assignment
# the transitions A<->G and C<->T are exactly the pairs whose XOR is 2.
_CODE = np.full(256, 255, dtype=np.uint8)
for _i, _c in enumerate(b"ACGT"):
    _CODE[_c] = _i
    _CODE[ord(chr(_c).lower())] = _i

_BINARY_MAGIC = b"PCDM"
_BINARY_VERSION = 1


class MatrixKind(enum.Enum):
    P_DISTANCE = "p"
    K80 = "k80"
    PATRISTIC = "patristic"
    COCLUSTER = "cocluster"


@dataclass(frozen=True)
class PairComparison:
    """Site counts for one sequence pair under pairwise deletion."""

    compared: int
    mismatches: int
    transitions: int
    transversions: int


def encode_sequence(residues: str) -> np.ndarray:
    """Map a residue string to uint8 codes (255 for non-ACGT symbols)."""
    raw = np.frombuffer(residues.encode("ascii"), dtype=np.uint8)
    return _CODE[raw]


def encode_alignment(alignment: "Alignment") -> np.ndarray:
    """Stack an alignment into an (n, sites) uint8 code matrix."""
    return np.vstack([encode_sequence(r.residues) for r in alignment.records])


def compare_pair(x: str, y: str) -> PairComparison:
    """Count compared, differing, transition and transversion sites.

    Raises LengthMismatch when the two strings differ in length.
    """
    if len(x) != len(y):
        raise LengthMismatch(len(x), len(y))
    a = encode_sequence(x)
    b = encode_sequence(y)
    sites = (a != 255) & (b != 255)
    neq = (a != b) & sites
    ts = ((a ^ b) == 2) & neq
    compared = int(np.count_nonzero(sites))
    mism = int(np.count_nonzero(neq))
    tsc = int(np.count_nonzero(ts))
    return PairComparison(compared, mism, tsc, mism - tsc)


def p_distance(x: str, y: str) -> float:
    """Proportion of differing sites among pairwise-defined sites.

    NaN when no site is defined for the pair.
    """
    pc = compare_pair(x, y)
    if pc.compared == 0:
        return math.nan
    return pc.mismatches / pc.compared


def k80_distance(x: str, y: str) -> float:
    """Two-parameter distance -0.5*ln(1-2P-Q) - 0.25*ln(1-2Q).

    P and Q are the transition and transversion proportions among
    pairwise-defined sites.  NaN when the pair has no defined sites or
    either log argument is not positive (saturation).
    """
    pc = compare_pair(x, y)
    if pc.compared == 0:
        return math.nan
    p = pc.transitions / pc.compared
    q = pc.transversions / pc.compared
    w1 = 1.0 - 2.0 * p - q
    w2 = 1.0 - 2.0 * q
    if w1 <= 0.0 or w2 <= 0.0:
        return math.nan
    return -0.5 * math.log(w1) - 0.25 * math.log(w2) + 0.0  # -0.0 -> 0.0


def condensed_size(n: int) -> int:
    return n * (n - 1) // 2


def condensed_index(n: int, i: int, j: int) -> int:
    """Position of pair (i, j), i < j, in a condensed upper triangle."""
    if i > j:
        i, j = j, i
    return i * (2 * n - i - 1) // 2 + (j - i - 1)


def condensed_indices_within(n: int, idx: np.ndarray) -> np.ndarray:
    """Condensed positions of every pair drawn from sorted indices idx."""
    idx = np.asarray(idx, dtype=np.int64)
    chunks = []
    for a in range(len(idx) - 1):
        i = idx[a]
        js = idx[a + 1 :]
        chunks.append(i * (2 * n - i - 1) // 2 + (js - i - 1))
    if not chunks:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(chunks)


class DistanceMatrix:
    """Symmetric pairwise distances over named sequences.

    values is the condensed upper triangle (row major, float64); NaN marks
    an undefined entry.  capped, when present, flags entries that were
    undefined before a cap policy replaced them.
    """

    def __init__(
        self,
        ids: list[str],
        values: np.ndarray,
        kind: MatrixKind,
        capped: np.ndarray | None = None,
    ):
        n = len(ids)
        if len(set(ids)) != n:
            seen: set[str] = set()
            for ident in ids:
                if ident in seen:
                    raise DuplicateId(ident)
                seen.add(ident)
        if values.shape != (condensed_size(n),):
            raise ValueError(
                f"condensed length {values.shape} does not match n={n}"
            )
        self.ids = list(ids)
        self.values = values
        self.kind = kind
        self.capped = capped
        self._index = {ident: k for k, ident in enumerate(self.ids)}

    @property
    def n(self) -> int:
        return len(self.ids)

    def get(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        return float(self.values[condensed_index(self.n, i, j)])

    def get_by_id(self, a: str, b: str) -> float:
        return self.get(self._index[a], self._index[b])

    def index_of(self, ident: str) -> int:
        return self._index[ident]

    def defined(self, i: int, j: int) -> bool:
        return not math.isnan(self.get(i, j))

    def num_undefined(self) -> int:
        return int(np.count_nonzero(np.isnan(self.values)))

    def square(self) -> np.ndarray:
        """Materialize the full symmetric matrix (zero diagonal)."""
        n = self.n
        out = np.zeros((n, n), dtype=np.float64)
        iu = np.triu_indices(n, k=1)
        out[iu] = self.values
        out.T[iu] = self.values
        return out

    def values_within(self, idx: Iterable[int]) -> np.ndarray:
        """Condensed values for all pairs among the given indices."""
        idx = np.sort(np.fromiter(idx, dtype=np.int64))
        return self.values[condensed_indices_within(self.n, idx)]


def _count_block(codes, valid, rows, n, compared, mism, tsc):
    # Writes disjoint condensed slices, safe under the thread pool.
    for i in rows:
        lo = condensed_index(n, i, i + 1) if i + 1 < n else 0
        a = codes[i]
        va = valid[i]
        sites = valid[i + 1 :] & va
        neq = (codes[i + 1 :] != a) & sites
        ts = ((codes[i + 1 :] ^ a) == 2) & neq
        hi = lo + (n - i - 1)
        compared[lo:hi] = np.count_nonzero(sites, axis=1)
        mism[lo:hi] = np.count_nonzero(neq, axis=1)
        tsc[lo:hi] = np.count_nonzero(ts, axis=1)


def build_distance_matrix(
    alignment: "Alignment",
    kind: MatrixKind,
    cap: float | None = None,
    threads: int = 1,
) -> DistanceMatrix:
    """All-pairs p or K80 distances for an alignment.

    cap=None leaves undefined pairs as NaN; a float replaces them with that
    value and flags them in the capped array.  threads partitions the row
    loop across a thread pool; results are identical for any thread count.
    """
    if kind is MatrixKind.PATRISTIC:
        raise ValueError("patristic matrices are built from a tree")
    n = len(alignment.records)
    if n < 2:
        raise EmptyInput("need at least two sequences")
    codes = encode_alignment(alignment)
    valid = codes != 255
    m = condensed_size(n)
    compared = np.empty(m, dtype=np.int64)
    mism = np.empty(m, dtype=np.int64)
    tsc = np.empty(m, dtype=np.int64)

    threads = max(1, int(threads))
    if threads == 1 or n < 4:
        _count_block(codes, valid, range(n - 1), n, compared, mism, tsc)
    else:
        stripes = [range(w, n - 1, threads) for w in range(threads)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = [
                pool.submit(
                    _count_block, codes, valid, rows, n, compared, mism, tsc
                )
                for rows in stripes
            ]
            for f in futs:
                f.result()

    with np.errstate(divide="ignore", invalid="ignore"):
        if kind is MatrixKind.P_DISTANCE:
            vals = mism / compared
            vals[compared == 0] = np.nan
        else:
            p = tsc / compared
            q = (mism - tsc) / compared
            w1 = 1.0 - 2.0 * p - q
            w2 = 1.0 - 2.0 * q
            bad = (compared == 0) | (w1 <= 0.0) | (w2 <= 0.0)
            w1[bad] = 1.0
            w2[bad] = 1.0
            vals = -0.5 * np.log(w1) - 0.25 * np.log(w2)
            vals[bad] = np.nan

    capped = None
    if cap is not None:
        undef = np.isnan(vals)
        if undef.any():
            log.warning(
                "capping %d undefined %s distances at %g",
                int(undef.sum()),
                kind.value,
                cap,
            )
        vals = np.where(undef, cap, vals)
        capped = undef
    return DistanceMatrix(
        [r.id for r in alignment.records], vals, kind, capped
    )


# ------------------------------------------------------------- serialization


def write_matrix_phylip(dm: DistanceMatrix, path: str | Path) -> None:
    """Square whitespace-separated matrix with a leading count line."""
    sq = dm.square()
    with open(path, "w") as fh:
        fh.write(f"{dm.n}\n")
        for ident, row in zip(dm.ids, sq):
            cells = " ".join(_fmt(v) for v in row)
            fh.write(f"{ident}  {cells}\n")


def _fmt(v: float) -> str:
    if math.isnan(v):
        return "nan"
    return f"{v:.10g}"


def read_matrix_phylip(
    path: str | Path, kind: MatrixKind = MatrixKind.P_DISTANCE
) -> DistanceMatrix:
    with open(path) as fh:
        header = fh.readline().split()
        if not header:
            raise EmptyInput(str(path))
        n = int(header[0])
        ids = []
        rows = []
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    if len(ids) != n:
        raise EmptyInput(f"expected {n} rows, found {len(ids)}")
    sq = np.asarray(rows, dtype=np.float64)
    if sq.shape != (n, n):
        raise EmptyInput("matrix is not square")
    iu = np.triu_indices(n, k=1)
    return DistanceMatrix(ids, sq[iu], kind)


def write_matrix_binary(dm: DistanceMatrix, path: str | Path) -> None:
    """Compact triangle: magic, version u8, n u64 LE, float64 LE values.

    Sequence ids are not part of the binary layout; they are written to a
    sidecar text file <path>.ids, one id per line.
    """
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC)
        fh.write(struct.pack("<B", _BINARY_VERSION))
        fh.write(struct.pack("<Q", dm.n))
        fh.write(dm.values.astype("<f8").tobytes())
    with open(path.with_name(path.name + ".ids"), "w") as fh:
        fh.write("".join(f"{ident}\n" for ident in dm.ids))


def read_matrix_binary(
    path: str | Path, kind: MatrixKind = MatrixKind.P_DISTANCE
) -> DistanceMatrix:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _BINARY_MAGIC:
            raise EmptyInput(f"{path} is not a distance-matrix file")
        (version,) = struct.unpack("<B", fh.read(1))
        if version != _BINARY_VERSION:
            raise EmptyInput(f"unsupported matrix version {version}")
        (n,) = struct.unpack("<Q", fh.read(8))
        vals = np.frombuffer(
            fh.read(8 * condensed_size(n)), dtype="<f8"
        ).astype(np.float64)
    if vals.shape[0] != condensed_size(n):
        raise EmptyInput(f"{path} is truncated")
    sidecar = path.with_name(path.name + ".ids")
    if sidecar.exists():
        ids = sidecar.read_text().split()
    else:
        ids = [str(k) for k in range(n)]
    return DistanceMatrix(ids, vals, kind)
