"""Dictionary and sparse-instance generation plus the recovery judgment.

Dictionaries are either T independent Haar-orthogonal blocks side by side or
a plain i.i.d. Gaussian matrix of the same shape.  Binary round-trip formats
are little-endian and documented next to the writers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

SUCCESS_L1_THRESHOLD = 1e-6  # reconstruction counts as success below this

_KIND_CODES = {"concat_orthogonal": 0, "iid_gaussian": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}

_DICT_MAGIC = b"OCSD"
_INST_MAGIC = b"OCSI"
_FORMAT_VERSION = 1


def haar_orthogonal(M: int, rng: np.random.Generator) -> np.ndarray:
    """One draw from the rotation-invariant measure on M x M orthogonal matrices.

    QR of an i.i.d. Gaussian matrix alone is *not* uniformly distributed; the
    factorization is made unique (hence the draw uniform) by flipping each
    column so the corresponding diagonal entry of R is positive.
    """
    if M < 1:
        raise ValueError("M must be positive")
    a = rng.standard_normal((M, M))
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return q * signs


@dataclass
class Dictionary:
    """Measurement matrix with block structure metadata."""

    kind: str
    T: int
    M: int
    matrix: np.ndarray
    seed: int

    @property
    def N(self) -> int:
        return self.matrix.shape[1]

    def block(self, t: int) -> np.ndarray:
        """View of the t-th M x M module (concatenated kind only)."""
        if self.kind != "concat_orthogonal":
            raise ValueError("blocks are only defined for concatenated dictionaries")
        return self.matrix[:, t * self.M:(t + 1) * self.M]


def build_dictionary(kind: str, T: int, M: int, seed) -> Dictionary:
    """Concatenate T Haar-orthogonal blocks, or draw an i.i.d. Gaussian M x TM."""
    if kind not in _KIND_CODES:
        raise ValueError(f"unknown dictionary kind {kind!r}")
    if T < 1 or M < 1:
        raise ValueError("T and M must be positive")
    seed_int = _seed_to_int(seed)
    rng = np.random.Generator(np.random.PCG64(seed_int))
    if kind == "concat_orthogonal":
        mat = np.hstack([haar_orthogonal(M, rng) for _ in range(T)])
    else:
        mat = rng.standard_normal((M, T * M))
    return Dictionary(kind=kind, T=T, M=M, matrix=np.ascontiguousarray(mat),
                      seed=seed_int)


def _seed_to_int(seed) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed) & 0xFFFFFFFFFFFFFFFF
    raise TypeError(f"seed must be an integer, got {type(seed)}")


@dataclass
class SparseInstance:
    """A planted sparse vector and its compressed measurement."""

    x0: np.ndarray
    y: np.ndarray
    T: int
    M: int
    seed: int

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.x0)

    @property
    def block_counts(self) -> np.ndarray:
        counts = np.zeros(self.T, dtype=np.int64)
        for idx in self.support:
            counts[idx // self.M] += 1
        return counts


def recovery_success(x0: np.ndarray, xhat: np.ndarray,
                     threshold: float = SUCCESS_L1_THRESHOLD) -> bool:
    """Success iff the l1 distance between planted and recovered is below threshold."""
    x0 = np.asarray(x0, dtype=float)
    xhat = np.asarray(xhat, dtype=float)
    if x0.shape != xhat.shape:
        raise ValueError("vectors must have equal length")
    return float(np.abs(x0 - xhat).sum()) < threshold


# ----------------------------------------------------------------------
# binary round trip
#
# dictionary: magic "OCSD" | u8 version | u8 kind | u32 T | u32 M | u64 seed
#             | M*T*M float64 row-major, all little endian
# instance:   magic "OCSI" | u8 version | u32 T | u32 M | u64 seed
#             | N float64 (x0) | M float64 (y)
# ----------------------------------------------------------------------

def save_dictionary(d: Dictionary, path_or_file) -> None:
    header = _DICT_MAGIC + struct.pack(
        "<BBIIQ", _FORMAT_VERSION, _KIND_CODES[d.kind], d.T, d.M, d.seed)
    payload = np.ascontiguousarray(d.matrix, dtype="<f8").tobytes()
    _write(path_or_file, header + payload)


def load_dictionary(path_or_file) -> Dictionary:
    raw = _read(path_or_file)
    if raw[:4] != _DICT_MAGIC:
        raise ValueError("not a dictionary file")
    version, kind_code, T, M, seed = struct.unpack("<BBIIQ", raw[4:22])
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")
    mat = np.frombuffer(raw[22:], dtype="<f8").reshape(M, T * M)
    return Dictionary(kind=_KIND_NAMES[kind_code], T=T, M=M,
                      matrix=mat.astype(np.float64), seed=seed)


def save_instance(inst: SparseInstance, path_or_file) -> None:
    header = _INST_MAGIC + struct.pack("<BIIQ", _FORMAT_VERSION, inst.T, inst.M, inst.seed)
    payload = (np.ascontiguousarray(inst.x0, dtype="<f8").tobytes()
               + np.ascontiguousarray(inst.y, dtype="<f8").tobytes())
    _write(path_or_file, header + payload)


def load_instance(path_or_file) -> SparseInstance:
    raw = _read(path_or_file)
    if raw[:4] != _INST_MAGIC:
        raise ValueError("not an instance file")
    version, T, M, seed = struct.unpack("<BIIQ", raw[4:21])
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")
    N = T * M
    x0 = np.frombuffer(raw[21:21 + 8 * N], dtype="<f8").astype(np.float64)
    y = np.frombuffer(raw[21 + 8 * N:], dtype="<f8").astype(np.float64)
    return SparseInstance(x0=x0, y=y, T=T, M=M, seed=seed)


def _write(path_or_file, blob: bytes) -> None:
    if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
        with open(path_or_file, "wb") as fh:
            fh.write(blob)
    else:
        path_or_file.write(blob)


def _read(path_or_file) -> bytes:
    if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
        with open(path_or_file, "rb") as fh:
            return fh.read()
    return path_or_file.read()
