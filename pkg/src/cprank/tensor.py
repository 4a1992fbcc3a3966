"""Dense third-order tensors and the matrix algebra around them.

Entries are stored flat in vec order, ``beta(i, j, k) = i + j*I + k*I*J``
(0-based), which is exactly numpy's Fortran layout for an ``(I, J, K)``
array.  Matrices are plain 2-D ``numpy.ndarray`` objects.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, ModeError

__all__ = [
    "DenseTensor3",
    "vec_tensor",
    "unfold",
    "fold",
    "kron_vec",
    "khatri_rao",
    "outer3",
    "frob_norm",
    "frob_norm_mat",
    "inner",
]


class DenseTensor3:
    """Immutable real ``I x J x K`` tensor.

    Parameters
    ----------
    data : array_like
        Either a 3-D array of shape ``(I, J, K)`` or, together with ``dims``,
        a flat vector in vec order.
    dims : tuple of int, optional
        Extents ``(I, J, K)`` when ``data`` is flat.
    """

    __slots__ = ("_data",)

    def __init__(self, data, dims=None):
        arr = np.asarray(data, dtype=np.float64)
        if dims is not None:
            dims = tuple(int(d) for d in dims)
            if len(dims) != 3:
                raise DimensionError(f"expected three extents, got {dims}")
            if arr.size != dims[0] * dims[1] * dims[2]:
                raise DimensionError(
                    f"data length {arr.size} does not match dims {dims}"
                )
            arr = arr.reshape(dims, order="F")
        if arr.ndim != 3:
            raise DimensionError(f"expected a 3-D array, got ndim={arr.ndim}")
        if min(arr.shape) < 1:
            raise DimensionError(f"extents must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor entries must be finite")
        arr = np.array(arr, dtype=np.float64, order="F", copy=True)
        arr.flags.writeable = False
        self._data = arr

    @classmethod
    def zeros(cls, dims):
        return cls(np.zeros(tuple(dims)))

    @property
    def data(self) -> np.ndarray:
        """Read-only ``(I, J, K)`` view, Fortran-contiguous."""
        return self._data

    @property
    def dims(self) -> tuple[int, int, int]:
        return self._data.shape

    @property
    def size(self) -> int:
        return self._data.size

    def vec(self) -> np.ndarray:
        return self._data.reshape(-1, order="F")

    def __eq__(self, other):
        if not isinstance(other, DenseTensor3):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self._data, other._data)

    def __hash__(self):
        return hash((self.dims, self._data.tobytes(order="F")))

    def __add__(self, other):
        _check_same_dims(self, other)
        return DenseTensor3(self._data + other._data)

    def __sub__(self, other):
        _check_same_dims(self, other)
        return DenseTensor3(self._data - other._data)

    def __mul__(self, scalar):
        return DenseTensor3(self._data * float(scalar))

    __rmul__ = __mul__

    def __repr__(self):
        i, j, k = self.dims
        return f"DenseTensor3({i}x{j}x{k}, norm={frob_norm(self):.6g})"


def _check_same_dims(t, u):
    if t.dims != u.dims:
        raise DimensionError(f"dimension mismatch: {t.dims} vs {u.dims}")


def vec_tensor(t: DenseTensor3) -> np.ndarray:
    """Column vector of ``t`` in vec order (read-only view)."""
    return t.vec()


def unfold(t: DenseTensor3, mode: int) -> np.ndarray:
    """Mode-n matricization.

    ``X_(1)[i, j + k*J]``, ``X_(2)[j, i + k*I]`` and ``X_(3)[k, i + j*I]``
    (0-based).  Mode 1 is a zero-copy view; modes 2 and 3 copy.
    """
    i, j, k = t.dims
    x = t.data
    if mode == 1:
        return x.reshape(i, j * k, order="F")
    if mode == 2:
        return np.transpose(x, (1, 0, 2)).reshape(j, i * k, order="F")
    if mode == 3:
        return np.transpose(x, (2, 0, 1)).reshape(k, i * j, order="F")
    raise ModeError(f"mode must be 1, 2 or 3, got {mode!r}")


def fold(m, mode: int, dims) -> DenseTensor3:
    """Inverse of :func:`unfold`."""
    m = np.asarray(m, dtype=np.float64)
    i, j, k = (int(d) for d in dims)
    expected = {1: (i, j * k), 2: (j, i * k), 3: (k, i * j)}
    if mode not in expected:
        raise ModeError(f"mode must be 1, 2 or 3, got {mode!r}")
    if m.shape != expected[mode]:
        raise DimensionError(
            f"mode-{mode} unfolding of {(i, j, k)} has shape {expected[mode]}, got {m.shape}"
        )
    if mode == 1:
        return DenseTensor3(m.reshape(i, j, k, order="F"))
    if mode == 2:
        return DenseTensor3(np.transpose(m.reshape(j, i, k, order="F"), (1, 0, 2)))
    return DenseTensor3(np.transpose(m.reshape(k, i, j, order="F"), (1, 2, 0)))


def kron_vec(a, b) -> np.ndarray:
    """Kronecker product of two vectors; block ``l`` equals ``a[l] * b``."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    return (a[:, None] * b[None, :]).ravel()


def khatri_rao(a, b) -> np.ndarray:
    """Column-wise Kronecker product, column ``r`` is ``kron(a[:, r], b[:, r])``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(
            f"Khatri-Rao needs equal column counts, got {a.shape} and {b.shape}"
        )
    return (a[:, None, :] * b[None, :, :]).reshape(a.shape[0] * b.shape[0], a.shape[1])


def outer3(a, b, c, weight: float = 1.0) -> DenseTensor3:
    """Rank-one tensor ``weight * (a o b o c)``."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    c = np.asarray(c, dtype=np.float64).ravel()
    return DenseTensor3(weight * a[:, None, None] * b[None, :, None] * c[None, None, :])


def frob_norm(t: DenseTensor3) -> float:
    return float(np.linalg.norm(t.vec()))


def frob_norm_mat(m) -> float:
    return float(np.linalg.norm(np.asarray(m, dtype=np.float64)))


def inner(t: DenseTensor3, u: DenseTensor3) -> float:
    _check_same_dims(t, u)
    return float(np.dot(t.vec(), u.vec()))
