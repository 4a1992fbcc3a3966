"""The weighted CP model ``[A, B, C, alpha]_R`` and quantities derived from it."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .tensor import DenseTensor3, frob_norm, khatri_rao, unfold

__all__ = [
    "KruskalModel",
    "RankEstimate",
    "reconstruct",
    "reconstruct_unfolded",
    "design_matrix",
    "gram",
    "mttkrp_weights",
    "residual_error",
    "count_rank",
    "compact",
    "MAX_DESIGN_ENTRIES",
]

# Beyond this many entries the IJK x R design matrix is never formed.
MAX_DESIGN_ENTRIES = 2**24

NEAR_ZERO_RTOL = 1e-8


def _as_factor(x, name):
    x = np.array(x, dtype=np.float64, copy=True)
    if x.ndim != 2:
        raise DimensionError(f"factor {name} must be 2-D, got ndim={x.ndim}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"factor {name} has non-finite entries")
    x.flags.writeable = False
    return x


@dataclass(frozen=True, eq=False)
class KruskalModel:
    """Factors ``A (I x R)``, ``B (J x R)``, ``C (K x R)`` and weights ``alpha (R,)``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        A = _as_factor(self.A, "A")
        B = _as_factor(self.B, "B")
        C = _as_factor(self.C, "C")
        alpha = np.array(self.alpha, dtype=np.float64, copy=True).ravel()
        if not np.all(np.isfinite(alpha)):
            raise ValueError("alpha has non-finite entries")
        alpha.flags.writeable = False
        if not (A.shape[1] == B.shape[1] == C.shape[1] == alpha.size):
            raise DimensionError(
                "column counts disagree: "
                f"A {A.shape}, B {B.shape}, C {C.shape}, alpha {alpha.shape}"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "alpha", alpha)

    @property
    def R(self) -> int:
        return self.alpha.size

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.A.shape[0], self.B.shape[0], self.C.shape[0])

    @classmethod
    def zeros(cls, dims, R):
        i, j, k = dims
        return cls(np.zeros((i, R)), np.zeros((j, R)), np.zeros((k, R)), np.zeros(R))

    def replace(self, **changes) -> "KruskalModel":
        fields = {"A": self.A, "B": self.B, "C": self.C, "alpha": self.alpha}
        fields.update(changes)
        return KruskalModel(**fields)

    def equals(self, other: "KruskalModel") -> bool:
        """Bitwise equality of all four blocks."""
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("A", "B", "C", "alpha")
        )


@dataclass(frozen=True)
class RankEstimate:
    """Number of nonzero weights and where they sit (0-based).

    ``near_zero`` counts nonzero weights with magnitude at most
    ``1e-8 * max|alpha|``; it is diagnostic only.
    """

    nnz: int
    support: tuple[int, ...]
    near_zero: int = 0


def reconstruct(m: KruskalModel) -> DenseTensor3:
    """Dense tensor ``sum_r alpha_r a_r o b_r o c_r``."""
    # Ordered accumulation: zero-weight terms add exact zeros, so dropping
    # them (compact) leaves the result bitwise unchanged.
    out = np.zeros(m.dims, order="F")
    for r in range(m.R):
        out += (
            (m.alpha[r] * m.A[:, r])[:, None, None]
            * m.B[None, :, r, None]
            * m.C[None, None, :, r]
        )
    return DenseTensor3(out)


def reconstruct_unfolded(m: KruskalModel) -> np.ndarray:
    """Mode-1 unfolding of the model, ``A diag(alpha) (C kr B)^T`` (BLAS path)."""
    return (m.A * m.alpha) @ khatri_rao(m.C, m.B).T


def design_matrix(m: KruskalModel) -> np.ndarray:
    """The ``IJK x R`` matrix with columns ``c_r kron b_r kron a_r``.

    Only for small problems; large callers go through :func:`gram` and
    :func:`mttkrp_weights` instead.
    """
    i, j, k = m.dims
    if i * j * k * m.R > MAX_DESIGN_ENTRIES:
        raise DimensionError(
            f"design matrix would have {i * j * k * m.R} entries "
            f"(limit {MAX_DESIGN_ENTRIES}); use gram/mttkrp_weights"
        )
    return khatri_rao(m.C, khatri_rao(m.B, m.A))


def gram(m: KruskalModel) -> np.ndarray:
    """``M^T M`` computed as the Hadamard product of the factor Grams."""
    return (m.A.T @ m.A) * (m.B.T @ m.B) * (m.C.T @ m.C)


def mttkrp_weights(x: DenseTensor3, m: KruskalModel) -> np.ndarray:
    """``M^T vec(X)``, i.e. ``w_r = sum_ijk x_ijk a_ir b_jr c_kr``."""
    if x.dims != m.dims:
        raise DimensionError(f"tensor {x.dims} vs model {m.dims}")
    g = unfold(x, 1) @ khatri_rao(m.C, m.B)
    return np.einsum("ir,ir->r", m.A, g)


def residual_error(x: DenseTensor3, m: KruskalModel):
    """Return ``(residual, relative)`` with ``residual = ||X - [A,B,C,alpha]||_F``.

    For a zero tensor the relative error is undefined; the residual itself
    is returned in its place.  Use :func:`residual_report` to also get the
    squared residual and the zero-norm flag.
    """
    rep = residual_report(x, m)
    return rep["residual"], rep["relative"]


def residual_report(x: DenseTensor3, m: KruskalModel) -> dict:
    if x.dims != m.dims:
        raise DimensionError(f"tensor {x.dims} vs model {m.dims}")
    res = float(np.linalg.norm(x.vec() - reconstruct(m).vec()))
    xnorm = frob_norm(x)
    zero_norm = xnorm == 0.0
    return {
        "residual": res,
        "residual_sq": res * res,
        "relative": res if zero_norm else res / xnorm,
        "zero_norm": zero_norm,
    }


def count_rank(m: KruskalModel) -> RankEstimate:
    """Count exactly-nonzero weights."""
    support = tuple(int(r) for r in np.flatnonzero(m.alpha != 0.0))
    near_zero = 0
    if support:
        mags = np.abs(m.alpha[list(support)])
        near_zero = int(np.sum(mags <= NEAR_ZERO_RTOL * mags.max()))
    return RankEstimate(nnz=len(support), support=support, near_zero=near_zero)


def compact(m: KruskalModel) -> KruskalModel:
    """Drop components whose weight is exactly zero."""
    keep = list(count_rank(m).support)
    if len(keep) == m.R:
        return m
    return KruskalModel(m.A[:, keep], m.B[:, keep], m.C[:, keep], m.alpha[keep])
