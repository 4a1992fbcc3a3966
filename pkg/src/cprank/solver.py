"""Block coordinate descent for simultaneous CP decomposition and rank estimation.

Each outer iteration is a Gauss-Seidel sweep over four blocks.  The factor
blocks ``A``, ``B``, ``C`` are exact minimizers of the Tikhonov-regularized
least-squares subproblems; the weight block ``alpha`` takes one proximal
gradient (soft-thresholding) step on

    Psi = 1/2 ||X - [A,B,C,alpha]||_F^2
          + lam/2 (||A||_F^2 + ||B||_F^2 + ||C||_F^2) + gamma ||alpha||_1.

Components whose weight is thresholded to exactly zero are dropped from the
returned model; their count is the rank estimate.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import ConfigError, DimensionError, NumericalError, SingularityError
from .kruskal import (
    KruskalModel,
    RankEstimate,
    compact,
    count_rank,
    gram,
    mttkrp_weights,
    reconstruct_unfolded,
)
from .tensor import DenseTensor3, frob_norm, khatri_rao, unfold

__all__ = [
    "SolverConfig",
    "IterTrace",
    "SolveResult",
    "init_model",
    "update_factor",
    "grad_alpha",
    "lipschitz_alpha",
    "prox_l1",
    "update_alpha",
    "objective_psi",
    "solve",
    "solve_als_baseline",
    "refit",
    "descent_violations",
    "step_sums",
    "default_rank_bound",
    "LIPSCHITZ_INFLATION",
]

logger = logging.getLogger(__name__)

LIPSCHITZ_INFLATION = 1.01
# default lam = LAMBDA_SCALE * ||X||^(2/3), default gamma = GAMMA_SCALE * ||X||
LAMBDA_SCALE = 1e-2
GAMMA_SCALE = 5e-2

CONVERGED_PSI = "converged_psi"
CONVERGED_RESIDUAL = "converged_residual"
MAX_ITERS = "max_iters"


def default_rank_bound(dims) -> int:
    """``min(IJ, JK, IK)``, the default upper bound on the CP rank."""
    i, j, k = (int(d) for d in dims)
    return min(i * j, j * k, i * k)


@dataclass(frozen=True)
class SolverConfig:
    """Solver parameters.

    ``lam=None`` means ``1e-2 * ||X||_F^(2/3)``, ``gamma=None`` means
    ``5e-2 * ||X||_F`` and ``rank_bound=None`` means
    :func:`default_rank_bound`; all three are resolved against the input by
    :meth:`resolve`.  ``beta_fixed`` switches from the adaptive step
    ``eta / Q_alpha`` to a constant step, which is rejected on any iteration
    where ``beta_fixed * Q_alpha >= 1``.
    """

    rank_bound: int | None = None
    lam: float | None = None
    gamma: float | None = None
    eta: float = 0.99
    beta_fixed: float | None = None
    max_iters: int = 5000
    tol_psi: float = 1e-8
    tol_residual: float = 1e-10
    seed: int = 0
    power_iters: int = 100
    power_tol: float = 1e-6

    def validate(self) -> "SolverConfig":
        if self.rank_bound is not None and int(self.rank_bound) < 1:
            raise ConfigError(f"rank_bound must be >= 1, got {self.rank_bound}")
        if self.lam is not None and not (math.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError(f"lam must be finite and >= 0, got {self.lam}")
        if self.gamma is not None and not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ConfigError(f"gamma must be finite and >= 0, got {self.gamma}")
        if not 0 < self.eta < 1:
            raise ConfigError(f"eta must lie in (0, 1), got {self.eta}")
        if self.beta_fixed is not None and not (
            math.isfinite(self.beta_fixed) and self.beta_fixed > 0
        ):
            raise ConfigError(f"beta_fixed must be > 0, got {self.beta_fixed}")
        if int(self.max_iters) < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        for name in ("tol_psi", "tol_residual", "power_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if int(self.power_iters) < 1:
            raise ConfigError(f"power_iters must be >= 1, got {self.power_iters}")
        return self

    def resolve(self, x: DenseTensor3) -> "SolverConfig":
        """Validated copy with ``lam``, ``gamma`` and ``rank_bound`` filled in for ``x``."""
        self.validate()
        lam, gamma = _penalties(self, x)
        bound = default_rank_bound(x.dims) if self.rank_bound is None else int(self.rank_bound)
        return replace(self, lam=lam, gamma=gamma, rank_bound=bound)


def _penalties(cfg: SolverConfig, x: DenseTensor3):
    norm = frob_norm(x)
    lam = LAMBDA_SCALE * norm ** (2.0 / 3.0) if cfg.lam is None else float(cfg.lam)
    gamma = GAMMA_SCALE * norm if cfg.gamma is None else float(cfg.gamma)
    return lam, gamma


@dataclass(frozen=True)
class IterTrace:
    """One outer iteration.  Record 0 describes the initial point.

    ``step_norm_sq`` is ``||omega^{k-1} - omega^k||^2`` over all four blocks,
    and ``beta_k``/``q_alpha`` are the step and Lipschitz estimate used to
    reach iterate ``k``.
    """

    iter: int
    psi: float
    residual: float
    residual_sq: float
    relative: float
    nnz_alpha: int
    beta_k: float
    q_alpha: float
    step_norm_sq: float
    degenerate: bool = False


@dataclass(frozen=True)
class SolveResult:
    model: KruskalModel
    estimated_rank: int
    trace: list = field(repr=False)
    termination: str
    rank: RankEstimate | None = None
    full_model: KruskalModel | None = field(default=None, repr=False)
    config: SolverConfig | None = None

    @property
    def iterations(self) -> int:
        return self.trace[-1].iter if self.trace else 0

    @property
    def final(self) -> IterTrace:
        return self.trace[-1]


def init_model(dims, R: int, seed=0) -> KruskalModel:
    """Standard normal factors from a seeded generator and unit weights."""
    if int(R) < 1:
        raise ConfigError(f"rank bound must be >= 1, got {R}")
    i, j, k = dims
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((i, R))
    B = rng.standard_normal((j, R))
    C = rng.standard_normal((k, R))
    return KruskalModel(A, B, C, np.ones(R))


def update_factor(x_unf, kr, alpha, lam: float, kr_gram=None) -> np.ndarray:
    """Solve ``F (E E^T + lam I) = X_(n) E^T`` with ``E = diag(alpha) kr^T``.

    ``x_unf`` is the mode-n unfolding and ``kr`` the matching Khatri-Rao
    product of the other two factors (e.g. ``C kr B`` for mode 1).  Passing
    ``kr_gram = kr^T kr`` (the Hadamard product of the two factor Grams)
    skips forming it from ``kr``.
    """
    x_unf = np.asarray(x_unf, dtype=np.float64)
    kr = np.asarray(kr, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    R = alpha.size
    if kr_gram is None:
        kr_gram = kr.T @ kr
    lhs = alpha[:, None] * kr_gram * alpha[None, :]
    lhs[np.diag_indices(R)] += lam
    rhs = (x_unf @ kr) * alpha
    try:
        cho = scipy.linalg.cho_factor(lhs, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        if lam == 0:
            raise SingularityError(
                "normal equations are singular with lam=0; use lam > 0"
            ) from None
        logger.warning("Cholesky failed with lam=%g; falling back to lstsq", lam)
        sol, *_ = np.linalg.lstsq(lhs, rhs.T, rcond=None)
        return sol.T
    return scipy.linalg.cho_solve(cho, rhs.T, check_finite=False).T


def grad_alpha(x: DenseTensor3, m: KruskalModel) -> np.ndarray:
    """Gradient of ``1/2 ||vec(X) - M alpha||^2`` in ``alpha``, without forming ``M``."""
    return gram(m) @ m.alpha - mttkrp_weights(x, m)


def _power_norm(G, iters, tol):
    R = G.shape[0]
    if R == 0 or not np.any(G):
        return 0.0
    # fixed generic start: ones can be orthogonal to the top eigenvector
    v = np.random.default_rng(0x5EED).standard_normal(R)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = G @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        done = abs(nw - est) <= tol * nw
        est = nw
        v = w / nw
        if done:
            break
    return est


def lipschitz_alpha(m: KruskalModel, power_iters: int = 100, power_tol: float = 1e-6) -> float:
    """Upper estimate of ``||M^T M||_2`` by power iteration on the Gram matrix."""
    return LIPSCHITZ_INFLATION * _power_norm(gram(m), power_iters, power_tol)


def prox_l1(y, tau: float) -> np.ndarray:
    """Soft thresholding; entries with ``|y| <= tau`` become exactly zero."""
    if tau < 0:
        raise ValueError(f"threshold must be >= 0, got {tau}")
    y = np.asarray(y, dtype=np.float64)
    return np.where(y > tau, y - tau, np.where(y < -tau, y + tau, 0.0))


def update_alpha(x: DenseTensor3, m: KruskalModel, cfg: SolverConfig, *, _w=None):
    """One proximal gradient step on the weights.

    Returns ``(alpha_new, beta_k, q_k)``.  When the Lipschitz estimate is zero
    (all components vanish) the weights are returned unchanged with
    ``beta_k = 0``.
    """
    _, gamma = _penalties(cfg, x)
    G = gram(m)
    q = LIPSCHITZ_INFLATION * _power_norm(G, cfg.power_iters, cfg.power_tol)
    if q == 0.0:
        return np.array(m.alpha), 0.0, 0.0
    if cfg.beta_fixed is not None:
        beta = float(cfg.beta_fixed)
        if beta * q >= 1.0:
            raise ConfigError(
                f"fixed step {beta:g} violates beta * Q_alpha < 1 (Q_alpha = {q:g})"
            )
    else:
        beta = cfg.eta / q
    w = mttkrp_weights(x, m) if _w is None else _w
    y = m.alpha - beta * (G @ m.alpha - w)
    return prox_l1(y, beta * gamma), beta, q


def _psi_terms(x1, m: KruskalModel, lam, gamma):
    res = x1 - reconstruct_unfolded(m)
    res_sq = float(np.vdot(res, res))
    reg = 0.5 * lam * (
        float(np.vdot(m.A, m.A)) + float(np.vdot(m.B, m.B)) + float(np.vdot(m.C, m.C))
    )
    return 0.5 * res_sq + reg + gamma * float(np.sum(np.abs(m.alpha))), res_sq


def objective_psi(x: DenseTensor3, m: KruskalModel, cfg: SolverConfig) -> float:
    """Penalized objective: fit + Tikhonov on the factors + l1 on the weights."""
    if x.dims != m.dims:
        raise DimensionError(f"tensor {x.dims} vs model {m.dims}")
    lam, gamma = _penalties(cfg, x)
    psi, _ = _psi_terms(unfold(x, 1), m, lam, gamma)
    return psi


def _check_finite(k, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalError(f"non-finite iterate at iteration {k}", iteration=k)


def _run(x: DenseTensor3, cfg: SolverConfig, init, update_weights: bool) -> SolveResult:
    cfg = cfg.resolve(x)
    R = cfg.rank_bound
    gamma = cfg.gamma if update_weights else 0.0
    xnorm = frob_norm(x)
    x1, x2, x3 = unfold(x, 1), unfold(x, 2), unfold(x, 3)

    if init is None:
        model = init_model(x.dims, R, cfg.seed)
    else:
        if init.dims != x.dims:
            raise DimensionError(f"initial model {init.dims} vs tensor {x.dims}")
        model = init
        R = model.R
        cfg = replace(cfg, rank_bound=R)
    if not update_weights and not np.all(model.alpha == 1.0):
        model = KruskalModel(model.A * model.alpha, model.B, model.C, np.ones(R))

    def record(k, m, psi, res_sq, beta, q, step, degenerate=False):
        res = math.sqrt(res_sq)
        return IterTrace(
            iter=k,
            psi=psi,
            residual=res,
            residual_sq=res_sq,
            relative=res / xnorm if xnorm > 0 else res,
            nnz_alpha=int(np.count_nonzero(m.alpha)),
            beta_k=beta,
            q_alpha=q,
            step_norm_sq=step,
            degenerate=degenerate,
        )

    if xnorm == 0.0:
        # Psi is minimized by the zero model; no iteration can do better.
        zero = KruskalModel.zeros(x.dims, R)
        psi0, res_sq0 = _psi_terms(x1, model, cfg.lam, gamma)
        step = sum(float(np.vdot(b, b)) for b in (model.A, model.B, model.C))
        step += float(np.vdot(model.alpha, model.alpha)) if update_weights else 0.0
        out = zero if update_weights else zero.replace(alpha=np.ones(R))
        trace = [
            record(0, model, psi0, res_sq0, 0.0, 0.0, 0.0),
            record(1, out, _psi_terms(x1, out, cfg.lam, gamma)[0], 0.0, 0.0, 0.0, step, True),
        ]
        return _finish(out, trace, CONVERGED_RESIDUAL, cfg, update_weights)

    psi, res_sq = _psi_terms(x1, model, cfg.lam, gamma)
    trace = [record(0, model, psi, res_sq, 0.0, 0.0, 0.0)]
    termination = MAX_ITERS
    A, B, C, alpha = model.A, model.B, model.C, model.alpha
    ga, gb, gc = A.T @ A, B.T @ B, C.T @ C

    for k in range(1, cfg.max_iters + 1):
        A_new = update_factor(x1, khatri_rao(C, B), alpha, cfg.lam, gc * gb)
        ga = A_new.T @ A_new
        B_new = update_factor(x2, khatri_rao(C, A_new), alpha, cfg.lam, gc * ga)
        gb = B_new.T @ B_new
        kr_ba = khatri_rao(B_new, A_new)
        C_new = update_factor(x3, kr_ba, alpha, cfg.lam, gb * ga)
        gc = C_new.T @ C_new
        _check_finite(k, A_new, B_new, C_new)
        m = KruskalModel(A_new, B_new, C_new, alpha)

        beta = q = 0.0
        degenerate = False
        if update_weights:
            # M^T vec(X) from the mode-3 MTTKRP, reusing B kr A
            w = np.einsum("kr,kr->r", C_new, x3 @ kr_ba)
            alpha_new, beta, q = update_alpha(x, m, replace(cfg, gamma=gamma), _w=w)
            degenerate = q == 0.0
            _check_finite(k, alpha_new)
            m = m.replace(alpha=alpha_new)
        else:
            q = lipschitz_alpha(m, cfg.power_iters, cfg.power_tol)

        step = (
            float(np.sum((A_new - A) ** 2))
            + float(np.sum((B_new - B) ** 2))
            + float(np.sum((C_new - C) ** 2))
            + float(np.sum((m.alpha - alpha) ** 2))
        )
        psi_prev = psi
        psi, res_sq = _psi_terms(x1, m, cfg.lam, gamma)
        if not math.isfinite(psi):
            raise NumericalError(f"objective overflowed at iteration {k}", iteration=k)
        trace.append(record(k, m, psi, res_sq, beta, q, step, degenerate))
        A, B, C, alpha = m.A, m.B, m.C, m.alpha

        if trace[-1].relative <= cfg.tol_residual:
            termination = CONVERGED_RESIDUAL
            break
        if abs(psi_prev - psi) / max(1.0, psi_prev) <= cfg.tol_psi:
            termination = CONVERGED_PSI
            break

    return _finish(KruskalModel(A, B, C, alpha), trace, termination, cfg, update_weights)


def _finish(model, trace, termination, cfg, update_weights):
    rank = count_rank(model)
    logger.debug(
        "%s after %d iterations, nnz=%d, relative=%.3e",
        termination, trace[-1].iter, rank.nnz, trace[-1].relative,
    )
    return SolveResult(
        model=compact(model) if update_weights else model,
        estimated_rank=rank.nnz,
        trace=trace,
        termination=termination,
        rank=rank,
        full_model=model,
        config=cfg,
    )


def solve(x: DenseTensor3, cfg: SolverConfig | None = None, init: KruskalModel | None = None) -> SolveResult:
    """Estimate the CP rank of ``x`` and return the sparse decomposition.

    Parameters
    ----------
    x : DenseTensor3
        Input tensor.
    cfg : SolverConfig, optional
        Parameters; defaults are used when omitted.
    init : KruskalModel, optional
        Starting point.  By default factors are drawn from ``cfg.seed`` and
        all weights start at one.

    Returns
    -------
    SolveResult
        Compacted model (``R = estimated_rank``), the per-iteration trace and
        the termination reason.
    """
    return _run(x, cfg or SolverConfig(), init, update_weights=True)


def solve_als_baseline(x: DenseTensor3, cfg: SolverConfig | None = None, init: KruskalModel | None = None) -> SolveResult:
    """Plain (ridge) ALS at a fixed number of components.

    Same sweep as :func:`solve` with the weight block frozen at ones and no
    l1 term, so nothing is ever pruned.
    """
    return _run(x, cfg or SolverConfig(), init, update_weights=False)


def refit(x: DenseTensor3, model: KruskalModel, max_iters: int = 100, tol_psi: float = 1e-12) -> SolveResult:
    """Unregularized ALS on the support of ``model``.

    Removes the shrinkage bias of the penalties while keeping the number of
    components fixed.  The returned model carries unit weights (the scale is
    absorbed into ``A``).  If the unregularized normal equations turn out
    singular, ``model`` is returned unchanged with termination ``"singular"``.
    """
    model = compact(model)
    cfg = SolverConfig(rank_bound=max(model.R, 1), lam=0.0, gamma=0.0,
                       max_iters=max_iters, tol_psi=tol_psi, tol_residual=1e-15)
    if model.R == 0:
        return SolveResult(model, 0, [], "empty", count_rank(model), model, cfg)
    try:
        return _run(x, cfg, model, update_weights=False)
    except SingularityError:
        logger.warning("refit skipped: singular normal equations")
        return SolveResult(model, model.R, [], "singular", count_rank(model), model, cfg)


def descent_violations(result: SolveResult, slack: float = 1e-8) -> list[int]:
    """Iterations where the sufficient decrease bound fails.

    Checks ``Psi^{k-1} - Psi^k >= min(lam/2, N^k) * ||omega^{k-1} - omega^k||^2 - slack``
    with ``N^k = (1 - beta_k Q_k) / (2 beta_k)`` (infinite when no weight
    step was taken), plus plain monotonicity up to ``1e-10``.
    """
    lam = result.config.lam if result.config is not None else 0.0
    bad = []
    for prev, cur in zip(result.trace, result.trace[1:]):
        if cur.beta_k > 0:
            n_k = (1.0 - cur.beta_k * cur.q_alpha) / (2.0 * cur.beta_k)
        else:
            n_k = math.inf
        rho = min(lam / 2.0, n_k)
        drop = prev.psi - cur.psi
        if cur.psi > prev.psi + 1e-10 or drop < rho * cur.step_norm_sq - slack:
            bad.append(cur.iter)
    return bad


def step_sums(trace, fraction: float = 0.1):
    """Total of ``||omega^{k-1} - omega^k||^2`` and its first/last ``fraction``."""
    steps = np.array([t.step_norm_sq for t in trace[1:]])
    if steps.size == 0:
        return 0.0, 0.0, 0.0
    n = max(1, int(round(fraction * steps.size)))
    return float(steps.sum()), float(steps[:n].sum()), float(steps[-n:].sum())
