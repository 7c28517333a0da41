"""Gaussian Bayesian inference of coupling vectors.

The measured forward operator is modelled as ``A_noisy = A + E`` with
Gaussian entry noise, so the homogeneous system ``A_noisy x + eps = 0``
carries an approximation error ``eps = -E x`` whose covariance depends on
the unknown. It is evaluated at the current prior moments, which keeps each
update an exact linear-Gaussian solve.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from math import ceil, exp, log, pi, sqrt
from typing import NamedTuple, Sequence

import numpy as np
from scipy import linalg

from .errors import InvalidInputError, NumericalError
from .forward import ConstraintMatrix, ForwardOperator, as_operator, kernel_estimate

SYM_TOL = 1e-10


def _cholesky(mat: np.ndarray, what: str) -> np.ndarray:
    """Lower Cholesky factor, retrying once with a relative diagonal jitter."""
    try:
        return linalg.cholesky(mat, lower=True)
    except linalg.LinAlgError:
        pass
    dim = mat.shape[0]
    jitter = 1e-12 * max(np.trace(mat), 0.0) / dim
    try:
        return linalg.cholesky(mat + jitter * np.eye(dim), lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"{what} is not positive definite") from exc


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class GaussianBelief:
    """Immutable N(mean, covariance) over a coupling vector.

    Parameters
    ----------
    mean : array_like, shape (d,)
    covariance : array_like, shape (d, d)
        Symmetric within 1e-10 and positive definite.
    """

    def __init__(self, mean, covariance):
        mean = np.asarray(mean, dtype=float).ravel()
        cov = np.asarray(covariance, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise InvalidInputError(
                f"covariance shape {cov.shape} does not match mean length {mean.size}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidInputError("belief has non-finite entries")
        if np.abs(cov - cov.T).max(initial=0.0) > SYM_TOL:
            raise InvalidInputError("covariance is not symmetric")
        cov = (cov + cov.T) / 2
        self.mean = _frozen(mean)
        self.covariance = _frozen(cov)
        self.chol  # fail fast on indefinite input

    @classmethod
    def isotropic(cls, mean, sigma: float) -> "GaussianBelief":
        mean = np.asarray(mean, dtype=float).ravel()
        if sigma <= 0:
            raise InvalidInputError("prior std must be positive")
        return cls(mean, sigma ** 2 * np.eye(mean.size))

    @classmethod
    def blocks(cls, means: Sequence, sigmas: Sequence[float]) -> "GaussianBelief":
        """Independent isotropic blocks, e.g. ``[c; v_1; ...; v_N]``."""
        if len(means) != len(sigmas):
            raise InvalidInputError("need one std per block")
        if any(s <= 0 for s in sigmas):
            raise InvalidInputError("prior std must be positive")
        mean = np.concatenate([np.asarray(m, dtype=float).ravel() for m in means])
        var = np.concatenate([np.full(np.size(m), s ** 2) for m, s in zip(means, sigmas)])
        return cls(mean, np.diag(var))

    @property
    def dim(self) -> int:
        return self.mean.size

    @cached_property
    def chol(self) -> np.ndarray:
        return _cholesky(self.covariance, "prior covariance")

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    @property
    def expected_error(self) -> float:
        """sqrt(Tr covariance), the expected 2-norm reconstruction error."""
        return float(sqrt(np.trace(self.covariance)))

    def second_moment(self, sl: slice = slice(None)) -> np.ndarray:
        mu = self.mean[sl]
        return self.covariance[sl, sl] + np.outer(mu, mu)

    def marginal(self, idx) -> "GaussianBelief":
        idx = np.asarray(idx)
        return GaussianBelief(self.mean[idx], self.covariance[np.ix_(idx, idx)])

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        shape = (self.dim,) if size is None else (size, self.dim)
        z = rng.standard_normal(shape)
        return self.mean + z @ self.chol.T

    def __repr__(self) -> str:
        return f"GaussianBelief(dim={self.dim}, expected_error={self.expected_error:.3g})"


@dataclass(frozen=True, eq=False)
class ApproxErrorCov:
    """Block-diagonal covariance of the approximation error.

    ``blocks[r]`` is the m x m covariance of block row r of the operator.
    """

    blocks: tuple[np.ndarray, ...]
    sigma_E: tuple[float, ...]

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @cached_property
    def matrix(self) -> np.ndarray:
        return linalg.block_diag(*self.blocks)

    def block(self, r: int) -> "ApproxErrorCov":
        return ApproxErrorCov((self.blocks[r],), (self.sigma_E[r],))


def _entry_noise_cov(s: np.ndarray, sigma: float) -> np.ndarray:
    """sigma^2 (Tr(S) on the diagonal, S off the diagonal)."""
    out = s.copy()
    np.fill_diagonal(out, np.trace(s))
    return sigma ** 2 * out


def approx_error_covariance(prior: GaussianBelief, sigma_E: float | Sequence[float],
                            layout: ForwardOperator | ConstraintMatrix, *,
                            cross_terms: bool = False,
                            extra: Sequence[np.ndarray | None] | None = None
                            ) -> ApproxErrorCov:
    """Covariance of ``eps = -E x`` evaluated at the prior moments.

    Parameters
    ----------
    prior : GaussianBelief
        Belief over the full unknown vector of ``layout``.
    sigma_E : float or sequence of float
        Entry-noise std, either shared or one per block row.
    layout : ForwardOperator or ConstraintMatrix
        Supplies the block structure; entries are not used.
    cross_terms : bool
        If False (default), each column block a row touches contributes its
        own second moment, as for independent noise per block. If True the
        row's blocks are assumed to share one noise matrix (as when one
        measured K_i multiplies both c and v_i), so the second moment of
        their sum is used, including the cross terms.
    extra : sequence of arrays, optional
        Additional per-row covariance (e.g. a preparation-error model).
    """
    op = as_operator(layout)
    m = op.m
    if prior.dim != op.shape[1]:
        raise InvalidInputError(
            f"prior dimension {prior.dim} does not match operator width {op.shape[1]}")
    nb = op.n_row_blocks
    sig = (np.full(nb, float(sigma_E)) if np.isscalar(sigma_E)
           else np.asarray(sigma_E, dtype=float))
    if sig.shape != (nb,):
        raise InvalidInputError(f"need {nb} noise levels, got {sig.size}")
    if np.any(sig < 0):
        raise InvalidInputError("sigma_E must be non-negative")
    if extra is not None and len(extra) != nb:
        raise InvalidInputError("extra covariance needs one entry per block row")
    blocks = []
    for r in range(nb):
        cols = op.row_support(r)
        if cross_terms:
            sel = np.concatenate([np.arange(c * m, (c + 1) * m) for c in cols])
            mu = prior.mean[sel].reshape(len(cols), m).sum(axis=0)
            agg = np.zeros((m, m))
            for a in cols:
                for b in cols:
                    agg += prior.covariance[a * m:(a + 1) * m, b * m:(b + 1) * m]
            s = agg + np.outer(mu, mu)
        else:
            s = sum((prior.second_moment(slice(c * m, (c + 1) * m)) for c in cols),
                    np.zeros((m, m)))
        g = _entry_noise_cov(s, sig[r])
        if extra is not None and extra[r] is not None:
            g = g + np.asarray(extra[r], dtype=float)
        g = (g + g.T) / 2
        if np.any(g) and np.linalg.eigvalsh(g)[0] < -1e-10 * np.abs(g).max():
            raise NumericalError(f"approximation-error block {r} is not PSD")
        g.setflags(write=False)
        blocks.append(g)
    return ApproxErrorCov(tuple(blocks), tuple(float(v) for v in sig))


def _posterior(prior: GaussianBelief, a_noisy, err_cov: ApproxErrorCov,
               data=None) -> tuple[np.ndarray, np.ndarray]:
    op = as_operator(a_noisy)
    m = op.m
    a = op.assembled
    if a.shape[1] != prior.dim:
        raise InvalidInputError(
            f"operator width {a.shape[1]} does not match prior dimension {prior.dim}")
    if err_cov.n_blocks != op.n_row_blocks:
        raise InvalidInputError("error covariance does not match the operator's block rows")
    b = np.zeros(a.shape[0]) if data is None else np.asarray(data, dtype=float).ravel()
    if b.shape != (a.shape[0],):
        raise InvalidInputError(f"data vector needs length {a.shape[0]}")
    eye = np.eye(prior.dim)
    prior_prec = linalg.cho_solve((prior.chol, True), eye)
    prec = (prior_prec + prior_prec.T) / 2
    rhs = prior_prec @ prior.mean
    for r, g in enumerate(err_cov.blocks):
        rows = a[r * m:(r + 1) * m]
        if not np.any(rows):
            continue
        if not np.any(g):
            raise NumericalError(
                f"block row {r} has data but zero noise covariance; use sigma_E > 0")
        lg = _cholesky(g, f"noise covariance block {r}")
        w = linalg.solve_triangular(lg, rows, lower=True)
        prec += w.T @ w
        rhs += w.T @ linalg.solve_triangular(lg, b[r * m:(r + 1) * m], lower=True)
    prec = (prec + prec.T) / 2
    lp = _cholesky(prec, "posterior precision")
    mean = linalg.cho_solve((lp, True), rhs)
    cov = linalg.cho_solve((lp, True), eye)
    cov = (cov + cov.T) / 2
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise NumericalError("posterior has non-finite entries")
    return mean, cov


def map_estimate(prior: GaussianBelief, A_noisy, err_cov: ApproxErrorCov,
                 data=None) -> np.ndarray:
    """Posterior mode: minimizer of ||L_eps (A x - b)||^2 + ||L_x (x - xbar)||^2.

    ``data`` is b, zero for the homogeneous model.
    """
    return _posterior(prior, A_noisy, err_cov, data)[0]


def posterior_covariance(prior: GaussianBelief, A_noisy, err_cov: ApproxErrorCov
                         ) -> np.ndarray:
    """(Gamma_x^-1 + A^T Gamma_eps^-1 A)^-1."""
    return _posterior(prior, A_noisy, err_cov)[1]


def posterior(prior: GaussianBelief, A_noisy, err_cov: ApproxErrorCov,
              data=None) -> GaussianBelief:
    mean, cov = _posterior(prior, A_noisy, err_cov, data)
    return GaussianBelief(mean, cov)


def online_update(belief: GaussianBelief, A_k, sigma_E: float | Sequence[float], *,
                  frozen_cov: ApproxErrorCov | None = None, cross_terms: bool = False,
                  extra: Sequence[np.ndarray | None] | None = None,
                  data=None) -> GaussianBelief:
    """One online step: error covariance from ``belief``, then the update.

    ``frozen_cov`` skips the recomputation and uses the given covariance
    instead (so a sequence of steps reproduces one joint update).
    """
    op = as_operator(A_k)
    if not np.any(op.assembled):
        return belief
    cov = frozen_cov if frozen_cov is not None else approx_error_covariance(
        belief, sigma_E, op, cross_terms=cross_terms, extra=extra)
    return posterior(belief, op, cov, data)


def online_bhl(prior: GaussianBelief, operators: Sequence, sigma_E, *,
               frozen: bool = False, cross_terms: bool = False,
               extra: Sequence[Sequence[np.ndarray | None] | None] | None = None,
               data: Sequence | None = None) -> list[GaussianBelief]:
    """Run the online loop over ``operators``; returns every intermediate belief.

    ``sigma_E`` may be a scalar or one entry per operator; ``extra`` and
    ``data`` are per operator. With ``frozen`` the error covariance of
    every step is evaluated at the initial prior.
    """
    ops = [as_operator(o) for o in operators]
    sig = [sigma_E] * len(ops) if np.isscalar(sigma_E) else list(sigma_E)
    if len(sig) != len(ops):
        raise InvalidInputError("need one noise level per operator")
    ext = [None] * len(ops) if extra is None else list(extra)
    dat = [None] * len(ops) if data is None else list(data)
    if len(ext) != len(ops) or len(dat) != len(ops):
        raise InvalidInputError("extra and data need one entry per operator")
    out = [prior]
    for op, s, x, d in zip(ops, sig, ext, dat):
        fc = (approx_error_covariance(prior, s, op, cross_terms=cross_terms, extra=x)
              if frozen else None)
        out.append(online_update(out[-1], op, s, frozen_cov=fc,
                                 cross_terms=cross_terms, extra=x, data=d))
    return out


@dataclass(frozen=True, eq=False)
class ResidualModel:
    """Linear-Gaussian model of the constraint residual of a non-steady input.

    For an input that is only approximately steady, ``r = K x`` is not zero
    and depends on the unknown itself. The model is
    ``r | x ~ N(offset + gain (x - x_ref), cov)``; folding it into
    ``A x + eps = 0`` gives the corrected operator ``A - gain``, the data
    vector ``offset - gain x_ref`` and the extra covariance ``cov``.
    """

    gain: np.ndarray
    offset: np.ndarray
    cov: np.ndarray
    x_ref: np.ndarray

    def corrected(self, a: np.ndarray) -> np.ndarray:
        return np.asarray(a) - self.gain

    @property
    def data(self) -> np.ndarray:
        return self.offset - self.gain @ self.x_ref


def fit_residual_model(xs: np.ndarray, rs: np.ndarray, x_ref) -> ResidualModel:
    """Least-squares fit of residual samples ``rs`` against coupling samples ``xs``.

    The conditional covariance is the residual scatter divided by
    ``S - d - 1`` (unbiased for S samples of a d-dimensional x).
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    rs = np.atleast_2d(np.asarray(rs, dtype=float))
    x_ref = np.asarray(x_ref, dtype=float).ravel()
    n_s, d = xs.shape
    if rs.shape[0] != n_s:
        raise InvalidInputError("need one residual per coupling sample")
    if n_s <= d + 1:
        raise InvalidInputError(f"need more than {d + 1} samples, got {n_s}")
    design = np.column_stack([np.ones(n_s), xs - x_ref])
    coef, *_ = np.linalg.lstsq(design, rs, rcond=None)
    resid = rs - design @ coef
    cov = resid.T @ resid / (n_s - d - 1)
    return ResidualModel(coef[1:].T.copy(), coef[0].copy(), (cov + cov.T) / 2, x_ref)


def fidelity(a, b) -> float:
    """|a.b|^2 / (|a|^2 |b|^2); invariant under rescaling either argument."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise InvalidInputError("vectors differ in length")
    na, nb = float(a @ a), float(b @ b)
    if na == 0 or nb == 0:
        raise InvalidInputError("fidelity is undefined for a zero vector")
    return min(1.0, float(a @ b) ** 2 / (na * nb))


def infidelity(a, b) -> float:
    """1 - F(a, b), computed as sin^2 of the angle from the rejection of a on b.

    Avoids the cancellation of 1 - F near F = 1.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    fidelity(a, b)  # validates shapes and norms
    bh = b / np.linalg.norm(b)
    rej = a - (a @ bh) * bh
    return min(1.0, float(rej @ rej) / float(a @ a))


def thm3_infidelity_bound(m: int, delta: float, gap: float, c_norm2: float) -> float:
    """m delta^2 / (gap ||c||_2^2) for a delta-approximate steady state."""
    if gap <= 0:
        raise InvalidInputError("gap must be positive")
    if c_norm2 <= 0 or delta < 0 or m < 1:
        raise InvalidInputError("need m >= 1, delta >= 0 and ||c||_2 > 0")
    return m * delta ** 2 / (gap * c_norm2 ** 2)


def cor1_bound(m: int, delta: float, eps: float, gap: float, c_norm1: float,
               c_norm2: float) -> float:
    """m (delta + eps ||c||_1)^2 / (gap ||c||_2^2) with |entry errors| <= eps.

    ``gap`` is the gap of the perturbed matrix.
    """
    if eps < 0 or c_norm1 < 0:
        raise InvalidInputError("need eps >= 0 and ||c||_1 >= 0")
    return thm3_infidelity_bound(m, delta + eps * c_norm1, gap, c_norm2)


def optimal_time(s: int, eta: float, h: float = 1.0) -> float:
    """t* minimizing 2 eta/(h t) + quadrature error at fixed s."""
    if s < 1 or eta <= 0 or h <= 0:
        raise InvalidInputError("need s >= 1, eta > 0 and h > 0")
    log_inner = -1.5 * log(s) + log(eta) - 2 * s - 0.5 * log(pi)
    return 4 * s * exp(log_inner / (1 + 2 * s)) / h


def error_at_optimal_time(s: int, eta: float) -> float:
    """(sqrt(pi) e^{2s} s^{3/2} eta^{2s})^{1/(1+2s)} (2s+1)/(4 s^2)."""
    if s < 1 or eta <= 0:
        raise InvalidInputError("need s >= 1 and eta > 0")
    log_inner = 0.5 * log(pi) + 2 * s + 1.5 * log(s) + 2 * s * log(eta)
    return exp(log_inner / (1 + 2 * s)) * (2 * s + 1) / (4 * s ** 2)


class Thm5Budget(NamedTuple):
    N_total: int
    s: int
    L_per_node: int
    t_star: float
    eps_sample: float


def thm5_sample_budget(m: int, k: int, eps_target: float, gap: float, delta_fail: float,
                       *, eta: float = 2.0, h: float = 1.0) -> Thm5Budget:
    """Concrete shot budget for a kernel estimate with infidelity <= eps_target.

    Uses s = ceil(7 m / sqrt(gap eps_target)) quadrature nodes, a per-node
    sampling precision 7/(2s), L = 2/(eps^2 (1-eps)) 3^(2k-1) ln(3 m' s/delta)
    shots per node with m' = m(m-1)/2 commutator entries, and the optimal
    averaging time. ``s`` is raised to at least 4 so the sampling precision
    stays below 1.
    """
    if m < 2 or k < 1:
        raise InvalidInputError("need m >= 2 and k >= 1")
    if not (0 < eps_target < 1 and 0 < delta_fail < 1):
        raise InvalidInputError("eps_target and delta_fail must lie in (0, 1)")
    if gap <= 0 or eta <= 0 or h <= 0:
        raise InvalidInputError("gap, eta and h must be positive")
    s = max(ceil(7 * m / (sqrt(gap) * sqrt(eps_target))), 4)
    eps = 7 / (2 * s)
    m_pairs = m * (m - 1) // 2
    L = ceil(2 / (eps ** 2 * (1 - eps)) * 3 ** (2 * k - 1)
             * log(3 * m_pairs * s / delta_fail))
    return Thm5Budget(s * L, s, L, optimal_time(s, eta, h), eps)


def baseline_estimate(A_noisy, c_norm: float, sign_reference=None) -> np.ndarray:
    """Least right singular vector rescaled to ``c_norm`` (best-case baseline).

    Both the norm and the sign normally come from the unknown truth, which
    makes this an optimistic comparison.
    """
    return kernel_estimate(A_noisy, norm_target=c_norm, sign_reference=sign_reference).vector


@dataclass(frozen=True, eq=False)
class EstimateReport:
    """Posterior summary for export.

    ``labels`` names each coordinate of the unknown vector.
    """

    map: np.ndarray
    covariance: np.ndarray
    labels: tuple[str, ...]
    prior_mean: np.ndarray | None = None
    truth: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_belief(cls, belief: GaussianBelief, labels: Sequence[str], *,
                    prior: GaussianBelief | None = None, truth=None) -> "EstimateReport":
        if len(labels) != belief.dim:
            raise InvalidInputError("need one label per coordinate")
        return cls(belief.mean, belief.covariance, tuple(labels),
                   None if prior is None else prior.mean,
                   None if truth is None else _frozen(truth))

    @property
    def marginals(self) -> np.ndarray:
        """(d, 2) array of (mean, 2 sigma)."""
        return np.column_stack([self.map, 2 * np.sqrt(np.diag(self.covariance))])

    @property
    def expected_error(self) -> float:
        return float(sqrt(np.trace(self.covariance)))

    @property
    def fidelity_vs_truth(self) -> float | None:
        return None if self.truth is None else fidelity(self.map, self.truth)

    def coverage(self, idx=slice(None)) -> float:
        """Fraction of coordinates whose truth lies within 2 sigma."""
        if self.truth is None:
            raise InvalidInputError("coverage needs the true vector")
        mean, two_sigma = self.marginals[idx].T
        return float(np.mean(np.abs(self.truth[idx] - mean) <= two_sigma))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["coupling_index", "pauli_string", "true_value_if_known",
                    "prior_mean", "posterior_mean", "posterior_2sigma"])
        for i, (lab, (mu, tw)) in enumerate(zip(self.labels, self.marginals)):
            w.writerow([i, lab,
                        "" if self.truth is None else repr(float(self.truth[i])),
                        "" if self.prior_mean is None else repr(float(self.prior_mean[i])),
                        repr(float(mu)), repr(float(tw))])
        return buf.getvalue()

    def covariance_csv(self) -> str:
        buf = io.StringIO()
        np.savetxt(buf, self.covariance, delimiter=",", fmt="%.17g")
        return buf.getvalue()
