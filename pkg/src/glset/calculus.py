"""H-differential calculus: gradients, the Gaussian divergence, and the
kernel field ``psi = D_H G / |D_H G|^2``.

In whitened coordinates the Gaussian divergence of a field Psi is

    div_mu Psi = sum_k (D_k psi_k - xi_k psi_k),

the negative formal adjoint of the H-gradient.  For the kernel field of a
functional G the divergence expands, writing g = grad G, H = Hessian and
S = |g|^2, to the composite form

    div_mu psi = (lap G - xi.g) / S - 2 (g^T H g) / S^2,

which needs one fewer differentiation level than differentiating psi
directly and is what the density estimators evaluate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .functionals import Functional, VectorField, check_finite
from .model import GaussianModel, iter_sample_chunks

DEFAULT_GRADIENT_FLOOR = 1e-12


def h_gradient(f: Functional, xi):
    """H-gradient of f at a point or batch (coefficient rows w.r.t. {v_k})."""
    batch = np.atleast_2d(np.asarray(xi, dtype=float))
    g = f.gradient(batch)
    return g[0] if np.asarray(xi).ndim == 1 else g


def divergence_mu(field: VectorField, xi):
    """Gaussian divergence ``sum_k (D_k psi_k - xi_k psi_k)`` at a point or batch."""
    batch = np.atleast_2d(np.asarray(xi, dtype=float))
    comp = field.components(batch)
    diag = field.jacobian_diag(batch)
    div = np.sum(diag, axis=1) - np.sum(batch * comp, axis=1)
    return float(div[0]) if np.asarray(xi).ndim == 1 else div


class GradientTooSmall(ValueError):
    """Single-point kernel query below the gradient-norm floor."""


class KernelField:
    """The field ``psi = D_H G / |D_H G|^2`` with a gradient-norm floor.

    Points where ``|D_H G| < floor`` cannot be evaluated stably; batch
    queries exclude them (and report the count), single-point queries raise
    :class:`GradientTooSmall`.
    """

    def __init__(self, G: Functional, floor: float = DEFAULT_GRADIENT_FLOOR):
        if floor <= 0:
            raise ValueError("gradient floor must be positive")
        self.G = G
        self.floor = float(floor)

    def components_and_exclusions(self, xi, grad=None):
        g = self.G.gradient(xi) if grad is None else grad
        s = np.sum(g * g, axis=1)
        excluded = s < self.floor * self.floor
        with np.errstate(divide="ignore", invalid="ignore"):
            psi = g / s[:, None]
        psi[excluded] = 0.0
        return psi, excluded

    def divergence(self, xi, grad=None):
        """Composite-formula divergence over a batch.

        Returns ``(values, excluded)``; excluded rows carry 0 and are counted
        by the caller.
        """
        g = self.G.gradient(xi) if grad is None else grad
        s = np.sum(g * g, axis=1)
        excluded = s < self.floor * self.floor
        lap = self.G.laplacian(xi)
        quad = self.G.hessian_quad(xi, g)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (lap - np.sum(xi * g, axis=1)) / s - 2.0 * quad / (s * s)
        val = np.where(excluded, 0.0, val)
        check_finite(val[~excluded] if excluded.any() else val,
                     "kernel divergence", self.G.name)
        return val, excluded

    def divergence_at(self, xi_point) -> float:
        xi = np.atleast_2d(np.asarray(xi_point, dtype=float))
        val, excluded = self.divergence(xi)
        if excluded[0]:
            raise GradientTooSmall(
                f"|D_H {self.G.name}| below floor {self.floor} at query point")
        return float(val[0])


def kernel_divergence(G: Functional, xi, floor: float = DEFAULT_GRADIENT_FLOOR):
    """Convenience wrapper: ``div_mu(D_H G/|D_H G|^2)`` at a point or batch."""
    kf = KernelField(G, floor)
    arr = np.asarray(xi, dtype=float)
    if arr.ndim == 1:
        return kf.divergence_at(arr)
    return kf.divergence(arr)


# ----------------------------- tail diagnostics -----------------------------

def hill_tail_index(smallest_gnorms: np.ndarray, n_total: int) -> float:
    """Tail index of ``1/|D_H G|`` from the k+1 smallest gradient norms.

    Hill estimator on the upper order statistics of ``X = 1/|grad|``:
    ``alpha = k / sum_i log(X_(i) / X_(k+1))``.  ``inf`` means no detectable
    power tail (e.g. constant gradients); values <= q mean the q-th inverse
    moment diverges.
    """
    g = np.sort(np.asarray(smallest_gnorms, dtype=float))
    if len(g) < 3:
        return np.inf
    k = len(g) - 1
    if g[0] <= 0.0:
        return 0.0
    logs = np.log(g[k] / g[:k])
    s = float(np.sum(logs))
    if s <= 0.0:
        return np.inf
    return k / s


# Divergence is declared when the estimated tail index sits at or below the
# moment order, with a margin for estimator noise and boundary (log) cases.
HILL_MARGIN = 1.15


def moment_diverging(hill_alpha: float, q: float) -> bool:
    return hill_alpha <= HILL_MARGIN * q


@dataclass
class InverseMomentDiag:
    q: float
    estimate: float
    stderr: float
    diverging: bool


@dataclass
class HypothesisReport:
    """Monte Carlo moment diagnostics for the kernel-field hypothesis.

    The analytic sufficient condition asks for Sobolev regularity of G plus
    an integrable inverse gradient norm; neither has a finite-sample
    certificate, so this report estimates the configured moments of
    ``|D_H G|`` and flags inverse moments whose tail index says they do not
    exist.  ``variance_unreliable`` is the consumer-facing summary: the
    divergence-estimator integrand has infinite variance when the fourth
    inverse moment diverges.
    """

    g_name: str
    n: int
    seed: int
    pos_moments: dict = field(default_factory=dict)
    inv_moments: dict = field(default_factory=dict)
    hill_alpha: float = np.inf
    hill_k: int = 0
    floor_exclusions: int = 0

    @property
    def variance_unreliable(self) -> bool:
        diag = self.inv_moments.get(4)
        return diag.diverging if diag is not None else False

    def summary(self) -> str:
        parts = [f"G={self.g_name}", f"n={self.n}", f"hill_alpha={self.hill_alpha:.3g}"]
        for q, diag in sorted(self.inv_moments.items()):
            tag = "diverging" if diag.diverging else f"{diag.estimate:.6g}"
            parts.append(f"E|grad|^-{q}={tag}")
        if self.variance_unreliable:
            parts.append("variance unreliable")
        return "  ".join(parts)


class TailAccumulator:
    """Streaming bottom-k gradient norms plus inverse-power sums."""

    def __init__(self, k: int, inv_orders=(1, 2, 4)):
        self.k = k
        self.inv_orders = tuple(inv_orders)
        self.bottom = np.empty(0)
        self.sums = {q: [] for q in self.inv_orders}
        self.sumsq = {q: [] for q in self.inv_orders}
        self.counts = []

    def update(self, gnorm: np.ndarray, excluded: np.ndarray):
        live = gnorm[~excluded] if excluded.any() else gnorm
        merged = np.concatenate([self.bottom, live])
        if len(merged) > self.k + 1:
            merged = np.partition(merged, self.k)[: self.k + 1]
        self.bottom = merged
        self.counts.append(len(live))
        for q in self.inv_orders:
            with np.errstate(divide="ignore", over="ignore"):
                x = live ** (-float(q))
            self.sums[q].append(float(np.sum(x)))
            self.sumsq[q].append(float(np.sum(x * x)))

    def finish(self, n_total: int) -> tuple[float, dict]:
        alpha = hill_tail_index(self.bottom, n_total)
        out = {}
        n_live = int(np.sum(self.counts))
        for q in self.inv_orders:
            total = float(np.sum(self.sums[q]))
            est = total / n_live if n_live else np.nan
            var = float(np.sum(self.sumsq[q])) / n_live - est * est if n_live else np.nan
            se = np.sqrt(max(var, 0.0) / n_live) if n_live else np.nan
            out[q] = InverseMomentDiag(q=q, estimate=est, stderr=se,
                                       diverging=moment_diverging(alpha, q))
        return alpha, out


def hypothesis_diagnostics(G: Functional, model: GaussianModel, n: int, seed: int,
                           pos_orders=(1, 2), inv_orders=(1, 2, 4),
                           floor: float = DEFAULT_GRADIENT_FLOOR,
                           hill_k: int | None = None) -> HypothesisReport:
    """Estimate moments of ``|D_H G|`` and flag diverging inverse moments."""
    k_hill = hill_k if hill_k is not None else max(100, min(2000, n // 100))
    tail = TailAccumulator(k_hill, inv_orders)
    pos_sums = {a: 0.0 for a in pos_orders}
    excl = 0
    for _, pts in iter_sample_chunks(model, n, seed):
        g = G.gradient(pts)
        gnorm = np.sqrt(np.sum(g * g, axis=1))
        check_finite(gnorm, "gradient norm", G.name)
        excluded = gnorm < floor
        excl += int(np.count_nonzero(excluded))
        tail.update(gnorm, excluded)
        for a in pos_orders:
            pos_sums[a] += float(np.sum(gnorm ** float(a)))
    alpha, inv = tail.finish(n)
    report = HypothesisReport(
        g_name=G.name, n=n, seed=seed,
        pos_moments={a: pos_sums[a] / n for a in pos_orders},
        inv_moments=inv, hill_alpha=alpha, hill_k=k_hill, floor_exclusions=excl)
    return report
