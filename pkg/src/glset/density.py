"""Monte Carlo estimation of sublevel integrals and image-measure densities.

For a functional G and weight phi, the engine estimates

* ``F_phi(r) = E[phi 1_{G<r}]`` (the weighted sublevel CDF), and
* the density ``q_phi(r)`` of the signed measure ``phi mu o G^-1`` by two
  independent routes:

  divergence route
      ``q_phi(r) = E[ 1_{G<r} (phi * div_mu psi + <grad phi, psi>) ]`` with
      ``psi = grad G / |grad G|^2``; exact in expectation, needs first and
      second derivatives of G.

  mollified route
      symmetric difference quotient ``(F_phi(r+eps) - F_phi(r-eps)) / 2 eps``
      on shared samples; needs only values, carries an O(eps^2) smoothing
      bias.

One sample stream per job is reused for every grid point and both
estimators (common random numbers), which makes monotonicity in r and
linearity in phi hold sample-exactly.  Per-chunk partial sums are collected
into arrays indexed by chunk and reduced in fixed order, so results do not
depend on how many workers ran the chunks.  Standard errors come from batch
means over chunks.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .calculus import DEFAULT_GRADIENT_FLOOR, KernelField, hill_tail_index, moment_diverging
from .functionals import Constant, Functional, check_finite
from .model import CHUNK_SIZE, GaussianModel, _chunk_generator

VARIANCE_UNRELIABLE = "variance unreliable"


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("GLSET_THREADS", "1")))
    except ValueError:
        return 1


def chunk_layout(n: int, chunk_size: int = CHUNK_SIZE) -> list[tuple[int, int]]:
    """(index, size) pairs of the fixed chunking policy."""
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    out = []
    start = 0
    index = 0
    while start < n:
        size = min(chunk_size, n - start)
        out.append((index, size))
        start += size
        index += 1
    return out


def map_chunks(model: GaussianModel, n: int, seed: int, worker):
    """Run ``worker(index, points)`` over every chunk; results in index order.

    GLSET_THREADS caps concurrent workers; the result list is identical for
    any worker count because chunks are generated from per-index substreams
    and stored by index.
    """
    layout = chunk_layout(n)

    def job(item):
        index, size = item
        rng = _chunk_generator(seed, index)
        return worker(index, rng.standard_normal((size, model.dim)))

    workers = thread_count()
    if workers == 1 or len(layout) == 1:
        return [job(item) for item in layout]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, layout))


def batch_mean_stderr(sums: np.ndarray, counts: np.ndarray):
    """Mean and batch-means standard error from per-chunk sums.

    ``sums`` is (J,) or (J, R); the estimate is total/n and the error comes
    from the spread of chunk means, which stays usable when the integrand is
    heavy tailed.  With a single chunk the stderr is NaN.
    """
    sums = np.asarray(sums, dtype=float)
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    J = len(counts)
    mean = sums.sum(axis=0) / n
    if J < 2:
        return mean, np.full_like(np.atleast_1d(mean), np.nan)
    m = sums / (counts[:, None] if sums.ndim == 2 else counts)
    dev = m - mean
    sigma2 = np.sum((counts[:, None] if sums.ndim == 2 else counts) * dev * dev,
                    axis=0) / (J - 1)
    return mean, np.sqrt(sigma2 / n)


@dataclass(frozen=True)
class DensityJob:
    """One density-curve estimation task (model, G, phi, grid, budget)."""

    model: GaussianModel
    G: Functional
    phi: Functional
    r_grid: tuple[float, ...]
    n: int
    seed: int
    epsilon: float | None = None
    estimator: str = "both"
    floor: float = DEFAULT_GRADIENT_FLOOR

    def __post_init__(self):
        if len(self.r_grid) == 0:
            raise ValueError("r_grid must be nonempty")
        r = np.asarray(self.r_grid, dtype=float)
        if np.any(np.diff(r) <= 0):
            raise ValueError("r_grid must be strictly increasing")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.estimator not in ("divergence", "mollified", "both"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")


@dataclass
class DensityCurve:
    """Estimated density values on a grid, with uncertainty and provenance."""

    r: np.ndarray
    estimates: np.ndarray
    stderrs: np.ndarray
    estimator: str
    excluded_fraction: float
    n: int
    seed: int
    epsilon: float | None = None
    window_counts: np.ndarray | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.estimates) != len(self.r):
            raise ValueError("curve length must equal grid length")

    @property
    def unresolved(self) -> np.ndarray:
        """Mollified grid points whose window caught no samples."""
        if self.window_counts is None:
            return np.zeros(len(self.r), dtype=bool)
        return self.window_counts == 0


def default_bandwidth(model: GaussianModel, G: Functional, n: int, seed: int) -> float:
    """Mollification width ``max(0.01, 2 IQR(G) n^(-1/3))``.

    The IQR is taken over the first sample chunk (enough for a bandwidth);
    the n^(-1/3) factor uses the full job size.
    """
    rng = _chunk_generator(seed, 0)
    pts = rng.standard_normal((min(n, CHUNK_SIZE), model.dim))
    gv = check_finite(G.value(pts), "G", G.name)
    q25, q75 = np.quantile(gv, [0.25, 0.75])
    return float(max(0.01, 2.0 * (q75 - q25) * n ** (-1.0 / 3.0)))


class _ChunkStats:
    """Per-chunk partial sums for one evaluation pass over a job."""

    __slots__ = ("count", "div_sums", "moll_sums", "moll_counts", "cdf_sums",
                 "excl", "bottom_g", "inv_sums")

    def __init__(self):
        self.count = 0
        self.div_sums = None
        self.moll_sums = None
        self.moll_counts = None
        self.cdf_sums = None
        self.excl = 0
        self.bottom_g = None
        self.inv_sums = None


def _sorted_partials(values, weights, edges_left):
    """Sums of ``weights`` over ``{values < edge}`` for each edge.

    ``values`` must be pre-sorted with ``weights`` aligned; prefix sums make
    the result exactly monotone in the edge when weights are nonnegative.
    """
    cs = np.concatenate([[0.0], np.cumsum(weights)])
    idx = np.searchsorted(values, edges_left, side="left")
    return cs[idx], idx


def _run_pass(job: DensityJob, want_div: bool, want_moll: bool, want_cdf=None,
              epsilon: float | None = None, hill_k: int = 2000):
    """Single shared-sample pass computing every requested accumulator."""
    r = np.asarray(job.r_grid, dtype=float)
    kernel = KernelField(job.G, job.floor) if want_div else None
    phi_const = isinstance(job.phi, Constant)

    def worker(index, pts):
        st = _ChunkStats()
        st.count = pts.shape[0]
        gv = check_finite(job.G.value(pts), "G", job.G.name)
        pv = check_finite(np.broadcast_to(job.phi.value(pts), (pts.shape[0],)),
                          "phi", job.phi.name)
        order = np.argsort(gv, kind="stable")
        gs = gv[order]
        ps = pv[order]
        if want_div:
            grad = job.G.gradient(pts)
            kd, excluded = kernel.divergence(pts, grad=grad)
            integ = pv * kd
            if not phi_const:
                s = np.sum(grad * grad, axis=1)
                with np.errstate(divide="ignore", invalid="ignore"):
                    cross = np.sum(job.phi.gradient(pts) * grad, axis=1) / s
                integ = integ + np.where(excluded, 0.0, cross)
            integ = np.where(excluded, 0.0, integ)
            check_finite(integ, "divergence integrand", job.G.name)
            st.div_sums, _ = _sorted_partials(gs, integ[order], r)
            st.excl = int(np.count_nonzero(excluded))
            gnorm = np.sqrt(np.sum(grad * grad, axis=1))
            live = gnorm[~excluded]
            keep = min(len(live), hill_k + 1)
            st.bottom_g = np.partition(live, keep - 1)[:keep] if keep else live
            with np.errstate(divide="ignore", over="ignore"):
                st.inv_sums = (float(np.sum(live ** -2.0)), float(np.sum(live ** -4.0)))
        if want_moll:
            lo_sums, lo_idx = _sorted_partials(gs, ps, r - epsilon)
            hi_sums, hi_idx = _sorted_partials(gs, ps, r + epsilon)
            st.moll_sums = (hi_sums - lo_sums) / (2.0 * epsilon)
            st.moll_counts = hi_idx - lo_idx
        if want_cdf is not None:
            st.cdf_sums, _ = _sorted_partials(gs, ps, np.asarray(want_cdf, dtype=float))
        return st

    stats = map_chunks(job.model, job.n, job.seed, worker)
    counts = np.array([st.count for st in stats], dtype=float)
    out = {}

    if want_div:
        sums = np.array([st.div_sums for st in stats])
        est, se = batch_mean_stderr(sums, counts)
        excl_total = int(np.sum([st.excl for st in stats]))
        flags = []
        if not (job.G.analytic_gradient and job.phi.analytic_gradient):
            flags.append("approximate-gradient")
        bottom = np.sort(np.concatenate([st.bottom_g for st in stats]))[: hill_k + 1]
        alpha = hill_tail_index(bottom, job.n)
        if moment_diverging(alpha, 4):
            flags.append(VARIANCE_UNRELIABLE)
        out["divergence"] = DensityCurve(
            r=r, estimates=est, stderrs=se, estimator="divergence",
            excluded_fraction=excl_total / job.n, n=job.n, seed=job.seed,
            flags=tuple(flags))
    if want_moll:
        sums = np.array([st.moll_sums for st in stats])
        est, se = batch_mean_stderr(sums, counts)
        wcounts = np.sum([st.moll_counts for st in stats], axis=0)
        flags = ("unresolved-bins",) if np.any(wcounts == 0) else ()
        out["mollified"] = DensityCurve(
            r=r, estimates=est, stderrs=se, estimator="mollified",
            excluded_fraction=0.0, n=job.n, seed=job.seed, epsilon=epsilon,
            window_counts=wcounts, flags=flags)
    if want_cdf is not None:
        sums = np.array([st.cdf_sums for st in stats])
        out["cdf"] = batch_mean_stderr(sums, counts)
    return out


def estimate_density(job: DensityJob) -> dict[str, DensityCurve]:
    """Run the job's estimator(s) on one shared sample stream."""
    want_div = job.estimator in ("divergence", "both")
    want_moll = job.estimator in ("mollified", "both")
    epsilon = job.epsilon
    if want_moll and epsilon is None:
        epsilon = default_bandwidth(job.model, job.G, job.n, job.seed)
    return _run_pass(job, want_div, want_moll, epsilon=epsilon)


def density_divergence(job: DensityJob) -> DensityCurve:
    """Density curve by the divergence-formula estimator."""
    return _run_pass(replace(job, estimator="divergence"), True, False)["divergence"]


def density_mollified(job: DensityJob) -> DensityCurve:
    """Density curve by the symmetric difference quotient of the CDF."""
    epsilon = job.epsilon
    if epsilon is None:
        epsilon = default_bandwidth(job.model, job.G, job.n, job.seed)
    return _run_pass(replace(job, estimator="mollified"), False, True,
                     epsilon=epsilon)["mollified"]


def cdf_estimate(model: GaussianModel, G: Functional, phi: Functional,
                 r: float, n: int, seed: int):
    """Estimate ``F_phi(r) = E[phi 1_{G<r}]``; returns (value, stderr)."""
    job = DensityJob(model=model, G=G, phi=phi, r_grid=(float(r),), n=n,
                     seed=seed, estimator="mollified", epsilon=1.0)
    value, se = _run_pass(job, False, False, want_cdf=[float(r)])["cdf"]
    return float(value[0]), float(se[0])


@dataclass
class SmoothnessReport:
    """Finite differences of the CDF against the divergence-route density."""

    r: np.ndarray
    h: float
    fd_estimates: np.ndarray
    fd_stderrs: np.ndarray
    div_estimates: np.ndarray
    div_stderrs: np.ndarray
    max_normalized_discrepancy: float
    flags: tuple[str, ...] = ()


def smoothness_check(model: GaussianModel, G: Functional, phi: Functional,
                     r_grid, n: int, seed: int, h: float) -> SmoothnessReport:
    """Check differentiability of the weighted CDF along the grid.

    Central differences of ``F_phi`` with step h are compared against the
    divergence-route density on shared samples; the discrepancy is reported
    in combined-standard-error units.
    """
    r = np.asarray(r_grid, dtype=float)
    if h <= 0:
        raise ValueError("h must be positive")
    if len(r) > 1 and h >= np.min(np.diff(r)):
        raise ValueError("h must be smaller than the grid spacing")
    job = DensityJob(model=model, G=G, phi=phi, r_grid=tuple(r), n=n, seed=seed,
                     estimator="both", epsilon=h)
    out = _run_pass(job, True, True, epsilon=h)
    div = out["divergence"]
    fd = out["mollified"]
    band = np.sqrt(div.stderrs ** 2 + fd.stderrs ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        normalized = np.abs(fd.estimates - div.estimates) / band
    finite = normalized[np.isfinite(normalized)]
    worst = float(np.max(finite)) if len(finite) else 0.0
    return SmoothnessReport(r=r, h=h, fd_estimates=fd.estimates,
                            fd_stderrs=fd.stderrs, div_estimates=div.estimates,
                            div_stderrs=div.stderrs,
                            max_normalized_discrepancy=worst, flags=div.flags)
