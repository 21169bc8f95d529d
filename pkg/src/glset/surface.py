"""Surface measures on level sets, realized through the density functional.

The surface measure at level r is never materialized as points: integrating
a test function phi against it IS evaluating the density ``q_phi(r)``, so a
:class:`SurfaceMeasureHandle` is just (G, r) plus the estimator
configuration, and every surface operation reduces to density estimates plus
deterministic oracles:

* integration-by-parts residuals compare the sublevel integral of
  ``D_k phi - xi_k phi`` with the surface integral of ``phi D_k G``,
* traces of continuous test functions are realized as restrictions, checked
  through a clamped approximating sequence,
* on spheres and hyperplanes the measure has a closed geometric form
  (Gaussian-weighted Hausdorff measure over ``|D_H G|``), evaluated here by
  Gauss-Legendre / Gauss-Hermite product quadrature as an independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calculus import DEFAULT_GRADIENT_FLOOR
from .density import DensityCurve, DensityJob, batch_mean_stderr, map_chunks
from .functionals import (Constant, Functional, Linear, Norm2, Product,
                          ProductWithPartial, RadialClamp)
from .model import GaussianModel

QUAD_NODES = 64


@dataclass(frozen=True)
class SurfaceMeasureHandle:
    """Access to the surface measure of G at level r through an estimator.

    All integrals computed through one handle share the sample stream, so
    ``integral(1)`` equals the total mass estimate exactly.
    """

    model: GaussianModel
    G: Functional
    r: float
    n: int
    seed: int
    estimator: str = "divergence"
    epsilon: float | None = None
    floor: float = DEFAULT_GRADIENT_FLOOR

    def __post_init__(self):
        if self.estimator not in ("divergence", "mollified"):
            raise ValueError(f"handle estimator must be divergence or mollified, "
                             f"got {self.estimator!r}")

    def job(self, phi: Functional) -> DensityJob:
        return DensityJob(model=self.model, G=self.G, phi=phi,
                          r_grid=(float(self.r),), n=self.n, seed=self.seed,
                          epsilon=self.epsilon, estimator=self.estimator,
                          floor=self.floor)


def surface_integral_curve(h: SurfaceMeasureHandle, phi: Functional) -> DensityCurve:
    from .density import estimate_density

    return estimate_density(h.job(phi))[h.estimator]


def surface_integral(h: SurfaceMeasureHandle, phi: Functional):
    """``integral of phi d sigma_r = q_phi(r)``; returns (value, stderr)."""
    curve = surface_integral_curve(h, phi)
    return float(curve.estimates[0]), float(curve.stderrs[0])


# ----------------------------- integration by parts -----------------------------

@dataclass
class IbpRecord:
    """Both sides of the level-r integration-by-parts identity for (phi, k)."""

    phi_name: str
    k: int
    r: float
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float

    @property
    def residual(self) -> float:
        return self.lhs - self.rhs

    @property
    def combined_stderr(self) -> float:
        return float(np.hypot(self.lhs_stderr, self.rhs_stderr))

    @property
    def band(self) -> float:
        """Four combined standard errors; the acceptance envelope."""
        return 4.0 * self.combined_stderr

    @property
    def within_band(self) -> bool:
        return abs(self.residual) <= self.band


def _sublevel_lhs_curve(model, G, phi, k, r_grid, n, seed):
    """MC means of ``1_{G<r} (D_k phi - xi_k phi)`` over a grid, one pass."""
    from .density import _sorted_partials

    r = np.asarray(r_grid, dtype=float)

    def worker(index, pts):
        gv = G.value(pts)
        pv = phi.value(pts)
        dpk = phi.partial(pts, k)
        integ = dpk - pts[:, k - 1] * pv
        order = np.argsort(gv, kind="stable")
        sums, _ = _sorted_partials(gv[order], integ[order], r)
        return sums, pts.shape[0]

    results = map_chunks(model, n, seed, worker)
    sums = np.array([s for s, _ in results])
    counts = np.array([c for _, c in results], dtype=float)
    return batch_mean_stderr(sums, counts)


def ibp_residuals(model: GaussianModel, G: Functional, phi: Functional, k: int,
                  r_grid, n: int, seed: int, estimator: str = "divergence",
                  epsilon: float | None = None) -> list[IbpRecord]:
    """Residuals of ``E[1_{G<r}(D_k phi - xi_k phi)] = int phi D_kG d sigma_r``
    at every grid level, on shared samples."""
    if k < 1 or k > model.dim:
        raise IndexError(f"direction {k} out of range 1..{model.dim}")
    from .density import estimate_density

    lhs, lhs_se = _sublevel_lhs_curve(model, G, phi, k, r_grid, n, seed)
    rhs_job = DensityJob(model=model, G=G, phi=ProductWithPartial(phi, G, k),
                         r_grid=tuple(float(r) for r in r_grid), n=n, seed=seed,
                         epsilon=epsilon, estimator=estimator)
    rhs = estimate_density(rhs_job)[estimator]
    return [IbpRecord(phi_name=phi.name, k=k, r=float(r), lhs=float(l),
                      lhs_stderr=float(ls), rhs=float(rv), rhs_stderr=float(rs))
            for r, l, ls, rv, rs in zip(rhs.r, np.atleast_1d(lhs),
                                        np.atleast_1d(lhs_se), rhs.estimates,
                                        rhs.stderrs)]


def ibp_residual(h: SurfaceMeasureHandle, phi: Functional, k: int) -> IbpRecord:
    """Single-level integration-by-parts residual through a handle."""
    return ibp_residuals(h.model, h.G, phi, k, (h.r,), h.n, h.seed,
                         estimator=h.estimator, epsilon=h.epsilon)[0]


@dataclass
class PerimeterRecord:
    """The k-th component identity of the perimeter measure of ``{G < r}``.

    Same numbers as the integration-by-parts residual, reframed: the
    sublevel side is the k-th component of the measure derivative of the
    indicator, the surface side is the flux ``phi D_k G`` through the level
    set.
    """

    component: int
    r: float
    sublevel_side: float
    surface_flux: float
    residual: float
    band: float
    within_band: bool


def perimeter_identity_check(h: SurfaceMeasureHandle, phi: Functional,
                             k: int) -> PerimeterRecord:
    rec = ibp_residual(h, phi, k)
    return PerimeterRecord(component=k, r=h.r, sublevel_side=rec.lhs,
                           surface_flux=rec.rhs, residual=rec.residual,
                           band=rec.band, within_band=rec.within_band)


# ----------------------------- traces -----------------------------

@dataclass
class TraceReport:
    """Convergence of clamped truncations ``phi_m = phi * clamp_m`` to phi.

    Continuous test functions trace to their restriction on the level set,
    so the surface integrals of the truncations must approach the surface
    integral of phi itself; once the clamp saturates on every sample the
    difference is sample-exactly zero.
    """

    phi_name: str
    r: float
    target: float
    target_stderr: float
    levels: tuple[float, ...]
    estimates: tuple[float, ...]
    stderrs: tuple[float, ...]
    diffs: tuple[float, ...]

    @property
    def converged(self) -> bool:
        band = 4.0 * float(np.hypot(self.target_stderr, self.stderrs[-1]))
        return abs(self.diffs[-1]) <= band

    @property
    def exact_tail(self) -> bool:
        return self.diffs[-1] == 0.0


def trace_eval(h: SurfaceMeasureHandle, phi: Functional,
               clamp_levels=(1.0, 2.0, 3.0, 4.0, 6.0, 8.0)) -> TraceReport:
    target, target_se = surface_integral(h, phi)
    ests, ses, diffs = [], [], []
    for m in clamp_levels:
        est, se = surface_integral(h, Product(phi, RadialClamp(m)))
        ests.append(est)
        ses.append(se)
        diffs.append(abs(est - target))
    return TraceReport(phi_name=phi.name, r=h.r, target=target,
                       target_stderr=target_se, levels=tuple(clamp_levels),
                       estimates=tuple(ests), stderrs=tuple(ses),
                       diffs=tuple(diffs))


# ----------------------------- positivity interval -----------------------------

@dataclass
class PositivityReport:
    """Where the total-mass density is detectably positive along a grid.

    The density of the image measure is positive exactly strictly between
    the essential bounds of G; the report flags interior grid points that
    are not detectably positive and exterior points that are.
    """

    r: np.ndarray
    estimates: np.ndarray
    stderrs: np.ndarray
    g_min: float
    g_max: float
    interior_not_positive: tuple[float, ...]
    exterior_positive: tuple[float, ...]
    estimator: str

    @property
    def consistent(self) -> bool:
        return not self.interior_not_positive and not self.exterior_positive


def positivity_scan(model: GaussianModel, G: Functional, r_grid, n: int, seed: int,
                    estimator: str = "divergence",
                    epsilon: float | None = None) -> PositivityReport:
    from .density import estimate_density

    job = DensityJob(model=model, G=G, phi=Constant(1.0), r_grid=tuple(r_grid),
                     n=n, seed=seed, epsilon=epsilon, estimator=estimator)
    curve = estimate_density(job)[estimator]

    def worker(index, pts):
        gv = G.value(pts)
        return float(np.min(gv)), float(np.max(gv))

    extremes = map_chunks(model, n, seed, worker)
    g_min = min(lo for lo, _ in extremes)
    g_max = max(hi for _, hi in extremes)

    interior_bad, exterior_bad = [], []
    for r, est, se in zip(curve.r, curve.estimates, curve.stderrs):
        positive = est > 4.0 * se
        if g_min < r < g_max and not positive:
            interior_bad.append(float(r))
        elif (r <= g_min or r >= g_max) and positive:
            exterior_bad.append(float(r))
    return PositivityReport(r=curve.r, estimates=curve.estimates,
                            stderrs=curve.stderrs, g_min=g_min, g_max=g_max,
                            interior_not_positive=tuple(interior_bad),
                            exterior_positive=tuple(exterior_bad),
                            estimator=estimator)


# ----------------------------- Hausdorff oracle -----------------------------

def _gl_nodes(a: float, b: float, m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def unit_sphere_grid(d: int, nodes: int = QUAD_NODES):
    """Product quadrature grid on the unit sphere in R^d.

    Returns (points, weights) with ``sum(weights)`` the sphere area.  The
    grid has ``2`` points for d=1 and ``nodes^(d-1)`` otherwise; callers
    wanting d > 4 should iterate :func:`sphere_blocks` instead of holding
    the product in memory.
    """
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        th, w = _gl_nodes(0.0, 2.0 * np.pi, nodes)
        return np.stack([np.cos(th), np.sin(th)], axis=1), w
    sub_pts, sub_w = unit_sphere_grid(d - 1, nodes)
    th, w = _gl_nodes(0.0, np.pi, nodes)
    m = len(sub_w)
    pts = np.empty((nodes * m, d))
    pts[:, 0] = np.repeat(np.cos(th), m)
    pts[:, 1:] = np.repeat(np.sin(th), m)[:, None] * np.tile(sub_pts, (nodes, 1))
    weights = np.repeat(w * np.sin(th) ** (d - 2), m) * np.tile(sub_w, nodes)
    return pts, weights


def sphere_blocks(d: int, nodes: int = QUAD_NODES):
    """Yield (points, weights) blocks covering the unit sphere in R^d."""
    if d <= 4:
        yield unit_sphere_grid(d, nodes)
        return
    th, w = _gl_nodes(0.0, np.pi, nodes)
    for i in range(nodes):
        for sub_pts, sub_w in sphere_blocks(d - 1, nodes):
            pts = np.empty((len(sub_w), d))
            pts[:, 0] = np.cos(th[i])
            pts[:, 1:] = np.sin(th[i]) * sub_pts
            yield pts, w[i] * np.sin(th[i]) ** (d - 2) * sub_w


def sphere_quadrature(phi: Functional, d: int, r: float,
                      nodes: int = QUAD_NODES) -> float:
    """Surface integral of phi against sigma_r for ``G = norm2``.

    On the sphere of radius sqrt(r) the measure is the Gaussian-weighted
    Hausdorff measure divided by ``|D_H G| = 2 sqrt(r)``, all constant:
    ``(2 pi)^(-d/2) exp(-r/2) / (2 sqrt(r)) * surface integral of phi``.
    """
    if r <= 0:
        raise ValueError("sphere level must be positive")
    R = np.sqrt(r)
    const = (2.0 * np.pi) ** (-d / 2.0) * np.exp(-r / 2.0) / (2.0 * R)
    total = 0.0
    for pts, w in sphere_blocks(d, nodes):
        total += float(np.sum(w * phi.value(R * pts)))
    return const * R ** (d - 1) * total


def _householder_complement(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the hyperplane orthogonal to the unit vector u."""
    d = len(u)
    e1 = np.zeros(d)
    e1[0] = 1.0
    v = e1 - u
    nv = np.linalg.norm(v)
    if nv < 1e-14:
        return np.eye(d)[:, 1:]
    v /= nv
    H = np.eye(d) - 2.0 * np.outer(v, v)
    return H[:, 1:]


def hyperplane_blocks(dim_free: int, nodes: int = QUAD_NODES):
    """Yield (y, w) blocks for the standard Gaussian integral over R^dim_free.

    Gauss-Hermite with the probabilists' substitution: sum of
    ``w * f(y)`` approximates ``integral f(y) (2 pi)^(-k/2) e^(-|y|^2/2) dy``.
    """
    t, wt = np.polynomial.hermite.hermgauss(nodes)
    y1 = np.sqrt(2.0) * t
    w1 = wt / np.sqrt(np.pi)
    if dim_free == 0:
        yield np.zeros((1, 0)), np.ones(1)
        return
    inner = min(dim_free, 3)
    grids = np.meshgrid(*([y1] * inner), indexing="ij")
    pts_inner = np.stack([g.ravel() for g in grids], axis=1)
    w_inner = np.prod(np.stack(np.meshgrid(*([w1] * inner), indexing="ij"), axis=0),
                      axis=0).ravel()
    outer = dim_free - inner
    if outer == 0:
        yield pts_inner, w_inner
        return
    for idx in np.ndindex(*(nodes,) * outer):
        y_out = np.array([y1[i] for i in idx])
        w_out = float(np.prod([w1[i] for i in idx]))
        pts = np.empty((len(w_inner), dim_free))
        pts[:, :outer] = y_out
        pts[:, outer:] = pts_inner
        yield pts, w_out * w_inner


def hyperplane_quadrature(phi: Functional, weights: np.ndarray, d: int, r: float,
                          nodes: int = QUAD_NODES) -> float:
    """Surface integral of phi against sigma_r for linear ``G = w . xi``.

    The level set is the hyperplane ``{w . xi = r}``; the measure is the
    (d-1)-dimensional Gaussian there, scaled by the normal-direction density
    and divided by the constant gradient norm ``|w|``.
    """
    w = np.zeros(d)
    w[: len(weights)] = weights
    wn = np.linalg.norm(w)
    if wn == 0.0:
        raise ValueError("hyperplane quadrature needs a nonzero linear functional")
    u = w / wn
    base = (r / wn) * u
    U = _householder_complement(u)
    normal_density = np.exp(-0.5 * (r / wn) ** 2) / np.sqrt(2.0 * np.pi)
    total = 0.0
    for y, wq in hyperplane_blocks(d - 1, nodes):
        pts = base[None, :] + y @ U.T
        total += float(np.sum(wq * phi.value(pts)))
    return normal_density / wn * total


@dataclass
class HausdorffRecord:
    """Monte Carlo surface integral against its deterministic quadrature value."""

    g_name: str
    phi_name: str
    r: float
    geometry: str
    mc_value: float
    mc_stderr: float
    quad_value: float
    nodes: int

    @property
    def abs_error(self) -> float:
        return abs(self.mc_value - self.quad_value)

    @property
    def rel_error(self) -> float:
        scale = max(abs(self.quad_value), 1e-300)
        return self.abs_error / scale

    @property
    def within_tolerance(self) -> bool:
        """Relative error within max(1%, 4 relative standard errors)."""
        scale = max(abs(self.quad_value), 1e-300)
        return self.rel_error <= max(0.01, 4.0 * self.mc_stderr / scale)


def hausdorff_compare(h: SurfaceMeasureHandle, phi: Functional,
                      nodes: int = QUAD_NODES) -> HausdorffRecord:
    """Compare a surface integral with exact quadrature of the weighted
    Hausdorff form; only spheres (norm2) and hyperplanes (linear G)."""
    d = h.model.dim
    if d > 6:
        raise ValueError("quadrature oracle supports d <= 6")
    if isinstance(h.G, Norm2):
        quad = sphere_quadrature(phi, d, h.r, nodes)
        geometry = "sphere"
    elif isinstance(h.G, Linear):
        quad = hyperplane_quadrature(phi, h.G.weights, d, h.r, nodes)
        geometry = "hyperplane"
    else:
        raise ValueError(f"no quadrature oracle for G={h.G.name!r}")
    mc, mc_se = surface_integral(h, phi)
    return HausdorffRecord(g_name=h.G.name, phi_name=phi.name, r=h.r,
                           geometry=geometry, mc_value=mc, mc_stderr=mc_se,
                           quad_value=quad, nodes=nodes)


# ----------------------------- aggregate report -----------------------------

@dataclass
class SurfaceReport:
    """Everything measured about one surface measure handle."""

    r: float
    g_name: str
    n: int
    seed: int
    estimator: str
    total_mass: float
    total_mass_stderr: float
    excluded_fraction: float
    integrals: dict = field(default_factory=dict)
    ibp: list = field(default_factory=list)
    trace: TraceReport | None = None
    hausdorff: HausdorffRecord | None = None
    flags: tuple[str, ...] = ()


def surface_report(h: SurfaceMeasureHandle, phis: list[Functional],
                   k_list=(), with_trace=False, with_hausdorff=False) -> SurfaceReport:
    mass_curve = surface_integral_curve(h, Constant(1.0))
    report = SurfaceReport(
        r=h.r, g_name=h.G.name, n=h.n, seed=h.seed, estimator=h.estimator,
        total_mass=float(mass_curve.estimates[0]),
        total_mass_stderr=float(mass_curve.stderrs[0]),
        excluded_fraction=mass_curve.excluded_fraction, flags=mass_curve.flags)
    for phi in phis:
        report.integrals[phi.name] = surface_integral(h, phi)
        for k in k_list:
            report.ibp.append(ibp_residual(h, phi, k))
    if with_trace and phis:
        report.trace = trace_eval(h, phis[0])
    if with_hausdorff:
        report.hausdorff = hausdorff_compare(h, phis[0] if phis else Constant(1.0))
    return report
