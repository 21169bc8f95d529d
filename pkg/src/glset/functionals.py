"""Scalar functionals and H-vector fields on whitened coordinates.

A functional evaluates on batches: ``value(xi)`` maps an ``(n, d)`` array of
points to an ``(n,)`` array.  Analytic derivative callbacks are optional;
anything missing falls back to central finite differences with per-coordinate
step ``fd_step * (1 + |xi_k|)`` (Hessian quantities via nested central
differences).  Oracles must be pure so they can be evaluated concurrently and
re-evaluated chunk by chunk.
"""

from __future__ import annotations

import numpy as np


class NumericalFault(ArithmeticError):
    """A functional or field produced a non-finite value during estimation."""

    def __init__(self, message, context=""):
        super().__init__(message if not context else f"{context}: {message}")
        self.context = context


def check_finite(values: np.ndarray, what: str, context: str = ""):
    if not np.all(np.isfinite(values)):
        bad = int(np.count_nonzero(~np.isfinite(np.atleast_1d(values))))
        raise NumericalFault(f"{what} returned {bad} non-finite value(s)", context)
    return values


def _as_batch(xi) -> tuple[np.ndarray, bool]:
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        return xi[None, :], True
    return xi, False


# ----------------------------- finite differences -----------------------------

def fd_partial(value, xi, k, step):
    """Central difference of a batch functional along coordinate k (1-based)."""
    h = step * (1.0 + np.abs(xi[:, k - 1]))
    hi = xi.copy()
    hi[:, k - 1] += h
    lo = xi.copy()
    lo[:, k - 1] -= h
    return (value(hi) - value(lo)) / (2.0 * h)


def fd_gradient(value, xi, step):
    d = xi.shape[1]
    out = np.empty_like(xi)
    for k in range(1, d + 1):
        out[:, k - 1] = fd_partial(value, xi, k, step)
    return out


def fd_second_diag(value, xi, k, step):
    h = step * (1.0 + np.abs(xi[:, k - 1]))
    hi = xi.copy()
    hi[:, k - 1] += h
    lo = xi.copy()
    lo[:, k - 1] -= h
    return (value(hi) - 2.0 * value(xi) + value(lo)) / (h * h)


# ----------------------------- scalar functionals -----------------------------

class Functional:
    """Base scalar functional; override ``value`` and any analytic derivatives.

    ``analytic_gradient`` marks gradients as exact; estimators flag curves
    built from finite-difference gradients as approximate.
    """

    name = "f"
    analytic_gradient = False
    min_dim = 1
    fd_step = 1e-5

    def value(self, xi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, xi: np.ndarray) -> np.ndarray:
        return fd_gradient(self.value, xi, self.fd_step)

    def partial(self, xi: np.ndarray, k: int) -> np.ndarray:
        return fd_partial(self.value, xi, k, self.fd_step)

    def laplacian(self, xi: np.ndarray) -> np.ndarray:
        out = np.zeros(xi.shape[0])
        for k in range(1, xi.shape[1] + 1):
            out += fd_second_diag(self.value, xi, k, self.fd_step)
        return out

    def hessian_quad(self, xi: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Quadratic form ``w^T (D^2 f) w`` row-wise, by nested differences."""
        norm = np.sqrt(np.sum(w * w, axis=1))
        safe = np.where(norm > 0.0, norm, 1.0)
        u = w / safe[:, None]
        h = self.fd_step
        g_hi = self.gradient(xi + h * u)
        g_lo = self.gradient(xi - h * u)
        dir2 = np.sum((g_hi - g_lo) * u, axis=1) / (2.0 * h)
        return dir2 * norm * norm

    def hessian_row(self, xi: np.ndarray, k: int) -> np.ndarray:
        """Row k of the Hessian, ``(D^2 f)[k, :]``, by nested differences."""
        h = self.fd_step * (1.0 + np.abs(xi[:, k - 1]))
        hi = xi.copy()
        hi[:, k - 1] += h
        lo = xi.copy()
        lo[:, k - 1] -= h
        return (self.gradient(hi) - self.gradient(lo)) / (2.0 * h[:, None])

    def __call__(self, xi):
        batch, single = _as_batch(xi)
        v = self.value(batch)
        return float(v[0]) if single else v

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class UserFunctional(Functional):
    """Wrap plain vectorized callbacks ``eval``/``grad``/``hess`` into an oracle."""

    def __init__(self, eval, grad=None, hess=None, fd_step=1e-5, name="user"):
        self._eval = eval
        self._grad = grad
        self._hess = hess
        self.fd_step = fd_step
        self.name = name
        self.analytic_gradient = grad is not None

    def value(self, xi):
        return np.asarray(self._eval(xi), dtype=float)

    def gradient(self, xi):
        if self._grad is None:
            return super().gradient(xi)
        return np.asarray(self._grad(xi), dtype=float)

    def partial(self, xi, k):
        if self._grad is None:
            return super().partial(xi, k)
        return self.gradient(xi)[:, k - 1]

    def hessian(self, xi):
        return np.asarray(self._hess(xi), dtype=float)

    def laplacian(self, xi):
        if self._hess is None:
            return super().laplacian(xi)
        return np.trace(self.hessian(xi), axis1=1, axis2=2)

    def hessian_quad(self, xi, w):
        if self._hess is None:
            return super().hessian_quad(xi, w)
        return np.einsum("ni,nij,nj->n", w, self.hessian(xi), w)

    def hessian_row(self, xi, k):
        if self._hess is None:
            return super().hessian_row(xi, k)
        return self.hessian(xi)[:, k - 1, :]


class Constant(Functional):
    analytic_gradient = True

    def __init__(self, c: float):
        self.c = float(c)
        self.name = repr(self.c)

    def value(self, xi):
        return np.full(xi.shape[0], self.c)

    def gradient(self, xi):
        return np.zeros_like(xi)

    def partial(self, xi, k):
        return np.zeros(xi.shape[0])

    def laplacian(self, xi):
        return np.zeros(xi.shape[0])

    def hessian_quad(self, xi, w):
        return np.zeros(xi.shape[0])

    def hessian_row(self, xi, k):
        return np.zeros_like(xi)


class Linear(Functional):
    """``f(xi) = w . xi`` for a fixed weight row."""

    analytic_gradient = True

    def __init__(self, weights, name=None):
        self.weights = np.asarray(weights, dtype=float)
        if self.weights.ndim != 1:
            raise ValueError("weights must be a flat vector")
        self.min_dim = len(self.weights)
        self.name = name or f"linear({', '.join(repr(float(w)) for w in self.weights)})"

    def value(self, xi):
        return xi[:, : len(self.weights)] @ self.weights

    def gradient(self, xi):
        g = np.zeros_like(xi)
        g[:, : len(self.weights)] = self.weights
        return g

    def partial(self, xi, k):
        w = self.weights[k - 1] if k <= len(self.weights) else 0.0
        return np.full(xi.shape[0], w)

    def laplacian(self, xi):
        return np.zeros(xi.shape[0])

    def hessian_quad(self, xi, w):
        return np.zeros(xi.shape[0])

    def hessian_row(self, xi, k):
        return np.zeros_like(xi)


class Coordinate(Linear):
    """``f(xi) = xi_k`` (1-based index)."""

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("coordinate index is 1-based")
        w = np.zeros(k)
        w[k - 1] = 1.0
        super().__init__(w, name=f"coordinate({k})")
        self.k = k


class Norm2(Functional):
    """Squared Euclidean norm of the whitened point, ``sum_k xi_k^2``."""

    analytic_gradient = True
    name = "norm2"

    def value(self, xi):
        return np.sum(xi * xi, axis=1)

    def gradient(self, xi):
        return 2.0 * xi

    def partial(self, xi, k):
        return 2.0 * xi[:, k - 1]

    def laplacian(self, xi):
        return np.full(xi.shape[0], 2.0 * xi.shape[1])

    def hessian_quad(self, xi, w):
        # D^2 = 2 I
        return 2.0 * np.sum(w * w, axis=1)

    def hessian_row(self, xi, k):
        row = np.zeros_like(xi)
        row[:, k - 1] = 2.0
        return row


class BmEndpoint(Linear):
    """Path value at t=1 of a Karhunen-Loeve model: a linear functional."""

    def __init__(self, model):
        from .model import endpoint_weights

        super().__init__(endpoint_weights(model), name="bm_endpoint")
        self.model = model


class LinearCombination(Functional):
    """``a*f + b*g + ...`` with derivatives delegated to the terms."""

    def __init__(self, terms, name=None):
        self.terms = [(float(a), f) for a, f in terms]
        self.analytic_gradient = all(f.analytic_gradient for _, f in self.terms)
        self.min_dim = max(f.min_dim for _, f in self.terms)
        self.name = name or " + ".join(f"{a}*{f.name}" for a, f in self.terms)

    def value(self, xi):
        out = np.zeros(xi.shape[0])
        for a, f in self.terms:
            out += a * f.value(xi)
        return out

    def gradient(self, xi):
        out = np.zeros_like(xi)
        for a, f in self.terms:
            out += a * f.gradient(xi)
        return out

    def partial(self, xi, k):
        out = np.zeros(xi.shape[0])
        for a, f in self.terms:
            out += a * f.partial(xi, k)
        return out

    def laplacian(self, xi):
        out = np.zeros(xi.shape[0])
        for a, f in self.terms:
            out += a * f.laplacian(xi)
        return out

    def hessian_quad(self, xi, w):
        out = np.zeros(xi.shape[0])
        for a, f in self.terms:
            out += a * f.hessian_quad(xi, w)
        return out

    def hessian_row(self, xi, k):
        out = np.zeros_like(xi)
        for a, f in self.terms:
            out += a * f.hessian_row(xi, k)
        return out


class RadialClamp(Functional):
    """Lipschitz radial cutoff: 1 for ``|xi| <= m``, 0 for ``|xi| >= 2m``.

    ``clamp_m(xi) = clip(2 - |xi|/m, 0, 1)``; used as the builtin mollified
    truncation sequence in trace diagnostics.
    """

    analytic_gradient = True

    def __init__(self, m: float):
        if m <= 0:
            raise ValueError("clamp radius must be positive")
        self.m = float(m)
        self.name = f"clamp({self.m!r})"

    def value(self, xi):
        r = np.sqrt(np.sum(xi * xi, axis=1))
        return np.clip(2.0 - r / self.m, 0.0, 1.0)

    def gradient(self, xi):
        r = np.sqrt(np.sum(xi * xi, axis=1))
        on_ramp = (r > self.m) & (r < 2.0 * self.m)
        scale = np.where(on_ramp, -1.0 / (self.m * np.maximum(r, 1e-300)), 0.0)
        return xi * scale[:, None]

    def partial(self, xi, k):
        return self.gradient(xi)[:, k - 1]


class SublevelBump(Functional):
    """Ramp supported in a sublevel set of another functional.

    ``phi = clip((c - G)/delta, 0, 1)`` equals 1 on ``{G <= c - delta}`` and
    vanishes on ``{G >= c}``; handy for support checks of surface integrals.
    """

    def __init__(self, G: Functional, c: float, delta: float):
        if delta <= 0:
            raise ValueError("ramp width must be positive")
        self.G = G
        self.c = float(c)
        self.delta = float(delta)
        self.analytic_gradient = G.analytic_gradient
        self.min_dim = G.min_dim
        self.name = f"bump({G.name}<{self.c!r})"

    def value(self, xi):
        return np.clip((self.c - self.G.value(xi)) / self.delta, 0.0, 1.0)

    def gradient(self, xi):
        g = self.G.value(xi)
        on_ramp = (g > self.c - self.delta) & (g < self.c)
        scale = np.where(on_ramp, -1.0 / self.delta, 0.0)
        return self.G.gradient(xi) * scale[:, None]

    def partial(self, xi, k):
        return self.gradient(xi)[:, k - 1]


class Product(Functional):
    """Pointwise product ``f * g`` with product-rule derivatives."""

    def __init__(self, f: Functional, g: Functional, name=None):
        self.f = f
        self.g = g
        self.analytic_gradient = f.analytic_gradient and g.analytic_gradient
        self.min_dim = max(f.min_dim, g.min_dim)
        self.name = name or f"({f.name})*({g.name})"

    def value(self, xi):
        return self.f.value(xi) * self.g.value(xi)

    def gradient(self, xi):
        fv = self.f.value(xi)
        gv = self.g.value(xi)
        return self.f.gradient(xi) * gv[:, None] + self.g.gradient(xi) * fv[:, None]

    def partial(self, xi, k):
        return (self.f.partial(xi, k) * self.g.value(xi)
                + self.g.partial(xi, k) * self.f.value(xi))


class ProductWithPartial(Functional):
    """``phi * D_k G``: the test function appearing on the surface side of
    the integration-by-parts residual.

    Gradient by the product rule; the ``D(D_k G)`` factor is row k of G's
    Hessian.
    """

    def __init__(self, phi: Functional, G: Functional, k: int):
        self.phi = phi
        self.G = G
        self.k = int(k)
        self.analytic_gradient = phi.analytic_gradient and G.analytic_gradient
        self.min_dim = max(phi.min_dim, G.min_dim, k)
        self.name = f"({phi.name})*D{k}({G.name})"

    def value(self, xi):
        return self.phi.value(xi) * self.G.partial(xi, self.k)

    def gradient(self, xi):
        dk = self.G.partial(xi, self.k)
        pv = self.phi.value(xi)
        return (self.phi.gradient(xi) * dk[:, None]
                + self.G.hessian_row(xi, self.k) * pv[:, None])

    def partial(self, xi, k):
        return self.gradient(xi)[:, k - 1]


# ----------------------------- H-vector fields -----------------------------

class VectorField:
    """H-valued field; ``components(xi)`` returns the (n, d) coefficient rows."""

    name = "field"
    analytic_jacobian = False
    fd_step = 1e-5

    def components(self, xi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian_diag(self, xi: np.ndarray) -> np.ndarray:
        """Diagonal entries ``D_k psi_k`` (finite differences by default)."""
        d = xi.shape[1]
        out = np.empty_like(xi)
        for k in range(1, d + 1):
            h = self.fd_step * (1.0 + np.abs(xi[:, k - 1]))
            hi = xi.copy()
            hi[:, k - 1] += h
            lo = xi.copy()
            lo[:, k - 1] -= h
            out[:, k - 1] = (self.components(hi)[:, k - 1]
                             - self.components(lo)[:, k - 1]) / (2.0 * h)
        return out


class ConstantField(VectorField):
    analytic_jacobian = True

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.name = "constant_field"

    def components(self, xi):
        return np.broadcast_to(self.coeffs, xi.shape).copy()

    def jacobian_diag(self, xi):
        return np.zeros_like(xi)


class IdentityField(VectorField):
    """``Psi(xi) = xi``."""

    analytic_jacobian = True
    name = "identity_field"

    def components(self, xi):
        return xi.copy()

    def jacobian_diag(self, xi):
        return np.ones_like(xi)


class ZeroField(VectorField):
    analytic_jacobian = True
    name = "zero_field"

    def components(self, xi):
        return np.zeros_like(xi)

    def jacobian_diag(self, xi):
        return np.zeros_like(xi)


class GradientScaledField(VectorField):
    """``Psi = c(xi) * D_H F`` for a scalar profile c; finite-difference diagonal."""

    def __init__(self, F: Functional, profile=None, name=None):
        self.F = F
        self.profile = profile
        self.name = name or f"grad({F.name})"

    def components(self, xi):
        g = self.F.gradient(xi)
        if self.profile is None:
            return g
        return g * self.profile(xi)[:, None]
