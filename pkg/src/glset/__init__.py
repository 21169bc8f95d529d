"""Surface measures on level sets of functionals of Gaussian models.

The library estimates densities of image measures ``phi mu o G^-1`` by a
Gaussian-divergence formula and by mollified difference quotients, realizes
the surface measure at a level through those densities, and verifies the
integration-by-parts, trace, disintegration and weighted-Hausdorff
identities at desk scale.
"""

from .model import (GaussianModel, SampleBatch, build_model, endpoint_weights,
                    iter_sample_chunks, render_ambient, render_path, sample, vhat)
from .functionals import (BmEndpoint, Constant, ConstantField, Coordinate,
                          Functional, IdentityField, Linear, LinearCombination,
                          Norm2, NumericalFault, Product, ProductWithPartial,
                          RadialClamp, SublevelBump, UserFunctional, VectorField,
                          ZeroField)
from .calculus import (GradientTooSmall, HypothesisReport, KernelField,
                       divergence_mu, h_gradient, hypothesis_diagnostics,
                       kernel_divergence)
from .density import (DensityCurve, DensityJob, cdf_estimate, default_bandwidth,
                      density_divergence, density_mollified, estimate_density,
                      smoothness_check)
from .surface import (HausdorffRecord, IbpRecord, SurfaceMeasureHandle,
                      SurfaceReport, hausdorff_compare, hyperplane_quadrature,
                      ibp_residual, ibp_residuals, perimeter_identity_check,
                      positivity_scan, sphere_quadrature, surface_integral,
                      surface_report, trace_eval)
from .disintegration import (ConditionalSurfaceRecord, EmpiricalDisintegration,
                             conditional_vs_surface, disintegrate, support_check,
                             verify_disintegration)
from .expressions import (ExpressionError, ExpressionFunctional, GRAMMAR,
                          parse_expression)
from .config import ConfigError, JobSpec, ModelSpec, RunConfig, parse_config, \
    serialize_config
from .runner import resolve_functional, resolve_model, run

__version__ = "0.1.0"

__all__ = [
    "GaussianModel", "SampleBatch", "build_model", "sample", "vhat",
    "iter_sample_chunks", "render_ambient", "render_path", "endpoint_weights",
    "Functional", "UserFunctional", "Constant", "Coordinate", "Linear", "Norm2",
    "BmEndpoint", "LinearCombination", "Product", "ProductWithPartial",
    "RadialClamp", "SublevelBump", "VectorField", "ConstantField",
    "IdentityField", "ZeroField", "NumericalFault",
    "KernelField", "GradientTooSmall", "HypothesisReport", "divergence_mu",
    "h_gradient", "kernel_divergence", "hypothesis_diagnostics",
    "DensityJob", "DensityCurve", "cdf_estimate", "density_divergence",
    "density_mollified", "estimate_density", "default_bandwidth",
    "smoothness_check",
    "SurfaceMeasureHandle", "SurfaceReport", "IbpRecord", "HausdorffRecord",
    "surface_integral", "surface_report", "ibp_residual", "ibp_residuals",
    "perimeter_identity_check", "positivity_scan", "trace_eval",
    "hausdorff_compare", "sphere_quadrature", "hyperplane_quadrature",
    "EmpiricalDisintegration", "ConditionalSurfaceRecord", "disintegrate",
    "verify_disintegration", "support_check", "conditional_vs_surface",
    "ExpressionFunctional", "ExpressionError", "parse_expression", "GRAMMAR",
    "RunConfig", "ModelSpec", "JobSpec", "ConfigError", "parse_config",
    "serialize_config", "run", "resolve_model", "resolve_functional",
    "__version__",
]
