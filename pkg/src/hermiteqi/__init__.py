"""Hermite quasi-interpolation on uniform grids with Gaussian generating functions."""
from .special import IndexSet, enumerate_indices, gaussian_moment, hermite_at_zero, hermite_eval, laguerre_eval
from .moments import (
    DerivativeExpansion,
    GeneratingFunction,
    MomentMatrix,
    QPolynomial,
    build_general_generator,
    build_hermite_generator,
    build_moment_matrix,
    gaussian_inverse_fourier_table,
    target_moments,
    verify_moment_conditions,
)
from .interpolant import (
    ErrorReport,
    HermiteData,
    MissingChannelError,
    QIConfig,
    WindowError,
    evaluate_anisotropic_qi,
    evaluate_harmonic_qi,
    evaluate_laplacian_qi,
    evaluate_qi,
    sample_on_window,
    truncation_radius,
)
from .saturation import (
    SaturationBound,
    epsilon_bound,
    predict_harmonic_saturation,
    sigma_affine,
    sigma_beta,
    sigma_direct,
)
from .derivatives import DerivedGenerator, convolution_oracle, differentiate_generator, evaluate_qi_derivative

__version__ = "0.1.0"
