"""Layered neural networks as random dynamical systems.

Numerics for the chaos and complexity behavior of layer-stacked affine
maps with tanh or ReLU activations: Lyapunov spectra and topological
entropy, orbit-counting entropy estimators, a mean-field chaos
criterion for Gaussian weight ensembles, designed networks with
provably growing tangents, and classification complexity with
constructive VC shattering.  See the README for the experiment CLI.
"""

from .core import (
    ActivationKind,
    AffineLayer,
    DimensionError,
    EnsembleSpec,
    LayeredNetwork,
    LinearClassifier,
    NetworkFileError,
    NonFiniteError,
    NondifferentiablePointWarning,
    Trajectory,
    apply_layer,
    forward_trajectory,
    generate_gaussian_network,
    jacobian_product,
    layer_jacobian,
    load_network,
    save_network,
)
from .lyapunov import (
    LyapunovReport,
    PerturbationEstimate,
    benettin_from_layers,
    benettin_spectrum,
    entropy_from_spectrum,
    procedure1_estimate,
    scalar_tanh_lambda1_grid,
    top_exponent,
)
from .entropy import (
    EnsemblePathSet,
    GridSizeError,
    OrbitSet,
    build_orbits,
    ensemble_path_count,
    ensemble_paths,
    entropy_table,
    separated_count,
    spanning_count,
)
from .meanfield import (
    LagrangeSeries,
    MeanFieldResult,
    NormConcentrationStats,
    SweepCell,
    chaos_condition,
    ensemble_lyapunov_sweep,
    h_lagrange_series,
    norm_concentration,
    solve_h,
    stationary_R,
    variance_bound,
)
from .constructions import (
    DegenerateConfigurationError,
    ReluAngleConfig,
    TanhChaosConfig,
    TanhChaosRun,
    angle_gradient,
    relu_angle_network,
    tanh_chaos_run,
    tanh_chaos_step,
)
from .classify import (
    ComplexityReport,
    ConstructionError,
    GridPartition,
    LabeledDataset,
    ShatterFamily,
    ShatterNetwork,
    affine_separable_margin,
    classification_complexity,
    direction_grid_margin,
    hausdorff_eps_delta,
    hybrid_count,
    layer_lower_bound,
    load_dataset,
    max_margin_classifier,
    save_dataset,
    shatter_extend,
    shatter_four,
    vc_upper_bound,
)

__version__ = "0.1.0"
