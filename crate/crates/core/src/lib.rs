//! Empirical Bayes regression with a data-driven neural network basis.
//!
//! A ReLU network is trained on the first half of a sample; its last hidden
//! layer is frozen and used as a regression basis for a conjugate Gaussian
//! posterior fitted on the second half. The crate also provides cardinal
//! B-spline bases (an oracle alternative to the network basis) and a
//! seeded Monte Carlo harness that measures estimation error, credible-set
//! radii and frequentist coverage.
//!
//! ```
//! use ebdnn::prelude::*;
//!
//! let f0 = TargetFunction::f1(200).unwrap();
//! let data = generate_dataset(&f0, 400, 1.0, 1).unwrap();
//! let (_, d2) = split_dataset(&data).unwrap();
//! let basis = make_bspline_basis(6, 2, 1).unwrap();
//! let post = fit_posterior(&design_matrix(&basis, &d2).unwrap(), d2.ys(), 1.0).unwrap();
//! assert_eq!(post.k(), 7);
//! ```

pub mod basis;
pub mod bspline;
pub mod experiments;
pub mod neuralnet;
pub mod posterior;
pub mod quadrature;
pub mod synth;

pub mod prelude {
    pub use crate::basis::{BasisError, BasisSet};
    pub use crate::bspline::{
        eval_bspline_1d, gram_matrix, knot_vector, make_bspline_basis, near_orthogonality, project_l2, GramMatrix,
        QuadratureSpec,
    };
    pub use crate::experiments::{
        basis_diagnostics, contraction_scan, run_coverage, run_repetition, BasisMode, CoverageReport, ExperimentConfig,
        RepResult,
    };
    pub use crate::neuralnet::{
        basis_sup_bound, check_sparsity, extract_basis, init_network, train, Network, Optimizer, TrainOptions,
    };
    pub use crate::posterior::{
        covers, credible_radius, design_matrix, distance, eval_on_grid, fit_posterior, pointwise_band, sample_posterior,
        Curve, GaussianPosterior, GridDesign, Inflation, Norm,
    };
    pub use crate::quadrature::Grid;
    pub use crate::synth::{
        generate_dataset, network_shape, sieve_dimension, split_dataset, Dataset, NetShape, TargetFunction, TargetSpec,
    };
}
