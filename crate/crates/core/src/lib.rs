//! Production-network growth model.
//!
//! Builds input coefficients from money-flow tables and derives output
//! multipliers, price-return and covariance predictions, growth identities,
//! network transforms and a dynamic simulator for synthetic economies.

pub mod coefficients;
pub mod economies;
pub mod error;
pub mod fmt;
pub mod growth;
pub mod iotable;
pub mod linops;
pub mod multipliers;
pub mod simulate;
pub mod stats;
pub mod transform;

pub use coefficients::{build_coefficients, to_physical, CoefficientSystem, PhysicalSystem};
pub use error::{Error, Result};
pub use growth::{
    correlation_of_summand, decompose_returns, estimate_productivity, expected_return_given_l,
    hulten_check, predict_covariances, predict_growth, predict_returns, GrowthPrediction,
    ImprovementCovariance, PredictionSet, ProductivitySeries,
};
pub use iotable::{gross_output, load_iotable, write_iotable, IOTable, Industry, LoadOptions, PriceSeries};
pub use linops::{
    leontief_inverse, neumann_series_oracle, random_walk_path_length, solve_leontief, LeontiefInverse,
    WalkEstimate,
};
pub use multipliers::{average_output_multiplier, domar_weights, output_multipliers, MultiplierReport};
pub use simulate::{cobb_douglas_check, run, step, EconomyState, Numeraire, ShockSchedule, Trajectory};
pub use stats::{ar1_forecast, bin_means, center_normalize_by_group, ols, pearson, RegressionResult};
pub use transform::{aggregate, open_trade_perturbation, zero_international_trade, AggregationMap, TradePerturbation};
pub use nalgebra::{DMatrix, DVector};
