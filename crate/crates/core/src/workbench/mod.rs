//! Reports, descriptive comparisons, synthetic panels, Monte Carlo and the CLI.

pub mod cli;
pub mod compare;
pub mod montecarlo;
pub mod report;
pub mod synth;

pub use compare::{compare_periods, EntityChange, Movement, RankedValue, RegionalComparison};
pub use montecarlo::{run_monte_carlo, MonteCarloOptions, MonteCarloSummary};
pub use report::{analyze_fit, render_fit_table, reported_fit, reported_test, FitReport, FitTests, RenderOptions};
pub use synth::{generate_panel, SyntheticPanelConfig};
