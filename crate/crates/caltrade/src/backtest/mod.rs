//! Backtesting: data ingestion, price scaling, the chain method and
//! experiment orchestration.

pub mod chain;
pub mod data;
pub mod experiment;
pub mod svg;

pub use chain::{
    run_chain, run_chain_parallel, ChainConfig, ChainPlan, ChainStep, ChainTranscript,
    KernelChoice, ScheduleChoice,
};
pub use data::{ingest_csv, scale_window, simulate_test_stock, PriceSeries, ScaledWindow};
pub use experiment::{
    arma_chain_entries, run_experiment, DataSource, ExperimentConfig, ExperimentOutput,
    ResultsTable, StrategyChoice,
};
