//! Experiment harness: configuration, Monte Carlo loops and outputs.

mod config;
mod run;

pub use config::{
    parse_config, parse_config_str, ChannelSection, ExperimentConfig, ExperimentKind, LeakageSection, PsdSection,
    RunPlan, SidelobeSection, SnrGrid, LINK_BANDWIDTH_HZ, PSD_BANDWIDTH_HZ,
};
pub use run::{
    build_scheme, config_hash, impulse_leakage, psd, run_experiment, run_plan, run_plan_with, sidelobes, BerPoint,
    ExperimentReport, OutputFile, PsdSummary, RunOutput, SchemeOutcome, SchemeResult, SidelobeSummary,
    CSV_SCHEMA_VERSION, SNR_DEFINITION,
};
