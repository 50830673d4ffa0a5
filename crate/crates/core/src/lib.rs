//! Feasibility analysis for interference alignment on K-pair MIMO
//! interference networks with constant channels.
//!
//! The crate combines necessary counting conditions, closed forms for
//! symmetric and divisible networks, a combinatorial allocation certificate,
//! and a generic full-row-rank test of the linearized alignment equations.

pub mod alloc;
pub mod conditions;
pub mod error;
pub mod field;
pub mod hall;
pub mod model;
pub mod rank;
pub mod report;
pub mod solver;

pub use alloc::{
    flow_feasible, init_allocation, pressures, run_ptt, run_ptt_symmetric, verify_allocation, AllocationPolicy,
    AllocationReport, PressureState, PttOutcome, Side, TransferOrder,
};
pub use conditions::{
    check_antenna_span, check_properness, check_stream_count, divisible_feasible, necessary_verdict, scaling_check,
    symmetric_feasible, FeasibilityVerdict, Status, SubsetWitness,
};
pub use error::{Error, Result};
pub use field::ScalarField;
pub use hall::{build_hall, HallLayout, HallMatrix, LinkIndex, Variable};
pub use model::{
    derive_seed, hall_dims, sample_channels, scale_config, validate_config, ChannelSet, ConfigFile, NetworkConfig,
    PairConfig, ReducedTransceivers, TransceiverSet, C64,
};
pub use rank::{generic_full_row_rank, gf_rank, numeric_rank, RankMode, RankVerdict, TolerancePolicy};
pub use report::{check_config, CheckOptions, SweepFooter, VerdictReport};
pub use solver::{alt_min, gauss_newton, solve, verify_ia, Method, SolveOptions, SolveResult, SolveSummary};
