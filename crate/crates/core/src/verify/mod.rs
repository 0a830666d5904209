mod experiments;
mod report;
mod suite;

pub use experiments::{
    commutator_ratios, exp_caccioppoli_decay, exp_commutator_lorentz, exp_decay_iteration, exp_gauge, exp_harmonic_comparison,
    exp_iwaniec_stability, exp_weak_ln_estimate, refinement_gate, CaccioppoliParams, CommutatorParams, ComparisonParams,
    DecayParams, IwaniecParams, WeakLnParams,
};
pub use report::{read_csv, write_csv, ConstantsLedger, LedgerEntry, Measurement, Report, Tag, CSV_HEADER};
pub use suite::{run_experiment, run_suite, ExperimentSpec, Kind, RunConfig, SuiteOutcome};
