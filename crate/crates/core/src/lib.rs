//! Scenario library and test-generation toolkit for automated-driving
//! virtual testing.

pub mod ingest;
pub mod interp;
pub mod ontology;
pub mod seed;
pub mod cleanse;
pub mod enrich;
pub mod analyze;
pub mod density;
pub mod generate;
pub mod simharness;
pub mod store;
pub mod synth;
pub mod pipeline;

pub use analyze::{gmm_fit, kmeans, ClusterKind, ClusterModel, FeatureMatrix, ImportanceScores};
pub use cleanse::{clean, dl_distance, CleaningReport, CleaningRule};
pub use density::{kde_eval, kde_fit, kde_sample, Bandwidth, Density, KdeModel, Kernel, ParamDensity};
pub use enrich::{annotate, AnnotateConfig, AnnotatedScenario, EventAnnotation, EventKind};
pub use generate::{
    combinatorial_generate, is_estimate, min_tests_is, min_tests_naive, random_generate, DangerEstimate, Method,
    SamplingPlan, TestBudget,
};
pub use ingest::{synchronize, SyncMethod, TimedSample, TrackLog};
pub use ontology::{ElementCategory, ParamValue, ParameterSpec, Scenario, ScenarioKind, ValidationReport};
pub use pipeline::{run_pipeline, PipelineConfig};
pub use simharness::{simulate, AebPolicy, CutInScenario, SimTrace};
pub use store::{Library, Query};
