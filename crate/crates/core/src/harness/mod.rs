//! Simulated active learning with an oracle annotator, span F1, replication,
//! genre analysis and decoder timing.

mod bench;
mod experiment;
mod f1;
mod genre;

pub use bench::{bench_decoder, crf_lstm_ratio, write_bench_csv, BenchRow, BenchSettings};
pub use experiment::{
    aggregate, full_data_f1, init_model, replicate, run_active_learning, train_on, warm_start_ids, CurveRecord,
    ExperimentConfig, LearningCurve, QueryStrategy, Replication, RoundAggregate, Simulation,
};
pub use f1::{evaluate_span_f1, span_f1, Counts, F1Report};
pub use genre::{genre_histogram, genre_shift, write_histogram_csv, GenreShift, UNKNOWN_GENRE};
