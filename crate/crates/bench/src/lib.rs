//! Fixtures shared by the benchmarks in `benches/`.

use pickeff_core::annotate::LabelSequence;
use pickeff_core::synth::{generate_day, SynthConfig, SynthDay};

/// One default synthetic day with a fixed seed.
pub fn fixture_day() -> SynthDay {
    generate_day(&SynthConfig::default(), 0).expect("default synthetic day")
}

/// Ground-truth label sequences of a day's sessions.
pub fn truth_labels(day: &SynthDay) -> Vec<LabelSequence> {
    day.sessions.iter().map(|s| LabelSequence::from_session(s).expect("synthetic sessions are labeled")).collect()
}
