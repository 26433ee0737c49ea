//! Experiment protocols shared by the command line and the test suites.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detection::{self, Group, ToleranceScore};
use crate::error::Result;
use crate::model::UserTrace;
use crate::neighborhood::Predictor;
use crate::synth::{self, GeneratorConfig};

/// Share of injected followers that arrive in the burst.
pub const INJECTION_BURSTINESS: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSample {
    pub user_id: String,
    pub group: Group,
    pub displayed_before: u64,
    pub injected: u64,
    pub predicted_before: f64,
    pub predicted_after: f64,
    pub score: f64,
}

/// Buys each user one week of market service and measures how far its
/// estimate moves, relative to the number of followers bought.
///
/// Amounts follow the generator's market model; the user's group is taken
/// from its follower count before the purchase.
pub fn tolerance_experiment<'a>(
    predictor: &Predictor,
    users: impl IntoIterator<Item = &'a UserTrace>,
    market: &GeneratorConfig,
    seed: u64,
) -> Result<Vec<ToleranceSample>> {
    users
        .into_iter()
        .enumerate()
        .map(|(i, trace)| {
            let user_seed = seed.wrapping_add(i as u64);
            let injected = synth::market_delivery(market, user_seed);
            let manipulated = synth::inject_manipulation(trace, injected, INJECTION_BURSTINESS, user_seed);
            let before = predictor.predict(trace)?.predicted_followers;
            let after = predictor.predict(&manipulated)?.predicted_followers;
            Ok(ToleranceSample {
                user_id: trace.user_id().to_owned(),
                group: Group::of(trace.displayed_follower_count()),
                displayed_before: trace.displayed_follower_count(),
                injected,
                predicted_before: before,
                predicted_after: after,
                score: detection::tolerance_score(before, after, 0.0, injected as f64),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupTolerance {
    pub users: usize,
    pub mean_score: f64,
}

pub fn summarize_tolerance(samples: &[ToleranceSample]) -> BTreeMap<Group, GroupTolerance> {
    let scores: Vec<ToleranceScore> = samples
        .iter()
        .map(|s| ToleranceScore { group: s.group, score: s.score })
        .collect();
    detection::mean_tolerance_by_group(&scores)
        .into_iter()
        .map(|(g, mean_score)| {
            let users = samples.iter().filter(|s| s.group == g).count();
            (g, GroupTolerance { users, mean_score })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Corpus, Label};
    use crate::neighborhood::Backend;

    #[test]
    fn tolerance_samples_are_bounded_and_reproducible() {
        let cfg = GeneratorConfig {
            seed: 3,
            n_organic: 120,
            n_customer: 0,
            n_aggressive: 0,
            ..GeneratorConfig::default()
        };
        let corpus = synth::generate(&cfg).unwrap();
        let traces: Vec<&UserTrace> = corpus.traces().collect();
        let mut reference = Corpus::new();
        for t in &traces[..100] {
            reference.insert((*t).clone(), Some(Label::Random)).unwrap();
        }
        let p = Predictor::fit(&reference, Backend::KdTree).unwrap();
        let run = || tolerance_experiment(&p, traces[100..].iter().copied(), &cfg, 7).unwrap();
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.len(), 20);
        assert!(a.iter().all(|s| (0.0..=1.0).contains(&s.score) && s.injected > 0));
        let summary = summarize_tolerance(&a);
        assert_eq!(summary.values().map(|g| g.users).sum::<usize>(), 20);
    }
}
