use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use folcount_core::clustering::{self, ClusterRecord};
use folcount_core::detection::{
    self, BandError, DetectionLine, DetectionReport, DetectionSummary, Group, PrecisionRecall,
};
use folcount_core::evaluation::{self, GroupTolerance};
use folcount_core::features::{self, FeatureVector};
use folcount_core::model::{self, Rejection, SCHEMA_VERSION};
use folcount_core::neighborhood::PredictionRecord;
use folcount_core::synth::{self, GeneratorConfig};
use folcount_core::{Corpus, Error, Label, Predictor, Result};
use serde::Serialize;
use serde_json::json;

use crate::manifest::{self, io_error, RunManifest};
use crate::Command;

pub struct SourcedRejection {
    pub source: String,
    pub line: usize,
    pub field: String,
    pub message: String,
}

#[derive(Default)]
pub struct Outcome {
    pub rejections: Vec<SourcedRejection>,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn reject(&mut self, source: &Path, rejections: Vec<Rejection>) {
        self.rejections.extend(rejections.into_iter().map(|r| SourcedRejection {
            source: source.display().to_string(),
            line: r.line,
            field: r.field,
            message: r.message,
        }));
    }
}

struct Run {
    command: &'static str,
    started: Instant,
    inputs: Vec<PathBuf>,
    parameters: serde_json::Value,
    seed: Option<u64>,
}

impl Run {
    fn new(command: &'static str, inputs: &[&Path], parameters: serde_json::Value, seed: Option<u64>) -> Self {
        Run {
            command,
            started: Instant::now(),
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
            parameters,
            seed,
        }
    }

    fn finish(self, out: &Path, extra_outputs: &[&Path], outcome: &Outcome) -> Result<()> {
        let inputs = self.inputs.iter().map(|p| manifest::digest(p)).collect::<Result<_>>()?;
        let mut outputs = vec![manifest::digest(out)?];
        for p in extra_outputs {
            outputs.push(manifest::digest(p)?);
        }
        RunManifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION"),
            parameters: self.parameters,
            seed: self.seed,
            inputs,
            outputs,
            records_rejected: outcome.rejections.len(),
            wall_clock_seconds: manifest::seconds(self.started.elapsed()),
        }
        .write(out)
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_error(path, e))
}

fn finish_writer(path: &Path, mut w: BufWriter<fs::File>) -> Result<()> {
    w.flush().map_err(|e| io_error(path, e))
}

fn write_json_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = create(path)?;
    model::write_records(records, &mut w)?;
    finish_writer(path, w)
}

fn load(path: &Path, outcome: &mut Outcome) -> Result<Corpus> {
    let loaded = model::load_corpus(path, SCHEMA_VERSION)?;
    outcome.reject(path, loaded.rejections);
    Ok(loaded.corpus)
}

fn load_reference(path: &Path, label: Option<Label>, outcome: &mut Outcome) -> Result<Corpus> {
    let corpus = load(path, outcome)?;
    Ok(match label {
        Some(l) => corpus.filter_label(l),
        None => corpus,
    })
}

pub fn run(command: Command) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    match command {
        Command::Synth { config, seed, out } => {
            let text = fs::read_to_string(&config).map_err(|e| io_error(&config, e))?;
            let mut cfg: GeneratorConfig = serde_json::from_str(&text)
                .map_err(|e| Error::Schema(format!("{}: {e}", config.display())))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let run = Run::new("synth", &[&config], json!({ "config": cfg }), Some(cfg.seed));
            let corpus = synth::generate(&cfg)?;
            model::save_corpus(&corpus, &out)?;
            run.finish(&out, &[], &outcome)?;
        }

        Command::Featurize { corpus, out } => {
            let run = Run::new("featurize", &[&corpus], json!({}), None);
            let c = load(&corpus, &mut outcome)?;
            let rows: Vec<(&str, FeatureVector)> = c.traces().map(|t| (t.user_id(), features::featurize(t))).collect();
            let mut w = create(&out)?;
            features::write_feature_matrix(rows.iter().map(|(id, v)| (*id, v)), &mut w)?;
            finish_writer(&out, w)?;
            run.finish(&out, &[], &outcome)?;
        }

        Command::Predict { corpus, reference, reference_label, backend, out } => {
            let run = Run::new(
                "predict",
                &[&corpus, &reference],
                json!({ "backend": backend, "reference_label": reference_label }),
                None,
            );
            let queries = load(&corpus, &mut outcome)?;
            let population = load_reference(&reference, reference_label, &mut outcome)?;
            let predictor = Predictor::fit(&population, backend)?;
            let records = queries
                .traces()
                .map(|t| Ok(PredictionRecord::new(&predictor.predict(t)?, t.displayed_follower_count())))
                .collect::<Result<Vec<_>>>()?;
            write_json_lines(&out, &records)?;
            run.finish(&out, &[], &outcome)?;
        }

        Command::Detect { predictions, threshold, labels, out } => {
            let mut inputs: Vec<&Path> = vec![&predictions];
            if let Some(l) = &labels {
                inputs.push(l);
            }
            let run = Run::new("detect", &inputs, json!({ "threshold": threshold }), None);
            let loaded = model::load_records::<PredictionRecord>(&predictions)?;
            outcome.reject(&predictions, loaded.rejections);
            let reports = loaded
                .records
                .iter()
                .map(|r| detection::detect_record(r, threshold))
                .collect::<Result<Vec<DetectionReport>>>()?;
            let evaluation = match &labels {
                Some(path) => Some(detection::precision_recall(&reports, load(path, &mut outcome)?.labels())?),
                None => None,
            };
            let mut lines: Vec<DetectionLine> = reports.iter().cloned().map(DetectionLine::Report).collect();
            lines.push(DetectionLine::Summary(DetectionSummary::new(&reports, threshold, evaluation)));
            write_json_lines(&out, &lines)?;
            run.finish(&out, &[], &outcome)?;
        }

        Command::Cluster { corpus, k, seed, series_out, out } => {
            let run = Run::new("cluster", &[&corpus], json!({ "k": k }), Some(seed));
            let c = load(&corpus, &mut outcome)?;
            let series: Vec<_> = c.traces().map(clustering::unfollow_series).collect();
            let assignment = clustering::spectral_cluster(&series, k, seed)?;
            if assignment.degenerate {
                outcome
                    .warnings
                    .push("all unfollow series are identical; every user was placed in cluster 0".into());
            }
            let aggressive = clustering::select_aggressive(&assignment, &series);
            let records: Vec<ClusterRecord> = series
                .iter()
                .map(|s| ClusterRecord {
                    user_id: s.user_id.clone(),
                    label: assignment.labels[&s.user_id],
                    total_unfollows: s.total(),
                    aggressive: aggressive.contains(&s.user_id),
                })
                .collect();
            write_json_lines(&out, &records)?;
            let mut extra = Vec::new();
            if let Some(path) = &series_out {
                let mut w = create(path)?;
                let mut table = || -> std::io::Result<()> {
                    for (s, r) in series.iter().zip(&records) {
                        write!(w, "{}\t{}", s.user_id, r.label)?;
                        for c in &s.counts {
                            write!(w, "\t{c}")?;
                        }
                        writeln!(w)?;
                    }
                    Ok(())
                };
                table().map_err(|e| io_error(path, e))?;
                finish_writer(path, w)?;
                extra.push(path.as_path());
            }
            run.finish(&out, &extra, &outcome)?;
        }

        Command::Evaluate { corpus, reference, reference_label, backend, sweep, threshold, seed, out } => {
            let run = Run::new(
                "evaluate",
                &[&corpus, &reference],
                json!({
                    "backend": backend,
                    "reference_label": reference_label,
                    "sweep": sweep,
                    "threshold": threshold,
                }),
                Some(seed),
            );
            let queries = load(&corpus, &mut outcome)?;
            let population = load_reference(&reference, reference_label, &mut outcome)?;
            let report = evaluate(&queries, &population, backend, &sweep, threshold, seed)?;
            let mut w = create(&out)?;
            serde_json::to_writer_pretty(&mut w, &report).expect("report serializes");
            w.write_all(b"\n").map_err(|e| io_error(&out, e))?;
            finish_writer(&out, w)?;
            run.finish(&out, &[], &outcome)?;
        }
    }
    Ok(outcome)
}

#[derive(Serialize)]
struct EvaluationReport {
    queries: usize,
    reference_size: usize,
    mean_neighbor_count: f64,
    sweep: Vec<BandError>,
    detection: DetectionBlock,
    tolerance: BTreeMap<Group, GroupTolerance>,
}

#[derive(Serialize)]
struct DetectionBlock {
    threshold: f64,
    flagged: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    evaluation: Option<PrecisionRecall>,
}

fn evaluate(
    queries: &Corpus,
    population: &Corpus,
    backend: folcount_core::Backend,
    sweep: &[f64],
    threshold: f64,
    seed: u64,
) -> Result<EvaluationReport> {
    let predictor = Predictor::fit(population, backend)?;
    let predictions = queries.traces().map(|t| predictor.predict(t)).collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = predictions
        .iter()
        .zip(queries.traces())
        .map(|(p, t)| (p.predicted_followers, t.displayed_follower_count() as f64))
        .collect();
    let reports = predictions
        .iter()
        .zip(queries.traces())
        .map(|(p, t)| detection::detect(p, t.displayed_follower_count(), threshold))
        .collect::<Result<Vec<_>>>()?;
    let fully_labeled = queries
        .traces()
        .all(|t| matches!(queries.label(t.user_id()), Some(Label::Random | Label::Customer)));
    let evaluation = if fully_labeled && !reports.is_empty() {
        Some(detection::precision_recall(&reports, queries.labels())?)
    } else {
        None
    };

    // Tolerance is measured on users believed organic.
    let organic: Vec<_> = if queries.labels().is_empty() {
        queries.traces().collect()
    } else {
        queries.traces().filter(|t| queries.label(t.user_id()) == Some(Label::Random)).collect()
    };
    let samples = evaluation::tolerance_experiment(&predictor, organic, &GeneratorConfig::default(), seed)?;

    Ok(EvaluationReport {
        queries: predictions.len(),
        reference_size: population.len(),
        mean_neighbor_count: predictions.iter().map(|p| p.neighbor_count as f64).sum::<f64>()
            / predictions.len().max(1) as f64,
        sweep: detection::accuracy_sweep(&pairs, sweep)?,
        detection: DetectionBlock {
            threshold,
            flagged: reports.iter().filter(|r| r.verdict == detection::Verdict::Customer).count(),
            evaluation,
        },
        tolerance: evaluation::summarize_tolerance(&samples),
    })
}
