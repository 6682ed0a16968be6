//! Batch simulation of agent-only sessions.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use refgame_core::corpus::{dialogues_from_events, Dialogue};
use refgame_core::participants::{CompletionProvider, MockLlmProvider, ParticipantKind, RoundLimits, RoundOutcome};
use refgame_core::sim::simulate_session;
use refgame_core::transcript::{Clock, MockClock, SystemClock, TranscriptEvent};
use serde::Serialize;

use crate::config::{PlannedSession, SweepConfig};
use crate::corpus_io::{write_corpus, SessionFiles};
use crate::error::CliError;
use crate::provider::RoutingProvider;

#[derive(Clone, Debug)]
pub struct SimulateOptions {
    pub sweep: SweepConfig,
    /// Mock providers and the virtual clock.
    pub mock: bool,
    pub jobs: usize,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SessionSummary {
    pub pair_id: String,
    pub label: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub director_model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matcher_model: Option<String>,
    /// `None` for rounds that aborted.
    pub accuracy_by_round: Vec<Option<f64>>,
    pub turns_by_round: Vec<usize>,
    pub aborted_rounds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub label: String,
    pub sessions: usize,
    pub failed: usize,
    pub aborted_rounds: usize,
    /// Mean over completed rounds; `None` if none completed.
    pub mean_accuracy_by_round: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub mock: bool,
    pub sessions: usize,
    pub failed: usize,
    pub aborted_rounds: usize,
    pub dialogues: usize,
    pub res_sets: usize,
    pub conditions: Vec<ConditionSummary>,
    pub pairs: Vec<SessionSummary>,
}

impl SimulationSummary {
    /// 0 when every session ran, 1 when any failed.
    pub fn exit_code(&self) -> u8 {
        u8::from(self.failed > 0)
    }

    pub fn render(&self) -> String {
        let mut lines = vec![format!(
            "{} sessions ({} failed), {} dialogues, {} aborted rounds, {} RE sets",
            self.sessions, self.failed, self.dialogues, self.aborted_rounds, self.res_sets
        )];
        for c in &self.conditions {
            let acc: Vec<String> = c
                .mean_accuracy_by_round
                .iter()
                .map(|a| a.map_or_else(|| "-".to_string(), |a| format!("{a:.1}")))
                .collect();
            lines.push(format!(
                "  {:<20} sessions {:>3}  failed {:>3}  aborted {:>3}  accuracy by round [{}]",
                c.label,
                c.sessions,
                c.failed,
                c.aborted_rounds,
                acc.join(", ")
            ));
        }
        for p in self.pairs.iter().filter(|p| p.error.is_some()) {
            lines.push(format!("  {} failed: {}", p.pair_id, p.error.as_deref().unwrap_or_default()));
        }
        lines.join("\n")
    }
}

struct SessionRun {
    events: Vec<TranscriptEvent>,
    dialogues: Vec<Dialogue>,
    summary: SessionSummary,
}

fn summary_for(job: &PlannedSession) -> SessionSummary {
    SessionSummary {
        pair_id: job.pair_id.clone(),
        label: job.config.label(),
        seed: job.config.seed,
        director_model: job.config.director.model_id.clone(),
        matcher_model: job.config.matcher.model_id.clone(),
        accuracy_by_round: Vec::new(),
        turns_by_round: Vec::new(),
        aborted_rounds: 0,
        error: None,
    }
}

fn run_one(
    job: &PlannedSession,
    mock: bool,
    live: Option<&Arc<dyn CompletionProvider>>,
    max_attempts: usize,
) -> SessionRun {
    let config = job.config.clone();
    let needs_provider =
        config.director.kind == ParticipantKind::Llm || config.matcher.kind == ParticipantKind::Llm;
    let provider: Option<Arc<dyn CompletionProvider>> = match (needs_provider, mock) {
        (false, _) => None,
        (true, true) => Some(Arc::new(MockLlmProvider::for_session(&config))),
        (true, false) => live.cloned(),
    };
    let clock: Box<dyn Clock> = if mock {
        Box::new(MockClock::new(MockClock::EPOCH_MS))
    } else {
        Box::new(SystemClock)
    };
    let limits = RoundLimits {
        turn_cap: config.turn_cap as usize,
        max_attempts,
    };
    let mut summary = summary_for(job);
    tracing::info!(pair = %job.pair_id, "simulating");
    let sim = match simulate_session(&job.pair_id, config.clone(), provider, limits, clock.as_ref()) {
        Ok(sim) => sim,
        Err(e) => {
            tracing::error!(pair = %job.pair_id, error = %e, "session failed");
            summary.error = Some(e.to_string());
            return SessionRun {
                events: Vec::new(),
                dialogues: Vec::new(),
                summary,
            };
        }
    };
    for o in &sim.outcomes {
        match o {
            RoundOutcome::Completed { result, turns } => {
                summary.accuracy_by_round.push(Some(result.accuracy_pct));
                summary.turns_by_round.push(*turns);
            }
            RoundOutcome::Aborted { reason, turns } => {
                tracing::warn!(pair = %job.pair_id, %reason, "round aborted");
                summary.accuracy_by_round.push(None);
                summary.turns_by_round.push(*turns);
            }
        }
    }
    summary.aborted_rounds = sim.n_aborted();
    let events = sim.log.events().to_vec();
    let dialogues = match dialogues_from_events(&job.pair_id, &config, &events) {
        Ok(d) => d,
        Err(e) => {
            summary.error = Some(format!("export failed: {e}"));
            Vec::new()
        }
    };
    SessionRun {
        events,
        dialogues,
        summary,
    }
}

fn condition_summaries(pairs: &[SessionSummary]) -> Vec<ConditionSummary> {
    let mut labels: Vec<&str> = Vec::new();
    for p in pairs {
        if !labels.contains(&p.label.as_str()) {
            labels.push(&p.label);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let group: Vec<&SessionSummary> = pairs.iter().filter(|p| p.label == label).collect();
            let n_rounds = group.iter().map(|p| p.accuracy_by_round.len()).max().unwrap_or(0);
            let mean_accuracy_by_round = (0..n_rounds)
                .map(|k| {
                    let vals: Vec<f64> = group.iter().filter_map(|p| p.accuracy_by_round.get(k).copied().flatten()).collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                })
                .collect();
            ConditionSummary {
                label: label.to_string(),
                sessions: group.len(),
                failed: group.iter().filter(|p| p.error.is_some()).count(),
                aborted_rounds: group.iter().map(|p| p.aborted_rounds).sum(),
                mean_accuracy_by_round,
            }
        })
        .collect()
}

/// Builds the live provider a sweep needs, or `None` when nothing calls a model.
pub fn live_provider(sweep: &SweepConfig) -> Result<Option<Arc<dyn CompletionProvider>>, CliError> {
    if !sweep.uses_llm() {
        return Ok(None);
    }
    let routing = RoutingProvider::from_configs(&sweep.providers)?;
    for c in &sweep.conditions {
        for role in [&c.director, &c.matcher] {
            if let Some(model) = role.model_id.as_deref().filter(|_| role.kind == ParticipantKind::Llm) {
                if !routing.serves(model) {
                    return Err(CliError::Usage(format!(
                        "condition {:?}: no [[providers]] entry serves model {model}",
                        c.label
                    )));
                }
            }
        }
    }
    Ok(Some(Arc::new(routing)))
}

/// Runs every planned session and writes the corpus directory. Output is ordered by
/// the plan, whatever the number of jobs.
pub fn run_simulate(opts: &SimulateOptions) -> Result<SimulationSummary, CliError> {
    let plan = opts.sweep.plan()?;
    let live = if opts.mock { None } else { live_provider(&opts.sweep)? };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| CliError::Failed(format!("cannot start worker pool: {e}")))?;
    let max_attempts = opts.sweep.max_attempts;
    let runs: Vec<SessionRun> = pool.install(|| {
        plan.par_iter()
            .map(|job| run_one(job, opts.mock, live.as_ref(), max_attempts))
            .collect()
    });
    write_outputs(&opts.out, &opts.sweep, &plan, &runs, opts.mock)
}

fn write_outputs(
    out: &Path,
    sweep: &SweepConfig,
    plan: &[PlannedSession],
    runs: &[SessionRun],
    mock: bool,
) -> Result<SimulationSummary, CliError> {
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    let mut dialogues = Vec::new();
    for (job, run) in plan.iter().zip(runs) {
        if !run.events.is_empty() {
            SessionFiles {
                pair_id: &job.pair_id,
                config: &job.config,
                events: &run.events,
            }
            .write(out)?;
        }
        dialogues.extend(run.dialogues.iter().cloned());
    }
    let res_sets = write_corpus(out, &dialogues)?;
    // the effective sweep, minus settings that do not change the corpus
    let effective = SweepConfig {
        jobs: None,
        out: None,
        ..sweep.clone()
    };
    let sweep_path = out.join("sweep.toml");
    let sweep_text = toml::to_string(&effective).map_err(|e| CliError::Failed(format!("cannot write sweep: {e}")))?;
    std::fs::write(&sweep_path, sweep_text).map_err(CliError::io(&sweep_path))?;

    let pairs: Vec<SessionSummary> = runs.iter().map(|r| r.summary.clone()).collect();
    let summary = SimulationSummary {
        mock,
        sessions: pairs.len(),
        failed: pairs.iter().filter(|p| p.error.is_some()).count(),
        aborted_rounds: pairs.iter().map(|p| p.aborted_rounds).sum(),
        dialogues: dialogues.len(),
        res_sets,
        conditions: condition_summaries(&pairs),
        pairs,
    };
    let summary_path = out.join("summary.json");
    let mut json = serde_json::to_vec_pretty(&summary).map_err(|e| CliError::Failed(e.to_string()))?;
    json.push(b'\n');
    std::fs::write(&summary_path, json).map_err(CliError::io(&summary_path))?;
    Ok(summary)
}
