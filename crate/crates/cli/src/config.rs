//! Experiment configuration (JSON).
//!
//! ```json
//! {
//!   "seed": 7,
//!   "profiles": [ { "emitter_id": "tx-a", "cfo_hz": 250.0, ... } ],
//!   "render": { "sample_rate_hz": 200000, "modulation": { "samples_per_symbol": 8 } },
//!   "sessions": [ { "stem": "s000", "schedule": { "session_duration_s": 0.05, "entries": [...] } } ],
//!   "channel": { "snr_db": 20, "multipath_taps": [], "path_loss_db": 0 },
//!   "receiver": { "gain_db": 0, "filter_bw_hz": 200000, "adc_bits": 12 },
//!   "detector": { ... }, "extraction": { "wpd_depth": 3 },
//!   "enrollment": { "select_k": 12, "ridge_lambda": 0.05, "threshold_policy": "eer" },
//!   "tuning": { "strategy": { "kind": "exhaustive" }, "budget": 49 }
//! }
//! ```

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use rffp_core::control::{Strategy, TuningGrid};
use rffp_core::dataset::{Seeds, SessionSpec};
use rffp_core::experiment::{derive_seed, PlantScenario};
use rffp_core::fingerprint::ThresholdPolicy;
use rffp_core::{
    ChannelSpec, ChoreographySchedule, DetectorParams, EmitterProfile, ExtractionParams, ReceiverConfig, RenderParams,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root of every random stream. Required.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub profiles: Vec<EmitterProfile>,
    #[serde(default)]
    pub render: Option<RenderParams>,
    #[serde(default)]
    pub sessions: Vec<SessionPlan>,
    #[serde(default = "ChannelSpec::clean")]
    pub channel: ChannelSpec,
    /// Defaults to a transparent 16-bit receiver.
    #[serde(default)]
    pub receiver: Option<ReceiverConfig>,
    #[serde(default)]
    pub detector: DetectorParams,
    #[serde(default)]
    pub extraction: ExtractionParams,
    #[serde(default)]
    pub enrollment: EnrollmentParams,
    #[serde(default)]
    pub tuning: TuningSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionPlan {
    pub stem: String,
    pub schedule: ChoreographySchedule,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrollmentParams {
    /// Fisher-selected feature count; absent keeps the whole catalog.
    #[serde(default)]
    pub select_k: Option<usize>,
    #[serde(default = "default_ridge")]
    pub ridge_lambda: f64,
    #[serde(default = "default_policy")]
    pub threshold_policy: ThresholdPolicy,
}

fn default_ridge() -> f64 {
    0.05
}

fn default_policy() -> ThresholdPolicy {
    ThresholdPolicy::Eer
}

impl Default for EnrollmentParams {
    fn default() -> Self {
        Self {
            select_k: None,
            ridge_lambda: default_ridge(),
            threshold_policy: default_policy(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningSection {
    /// Plant definition; the canonical weak-signal scenario when absent.
    #[serde(default)]
    pub scenario: Option<PlantScenario>,
    /// Overrides the scenario's grid.
    #[serde(default)]
    pub grid: Option<TuningGrid>,
    #[serde(default)]
    pub strategy: Option<Strategy>,
    /// Evaluation budget; the grid size when absent.
    #[serde(default)]
    pub budget: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn seed(&self) -> anyhow::Result<u64> {
        self.seed.context("config field `seed` is required (no implicit randomness)")
    }

    pub fn receiver_for(&self, render: &RenderParams) -> ReceiverConfig {
        self.receiver.unwrap_or_else(|| ReceiverConfig::transparent(render.sample_rate_hz))
    }

    /// Session specs for `synth`, with per-stage seeds derived from `seed`.
    pub fn session_specs(&self) -> anyhow::Result<Vec<SessionSpec>> {
        let seed = self.seed()?;
        let Some(render) = self.render else {
            bail!("config field `render` is required for synth");
        };
        if self.sessions.is_empty() {
            bail!("config field `sessions` must list at least one session");
        }
        let receiver = self.receiver_for(&render);
        if receiver.filter_bw_hz > render.sample_rate_hz {
            bail!(
                "config field `receiver.filter_bw_hz` ({}) exceeds `render.sample_rate_hz` ({})",
                receiver.filter_bw_hz,
                render.sample_rate_hz
            );
        }
        self.detector.validate()?;
        self.extraction.validate()?;
        let specs: Vec<SessionSpec> = self
            .sessions
            .iter()
            .enumerate()
            .map(|(i, plan)| {
                let base = derive_seed(seed, i as u64);
                SessionSpec {
                    stem: plan.stem.clone(),
                    profiles: self.profiles.clone(),
                    schedule: plan.schedule.clone(),
                    render,
                    channel: self.channel.clone(),
                    receiver,
                    seeds: Seeds {
                        render: Some(derive_seed(base, 1)),
                        channel: Some(derive_seed(base, 2)),
                        receiver: Some(derive_seed(base, 3)),
                    },
                    description: plan.description.clone(),
                    datetime: rffp_core::dataset::DEFAULT_DATETIME.into(),
                }
            })
            .collect();
        for (i, s) in specs.iter().enumerate() {
            s.validate(&format!("sessions[{i}]"))?;
        }
        Ok(specs)
    }

    pub fn scenario(&self) -> anyhow::Result<PlantScenario> {
        let mut scenario = match &self.tuning.scenario {
            Some(s) => s.clone(),
            None => PlantScenario::canonical(self.seed()?),
        };
        if let Some(grid) = &self.tuning.grid {
            scenario.grid = grid.clone();
        }
        if let Some(seed) = self.seed {
            scenario.seed = seed;
        }
        scenario.grid.validate()?;
        Ok(scenario)
    }
}
