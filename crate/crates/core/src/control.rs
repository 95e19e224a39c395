//! Closed-loop receiver tuning.
//!
//! A [`Plant`] maps a receiver setting to an acquisition-quality objective.
//! [`tune`] searches a discrete gain × bandwidth grid for the best setting,
//! either exhaustively or by coordinate descent from the grid midpoint.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roi::RegionOfInterest;
use crate::rx::clipping_ratio_of;
use crate::signal::{estimate_snr_db, IqRecording, SNR_FLOOR_RATIO};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveParams {
    pub clip_weight: f64,
    pub no_roi_penalty: f64,
    /// Samples on either side of an ROI excluded from the noise reference.
    #[serde(default = "default_guard")]
    pub noise_guard: usize,
}

fn default_guard() -> usize {
    32
}

impl Default for ObjectiveParams {
    fn default() -> Self {
        Self {
            clip_weight: 0.5,
            no_roi_penalty: 100.0,
            noise_guard: default_guard(),
        }
    }
}

/// Objective value with the terms that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantResponse {
    pub objective: f64,
    /// Mean ROI SNR; NaN when nothing was detected.
    pub snr_est_db: f64,
    pub clip_ratio: f64,
    pub n_rois: usize,
}

/// `mean ROI SNR − w_c·100·clip_ratio`, or `−P` with no ROIs.
///
/// The noise reference is every sample farther than `noise_guard` from an
/// ROI. When that reference is too short or has zero power (an ADC-starved
/// noise floor), each ROI scores the -60 dB floor.
pub fn objective(
    recording: &IqRecording,
    rois: &[RegionOfInterest],
    full_scale: f64,
    params: &ObjectiveParams,
) -> PlantResponse {
    let clip_ratio = clipping_ratio_of(recording.samples(), full_scale);
    if rois.is_empty() {
        return PlantResponse {
            objective: -params.no_roi_penalty,
            snr_est_db: f64::NAN,
            clip_ratio,
            n_rois: 0,
        };
    }
    let x = recording.samples();
    let mut excluded = vec![false; x.len()];
    for r in rois {
        let lo = r.start_sample.saturating_sub(params.noise_guard);
        let hi = (r.end() + params.noise_guard).min(x.len());
        excluded[lo..hi].iter_mut().for_each(|e| *e = true);
    }
    let noise: Vec<_> = x.iter().zip(&excluded).filter(|(_, &e)| !e).map(|(z, _)| *z).collect();
    let floor_db = 10.0 * SNR_FLOOR_RATIO.log10();
    let snr_sum: f64 = rois
        .iter()
        .map(|r| estimate_snr_db(&x[r.start_sample..r.end()], &noise).unwrap_or(floor_db))
        .sum();
    let snr = snr_sum / rois.len() as f64;
    PlantResponse {
        objective: snr - params.clip_weight * 100.0 * clip_ratio,
        snr_est_db: snr,
        clip_ratio,
        n_rois: rois.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningGrid {
    pub gain_db_values: Vec<f64>,
    pub filter_bw_hz_values: Vec<f64>,
}

impl TuningGrid {
    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [
            ("tuning.grid.gain_db_values", &self.gain_db_values),
            ("tuning.grid.filter_bw_hz_values", &self.filter_bw_hz_values),
        ] {
            if axis.is_empty() {
                return Err(Error::validation(name, "must not be empty"));
            }
            if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::validation(name, "must be finite and strictly ascending"));
            }
        }
        if self.filter_bw_hz_values[0] <= 0.0 {
            return Err(Error::validation("tuning.grid.filter_bw_hz_values", "must be > 0"));
        }
        Ok(())
    }

    pub fn point(&self, gi: usize, bi: usize) -> TuningPoint {
        TuningPoint {
            gain_db: self.gain_db_values[gi],
            filter_bw_hz: self.filter_bw_hz_values[bi],
        }
    }

    pub fn size(&self) -> usize {
        self.gain_db_values.len() * self.filter_bw_hz_values.len()
    }

    pub fn contains(&self, p: &TuningPoint) -> bool {
        self.gain_db_values.contains(&p.gain_db) && self.filter_bw_hz_values.contains(&p.filter_bw_hz)
    }

    /// The four (gain, bandwidth) corners.
    pub fn corners(&self) -> [TuningPoint; 4] {
        let (g, b) = (self.gain_db_values.len() - 1, self.filter_bw_hz_values.len() - 1);
        [self.point(0, 0), self.point(0, b), self.point(g, 0), self.point(g, b)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningPoint {
    pub gain_db: f64,
    pub filter_bw_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Strategy {
    Exhaustive,
    /// `seed` is recorded in the trace; the sweep itself is deterministic.
    CoordinateDescent { max_rounds: usize, seed: u64 },
}

/// Anything that can score a receiver setting.
pub trait Plant {
    fn evaluate(&self, point: TuningPoint) -> Result<PlantResponse>;
}

impl<F> Plant for F
where
    F: Fn(TuningPoint) -> Result<PlantResponse>,
{
    fn evaluate(&self, point: TuningPoint) -> Result<PlantResponse> {
        self(point)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningStep {
    pub point: TuningPoint,
    pub response: PlantResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningTrace {
    pub steps: Vec<TuningStep>,
    pub best_point: TuningPoint,
    pub best_value: f64,
    pub strategy: Strategy,
}

impl TuningTrace {
    pub fn best_step_index(&self) -> usize {
        best_index(&self.steps).expect("trace is never empty")
    }

    /// `step,gain_db,filter_bw_hz,objective,snr_est_db,clip_ratio,n_rois,is_best`
    pub fn to_csv(&self) -> String {
        let best = self.best_step_index();
        let mut out = String::from("step,gain_db,filter_bw_hz,objective,snr_est_db,clip_ratio,n_rois,is_best\n");
        for (i, s) in self.steps.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{},{},{}",
                s.point.gain_db,
                s.point.filter_bw_hz,
                s.response.objective,
                s.response.snr_est_db,
                s.response.clip_ratio,
                s.response.n_rois,
                u8::from(i == best)
            );
        }
        out
    }
}

/// Higher objective wins; ties go to lower gain, then lower bandwidth.
fn prefer(a: &TuningStep, b: &TuningStep) -> Ordering {
    a.response
        .objective
        .total_cmp(&b.response.objective)
        .then_with(|| b.point.gain_db.total_cmp(&a.point.gain_db))
        .then_with(|| b.point.filter_bw_hz.total_cmp(&a.point.filter_bw_hz))
}

fn best_index(steps: &[TuningStep]) -> Option<usize> {
    (0..steps.len()).reduce(|best, i| if prefer(&steps[i], &steps[best]) == Ordering::Greater { i } else { best })
}

struct Session<'a, P: Plant + ?Sized> {
    plant: &'a P,
    grid: &'a TuningGrid,
    budget: usize,
    steps: Vec<TuningStep>,
    memo: HashMap<(usize, usize), usize>,
}

impl<P: Plant + ?Sized> Session<'_, P> {
    fn exhausted(&self) -> bool {
        self.steps.len() >= self.budget
    }

    /// Evaluates a grid cell once; `None` when the budget is spent.
    fn eval(&mut self, gi: usize, bi: usize) -> Result<Option<TuningStep>> {
        if let Some(&i) = self.memo.get(&(gi, bi)) {
            return Ok(Some(self.steps[i]));
        }
        if self.exhausted() {
            return Ok(None);
        }
        let point = self.grid.point(gi, bi);
        let response = self.plant.evaluate(point)?;
        let step = TuningStep { point, response };
        self.memo.insert((gi, bi), self.steps.len());
        self.steps.push(step);
        Ok(Some(step))
    }
}

pub fn tune<P: Plant + ?Sized>(plant: &P, grid: &TuningGrid, strategy: Strategy, budget: usize) -> Result<TuningTrace> {
    grid.validate()?;
    if budget == 0 {
        return Err(Error::Tuning("budget must be >= 1".into()));
    }
    let mut s = Session {
        plant,
        grid,
        budget,
        steps: Vec::new(),
        memo: HashMap::new(),
    };
    let (ng, nb) = (grid.gain_db_values.len(), grid.filter_bw_hz_values.len());
    match strategy {
        Strategy::Exhaustive => {
            'outer: for gi in 0..ng {
                for bi in 0..nb {
                    if s.eval(gi, bi)?.is_none() {
                        break 'outer;
                    }
                }
            }
        }
        Strategy::CoordinateDescent { max_rounds, .. } => {
            let mut cur = ((ng - 1) / 2, (nb - 1) / 2);
            if let Some(mut cur_step) = s.eval(cur.0, cur.1)? {
                'rounds: for _ in 0..max_rounds {
                    let mut improved = false;
                    for axis in 0..2 {
                        let len = if axis == 0 { ng } else { nb };
                        let mut axis_best = (cur, cur_step);
                        for k in 0..len {
                            let cell = if axis == 0 { (k, cur.1) } else { (cur.0, k) };
                            let Some(step) = s.eval(cell.0, cell.1)? else {
                                break 'rounds;
                            };
                            if prefer(&step, &axis_best.1) == Ordering::Greater {
                                axis_best = (cell, step);
                            }
                        }
                        if axis_best.1.response.objective > cur_step.response.objective {
                            improved = true;
                        }
                        cur = axis_best.0;
                        cur_step = axis_best.1;
                    }
                    if !improved {
                        break;
                    }
                }
            }
        }
    }
    let best = best_index(&s.steps).ok_or_else(|| Error::Tuning("no evaluation completed".into()))?;
    Ok(TuningTrace {
        best_point: s.steps[best].point,
        best_value: s.steps[best].response.objective,
        steps: s.steps,
        strategy,
    })
}

/// True when the objective at the tuned setting has fallen by more than the threshold.
pub fn replan_on_drift(previous: &TuningTrace, new_objective_at_best: f64, drift_threshold: f64) -> bool {
    new_objective_at_best < previous.best_value - drift_threshold
}
