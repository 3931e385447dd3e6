//! Per-stage vocabulary-size targets and language-mixture percentages.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Uniform,
    Exponential,
    Explicit,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Uniform => "uniform",
            Strategy::Exponential => "exponential",
            Strategy::Explicit => "explicit",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Strategy::Uniform),
            "exponential" => Ok(Strategy::Exponential),
            "explicit" => Ok(Strategy::Explicit),
            other => Err(Error::invalid(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Cumulative number of new subwords present at each stage. Stage 1 adds
/// nothing and the last stage reaches the full budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionSchedule {
    pub strategy: Strategy,
    pub budget: u64,
    pub cumulative_targets: Vec<u64>,
}

impl ExpansionSchedule {
    pub fn new(strategy: Strategy, budget: u64, stages: usize) -> Result<Self> {
        match strategy {
            Strategy::Uniform => uniform_schedule(budget, stages),
            Strategy::Exponential => exponential_schedule(budget, stages),
            Strategy::Explicit => Err(Error::invalid(
                "explicit schedules are built from a target list",
            )),
        }
    }

    pub fn stages(&self) -> usize {
        self.cumulative_targets.len()
    }

    /// New subwords introduced at each stage.
    pub fn deltas(&self) -> Vec<u64> {
        let mut prev = 0;
        self.cumulative_targets
            .iter()
            .map(|&c| {
                let d = c - prev;
                prev = c;
                d
            })
            .collect()
    }
}

fn check_shape(budget: u64, stages: usize) -> Result<()> {
    if stages < 2 {
        return Err(Error::invalid(format!("stages must be >= 2, got {stages}")));
    }
    if budget < 1 {
        return Err(Error::invalid("budget must be >= 1"));
    }
    Ok(())
}

/// Doubling targets `0, 1, 2, 4, ...` capped at the budget, with the final
/// stage clamped to the budget.
pub fn exponential_schedule(budget: u64, stages: usize) -> Result<ExpansionSchedule> {
    check_shape(budget, stages)?;
    let mut targets = Vec::with_capacity(stages);
    targets.push(0);
    for i in 2..stages {
        let doubled = 1u64.checked_shl((i - 2) as u32).filter(|&v| v != 0);
        targets.push(doubled.map_or(budget, |v| v.min(budget)));
    }
    targets.push(budget);
    Ok(ExpansionSchedule {
        strategy: Strategy::Exponential,
        budget,
        cumulative_targets: targets,
    })
}

/// Evenly spaced targets `round(budget * (i - 1) / (stages - 1))`, rounding
/// half up.
pub fn uniform_schedule(budget: u64, stages: usize) -> Result<ExpansionSchedule> {
    check_shape(budget, stages)?;
    let span = (stages - 1) as u128;
    let targets = (0..stages as u128)
        .map(|k| ((2 * budget as u128 * k + span) / (2 * span)) as u64)
        .collect();
    Ok(ExpansionSchedule {
        strategy: Strategy::Uniform,
        budget,
        cumulative_targets: targets,
    })
}

pub fn explicit_schedule(targets: Vec<u64>) -> Result<ExpansionSchedule> {
    let budget = targets.last().copied().unwrap_or(0);
    check_shape(budget, targets.len())?;
    if targets[0] != 0 {
        return Err(Error::invalid("explicit schedule must start at 0"));
    }
    if targets.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("explicit schedule must be non-decreasing"));
    }
    Ok(ExpansionSchedule {
        strategy: Strategy::Explicit,
        budget,
        cumulative_targets: targets,
    })
}

/// A percentage held as an integer number of hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pct(u32);

impl Pct {
    pub const HUNDRED: Pct = Pct(10_000);

    pub fn from_hundredths(h: u32) -> Pct {
        Pct(h)
    }

    /// Rounds half up to two decimals.
    pub fn round(value: f64) -> Pct {
        Pct((value * 100.0 + 0.5).floor().max(0.0) as u32)
    }

    pub fn hundredths(self) -> u32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 100.0
    }

    pub fn fraction(self) -> f64 {
        f64::from(self.0) / 10_000.0
    }
}

impl fmt::Display for Pct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureRow {
    pub arabic_pct: Pct,
    pub english_pct: Pct,
    pub math_code_pct: Pct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureParams {
    pub start_pct: f64,
    pub end_pct: f64,
    pub constant_pct: f64,
}

impl Default for MixtureParams {
    fn default() -> Self {
        MixtureParams {
            start_pct: 30.0,
            end_pct: 90.0,
            constant_pct: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixturePlan {
    pub rows: Vec<MixtureRow>,
}

/// Quarter-cosine ramp of the Arabic share from `start_pct` to `end_pct`:
///
/// `arabic(i) = end - (end - start) * cos(pi * (i - 1) / (2 * (stages - 1)))`
///
/// Math/code holds at `constant_pct` and English takes the remainder, so
/// each row sums to exactly 100.00 after rounding.
pub fn mixture_schedule(stages: usize, params: MixtureParams) -> Result<MixturePlan> {
    let MixtureParams {
        start_pct: start,
        end_pct: end,
        constant_pct: constant,
    } = params;
    let mut problems = Vec::new();
    if stages < 2 {
        problems.push(format!("stages must be >= 2, got {stages}"));
    }
    if !(start.is_finite() && end.is_finite() && constant.is_finite()) {
        problems.push("mixture percentages must be finite".to_owned());
    } else {
        if !(0.0 <= start && start < end) {
            problems.push(format!(
                "need 0 <= start < end, got start {start}, end {end}"
            ));
        }
        if constant < 0.0 || end + constant > 100.0 {
            problems.push(format!(
                "need constant >= 0 and end + constant <= 100, got {end} + {constant}"
            ));
        }
    }
    if !problems.is_empty() {
        return Err(Error::invalid(problems.join("; ")));
    }

    let constant = Pct::round(constant).min(Pct::HUNDRED);
    let span = 2.0 * (stages - 1) as f64;
    let rows = (0..stages)
        .map(|k| {
            let arabic = Pct::round(end - (end - start) * (PI * k as f64 / span).cos())
                .min(Pct(Pct::HUNDRED.0 - constant.0));
            MixtureRow {
                arabic_pct: arabic,
                english_pct: Pct(Pct::HUNDRED.0 - constant.0 - arabic.0),
                math_code_pct: constant,
            }
        })
        .collect();
    Ok(MixturePlan { rows })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    /// 1-based stage index.
    pub stage: usize,
    pub cumulative_new: u64,
    pub vocab_target: u64,
    pub mixture: MixtureRow,
    pub token_budget: u64,
}

pub fn stage_plans(
    exp: &ExpansionSchedule,
    mix: &MixturePlan,
    base_size: u64,
    per_stage_tokens: u64,
) -> Result<Vec<StagePlan>> {
    if exp.stages() != mix.rows.len() {
        return Err(Error::invalid(format!(
            "expansion schedule has {} stages but the mixture plan has {} rows",
            exp.stages(),
            mix.rows.len()
        )));
    }
    if exp.stages() < 2 {
        return Err(Error::invalid("a stage plan needs at least 2 stages"));
    }
    Ok(exp
        .cumulative_targets
        .iter()
        .zip(&mix.rows)
        .enumerate()
        .map(|(i, (&c, row))| StagePlan {
            stage: i + 1,
            cumulative_new: c,
            vocab_target: base_size + c,
            mixture: *row,
            token_budget: per_stage_tokens,
        })
        .collect())
}

pub const SCHEDULE_CSV_HEADER: &str =
    "stage,new_subwords_cumulative,vocab_target,arabic_pct,english_pct,math_code_pct,token_budget";

pub fn schedule_csv(plans: &[StagePlan]) -> String {
    let mut out = String::from(SCHEDULE_CSV_HEADER);
    out.push('\n');
    for p in plans {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.stage,
            p.cumulative_new,
            p.vocab_target,
            p.mixture.arabic_pct,
            p.mixture.english_pct,
            p.mixture.math_code_pct,
            p.token_budget
        ));
    }
    out
}
