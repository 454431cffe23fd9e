use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EfficiencyError, EfficiencyReport};

/// Linear interpolation between order statistics at position `(n - 1) * p` of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(lower, upper)` Tukey fences at 1.5 IQR.
pub fn iqr_fences(values: &[f64]) -> Result<(f64, f64), EfficiencyError> {
    if values.len() < 4 {
        return Err(EfficiencyError::TooFewValues { needed: 4, got: values.len() });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok((q1 - 1.5 * iqr, q3 + 1.5 * iqr))
}

/// Splits values into `(inliers, outliers)`, both in input order.
pub fn iqr_filter(values: &[f64]) -> Result<(Vec<f64>, Vec<f64>), EfficiencyError> {
    let (lo, hi) = iqr_fences(values)?;
    Ok(values.iter().partition(|&&v| v >= lo && v <= hi))
}

/// Report field summarised over a season.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Efficiency,
    TrayFillTime,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Efficiency => "efficiency",
            Metric::TrayFillTime => "tray_fill_time",
        }
    }

    /// `None` when the report lacks the value (no trays).
    pub fn select(self, r: &EfficiencyReport) -> Option<f64> {
        match self {
            Metric::Efficiency => Some(r.efficiency_pct),
            Metric::TrayFillTime => r.tray_fill_min,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = EfficiencyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "efficiency" | "efficiency_pct" => Ok(Metric::Efficiency),
            "tray_fill_time" | "tray_fill" | "tray_fill_min" => Ok(Metric::TrayFillTime),
            other => Err(EfficiencyError::InvalidParams(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonSummary {
    pub metric: String,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Sample standard deviation (n - 1).
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_in: usize,
    pub n_outliers: usize,
    pub iqr_filtered: bool,
    pub quartile_method: String,
    pub ci_method: String,
}

/// Mean, spread and a normal-approximation 95% interval, after optional IQR outlier removal.
pub fn season_summary(values: &[f64], metric: &str, iqr: bool) -> Result<SeasonSummary, EfficiencyError> {
    if values.len() < 4 {
        return Err(EfficiencyError::TooFewValues { needed: 4, got: values.len() });
    }
    let (mut inliers, outliers) = if iqr { iqr_filter(values)? } else { (values.to_vec(), Vec::new()) };
    inliers.sort_by(f64::total_cmp);
    let n = inliers.len() as f64;
    let mean = inliers.iter().sum::<f64>() / n;
    let sd = if inliers.len() > 1 {
        (inliers.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let half = 1.96 * sd / n.sqrt();
    Ok(SeasonSummary {
        metric: metric.to_string(),
        mean,
        median: quantile(&inliers, 0.5),
        min: inliers[0],
        max: *inliers.last().expect("non-empty"),
        sd,
        ci_low: mean - half,
        ci_high: mean + half,
        n_in: inliers.len(),
        n_outliers: outliers.len(),
        iqr_filtered: iqr,
        quartile_method: "linear interpolation, position (n-1)p".into(),
        ci_method: "mean +/- 1.96 sd / sqrt(n)".into(),
    })
}
