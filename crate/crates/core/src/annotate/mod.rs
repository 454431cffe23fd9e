//! Unsupervised Pick/NoPick labeling of cart telemetry.
//!
//! Every sample starts as a candidate pick. Three removal stages run in order:
//! samples outside the field boundary, samples that density clustering of
//! `(easting, northing, time)` marks as noise, and samples whose mass is not
//! strictly between the empty-tray and full-tray weights. Survivors are `Pick`.

mod dbscan;
mod geofence;
mod speed;

pub use dbscan::{dbscan, Clustering, DbscanParams};
pub use geofence::{point_in_polygon, FieldBoundary, Point};
pub use speed::{derive_speed, FeatureFrame, SpeedParams};

use serde::{Deserialize, Serialize};

use crate::ingest::{Activity, CartSession, SessionId};

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("degenerate field boundary: {0}")]
    DegeneratePolygon(String),
    #[error("field boundary file: {0}")]
    BoundaryFile(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("session has {samples} samples, fewer than the smoothing window {window}")]
    SessionTooShort { samples: usize, window: usize },
    #[error("session {0} is empty")]
    EmptySession(SessionId),
}

/// Exclusive mass window in kg for a sample to count as tray-on-cart picking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MassBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for MassBounds {
    /// Empty tray 0.5 kg, full tray 5.5 kg.
    fn default() -> Self {
        MassBounds { min: 0.5, max: 5.5 }
    }
}

impl MassBounds {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        if !(self.min >= 0.0 && self.min < self.max) {
            return Err(AnnotateError::InvalidParams(format!(
                "mass bounds need 0 <= min < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

pub fn mass_valid(m: f64, bounds: &MassBounds) -> bool {
    bounds.min < m && m < bounds.max
}

/// Labels aligned one-to-one with a session's samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSequence {
    pub session_id: SessionId,
    pub labels: Vec<Activity>,
}

impl LabelSequence {
    pub fn new(session_id: SessionId, labels: Vec<Activity>) -> Self {
        LabelSequence { session_id, labels }
    }

    /// Labels carried by a fully labeled session.
    pub fn from_session(session: &CartSession) -> Option<Self> {
        session.labels().map(|labels| LabelSequence::new(session.session_id.clone(), labels))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pick_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_pick()).count()
    }
}

/// Annotation settings, keyed `dbscan.*`, `mass.*` and `speed.*` in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateConfig {
    pub dbscan: DbscanParams,
    pub mass: MassBounds,
    pub speed: SpeedParams,
}

impl AnnotateConfig {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        self.dbscan.validate()?;
        self.mass.validate()?;
        self.speed.validate()
    }
}

/// Which removal stage, if any, rejected each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Removal {
    Kept,
    OutsideBoundary,
    ClusterNoise,
    InvalidMass,
}

/// Per-sample stage outcome of the three-stage filter.
pub fn annotation_stages(
    session: &CartSession,
    boundary: &FieldBoundary,
    dbscan_params: &DbscanParams,
    mass: &MassBounds,
) -> Result<Vec<Removal>, AnnotateError> {
    dbscan_params.validate()?;
    mass.validate()?;
    if session.is_empty() {
        return Err(AnnotateError::EmptySession(session.session_id.clone()));
    }
    let samples = &session.samples;
    let mut stage: Vec<Removal> = samples
        .iter()
        .map(|s| if boundary.contains((s.easting, s.northing)) { Removal::Kept } else { Removal::OutsideBoundary })
        .collect();

    let t0 = samples[0].gps_tow;
    let kept: Vec<usize> = (0..samples.len()).filter(|&i| stage[i] == Removal::Kept).collect();
    let points: Vec<[f64; 3]> = kept
        .iter()
        .map(|&i| {
            let s = &samples[i];
            dbscan_params.embed(s.easting, s.northing, (s.gps_tow - t0) as f64 / 1000.0)
        })
        .collect();
    let clusters = dbscan(&points, dbscan_params)?;
    for (k, &i) in kept.iter().enumerate() {
        if clusters.is_noise(k) {
            stage[i] = Removal::ClusterNoise;
        }
    }

    for (st, s) in stage.iter_mut().zip(samples) {
        if *st == Removal::Kept && !mass_valid(s.raw_mass, mass) {
            *st = Removal::InvalidMass;
        }
    }
    Ok(stage)
}

pub fn annotate_session(
    session: &CartSession,
    boundary: &FieldBoundary,
    dbscan_params: &DbscanParams,
    mass: &MassBounds,
) -> Result<LabelSequence, AnnotateError> {
    let stages = annotation_stages(session, boundary, dbscan_params, mass)?;
    Ok(LabelSequence::new(
        session.session_id.clone(),
        stages.into_iter().map(|s| Activity::from_pick(s == Removal::Kept)).collect(),
    ))
}
