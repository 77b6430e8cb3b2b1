//! Per-tag series shared by the growth and persistence models.

use serde::{Deserialize, Serialize};

use crate::taxonomy::{ClassAssignment, TrajectoryClass};
use crate::trajectory::CurveSummary;
use crate::vibrancy::{EnvFrame, VibrancyFrame};

/// Everything the models need about one tracked hashtag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagSeries {
    pub tag: String,
    pub episode_id: String,
    pub summary: CurveSummary<f64>,
    pub frames: Vec<VibrancyFrame>,
    pub env: Vec<EnvFrame>,
}

impl TagSeries {
    pub fn first_minute(&self) -> i64 {
        self.frames.first().map_or(0, |f| f.minute)
    }

    /// Last minute of the tracking window.
    pub fn last_minute(&self) -> i64 {
        self.frames.last().map_or(0, |f| f.minute)
    }

    pub fn frame(&self, minute: i64) -> Option<&VibrancyFrame> {
        let i = minute - self.first_minute();
        (i >= 0).then(|| self.frames.get(i as usize)).flatten()
    }

    pub fn env_frame(&self, minute: i64) -> Option<&EnvFrame> {
        let first = self.env.first()?.minute;
        let i = minute - first;
        (i >= 0).then(|| self.env.get(i as usize)).flatten()
    }
}

/// Series of the tags assigned to `class`, in assignment order.
pub fn class_members<'a, F>(
    series: &'a [TagSeries],
    assignments: &[ClassAssignment<F>],
    class: TrajectoryClass,
) -> Vec<&'a TagSeries> {
    assignments
        .iter()
        .filter(|a| a.class == class)
        .filter_map(|a| series.iter().find(|s| s.tag == a.tag))
        .collect()
}
