//! Piecewise-linear pedestrian action schedules.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nets::ActionTriple;
use crate::store::write_actions_csv;

/// A value held constant or ramped linearly across a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ramp {
    pub from: f64,
    pub to: f64,
}

impl Ramp {
    pub const fn constant(v: f64) -> Self {
        Self { from: v, to: v }
    }

    pub const fn linear(from: f64, to: f64) -> Self {
        Self { from, to }
    }

    fn at(&self, frac: f64) -> f64 {
        if self.from == self.to || frac == 0.0 {
            self.from
        } else if frac == 1.0 {
            self.to
        } else {
            self.from + frac * (self.to - self.from)
        }
    }
}

/// Frames `start..=end` share a movement flag and angle ramps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub a0: f64,
    pub a1: Ramp,
    pub a2: Ramp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSchedule {
    segments: Vec<Segment>,
}

impl ActionSchedule {
    /// Segments must start at frame 0 and be contiguous.
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let mut next = 0;
        for s in &segments {
            if s.start != next || s.end < s.start {
                return Err(Error::invalid(format!(
                    "segment {}-{} breaks contiguity at frame {next}",
                    s.start, s.end
                )));
            }
            if s.a0 != 0.0 && s.a0 != 1.0 {
                return Err(Error::invalid("movement flag must be 0 or 1"));
            }
            if ![s.a1.from, s.a1.to, s.a2.from, s.a2.to].iter().all(|v| v.is_finite()) {
                return Err(Error::invalid("angles must be finite"));
            }
            next = s.end + 1;
        }
        if segments.is_empty() {
            return Err(Error::invalid("schedule without segments"));
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Number of frames covered.
    pub fn len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segment_of(&self, t: usize) -> Option<&Segment> {
        self.segments.iter().find(|s| (s.start..=s.end).contains(&t))
    }

    pub fn at(&self, t: usize) -> Result<ActionTriple> {
        let s = self
            .segment_of(t)
            .ok_or_else(|| Error::invalid(format!("frame {t} outside the schedule (0..{})", self.len())))?;
        let frac = if s.end == s.start {
            0.0
        } else {
            (t - s.start) as f64 / (s.end - s.start) as f64
        };
        Ok(ActionTriple::new(s.a0, s.a1.at(frac), s.a2.at(frac)))
    }

    /// Actions for frames `0..frames`.
    pub fn actions(&self, frames: usize) -> Result<Vec<ActionTriple>> {
        (0..frames).map(|t| self.at(t)).collect()
    }
}

/// The 400-frame street-crossing scenario: walk along the sidewalk, turn to
/// the street, look around, cross on the crosswalk, turn back and walk on.
pub fn table1_schedule() -> ActionSchedule {
    use Ramp as R;
    let seg = |start, end, a0, a1, a2| Segment { start, end, a0, a1, a2 };
    ActionSchedule::new(vec![
        seg(0, 80, 1.0, R::constant(180.0), R::constant(0.0)),
        seg(81, 118, 0.0, R::linear(180.0, 270.0), R::linear(0.0, -48.63)),
        seg(119, 135, 0.0, R::constant(270.0), R::linear(-48.63, -0.66)),
        seg(136, 158, 0.0, R::constant(270.0), R::constant(-0.66)),
        seg(159, 233, 1.0, R::constant(270.0), R::linear(-0.66, 85.54)),
        seg(234, 337, 1.0, R::constant(270.0), R::linear(85.54, 0.24)),
        seg(338, 377, 0.0, R::linear(270.0, 180.0), R::constant(0.24)),
        seg(378, 399, 1.0, R::constant(180.0), R::constant(0.24)),
    ])
    .expect("built-in schedule is contiguous")
}

/// Writes the first `frames` actions as `frame,a0,a1,a2` rows.
pub fn actions_csv(schedule: &ActionSchedule, frames: usize, path: impl AsRef<Path>) -> Result<()> {
    write_actions_csv(&schedule.actions(frames)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_midpoint() {
        let s = table1_schedule();
        let a = s.at(127).unwrap();
        assert_eq!(a.a1, 270.0);
        let want = -48.63 + (127.0 - 119.0) / (135.0 - 119.0) * (-0.66 - -48.63);
        assert!((a.a2 - want).abs() < 1e-12);
        assert!((a.a2 - -24.645).abs() < 1e-9);
    }

    #[test]
    fn coverage() {
        let s = table1_schedule();
        assert_eq!(s.len(), 400);
        assert!(s.at(400).is_err());
        for seg in s.segments() {
            assert_eq!(s.at(seg.start).unwrap().a2, seg.a2.from);
            assert_eq!(s.at(seg.end).unwrap().a2, seg.a2.to);
            assert_eq!(s.at(seg.end).unwrap().a1, seg.a1.to);
        }
        assert_eq!(s.actions(400).unwrap().len(), 400);
    }

    #[test]
    fn rejects_gaps() {
        let seg = |start, end| Segment {
            start,
            end,
            a0: 1.0,
            a1: Ramp::constant(0.0),
            a2: Ramp::constant(0.0),
        };
        assert!(ActionSchedule::new(vec![seg(0, 3), seg(5, 9)]).is_err());
        assert!(ActionSchedule::new(vec![seg(1, 3)]).is_err());
        assert!(ActionSchedule::new(vec![]).is_err());
    }
}
