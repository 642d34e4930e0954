//! Synthetic pedestrian street-crossing scenario: the action schedule and a
//! semantic-frame renderer.

mod render;
mod schedule;

pub use render::{attention_fixtures, attention_map, fixation_mask, render_sequence, Renderer, SceneSpec};
pub use schedule::{actions_csv, table1_schedule, ActionSchedule, Ramp, Segment};
