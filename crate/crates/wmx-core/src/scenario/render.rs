//! A tiny ray caster producing semantic street-crossing frames.
//!
//! World frame: the near sidewalk runs along the x axis (`0 ≤ y < 3`), the
//! street lies at `-16 ≤ y < 0` with a crosswalk at `|x| ≤ 3`, and the far
//! sidewalk at `-19 ≤ y < -16`. Buildings line both sides. The pedestrian's
//! eye sits 1.6 units above ground; the view heading is body angle plus head
//! angle (degrees, counter-clockwise from +x), pitched slightly downward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::schedule::ActionSchedule;
use crate::error::{Error, Result};
use crate::nets::ActionTriple;
use crate::store::{class, ClassFrame, FrameDataset, CLASS_COUNT, FRAME_HEIGHT, FRAME_WIDTH};

const EYE_HEIGHT: f64 = 1.6;
const HFOV_DEG: f64 = 90.0;
const PITCH_DEG: f64 = -15.0;
const STEP: f64 = 0.1;
const NEAR_SIDEWALK: (f64, f64) = (0.0, 3.0);
const FAR_SIDEWALK: (f64, f64) = (-19.0, -16.0);
const CROSSWALK_HALF_WIDTH: f64 = 3.0;
const ROAD_LINE_Y: (f64, f64) = (-8.1, -7.9);
const BUILDING_HEIGHT: f64 = 8.0;
const WORLD_EXTENT: f64 = 1000.0;
const LANE_PERIOD: f64 = 120.0;
/// Vehicles keep clear of the crossing while the pedestrian is on it.
const STOP_LINE: f64 = 5.0;
const CROSSING_FRAMES: (usize, usize) = (150, 345);

/// Scene layout and population.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub cars: usize,
    pub cyclists: usize,
    pub pedestrians: usize,
    pub poles: bool,
    pub crosswalk: bool,
    pub road_lines: bool,
    /// Pedestrian start position.
    pub start: (f64, f64),
}

impl SceneSpec {
    /// The populated street used for the scenario fixtures.
    pub fn street(seed: u64) -> Self {
        Self {
            seed,
            cars: 4,
            cyclists: 1,
            pedestrians: 3,
            poles: true,
            crosswalk: true,
            road_lines: true,
            start: (8.1, 1.0),
        }
    }

    /// Background bands only: sky, buildings, street and sidewalks.
    pub fn empty() -> Self {
        Self {
            seed: 0,
            cars: 0,
            cyclists: 0,
            pedestrians: 0,
            poles: false,
            crosswalk: false,
            road_lines: false,
            start: (8.1, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: [f64; 3],
    max: [f64; 3],
    class: u8,
}

impl Aabb {
    /// Entry distance along the ray, if hit in front of the origin.
    fn hit(&self, o: [f64; 3], d: [f64; 3]) -> Option<f64> {
        let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
        for k in 0..3 {
            if d[k].abs() < 1e-12 {
                if o[k] < self.min[k] || o[k] > self.max[k] {
                    return None;
                }
            } else {
                let (a, b) = ((self.min[k] - o[k]) / d[k], (self.max[k] - o[k]) / d[k]);
                let (a, b) = if a < b { (a, b) } else { (b, a) };
                t0 = t0.max(a);
                t1 = t1.min(b);
                if t0 > t1 {
                    return None;
                }
            }
        }
        Some(t0)
    }
}

/// A road user moving along x with a fixed lane.
#[derive(Debug, Clone, Copy)]
struct Mover {
    x0: f64,
    speed: f64,
    lane_y: f64,
    half: [f64; 3],
    class: u8,
}

impl Mover {
    fn at(&self, t: usize) -> Aabb {
        let raw = self.x0 + self.speed * t as f64;
        let mut x = (raw + LANE_PERIOD / 2.0).rem_euclid(LANE_PERIOD) - LANE_PERIOD / 2.0;
        let reach = STOP_LINE + self.half[0];
        if (CROSSING_FRAMES.0..=CROSSING_FRAMES.1).contains(&t) && x.abs() < reach {
            x = if self.speed >= 0.0 { -reach } else { reach };
        }
        Aabb {
            min: [x - self.half[0], self.lane_y - self.half[1], 0.0],
            max: [x + self.half[0], self.lane_y + self.half[1], 2.0 * self.half[2]],
            class: self.class,
        }
    }
}

/// Renders a scene along the pedestrian's trajectory.
#[derive(Debug, Clone)]
pub struct Renderer {
    height: usize,
    width: usize,
    fixed: Vec<Aabb>,
    movers: Vec<Mover>,
    crosswalk: bool,
    road_lines: bool,
    start: (f64, f64),
}

impl Renderer {
    pub fn new(scene: &SceneSpec) -> Self {
        Self::with_size(scene, FRAME_HEIGHT, FRAME_WIDTH)
    }

    pub fn with_size(scene: &SceneSpec, height: usize, width: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
        let e = WORLD_EXTENT;
        let mut fixed = vec![
            Aabb {
                min: [-e, NEAR_SIDEWALK.1, 0.0],
                max: [e, e, BUILDING_HEIGHT],
                class: class::BUILDING,
            },
            Aabb {
                min: [-e, -e, 0.0],
                max: [e, FAR_SIDEWALK.0, BUILDING_HEIGHT],
                class: class::BUILDING,
            },
        ];
        if scene.poles {
            for k in -6..=6 {
                let x = 10.0 * k as f64 + 5.0;
                for y in [NEAR_SIDEWALK.1 - 0.4, FAR_SIDEWALK.0 + 0.4] {
                    fixed.push(Aabb {
                        min: [x - 0.1, y - 0.1, 0.0],
                        max: [x + 0.1, y + 0.1, 4.0],
                        class: class::POLE,
                    });
                }
            }
        }
        let mut movers = Vec::new();
        for i in 0..scene.cars {
            let forward = i % 2 == 0;
            movers.push(Mover {
                x0: rng.gen_range(-LANE_PERIOD / 2.0..LANE_PERIOD / 2.0),
                speed: if forward { 1.0 } else { -1.0 } * rng.gen_range(0.15..0.35),
                lane_y: if forward { -4.0 } else { -12.0 },
                half: [2.0, 0.9, 0.75],
                class: class::CAR,
            });
        }
        for _ in 0..scene.cyclists {
            movers.push(Mover {
                x0: rng.gen_range(-LANE_PERIOD / 2.0..LANE_PERIOD / 2.0),
                speed: rng.gen_range(0.08..0.15),
                lane_y: -1.2,
                half: [0.9, 0.3, 0.85],
                class: class::CYCLIST,
            });
        }
        for _ in 0..scene.pedestrians {
            let far = rng.gen_bool(0.5);
            movers.push(Mover {
                x0: rng.gen_range(-LANE_PERIOD / 2.0..LANE_PERIOD / 2.0),
                speed: rng.gen_range(-0.06..0.06),
                lane_y: if far { -17.5 } else { 2.2 },
                half: [0.25, 0.25, 0.9],
                class: class::PEDESTRIAN,
            });
        }
        Self {
            height,
            width,
            fixed,
            movers,
            crosswalk: scene.crosswalk,
            road_lines: scene.road_lines,
            start: scene.start,
        }
    }

    fn ground_class(&self, x: f64, y: f64) -> u8 {
        if (NEAR_SIDEWALK.0..NEAR_SIDEWALK.1).contains(&y) || (FAR_SIDEWALK.0..FAR_SIDEWALK.1).contains(&y) {
            class::SIDEWALK
        } else if (FAR_SIDEWALK.1..NEAR_SIDEWALK.0).contains(&y) {
            if self.crosswalk && x.abs() <= CROSSWALK_HALF_WIDTH {
                class::CROSSWALK
            } else if self.road_lines && (ROAD_LINE_Y.0..ROAD_LINE_Y.1).contains(&y) {
                class::ROAD_LINE
            } else {
                class::ROAD
            }
        } else {
            class::BUILDING
        }
    }

    /// Pedestrian ground positions for frames `0..frames`.
    pub fn trajectory(&self, actions: &[ActionTriple]) -> Vec<(f64, f64)> {
        let mut pos = self.start;
        actions
            .iter()
            .map(|a| {
                let here = pos;
                if a.a0 != 0.0 {
                    let th = a.a1.to_radians();
                    pos.0 += STEP * th.cos();
                    pos.1 += STEP * th.sin();
                }
                here
            })
            .collect()
    }

    /// Renders one frame from `pos` with heading `a1 + a2` at time `t`.
    pub fn frame(&self, pos: (f64, f64), action: &ActionTriple, t: usize) -> Result<ClassFrame> {
        let mut boxes = self.fixed.clone();
        boxes.extend(self.movers.iter().map(|m| m.at(t)));
        let phi = (action.a1 + action.a2).to_radians();
        let p = PITCH_DEG.to_radians();
        let fwd = [p.cos() * phi.cos(), p.cos() * phi.sin(), p.sin()];
        let right = [phi.sin(), -phi.cos(), 0.0];
        let up = [-p.sin() * phi.cos(), -p.sin() * phi.sin(), p.cos()];
        let tx = (HFOV_DEG.to_radians() / 2.0).tan();
        let ty = tx * self.height as f64 / self.width as f64;
        let o = [pos.0, pos.1, EYE_HEIGHT];
        let mut data = Vec::with_capacity(self.height * self.width);
        for r in 0..self.height {
            let yn = 1.0 - 2.0 * (r as f64 + 0.5) / self.height as f64;
            for c in 0..self.width {
                let xn = 2.0 * (c as f64 + 0.5) / self.width as f64 - 1.0;
                let d: [f64; 3] = std::array::from_fn(|k| fwd[k] + xn * tx * right[k] + yn * ty * up[k]);
                let mut best = (f64::INFINITY, class::SKY);
                if d[2] < 0.0 {
                    let tg = -o[2] / d[2];
                    best = (tg, self.ground_class(o[0] + tg * d[0], o[1] + tg * d[1]));
                }
                for b in &boxes {
                    if let Some(th) = b.hit(o, d) {
                        if th < best.0 {
                            best = (th, b.class);
                        }
                    }
                }
                data.push(best.1);
            }
        }
        ClassFrame::new(self.height, self.width, CLASS_COUNT as u8, data)
    }
}

/// Renders the first `frames` frames of a schedule.
pub fn render_sequence(schedule: &ActionSchedule, scene: &SceneSpec, frames: usize) -> Result<FrameDataset> {
    if frames > schedule.len() {
        return Err(Error::invalid(format!(
            "{frames} frames requested, schedule covers {}",
            schedule.len()
        )));
    }
    if frames == 0 {
        return Err(Error::invalid("no frames requested"));
    }
    let renderer = Renderer::new(scene);
    let actions = schedule.actions(frames)?;
    let path = renderer.trajectory(&actions);
    let rendered: Vec<ClassFrame> = (0..frames)
        .into_par_iter()
        .map(|t| renderer.frame(path[t], &actions[t], t))
        .collect::<Result<_>>()?;
    FrameDataset::from_frames(&rendered)
}

/// Classes a pedestrian is assumed to look at in the attention stand-in.
const SALIENT: [u8; 4] = [class::CAR, class::CYCLIST, class::PEDESTRIAN, class::CROSSWALK];
const ATTENTION_RADIUS: usize = 3;
const FIXATION_LEVEL: f64 = 0.9;

/// Box-blurred indicator of salient classes, scaled to max 1.
///
/// A stand-in for a learned driver-attention model so saliency evaluation
/// can run on generated fixtures. Frames without salient classes fall back
/// to a centered blob.
pub fn attention_map(frame: &ClassFrame) -> Vec<f64> {
    let (h, w) = (frame.height(), frame.width());
    let mut ind: Vec<f64> = frame
        .pixels()
        .iter()
        .map(|p| f64::from(u8::from(SALIENT.contains(p))))
        .collect();
    if ind.iter().all(|&v| v == 0.0) {
        ind[(h / 2) * w + w / 2] = 1.0;
    }
    let r = ATTENTION_RADIUS as isize;
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = (y + dy, x + dx);
                    if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                        acc += ind[yy as usize * w + xx as usize];
                    }
                }
            }
            out[y as usize * w + x as usize] = acc;
        }
    }
    let max = out.iter().copied().fold(0.0, f64::max);
    out.iter_mut().for_each(|v| *v /= max);
    out
}

/// Pixels at or above 90% of the map's maximum.
pub fn fixation_mask(attention: &[f64]) -> Vec<bool> {
    let max = attention.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    attention.iter().map(|&v| v >= FIXATION_LEVEL * max).collect()
}

/// Attention maps (255-level grayscale frames) and binary fixation masks
/// (2-class frames) for every frame of a dataset.
pub fn attention_fixtures(frames: &FrameDataset) -> Result<(FrameDataset, FrameDataset)> {
    let pairs: Vec<(ClassFrame, ClassFrame)> = frames
        .frames()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|f| {
            let a = attention_map(f);
            let fix = fixation_mask(&a);
            let gray = a.iter().map(|v| (v * 254.0).round() as u8).collect();
            Ok((
                ClassFrame::new(f.height(), f.width(), 255, gray)?,
                ClassFrame::new(f.height(), f.width(), 2, fix.into_iter().map(u8::from).collect())?,
            ))
        })
        .collect::<Result<_>>()?;
    let (att, fix): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok((FrameDataset::from_frames(&att)?, FrameDataset::from_frames(&fix)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::table1_schedule;

    #[test]
    fn empty_scene_has_only_bands() {
        let ds = render_sequence(&table1_schedule(), &SceneSpec::empty(), 400).unwrap();
        let allowed = [class::SKY, class::BUILDING, class::ROAD, class::SIDEWALK];
        for f in ds.frames() {
            assert!(f.pixels().iter().all(|p| allowed.contains(p)));
        }
    }

    #[test]
    fn trajectory_reaches_crosswalk_and_far_side() {
        let s = table1_schedule();
        let r = Renderer::new(&SceneSpec::street(1));
        let path = r.trajectory(&s.actions(400).unwrap());
        assert!(path[81].0.abs() < 1e-9);
        assert!(path[338].1 < FAR_SIDEWALK.1);
    }

    #[test]
    fn crosswalk_visible_while_crossing() {
        let ds = render_sequence(&table1_schedule(), &SceneSpec::street(7), 400).unwrap();
        let seen = (159..=233)
            .filter(|&t| ds.frame(t).unwrap().pixels().contains(&class::CROSSWALK))
            .count();
        assert!(seen as f64 >= 0.95 * 75.0, "crosswalk in {seen}/75 frames");
        let cars = ds.frames().filter(|f| f.pixels().contains(&class::CAR)).count();
        assert!(cars > 0);
        assert!(ds
            .frames()
            .all(|f| f.pixels().iter().all(|&p| (p as usize) < CLASS_COUNT)));
    }

    #[test]
    fn deterministic() {
        let a = render_sequence(&table1_schedule(), &SceneSpec::street(3), 60).unwrap();
        let b = render_sequence(&table1_schedule(), &SceneSpec::street(3), 60).unwrap();
        assert_eq!(a.encode().unwrap(), b.encode().unwrap());
    }

    #[test]
    fn attention_peaks_on_salient_pixels() {
        let ds = render_sequence(&table1_schedule(), &SceneSpec::street(7), 200).unwrap();
        let f = ds.frame(180).unwrap();
        let a = attention_map(&f);
        assert!((a.iter().copied().fold(0.0, f64::max) - 1.0).abs() < 1e-12);
        let fix = fixation_mask(&a);
        assert!(fix.iter().any(|&b| b));
        let (att, fx) = attention_fixtures(&ds).unwrap();
        assert_eq!((att.len(), fx.len(), fx.class_count()), (200, 200, 2));
    }

    #[test]
    fn ray_box_hit() {
        let b = Aabb {
            min: [1.0, -1.0, -1.0],
            max: [2.0, 1.0, 1.0],
            class: 0,
        };
        assert_eq!(b.hit([0.0; 3], [1.0, 0.0, 0.0]), Some(1.0));
        assert_eq!(b.hit([0.0; 3], [-1.0, 0.0, 0.0]), None);
    }
}
