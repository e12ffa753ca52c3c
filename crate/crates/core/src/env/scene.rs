//! Line-oriented scene records.
//!
//! ```text
//! actmap-scene 1
//! robot
//! joints q1 .. q7
//! target_joints q1 .. q7
//! sphere x y z r
//! ```
//!
//! Path scenes use `pose x y hx hy`, `rect x0 y0 x1 y1` and
//! `target x y r collected`; toy scenes use `position`, `goal` and `disk x y r`.

use std::fmt::Write as _;

use super::{Target, ToyDiskState};
use crate::geometry::{Rect, Sphere, Vec2, Vec3};
use crate::{Error, Result};

pub const SCENE_HEADER: &str = "actmap-scene 1";

#[derive(Debug, Clone, PartialEq)]
pub enum Scene {
    Robot { joints: [f64; 7], target_joints: [f64; 7], obstacles: Vec<Sphere> },
    Path { position: Vec2, heading: Vec2, rects: Vec<Rect>, targets: Vec<Target> },
    Toy { position: Vec2, goal: Vec2, disks: ToyDiskState },
}

fn line(out: &mut String, tag: &str, values: &[f64]) {
    out.push_str(tag);
    for v in values {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
}

impl Scene {
    pub fn to_text(&self) -> String {
        let mut out = format!("{SCENE_HEADER}\n");
        match self {
            Scene::Robot { joints, target_joints, obstacles } => {
                out.push_str("robot\n");
                line(&mut out, "joints", joints);
                line(&mut out, "target_joints", target_joints);
                for s in obstacles {
                    line(&mut out, "sphere", &[s.center.x, s.center.y, s.center.z, s.radius]);
                }
            }
            Scene::Path { position, heading, rects, targets } => {
                out.push_str("path\n");
                line(&mut out, "pose", &[position.x, position.y, heading.x, heading.y]);
                for r in rects {
                    line(&mut out, "rect", &[r.min.x, r.min.y, r.max.x, r.max.y]);
                }
                for t in targets {
                    line(&mut out, "target", &[t.center.x, t.center.y, t.radius, t.collected as u8 as f64]);
                }
            }
            Scene::Toy { position, goal, disks } => {
                out.push_str("toy\n");
                line(&mut out, "position", &[position.x, position.y]);
                line(&mut out, "goal", &[goal.x, goal.y]);
                for (c, r) in disks.centers.iter().zip(disks.radii) {
                    line(&mut out, "disk", &[c.x, c.y, r]);
                }
            }
        }
        out
    }
}

fn numbers(rest: &[&str], n: usize, lineno: usize) -> Result<Vec<f64>> {
    if rest.len() != n {
        return Err(Error::Scene(format!("line {lineno}: expected {n} values, got {}", rest.len())));
    }
    rest.iter()
        .map(|s| s.parse::<f64>().map_err(|e| Error::Scene(format!("line {lineno}: {e}"))))
        .collect()
}

pub fn parse_scene(text: &str) -> Result<Scene> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == SCENE_HEADER => {}
        _ => return Err(Error::Scene(format!("missing header `{SCENE_HEADER}`"))),
    }
    let kind = lines.next().map(|(_, l)| l.trim()).ok_or_else(|| Error::Scene("missing scene kind".into()))?;
    let mut joints = None;
    let mut target_joints = None;
    let mut spheres = Vec::new();
    let mut pose = None;
    let mut rects = Vec::new();
    let mut targets = Vec::new();
    let mut position = None;
    let mut goal = None;
    let mut disks = Vec::new();
    for (i, l) in lines {
        let lineno = i + 1;
        let parts: Vec<&str> = l.split_whitespace().collect();
        let (tag, rest) = (parts[0], &parts[1..]);
        match (kind, tag) {
            ("robot", "joints") => joints = Some(numbers(rest, 7, lineno)?),
            ("robot", "target_joints") => target_joints = Some(numbers(rest, 7, lineno)?),
            ("robot", "sphere") => {
                let v = numbers(rest, 4, lineno)?;
                spheres.push(Sphere { center: Vec3::new(v[0], v[1], v[2]), radius: v[3] });
            }
            ("path", "pose") => pose = Some(numbers(rest, 4, lineno)?),
            ("path", "rect") => {
                let v = numbers(rest, 4, lineno)?;
                rects.push(Rect::new(Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3])));
            }
            ("path", "target") => {
                let v = numbers(rest, 4, lineno)?;
                targets.push(Target { center: Vec2::new(v[0], v[1]), radius: v[2], collected: v[3] != 0.0 });
            }
            ("toy", "position") => position = Some(numbers(rest, 2, lineno)?),
            ("toy", "goal") => goal = Some(numbers(rest, 2, lineno)?),
            ("toy", "disk") => disks.push(numbers(rest, 3, lineno)?),
            _ => return Err(Error::Scene(format!("line {lineno}: unexpected `{tag}` in {kind} scene"))),
        }
    }
    let missing = |what: &str| Error::Scene(format!("missing `{what}` record"));
    let arr7 = |v: Vec<f64>| -> [f64; 7] { v.try_into().expect("length checked") };
    match kind {
        "robot" => Ok(Scene::Robot {
            joints: arr7(joints.ok_or_else(|| missing("joints"))?),
            target_joints: arr7(target_joints.ok_or_else(|| missing("target_joints"))?),
            obstacles: spheres,
        }),
        "path" => {
            let p = pose.ok_or_else(|| missing("pose"))?;
            Ok(Scene::Path { position: Vec2::new(p[0], p[1]), heading: Vec2::new(p[2], p[3]), rects, targets })
        }
        "toy" => {
            let p = position.ok_or_else(|| missing("position"))?;
            let g = goal.ok_or_else(|| missing("goal"))?;
            if disks.len() != 2 {
                return Err(Error::Scene(format!("toy scene needs 2 disks, got {}", disks.len())));
            }
            Ok(Scene::Toy {
                position: Vec2::new(p[0], p[1]),
                goal: Vec2::new(g[0], g[1]),
                disks: ToyDiskState {
                    centers: [Vec2::new(disks[0][0], disks[0][1]), Vec2::new(disks[1][0], disks[1][1])],
                    radii: [disks[0][2], disks[1][2]],
                },
            })
        }
        other => Err(Error::Scene(format!("unknown scene kind `{other}`"))),
    }
}
