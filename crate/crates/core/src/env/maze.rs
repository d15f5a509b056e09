use serde::{Deserialize, Serialize};

use super::{check_state_dim, Action, ActionBox, BodyPose, Environment, Plane, State};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Axis-aligned wall: a horizontal or vertical segment inflated by
/// `thickness / 2` on both sides, perpendicular to the segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub thickness: f64,
}

impl Wall {
    pub fn rect(&self) -> Result<Rect> {
        if !(self.thickness > 0.0) {
            return Err(Error::invalid("wall thickness must be positive"));
        }
        let half = 0.5 * self.thickness;
        let (x0, x1) = minmax(self.from[0], self.to[0]);
        let (y0, y1) = minmax(self.from[1], self.to[1]);
        if y0 == y1 {
            Ok(Rect {
                min: [x0, y0 - half],
                max: [x1, y1 + half],
            })
        } else if x0 == x1 {
            Ok(Rect {
                min: [x0 - half, y0],
                max: [x1 + half, y1],
            })
        } else {
            Err(Error::invalid("walls must be axis-aligned segments"))
        }
    }
}

fn minmax(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Closed axis-aligned box. As an obstacle only its open interior blocks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn interior_contains(&self, p: [f64; 2]) -> bool {
        p[0] > self.min[0] && p[0] < self.max[0] && p[1] > self.min[1] && p[1] < self.max[1]
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }

    /// First time `t` in `[0, 1)` at which `p + t d` enters the open
    /// interior, with the axis of the face that was hit.
    fn entry(&self, p: [f64; 2], d: [f64; 2]) -> Option<(f64, usize, f64)> {
        let mut t_in = f64::NEG_INFINITY;
        let mut t_out = f64::INFINITY;
        let mut hit = (0, 0.0);
        for a in 0..2 {
            if d[a] == 0.0 {
                if p[a] <= self.min[a] || p[a] >= self.max[a] {
                    return None;
                }
                continue;
            }
            let (near, far) = if d[a] > 0.0 {
                (self.min[a], self.max[a])
            } else {
                (self.max[a], self.min[a])
            };
            let t0 = (near - p[a]) / d[a];
            let t1 = (far - p[a]) / d[a];
            if t0 > t_in {
                t_in = t0;
                hit = (a, near);
            }
            t_out = t_out.min(t1);
        }
        if t_in >= t_out || t_out <= 0.0 || t_in >= 1.0 {
            return None;
        }
        Some((t_in.max(0.0), hit.0, hit.1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub name: String,
    pub region: Rect,
}

/// Continuous 2D maze. Positions live in `[-half_width, half_width]^2`,
/// actions are displacements in `[-1, 1]^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "MazeSpecRepr", into = "MazeSpecRepr")]
pub struct MazeSpec {
    pub half_width: f64,
    pub walls: Vec<Wall>,
    pub start: [f64; 2],
    pub corridor_width: f64,
    pub rooms: Vec<Room>,
    rects: Vec<Rect>,
    actions: ActionBox,
}

#[derive(Serialize, Deserialize)]
struct MazeSpecRepr {
    half_width: f64,
    walls: Vec<Wall>,
    start: [f64; 2],
    corridor_width: f64,
    #[serde(default)]
    rooms: Vec<Room>,
}

impl From<MazeSpecRepr> for MazeSpec {
    fn from(r: MazeSpecRepr) -> Self {
        MazeSpec::new(r.half_width, r.walls, r.start, r.corridor_width, r.rooms)
    }
}

impl From<MazeSpec> for MazeSpecRepr {
    fn from(m: MazeSpec) -> Self {
        MazeSpecRepr {
            half_width: m.half_width,
            walls: m.walls,
            start: m.start,
            corridor_width: m.corridor_width,
            rooms: m.rooms,
        }
    }
}

impl Default for MazeSpec {
    fn default() -> Self {
        MazeSpec::four_rooms(5.0)
    }
}

impl MazeSpec {
    /// Builds a maze; invalid walls are kept out of the collision set and
    /// reported by [`MazeSpec::validate`].
    pub fn new(half_width: f64, walls: Vec<Wall>, start: [f64; 2], corridor_width: f64, rooms: Vec<Room>) -> Self {
        let rects = walls.iter().filter_map(|w| w.rect().ok()).collect();
        MazeSpec {
            half_width,
            walls,
            start,
            corridor_width,
            rooms,
            rects,
            actions: ActionBox::symmetric(2, 1.0),
        }
    }

    /// Four corner rooms separated by a thick cross. The start sits in the
    /// bottom-right corner. Each opening is a corridor of the given width
    /// running the full 60-unit thickness of the cross, hugging the outer
    /// boundary: bottom-right to top-right, top-right to top-left, and
    /// top-left to bottom-left. Bottom-right and bottom-left are not
    /// directly connected, so reaching the top-left room means crossing two
    /// corridors.
    pub fn four_rooms(corridor_width: f64) -> Self {
        let hw = 100.0;
        let arm = 30.0;
        let gap = hw - corridor_width;
        let walls = vec![
            // horizontal bar with openings at both outer ends
            Wall {
                from: [-gap, 0.0],
                to: [gap, 0.0],
                thickness: 2.0 * arm,
            },
            // upper vertical arm, opening at the top edge
            Wall {
                from: [0.0, arm],
                to: [0.0, gap],
                thickness: 2.0 * arm,
            },
            // lower vertical arm, closed
            Wall {
                from: [0.0, -hw],
                to: [0.0, -arm],
                thickness: 2.0 * arm,
            },
        ];
        let room = |name: &str, min: [f64; 2], max: [f64; 2]| Room {
            name: name.to_string(),
            region: Rect { min, max },
        };
        let rooms = vec![
            room("bottom-right", [arm, -hw], [hw, -arm]),
            room("top-right", [arm, arm], [hw, hw]),
            room("top-left", [-hw, arm], [-arm, hw]),
            room("bottom-left", [-hw, -hw], [-arm, -arm]),
        ];
        let start = [hw - 0.5 * corridor_width, -(hw - 0.5 * corridor_width)];
        MazeSpec::new(hw, walls, start, corridor_width, rooms)
    }

    /// Maze without internal walls.
    pub fn open(half_width: f64) -> Self {
        MazeSpec::new(half_width, Vec::new(), [0.0, 0.0], 0.0, Vec::new())
    }

    pub fn wall_rects(&self) -> &[Rect] {
        &self.rects
    }

    pub fn room(&self, name: &str) -> Option<&Room> {
        self.rooms.iter().find(|r| r.name == name)
    }

    pub fn room_of(&self, p: [f64; 2]) -> Option<&str> {
        self.rooms
            .iter()
            .find(|r| r.region.contains(p))
            .map(|r| r.name.as_str())
    }

    pub fn in_world(&self, p: [f64; 2]) -> bool {
        p.iter().all(|c| c.abs() <= self.half_width)
    }

    pub fn is_free(&self, p: [f64; 2]) -> bool {
        self.in_world(p) && !self.rects.iter().any(|r| r.interior_contains(p))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0) {
            return Err(Error::invalid("maze half_width must be positive"));
        }
        for w in &self.walls {
            w.rect()?;
        }
        if !self.is_free(self.start) {
            return Err(Error::invalid("maze start lies outside free space"));
        }
        let reachable = self.flood_fill(1.0);
        for room in &self.rooms {
            if !reachable.iter().any(|&p| room.region.contains(p)) {
                return Err(Error::invalid(format!(
                    "room '{}' is disconnected from the start",
                    room.name
                )));
            }
        }
        Ok(())
    }

    /// Coarse 4-neighbour flood fill over cell centres from the start cell.
    /// Returns the centres of the reached cells.
    pub fn flood_fill(&self, cell: f64) -> Vec<[f64; 2]> {
        let n = (2.0 * self.half_width / cell).ceil() as i64;
        let centre = |i: i64, j: i64| {
            [
                -self.half_width + (i as f64 + 0.5) * cell,
                -self.half_width + (j as f64 + 0.5) * cell,
            ]
        };
        let idx = |c: f64| (((c + self.half_width) / cell).floor() as i64).clamp(0, n - 1);
        let mut seen = vec![false; (n * n) as usize];
        let s = (idx(self.start[0]), idx(self.start[1]));
        let mut stack = vec![s];
        seen[(s.0 * n + s.1) as usize] = true;
        let mut out = Vec::new();
        while let Some((i, j)) = stack.pop() {
            out.push(centre(i, j));
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (a, b) = (i + di, j + dj);
                if a < 0 || b < 0 || a >= n || b >= n || seen[(a * n + b) as usize] {
                    continue;
                }
                if self.is_free(centre(a, b)) {
                    seen[(a * n + b) as usize] = true;
                    stack.push((a, b));
                }
            }
        }
        out
    }

    /// Moves `p` along `d` until the first contact with a wall or the world
    /// boundary and stops there.
    pub fn advance(&self, p: [f64; 2], d: [f64; 2]) -> [f64; 2] {
        let hw = self.half_width;
        let mut t_hit = 1.0f64;
        let mut snap: Option<(usize, f64)> = None;
        for a in 0..2 {
            let bound = if d[a] > 0.0 {
                hw
            } else if d[a] < 0.0 {
                -hw
            } else {
                continue;
            };
            let t = (bound - p[a]) / d[a];
            if t < t_hit {
                t_hit = t.max(0.0);
                snap = Some((a, bound));
            }
        }
        for r in &self.rects {
            if let Some((t, axis, face)) = r.entry(p, d) {
                if t < t_hit {
                    t_hit = t;
                    snap = Some((axis, face));
                }
            }
        }
        let mut q = [p[0] + t_hit * d[0], p[1] + t_hit * d[1]];
        if let Some((axis, value)) = snap {
            q[axis] = value;
        }
        q[0] = q[0].clamp(-hw, hw);
        q[1] = q[1].clamp(-hw, hw);
        if self.rects.iter().any(|r| r.interior_contains(q)) {
            // corner grazes that round into a wall
            return p;
        }
        q
    }
}

impl Environment for MazeSpec {
    fn id(&self) -> &'static str {
        "maze"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn action_box(&self) -> &ActionBox {
        &self.actions
    }

    fn body_count(&self) -> usize {
        1
    }

    fn reset(&self, _rng: &mut Stream) -> State {
        State(self.start.to_vec())
    }

    fn step(&self, state: &State, action: &Action) -> Result<State> {
        check_state_dim(2, state)?;
        self.actions.check(action)?;
        let q = self.advance([state[0], state[1]], [action[0], action[1]]);
        Ok(State(q.to_vec()))
    }

    fn body_pose(&self, state: &State) -> BodyPose {
        BodyPose(vec![[state[0], state[1]]])
    }

    fn plane(&self) -> Plane {
        Plane {
            dims: [0, 1],
            min: [-self.half_width; 2],
            max: [self.half_width; 2],
        }
    }

    fn observation_scale(&self) -> Vec<f64> {
        vec![1.0 / self.half_width; 2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn step(m: &MazeSpec, p: [f64; 2], a: [f64; 2]) -> [f64; 2] {
        let s = m.step(&State(p.to_vec()), &Action(a.to_vec())).unwrap();
        [s[0], s[1]]
    }

    #[test]
    fn default_layout_is_valid() {
        let m = MazeSpec::default();
        m.validate().unwrap();
        assert_eq!(m.room_of(m.start), Some("bottom-right"));
    }

    #[test]
    fn reset_is_the_start_point() {
        let m = MazeSpec::default();
        let a = m.reset(&mut stream(1, "reset", &[]));
        let b = m.reset(&mut stream(2, "reset", &[]));
        assert_eq!(a.0, m.start.to_vec());
        assert_eq!(a, b);
    }

    #[test]
    fn free_space_translation() {
        let m = MazeSpec::open(100.0);
        assert_eq!(step(&m, [0.0, 0.0], [1.0, 0.0]), [1.0, 0.0]);
    }

    #[test]
    fn stops_at_wall_face() {
        // Wall face at x = 30 (left side of the bottom-right room).
        let m = MazeSpec::default();
        let p = [30.4, -60.0];
        let q = step(&m, p, [-1.0, 0.5]);
        // oracle: segment p + t d meets the plane x = 30 at t = 0.4
        let t = (30.0 - p[0]) / -1.0;
        assert_eq!(q[0], 30.0);
        assert!((q[1] - (p[1] + 0.5 * t)).abs() < 1e-12);
        // pushing further into the face does not move or penetrate
        let r = step(&m, q, [-1.0, 0.5]);
        assert_eq!(r, q);
        // moving away is free
        assert_eq!(step(&m, q, [1.0, 0.0]), [31.0, q[1]]);
    }

    #[test]
    fn world_boundary_clips() {
        let m = MazeSpec::default();
        let q = step(&m, [99.5, -99.8], [1.0, -1.0]);
        // x reaches the boundary at t = 0.5, y at t = 0.2
        assert!((q[0] - 99.7).abs() < 1e-12);
        assert_eq!(q[1], -100.0);
    }

    #[test]
    fn sliding_along_face_is_allowed() {
        let m = MazeSpec::default();
        // on the face x = 30, moving parallel to it
        let q = step(&m, [30.0, -60.0], [0.0, 1.0]);
        assert_eq!(q, [30.0, -59.0]);
    }

    #[test]
    fn waypoints_cross_both_corridors() {
        let m = MazeSpec::default();
        let half = 0.5 * m.corridor_width;
        let waypoints = [
            [100.0 - half, 100.0 - half],
            [-100.0 + half, 100.0 - half],
            [-60.0, 60.0],
        ];
        let mut p = m.start;
        let mut steps = 0;
        for w in waypoints {
            while (p[0] - w[0]).abs() > 1e-9 || (p[1] - w[1]).abs() > 1e-9 {
                let a = [(w[0] - p[0]).clamp(-1.0, 1.0), (w[1] - p[1]).clamp(-1.0, 1.0)];
                let q = step(&m, p, a);
                assert_ne!(q, p, "stuck at {p:?} heading to {w:?}");
                p = q;
                steps += 1;
                assert!(steps < 2000);
            }
        }
        assert_eq!(m.room_of(p), Some("top-left"));
    }

    #[test]
    fn malformed_walls_rejected() {
        let bad = MazeSpec::new(
            100.0,
            vec![Wall {
                from: [0.0, 0.0],
                to: [1.0, 1.0],
                thickness: 1.0,
            }],
            [50.0, 50.0],
            5.0,
            vec![],
        );
        assert!(bad.validate().is_err());
        let m = MazeSpec {
            start: [0.0, 0.0],
            ..MazeSpec::default()
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn disconnected_room_detected() {
        let mut m = MazeSpec::default();
        // close the first corridor
        m = MazeSpec::new(
            m.half_width,
            {
                let mut w = m.walls.clone();
                w.push(Wall {
                    from: [95.0, 0.0],
                    to: [100.0, 0.0],
                    thickness: 60.0,
                });
                w
            },
            m.start,
            m.corridor_width,
            m.rooms.clone(),
        );
        assert!(m.validate().is_err());
    }

    proptest! {
        #[test]
        fn maze_containment(seq in proptest::collection::vec((-1.0f64..=1.0, -1.0f64..=1.0), 1..400),
                            sx in 30.0f64..100.0, sy in -100.0f64..-30.0) {
            let m = MazeSpec::default();
            let mut s = State(vec![sx, sy]);
            for (ax, ay) in seq {
                let a = Action(vec![ax, ay]);
                let next = m.step(&s, &a).unwrap();
                // purity
                prop_assert_eq!(&next, &m.step(&s, &a).unwrap());
                prop_assert!(m.is_free([next[0], next[1]]), "{:?}", next);
                // no tunnelling: the straight move never crosses a wall interior
                for k in 1..16 {
                    let f = k as f64 / 16.0;
                    let mid = [s[0] + f * (next[0] - s[0]), s[1] + f * (next[1] - s[1])];
                    prop_assert!(m.is_free(mid));
                }
                s = next;
            }
        }
    }
}
