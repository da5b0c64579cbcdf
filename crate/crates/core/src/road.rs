//! Static road geometry: paths, critical sections, stop lines, passing places.
//!
//! Paths are polylines traversed in waypoint order; positions on a path are
//! arc-lengths measured from the first waypoint. A scene is immutable once
//! built and is shared read-only by every run.

use std::ops::{Add, Sub};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{point_segment_distance, segment_intersection, Point, Polygon, EPS};

pub type PathId = usize;
pub type SectionId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoadError {
    #[error("unknown path id {0}")]
    UnknownPath(PathId),
    #[error("unknown section id {0}")]
    UnknownSection(SectionId),
    #[error("arc-length {s} outside path {path} of length {length}")]
    OutOfRange { path: PathId, s: f64, length: f64 },
    #[error("vehicle is not on any path")]
    NotOnPath,
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid section: {0}")]
    InvalidSection(String),
    #[error("invalid passing place: {0}")]
    InvalidPassingPlace(String),
    #[error("scene file: {0}")]
    SceneFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Point,
    /// Radians counter-clockwise from +x.
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub id: PathId,
    pub name: String,
    /// Static lane priority; larger is higher.
    pub priority: u32,
    waypoints: Vec<Point>,
    cumulative: Vec<f64>,
}

impl Path {
    pub fn new(
        id: PathId,
        name: impl Into<String>,
        waypoints: Vec<Point>,
        priority: u32,
    ) -> Result<Self, RoadError> {
        let name = name.into();
        if waypoints.len() < 2 {
            return Err(RoadError::InvalidPath(format!(
                "path {name} needs at least 2 waypoints"
            )));
        }
        let mut cumulative = Vec::with_capacity(waypoints.len());
        cumulative.push(0.0);
        for w in waypoints.windows(2) {
            let d = w[0].dist(w[1]);
            if !d.is_finite() || d <= EPS {
                return Err(RoadError::InvalidPath(format!(
                    "path {name} has repeated consecutive waypoints"
                )));
            }
            cumulative.push(cumulative.last().unwrap() + d);
        }
        Ok(Path {
            id,
            name,
            priority,
            waypoints,
            cumulative,
        })
    }

    pub fn waypoints(&self) -> &[Point] {
        &self.waypoints
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn segment_index(&self, s: f64) -> usize {
        let i = self.cumulative.partition_point(|&c| c <= s);
        i.saturating_sub(1).min(self.waypoints.len() - 2)
    }

    pub fn pose_at(&self, s: f64) -> Result<Pose, RoadError> {
        let length = self.length();
        if !(0.0..=length).contains(&s) {
            return Err(RoadError::OutOfRange {
                path: self.id,
                s,
                length,
            });
        }
        let i = self.segment_index(s);
        let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let t = (s - self.cumulative[i]) / seg;
        let d = b.sub(a);
        Ok(Pose {
            position: a.add(d.scale(t)),
            heading: d.y.atan2(d.x),
        })
    }

    /// Heading of the segment containing `s`, clamping `s` into the path.
    pub fn heading_at(&self, s: f64) -> f64 {
        let i = self.segment_index(s.clamp(0.0, self.length()));
        let d = self.waypoints[i + 1].sub(self.waypoints[i]);
        d.y.atan2(d.x)
    }

    /// Closest arc-length to `p` and the distance from `p` to the path there.
    pub fn project(&self, p: Point) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for (i, w) in self.waypoints.windows(2).enumerate() {
            let ab = w[1].sub(w[0]);
            let len2 = ab.dot(ab);
            let t = (p.sub(w[0]).dot(ab) / len2).clamp(0.0, 1.0);
            let q = w[0].add(ab.scale(t));
            let d = p.dist(q);
            if d < best.1 {
                best = (self.cumulative[i] + t * len2.sqrt(), d);
            }
        }
        best
    }

    /// Arc-length intervals of the path that lie inside `region`.
    fn inside_intervals(&self, region: &Polygon) -> Vec<(f64, f64)> {
        // Cut points: waypoints plus every crossing with a region edge.
        let mut cuts: Vec<f64> = self.cumulative.clone();
        for (i, w) in self.waypoints.windows(2).enumerate() {
            let seg = self.cumulative[i + 1] - self.cumulative[i];
            for (e0, e1) in region.edges() {
                if let Some((t, _)) = segment_intersection(w[0], w[1], e0, e1) {
                    cuts.push(self.cumulative[i] + t * seg);
                }
                // Collinear overlap with an edge: add the edge endpoints.
                for e in [e0, e1] {
                    if point_segment_distance(e, w[0], w[1]) <= 1e-9 {
                        let ab = w[1].sub(w[0]);
                        let t = e.sub(w[0]).dot(ab) / ab.dot(ab);
                        cuts.push(self.cumulative[i] + t * seg);
                    }
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
        let mut out: Vec<(f64, f64)> = Vec::new();
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let inside = self
                .pose_at(mid)
                .map(|p| region.contains(p.position))
                .unwrap_or(false);
            if inside {
                match out.last_mut() {
                    Some(last) if (last.1 - w[0]).abs() <= 1e-9 => last.1 = w[1],
                    _ => out.push((w[0], w[1])),
                }
            }
        }
        out
    }
}

/// Where one path passes through a critical section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionEntry {
    pub path: PathId,
    pub entrance: f64,
    pub exit: f64,
    pub stop_line: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalSection {
    pub id: SectionId,
    pub name: String,
    pub region: Polygon,
    pub entries: Vec<SectionEntry>,
    /// Longest path extent through the region, in meters.
    pub length_m: f64,
    /// Every entrant must stop and then go first-come-first-served.
    pub all_way_stop: bool,
}

impl CriticalSection {
    pub fn entry(&self, path: PathId) -> Option<&SectionEntry> {
        self.entries.iter().find(|e| e.path == path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassingPlace {
    pub id: usize,
    pub path: PathId,
    pub position: f64,
    /// Turnout located inside the section interval of its path.
    pub in_section: bool,
}

/// How two paths interfere inside a section, in the coordinates of the
/// first path (`a`) and the second (`b`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConflictKind {
    /// Collinear stretch traversed in opposite senses. `a_lo` faces `b_hi`.
    Shared { a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64 },
    /// The paths cross at a single point.
    Crossing { a_at: f64, b_at: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conflict {
    pub section: SectionId,
    pub kind: ConflictKind,
}

impl Conflict {
    fn swapped(self) -> Conflict {
        let kind = match self.kind {
            ConflictKind::Shared { a_lo, a_hi, b_lo, b_hi } => ConflictKind::Shared {
                a_lo: b_lo,
                a_hi: b_hi,
                b_lo: a_lo,
                b_hi: a_hi,
            },
            ConflictKind::Crossing { a_at, b_at } => ConflictKind::Crossing {
                a_at: b_at,
                b_at: a_at,
            },
        };
        Conflict {
            section: self.section,
            kind,
        }
    }
}

/// The evacuation site chosen for a yielding vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evacuation {
    /// Arc-length the front must back up to.
    pub position: f64,
    pub passing_place: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionSpec {
    pub name: String,
    pub region: Polygon,
    pub all_way_stop: bool,
    /// Distance of the stop line before the entrance, per path; paths not
    /// listed use `default_stop_offset`.
    pub stop_offsets: BTreeMap<PathId, f64>,
    pub default_stop_offset: f64,
}

#[derive(Debug, Clone)]
pub struct RoadScene {
    pub paths: Vec<Path>,
    pub sections: Vec<CriticalSection>,
    pub passing_places: Vec<PassingPlace>,
    pub speed_limit: f64,
    /// Distance before the stop line at which Approach begins.
    pub approach_radius: f64,
    conflicts: Vec<Option<Conflict>>,
}

impl RoadScene {
    pub fn new(
        paths: Vec<Path>,
        sections: Vec<SectionSpec>,
        passing_places: Vec<PassingPlace>,
        speed_limit: f64,
        approach_radius: f64,
    ) -> Result<Self, RoadError> {
        for (i, p) in paths.iter().enumerate() {
            if p.id != i {
                return Err(RoadError::InvalidPath(format!(
                    "path {} has id {} but index {i}",
                    p.name, p.id
                )));
            }
        }
        if !(speed_limit > 0.0) || !(approach_radius >= 0.0) {
            return Err(RoadError::InvalidPath(
                "speed limit must be positive and approach radius non-negative".into(),
            ));
        }
        let mut built = Vec::with_capacity(sections.len());
        for (id, spec) in sections.into_iter().enumerate() {
            let mut entries = Vec::new();
            for path in &paths {
                let ivs = path.inside_intervals(&spec.region);
                let (Some(first), Some(last)) = (ivs.first(), ivs.last()) else {
                    continue;
                };
                let (entrance, exit) = (first.0, last.1);
                if exit - entrance <= EPS {
                    continue;
                }
                let offset = spec
                    .stop_offsets
                    .get(&path.id)
                    .copied()
                    .unwrap_or(spec.default_stop_offset);
                if !(offset >= 0.0) {
                    return Err(RoadError::InvalidSection(format!(
                        "section {}: stop line offset must be non-negative",
                        spec.name
                    )));
                }
                entries.push(SectionEntry {
                    path: path.id,
                    entrance,
                    exit,
                    stop_line: (entrance - offset).max(0.0),
                });
            }
            if entries.is_empty() {
                return Err(RoadError::InvalidSection(format!(
                    "section {} is not crossed by any path",
                    spec.name
                )));
            }
            let length_m = entries
                .iter()
                .map(|e| e.exit - e.entrance)
                .fold(0.0, f64::max);
            built.push(CriticalSection {
                id,
                name: spec.name,
                region: spec.region,
                entries,
                length_m,
                all_way_stop: spec.all_way_stop,
            });
        }
        for path in &paths {
            let n = built.iter().filter(|s| s.entry(path.id).is_some()).count();
            if n > 1 {
                return Err(RoadError::InvalidSection(format!(
                    "path {} crosses {n} sections; at most one is supported",
                    path.name
                )));
            }
        }
        let n = paths.len();
        let mut conflicts = vec![None; n * n];
        for sec in &built {
            for (i, ea) in sec.entries.iter().enumerate() {
                for eb in &sec.entries[i + 1..] {
                    if let Some(kind) = conflict_between(&paths[ea.path], ea, &paths[eb.path], eb)? {
                        let c = Conflict {
                            section: sec.id,
                            kind,
                        };
                        conflicts[ea.path * n + eb.path] = Some(c);
                        conflicts[eb.path * n + ea.path] = Some(c.swapped());
                    }
                }
            }
        }
        let scene = RoadScene {
            paths,
            sections: built,
            passing_places,
            speed_limit,
            approach_radius,
            conflicts,
        };
        for pp in &scene.passing_places {
            let path = scene.path(pp.path).map_err(|_| {
                RoadError::InvalidPassingPlace(format!("passing place {} on unknown path", pp.id))
            })?;
            if !(0.0..=path.length()).contains(&pp.position) {
                return Err(RoadError::InvalidPassingPlace(format!(
                    "passing place {} lies off its path",
                    pp.id
                )));
            }
            if let Some((_, e)) = scene.section_of(pp.path) {
                let inside = pp.position > e.entrance && pp.position < e.exit;
                if inside && !pp.in_section {
                    return Err(RoadError::InvalidPassingPlace(format!(
                        "passing place {} lies inside the section but is not flagged as a turnout",
                        pp.id
                    )));
                }
            }
        }
        Ok(scene)
    }

    pub fn path(&self, id: PathId) -> Result<&Path, RoadError> {
        self.paths.get(id).ok_or(RoadError::UnknownPath(id))
    }

    pub fn section(&self, id: SectionId) -> Result<&CriticalSection, RoadError> {
        self.sections.get(id).ok_or(RoadError::UnknownSection(id))
    }

    pub fn path_by_name(&self, name: &str) -> Option<&Path> {
        self.paths.iter().find(|p| p.name == name)
    }

    pub fn locate(&self, path: PathId, s: f64) -> Result<Pose, RoadError> {
        self.path(path)?.pose_at(s)
    }

    pub fn in_section(&self, section: SectionId, point: Point) -> Result<bool, RoadError> {
        Ok(self.section(section)?.region.contains(point))
    }

    /// The section a path passes through, with its entry record.
    pub fn section_of(&self, path: PathId) -> Option<(SectionId, &SectionEntry)> {
        self.sections
            .iter()
            .find_map(|sec| sec.entry(path).map(|e| (sec.id, e)))
    }

    pub fn conflict(&self, a: PathId, b: PathId) -> Option<&Conflict> {
        let n = self.paths.len();
        if a >= n || b >= n {
            return None;
        }
        self.conflicts[a * n + b].as_ref()
    }

    /// Nearest evacuation site behind arc-length `s`: the closest passing
    /// place behind the vehicle, else the entrance of the section it came
    /// through. A vehicle with neither behind it is already clear.
    pub fn evacuation_target(&self, path: PathId, s: f64) -> Result<Evacuation, RoadError> {
        let p = self.path(path).map_err(|_| RoadError::NotOnPath)?;
        if !(-EPS..=p.length() + EPS).contains(&s) {
            return Err(RoadError::NotOnPath);
        }
        let mut best = Evacuation {
            position: s,
            passing_place: None,
        };
        let mut found = false;
        if let Some((_, e)) = self.section_of(path) {
            if e.entrance <= s {
                best.position = e.entrance;
                found = true;
            }
        }
        for pp in self.passing_places.iter().filter(|pp| pp.path == path) {
            if pp.position <= s && (!found || pp.position >= best.position) {
                best = Evacuation {
                    position: pp.position,
                    passing_place: Some(pp.id),
                };
                found = true;
            }
        }
        Ok(best)
    }

    /// Backward arc-length to the nearest evacuation site (D_SPACE).
    pub fn distance_to_evacuation(&self, path: PathId, s: f64) -> Result<f64, RoadError> {
        Ok((s - self.evacuation_target(path, s)?.position).max(0.0))
    }

    /// Structural checks the simulator relies on beyond construction.
    pub fn validate(&self) -> Result<(), RoadError> {
        for sec in &self.sections {
            for e in &sec.entries {
                if !(e.entrance < e.exit) || e.stop_line > e.entrance {
                    return Err(RoadError::InvalidSection(format!(
                        "section {} has an inconsistent entry on path {}",
                        sec.name, e.path
                    )));
                }
            }
            if !(sec.length_m > 0.0) {
                return Err(RoadError::InvalidSection(format!(
                    "section {} has zero length",
                    sec.name
                )));
            }
        }
        Ok(())
    }
}

/// Sub-polyline pieces of `path` between arc-lengths `lo` and `hi`, as
/// `(start point, end point, start s, end s)`.
fn clipped_pieces(path: &Path, lo: f64, hi: f64) -> Vec<(Point, Point, f64, f64)> {
    let mut out = Vec::new();
    for i in 0..path.waypoints.len() - 1 {
        let (c0, c1) = (path.cumulative[i], path.cumulative[i + 1]);
        let (s0, s1) = (c0.max(lo), c1.min(hi));
        if s1 - s0 > EPS {
            let p0 = path.pose_at(s0).unwrap().position;
            let p1 = path.pose_at(s1).unwrap().position;
            out.push((p0, p1, s0, s1));
        }
    }
    out
}

fn conflict_between(
    pa: &Path,
    ea: &SectionEntry,
    pb: &Path,
    eb: &SectionEntry,
) -> Result<Option<ConflictKind>, RoadError> {
    let a_pieces = clipped_pieces(pa, ea.entrance, ea.exit);
    let b_pieces = clipped_pieces(pb, eb.entrance, eb.exit);
    let mut shared: Option<(f64, f64, f64, f64)> = None;
    let mut crossing: Option<(f64, f64)> = None;
    for &(a0, a1, sa0, sa1) in &a_pieces {
        let da = a1.sub(a0);
        let la = sa1 - sa0;
        for &(b0, b1, sb0, sb1) in &b_pieces {
            let db = b1.sub(b0);
            let parallel = da.cross(db).abs() <= 1e-9 * la * (sb1 - sb0);
            if parallel {
                // Distance of b's start from a's supporting line.
                if b0.sub(a0).cross(da).abs() / la > 1e-6 {
                    continue;
                }
                let ta = |p: Point| p.sub(a0).dot(da) / (la * la);
                let (t0, t1) = (ta(b0), ta(b1));
                let lo = t0.min(t1).max(0.0);
                let hi = t0.max(t1).min(1.0);
                if (hi - lo) * la <= 1e-6 {
                    continue;
                }
                if da.dot(db) > 0.0 {
                    return Err(RoadError::InvalidSection(format!(
                        "paths {} and {} share a stretch in the same direction",
                        pa.name, pb.name
                    )));
                }
                let (s_alo, s_ahi) = (sa0 + lo * la, sa0 + hi * la);
                // b runs opposite: b's position at a's `hi` end is its low end.
                let pb_of = |s_a: f64| {
                    let p = a0.add(da.scale((s_a - sa0) / la));
                    sb0 + p.sub(b0).dot(db) / (sb1 - sb0)
                };
                let (s_blo, s_bhi) = (pb_of(s_ahi), pb_of(s_alo));
                shared = Some(match shared {
                    None => (s_alo, s_ahi, s_blo, s_bhi),
                    Some((x0, x1, y0, y1)) => (x0.min(s_alo), x1.max(s_ahi), y0.min(s_blo), y1.max(s_bhi)),
                });
            } else if let Some((t, u)) = segment_intersection(a0, a1, b0, b1) {
                let at = (sa0 + t * la, sb0 + u * (sb1 - sb0));
                if crossing.is_none_or(|c| at.0 < c.0) {
                    crossing = Some(at);
                }
            }
        }
    }
    Ok(match (shared, crossing) {
        (Some((a_lo, a_hi, b_lo, b_hi)), _) => Some(ConflictKind::Shared { a_lo, a_hi, b_lo, b_hi }),
        (None, Some((a_at, b_at))) => Some(ConflictKind::Crossing { a_at, b_at }),
        (None, None) => None,
    })
}

// ---------------------------------------------------------------------------
// Built-in scenes

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingleTrackParams {
    /// Section length in meters.
    pub length_m: f64,
    pub approach_m: f64,
    pub exit_m: f64,
    pub half_width_m: f64,
    pub stop_line_offset_m: f64,
    /// Turnouts as distances from the east-bound entrance.
    pub passing_places_m: Vec<f64>,
    pub speed_limit_mps: f64,
    pub approach_radius_m: f64,
}

impl Default for SingleTrackParams {
    fn default() -> Self {
        SingleTrackParams {
            length_m: 30.0,
            approach_m: 300.0,
            exit_m: 100.0,
            half_width_m: 2.0,
            stop_line_offset_m: 1.0,
            passing_places_m: Vec::new(),
            speed_limit_mps: 10.0,
            approach_radius_m: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FourWayParams {
    pub box_m: f64,
    pub lane_offset_m: f64,
    pub approach_m: f64,
    pub exit_m: f64,
    pub stop_line_offset_m: f64,
    pub all_way_stop: bool,
    pub speed_limit_mps: f64,
    pub approach_radius_m: f64,
}

impl Default for FourWayParams {
    fn default() -> Self {
        FourWayParams {
            box_m: 10.0,
            lane_offset_m: 1.75,
            approach_m: 300.0,
            exit_m: 100.0,
            stop_line_offset_m: 1.0,
            all_way_stop: false,
            speed_limit_mps: 10.0,
            approach_radius_m: 30.0,
        }
    }
}

impl RoadScene {
    /// One-lane segment on `x ∈ [0, L]` shared by an east-bound path
    /// (priority 2) and a west-bound path (priority 1).
    pub fn single_track(p: &SingleTrackParams) -> Result<Self, RoadError> {
        let l = p.length_m;
        if !(l > 0.0) {
            return Err(RoadError::InvalidSection("section length must be positive".into()));
        }
        let east = Path::new(
            0,
            "east",
            vec![Point::new(-p.approach_m, 0.0), Point::new(l + p.exit_m, 0.0)],
            2,
        )?;
        let west = Path::new(
            1,
            "west",
            vec![Point::new(l + p.approach_m, 0.0), Point::new(-p.exit_m, 0.0)],
            1,
        )?;
        let section = SectionSpec {
            name: "single-track".into(),
            region: Polygon::rectangle(0.0, -p.half_width_m, l, p.half_width_m),
            all_way_stop: false,
            stop_offsets: BTreeMap::new(),
            default_stop_offset: p.stop_line_offset_m,
        };
        let mut places = Vec::new();
        for (i, &u) in p.passing_places_m.iter().enumerate() {
            // A turnout serves both directions at the same spot.
            let inside = u > 0.0 && u < l;
            places.push(PassingPlace {
                id: 2 * i,
                path: 0,
                position: p.approach_m + u,
                in_section: inside,
            });
            places.push(PassingPlace {
                id: 2 * i + 1,
                path: 1,
                position: p.approach_m + (l - u),
                in_section: inside,
            });
        }
        RoadScene::new(
            vec![east, west],
            vec![section],
            places,
            p.speed_limit_mps,
            p.approach_radius_m,
        )
    }

    /// Square intersection centered at the origin with four straight
    /// through paths: east (priority 4), west (3), north (2), south (1).
    pub fn four_way(p: &FourWayParams) -> Result<Self, RoadError> {
        let h = p.box_m / 2.0;
        let far = h + p.approach_m;
        let out = h + p.exit_m;
        let o = p.lane_offset_m;
        let paths = vec![
            Path::new(0, "east", vec![Point::new(-far, -o), Point::new(out, -o)], 4)?,
            Path::new(1, "west", vec![Point::new(far, o), Point::new(-out, o)], 3)?,
            Path::new(2, "north", vec![Point::new(o, -far), Point::new(o, out)], 2)?,
            Path::new(3, "south", vec![Point::new(-o, far), Point::new(-o, -out)], 1)?,
        ];
        let section = SectionSpec {
            name: "four-way".into(),
            region: Polygon::rectangle(-h, -h, h, h),
            all_way_stop: p.all_way_stop,
            stop_offsets: BTreeMap::new(),
            default_stop_offset: p.stop_line_offset_m,
        };
        RoadScene::new(paths, vec![section], Vec::new(), p.speed_limit_mps, p.approach_radius_m)
    }
}

// ---------------------------------------------------------------------------
// Scene definition file

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    #[serde(default = "default_speed")]
    pub speed_limit_mps: f64,
    #[serde(default = "default_radius")]
    pub approach_radius_m: f64,
    pub paths: Vec<PathDef>,
    pub sections: Vec<SectionDef>,
    #[serde(default)]
    pub passing_places: Vec<PassingPlaceDef>,
}

fn default_speed() -> f64 {
    10.0
}

fn default_radius() -> f64 {
    30.0
}

fn default_stop_offset() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathDef {
    pub name: String,
    #[serde(default)]
    pub priority: u32,
    pub waypoints: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionDef {
    pub name: String,
    pub region: Vec<Point>,
    #[serde(default)]
    pub all_way_stop: bool,
    #[serde(default = "default_stop_offset")]
    pub stop_line_offset_m: f64,
    /// Per-path stop line offsets keyed by path name.
    #[serde(default)]
    pub stop_lines: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassingPlaceDef {
    pub path: String,
    pub position: f64,
    #[serde(default)]
    pub in_section: bool,
}

impl SceneFile {
    pub fn from_toml(text: &str) -> Result<Self, RoadError> {
        toml::from_str(text).map_err(|e| RoadError::SceneFile(e.to_string()))
    }

    pub fn build(&self) -> Result<RoadScene, RoadError> {
        let mut paths = Vec::new();
        for (i, d) in self.paths.iter().enumerate() {
            if self.paths[..i].iter().any(|p| p.name == d.name) {
                return Err(RoadError::SceneFile(format!("duplicate path name {}", d.name)));
            }
            paths.push(Path::new(i, d.name.clone(), d.waypoints.clone(), d.priority)?);
        }
        let id_of = |name: &str| {
            paths
                .iter()
                .position(|p| p.name == name)
                .ok_or_else(|| RoadError::SceneFile(format!("unknown path name {name}")))
        };
        let mut sections = Vec::new();
        for d in &self.sections {
            let region = Polygon::new(d.region.clone()).ok_or_else(|| {
                RoadError::InvalidSection(format!("section {} needs at least 3 vertices", d.name))
            })?;
            let mut stop_offsets = BTreeMap::new();
            for (name, off) in &d.stop_lines {
                stop_offsets.insert(id_of(name)?, *off);
            }
            sections.push(SectionSpec {
                name: d.name.clone(),
                region,
                all_way_stop: d.all_way_stop,
                stop_offsets,
                default_stop_offset: d.stop_line_offset_m,
            });
        }
        let mut places = Vec::new();
        for (i, d) in self.passing_places.iter().enumerate() {
            places.push(PassingPlace {
                id: i,
                path: id_of(&d.path)?,
                position: d.position,
                in_section: d.in_section,
            });
        }
        let scene = RoadScene::new(
            paths,
            sections,
            places,
            self.speed_limit_mps,
            self.approach_radius_m,
        )?;
        scene.validate()?;
        Ok(scene)
    }
}
