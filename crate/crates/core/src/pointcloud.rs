//! Point clouds: OFF parsing, normalization, farthest point sampling, the
//! synthetic shape catalog, and dataset manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Point3};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub label: Option<usize>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            label: None,
        }
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|c| c.is_finite()))
    }

    /// Keep the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            label: self.label,
        }
    }
}

/// Format a coordinate with 9 significant digits.
pub fn format_coord(x: f64) -> String {
    format!("{x:.8e}")
}

/// Parse the vertex block of an OFF file.
///
/// Accepts the standard `OFF` line followed by a counts line, and the
/// `OFF<v> <f> <e>` variant where the counts are glued to the header. Face
/// lines are checked for index validity and then dropped.
pub fn parse_off(text: &str) -> Result<PointCloud> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (header_line, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing OFF header".into(),
    })?;
    let rest = header.strip_prefix("OFF").ok_or_else(|| Error::Parse {
        line: header_line,
        message: format!("expected `OFF` header, found `{header}`"),
    })?;
    let (counts_line, counts) = if rest.trim().is_empty() {
        lines.next().ok_or(Error::Parse {
            line: header_line + 1,
            message: "missing vertex/face counts".into(),
        })?
    } else {
        (header_line, rest)
    };
    let counts = parse_numbers::<usize>(counts, counts_line)?;
    if counts.len() < 2 {
        return Err(Error::Parse {
            line: counts_line,
            message: "counts line needs vertex and face counts".into(),
        });
    }
    let (n_vertices, n_faces) = (counts[0], counts[1]);
    if n_vertices == 0 {
        return Err(Error::Parse {
            line: counts_line,
            message: "zero vertices declared".into(),
        });
    }

    let mut points = Vec::with_capacity(n_vertices);
    let mut last_line = counts_line;
    for _ in 0..n_vertices {
        let (line_no, line) = lines.next().ok_or_else(|| Error::Parse {
            line: last_line + 1,
            message: format!("expected {n_vertices} vertices, found {}", points.len()),
        })?;
        last_line = line_no;
        let values = parse_numbers::<f64>(line, line_no)?;
        if values.len() < 3 {
            return Err(Error::Parse {
                line: line_no,
                message: "vertex needs three coordinates".into(),
            });
        }
        if values[..3].iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                message: "non-finite coordinate".into(),
            });
        }
        points.push([values[0], values[1], values[2]]);
    }

    for _ in 0..n_faces {
        let (line_no, line) = lines.next().ok_or_else(|| Error::Parse {
            line: last_line + 1,
            message: format!("expected {n_faces} faces"),
        })?;
        last_line = line_no;
        let values = parse_numbers::<usize>(line, line_no)?;
        let k = *values.first().ok_or_else(|| Error::Parse {
            line: line_no,
            message: "empty face".into(),
        })?;
        if values.len() < k + 1 || values[1..=k].iter().any(|&i| i >= n_vertices) {
            return Err(Error::Parse {
                line: line_no,
                message: "face references missing vertices".into(),
            });
        }
    }

    Ok(PointCloud::new(points))
}

fn parse_numbers<T: FromStr>(line: &str, line_no: usize) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<T>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid number `{tok}`"),
            })
        })
        .collect()
}

/// Serialize a cloud as a vertex-only OFF file.
pub fn serialize_off(pc: &PointCloud) -> String {
    let mut out = format!("OFF\n{} 0 0\n", pc.len());
    for p in &pc.points {
        let _ = writeln!(
            out,
            "{} {} {}",
            format_coord(p[0]),
            format_coord(p[1]),
            format_coord(p[2])
        );
    }
    out
}

/// Whitespace separated `x y z` lines.
pub fn serialize_xyz(pc: &PointCloud) -> String {
    let mut out = String::with_capacity(pc.len() * 48);
    for p in &pc.points {
        let _ = writeln!(
            out,
            "{} {} {}",
            format_coord(p[0]),
            format_coord(p[1]),
            format_coord(p[2])
        );
    }
    out
}

/// Center on the centroid and scale so the farthest point has norm 1.
pub fn normalize_unit_sphere(pc: &PointCloud) -> PointCloud {
    if pc.is_empty() {
        return pc.clone();
    }
    let c = geom::centroid(&pc.points);
    let r = pc
        .points
        .iter()
        .map(|p| geom::dist(p, &c))
        .fold(0.0, f64::max)
        .max(1e-12);
    PointCloud {
        points: pc
            .points
            .iter()
            .map(|p| geom::scale(&geom::sub(p, &c), 1.0 / r))
            .collect(),
        label: pc.label,
    }
}

/// Greedy farthest point sampling. Ties go to the lowest index.
pub fn farthest_point_sampling(pc: &PointCloud, n: usize, start: usize) -> Result<Vec<usize>> {
    if pc.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    if start >= pc.len() {
        return Err(Error::InvalidArgument(format!(
            "start index {start} out of range for {} points",
            pc.len()
        )));
    }
    let total = pc.len();
    let n = n.min(total);
    let mut selected = Vec::with_capacity(n);
    let mut min_d2 = vec![f64::INFINITY; total];
    let mut taken = vec![false; total];
    let mut current = start;
    for _ in 0..n {
        selected.push(current);
        taken[current] = true;
        let anchor = pc.points[current];
        let mut best = None;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, p) in pc.points.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d2 = geom::dist2(p, &anchor);
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
            if min_d2[i] > best_d2 {
                best_d2 = min_d2[i];
                best = Some(i);
            }
        }
        match best {
            Some(i) => current = i,
            None => break,
        }
    }
    Ok(selected)
}

/// The fixed synthetic shape catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Sphere,
    Torus,
    Box,
    Cylinder,
    Cone,
    TwoSpheres,
    Plane,
    Helix,
}

impl Shape {
    pub const ALL: [Shape; 8] = [
        Shape::Sphere,
        Shape::Torus,
        Shape::Box,
        Shape::Cylinder,
        Shape::Cone,
        Shape::TwoSpheres,
        Shape::Plane,
        Shape::Helix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Sphere => "sphere",
            Shape::Torus => "torus",
            Shape::Box => "box",
            Shape::Cylinder => "cylinder",
            Shape::Cone => "cone",
            Shape::TwoSpheres => "two-spheres",
            Shape::Plane => "plane",
            Shape::Helix => "helix",
        }
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Shape::ALL
            .into_iter()
            .find(|shape| shape.name() == s)
            .ok_or_else(|| Error::UnknownShape(s.to_string()))
    }
}

/// Sample `n` points from a catalog shape and normalize to the unit sphere.
///
/// Surfaces are sampled uniformly by area and the helix by arclength.
/// Shapes other than the sphere and the two-sphere pair get a per-sample
/// scale jitter of up to 15% on their defining dimensions, so every class
/// has some intra-class variation. Equations (before normalization):
///
/// * sphere: unit sphere, sampled in antipodal pairs.
/// * torus: major radius 1, minor radius `0.35 v`.
/// * box: half extents `(1, 0.7, 0.45)` scaled per axis.
/// * cylinder: radius `0.5 v`, height `2 v'`, including both caps.
/// * cone: base radius `0.7 v`, height `1.6 v'`, including the base disk.
/// * two-spheres: radius 0.3 spheres centered at `(±0.6, 0, 0)`.
/// * plane: rectangle `[-1, 1] x [-0.8 v, 0.8 v]` at `z = 0`.
/// * helix: three turns of radius `0.5 v` over height `2 v'`.
pub fn sample_synthetic(shape: Shape, n: usize, seed: u64) -> Result<PointCloud> {
    if n < 8 {
        return Err(Error::InvalidArgument(format!(
            "synthetic shapes need at least 8 points, got {n}"
        )));
    }
    let mut rng = seed::rng(seed, &[0x5348_4150_45, shape as u64]);
    let jitter = |rng: &mut rand_chacha::ChaCha8Rng| rng.random_range(0.85..1.15);
    let mut points = Vec::with_capacity(n);
    match shape {
        Shape::Sphere => {
            // antipodal pairs keep the centroid at the center, so the
            // normalized cloud stays on the unit sphere
            while points.len() < n {
                let p: [f64; 3] = UnitSphere.sample(&mut rng);
                points.push(p);
                if points.len() < n {
                    points.push(geom::scale(&p, -1.0));
                }
            }
        }
        Shape::TwoSpheres => {
            for _ in 0..n {
                let p: [f64; 3] = UnitSphere.sample(&mut rng);
                let cx = if rng.random::<bool>() { 0.6 } else { -0.6 };
                points.push([cx + 0.3 * p[0], 0.3 * p[1], 0.3 * p[2]]);
            }
        }
        Shape::Torus => {
            let (major, minor) = (1.0, 0.35 * jitter(&mut rng));
            while points.len() < n {
                let u = rng.random_range(0.0..std::f64::consts::TAU);
                let v = rng.random_range(0.0..std::f64::consts::TAU);
                // area element is proportional to (R + r cos v)
                let accept = (major + minor * v.cos()) / (major + minor);
                if rng.random::<f64>() <= accept {
                    let ring = major + minor * v.cos();
                    points.push([ring * u.cos(), ring * u.sin(), minor * v.sin()]);
                }
            }
        }
        Shape::Box => {
            let h = [
                1.0 * jitter(&mut rng),
                0.7 * jitter(&mut rng),
                0.45 * jitter(&mut rng),
            ];
            // face pairs normal to x, y, z
            let areas = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
            let total: f64 = areas.iter().sum();
            for _ in 0..n {
                let mut pick = rng.random::<f64>() * total;
                let mut axis = 2;
                for (k, a) in areas.iter().enumerate() {
                    if pick < *a {
                        axis = k;
                        break;
                    }
                    pick -= a;
                }
                let mut p = [0.0; 3];
                for k in 0..3 {
                    p[k] = if k == axis {
                        if rng.random::<bool>() {
                            h[k]
                        } else {
                            -h[k]
                        }
                    } else {
                        rng.random_range(-h[k]..h[k])
                    };
                }
                points.push(p);
            }
        }
        Shape::Cylinder => {
            let (r, half) = (0.5 * jitter(&mut rng), 1.0 * jitter(&mut rng));
            let lateral = std::f64::consts::TAU * r * 2.0 * half;
            let caps = 2.0 * std::f64::consts::PI * r * r;
            for _ in 0..n {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                if rng.random::<f64>() * (lateral + caps) < lateral {
                    let z = rng.random_range(-half..half);
                    points.push([r * theta.cos(), r * theta.sin(), z]);
                } else {
                    let rho = r * rng.random::<f64>().sqrt();
                    let z = if rng.random::<bool>() { half } else { -half };
                    points.push([rho * theta.cos(), rho * theta.sin(), z]);
                }
            }
        }
        Shape::Cone => {
            let (r, h) = (0.7 * jitter(&mut rng), 1.6 * jitter(&mut rng));
            let slant = (r * r + h * h).sqrt();
            let lateral = std::f64::consts::PI * r * slant;
            let base = std::f64::consts::PI * r * r;
            for _ in 0..n {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                if rng.random::<f64>() * (lateral + base) < lateral {
                    let t = rng.random::<f64>().sqrt();
                    let rho = r * t;
                    points.push([rho * theta.cos(), rho * theta.sin(), 0.5 * h - h * t]);
                } else {
                    let rho = r * rng.random::<f64>().sqrt();
                    points.push([rho * theta.cos(), rho * theta.sin(), -0.5 * h]);
                }
            }
        }
        Shape::Plane => {
            let half_y = 0.8 * jitter(&mut rng);
            for _ in 0..n {
                points.push([
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-half_y..half_y),
                    0.0,
                ]);
            }
        }
        Shape::Helix => {
            let (r, height) = (0.5 * jitter(&mut rng), 2.0 * jitter(&mut rng));
            let turns = 3.0;
            for _ in 0..n {
                let t: f64 = rng.random();
                let angle = std::f64::consts::TAU * turns * t;
                points.push([r * angle.cos(), r * angle.sin(), height * (t - 0.5)]);
            }
        }
    }
    Ok(normalize_unit_sphere(&PointCloud::new(points)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SampleSource {
    Off(PathBuf),
    Synthetic { shape: Shape, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub source: SampleSource,
    pub class: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub class_names: Vec<String>,
}

impl DatasetManifest {
    /// Enumerate `<root>/<class>/<split>/<name>.off`, classes and files in
    /// sorted order.
    pub fn scan_modelnet(root: &Path) -> Result<Self> {
        let mut class_names = Vec::new();
        for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            if entry.path().is_dir() {
                class_names.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        class_names.sort();
        if class_names.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no class directories under {}",
                root.display()
            )));
        }
        let mut entries = Vec::new();
        for (class, name) in class_names.iter().enumerate() {
            for split in [Split::Train, Split::Test] {
                let dir = root.join(name).join(split.name());
                if !dir.is_dir() {
                    continue;
                }
                let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
                    .map_err(|e| Error::io(&dir, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|ext| ext == "off"))
                    .collect();
                files.sort();
                entries.extend(files.into_iter().map(|path| ManifestEntry {
                    source: SampleSource::Off(path),
                    class,
                    split,
                }));
            }
        }
        Ok(Self {
            entries,
            class_names,
        })
    }

    /// The first `classes` catalog shapes with per-sample derived seeds.
    pub fn synthetic(
        classes: usize,
        train_per_class: usize,
        test_per_class: usize,
        seed: u64,
    ) -> Result<Self> {
        if classes == 0 || classes > Shape::ALL.len() {
            return Err(Error::InvalidArgument(format!(
                "synthetic class count must be in 1..={}, got {classes}",
                Shape::ALL.len()
            )));
        }
        let mut entries = Vec::new();
        for split in [Split::Train, Split::Test] {
            let per_class = match split {
                Split::Train => train_per_class,
                Split::Test => test_per_class,
            };
            for (class, shape) in Shape::ALL[..classes].iter().enumerate() {
                for i in 0..per_class {
                    entries.push(ManifestEntry {
                        source: SampleSource::Synthetic {
                            shape: *shape,
                            seed: seed::derive(seed, &[split as u64, class as u64, i as u64]),
                        },
                        class,
                        split,
                    });
                }
            }
        }
        Ok(Self {
            entries,
            class_names: Shape::ALL[..classes]
                .iter()
                .map(|s| s.name().to_string())
                .collect(),
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn validate(&self) -> Result<()> {
        let classes = self.class_names.len();
        match self.entries.iter().find(|e| e.class >= classes) {
            Some(e) => Err(Error::LabelOutOfRange {
                label: e.class,
                classes,
            }),
            None => Ok(()),
        }
    }
}

/// Load one manifest entry as a labeled, unit-sphere-normalized cloud of at
/// most `points` points. OFF vertices are normalized first, then reduced by
/// farthest point sampling from `fps_start`.
pub fn load_entry(entry: &ManifestEntry, points: usize, fps_start: usize) -> Result<PointCloud> {
    let pc = match &entry.source {
        SampleSource::Synthetic { shape, seed } => sample_synthetic(*shape, points, *seed)?,
        SampleSource::Off(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let pc = normalize_unit_sphere(&parse_off(&text)?);
            let keep = farthest_point_sampling(&pc, points, fps_start.min(pc.len() - 1))?;
            pc.select(&keep)
        }
    };
    Ok(pc.with_label(entry.class))
}
