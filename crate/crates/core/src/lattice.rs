//! Integer lattice geometry: points, finite domains, boundaries and lag sets.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 8;

/// A point of `Z^d`. Ordering is lexicographic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticePoint(Vec<i64>);

impl LatticePoint {
    pub fn new(coords: Vec<i64>) -> Result<Self> {
        check_dim(coords.len())?;
        Ok(Self(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// Unit vector along `axis`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut c = vec![0; dim];
        c[axis] = 1;
        Self(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// `max_m |c_m|`.
    pub fn linf_norm(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn l1_norm(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).sum()
    }

    pub fn add(&self, other: &LatticePoint) -> LatticePoint {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &LatticePoint) -> LatticePoint {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn neg(&self) -> LatticePoint {
        Self(self.0.iter().map(|a| -a).collect())
    }

    pub(crate) fn expect_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

impl From<&[i64]> for LatticePoint {
    fn from(c: &[i64]) -> Self {
        Self(c.to_vec())
    }
}

impl<const N: usize> From<[i64; N]> for LatticePoint {
    fn from(c: [i64; N]) -> Self {
        Self(c.to_vec())
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (n, c) in self.0.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl FromStr for LatticePoint {
    type Err = Error;

    /// Parses `1,-2,3`, optionally wrapped in parentheses.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches('(').trim_end_matches(')');
        let coords = t
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<i64>()
                    .map_err(|e| Error::Parse(format!("bad coordinate {c:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        LatticePoint::new(coords)
    }
}

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::UnsupportedDimension(dim));
    }
    Ok(())
}

/// A finite subset of `Z^d`, stored explicitly and iterated lexicographically.
#[derive(Debug, Clone)]
pub struct Domain {
    dim: usize,
    points: Vec<LatticePoint>,
    index: HashMap<LatticePoint, usize>,
}

impl PartialEq for Domain {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.points == other.points
    }
}

impl Domain {
    /// Builds a domain; duplicates are removed and points sorted.
    pub fn new(dim: usize, mut points: Vec<LatticePoint>) -> Result<Self> {
        check_dim(dim)?;
        for p in &points {
            p.expect_dim(dim)?;
        }
        points.sort();
        points.dedup();
        let index = points
            .iter()
            .enumerate()
            .map(|(n, p)| (p.clone(), n))
            .collect();
        Ok(Self { dim, points, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LatticePoint] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &LatticePoint> {
        self.points.iter()
    }

    pub fn contains(&self, p: &LatticePoint) -> bool {
        self.index.contains_key(p)
    }

    /// Position of `p` in the lexicographic order, if present.
    pub fn position(&self, p: &LatticePoint) -> Option<usize> {
        self.index.get(p).copied()
    }

    fn check(&self, k: &LatticePoint) -> Result<()> {
        k.expect_dim(self.dim)
    }

    /// Inner boundary under l1-adjacency: points with a nearest neighbour
    /// outside the domain.
    pub fn boundary(&self) -> Domain {
        let mut out = Vec::new();
        let mut probe = vec![0i64; self.dim];
        for p in &self.points {
            let mut on_edge = false;
            'axes: for axis in 0..self.dim {
                for step in [-1, 1] {
                    probe.copy_from_slice(p.coords());
                    probe[axis] += step;
                    if !self.index.contains_key(&LatticePoint(probe.clone())) {
                        on_edge = true;
                        break 'axes;
                    }
                }
            }
            if on_edge {
                out.push(p.clone());
            }
        }
        Domain::new(self.dim, out).expect("boundary of a valid domain")
    }

    /// `|Γ ∩ (Γ − k)|`.
    pub fn shift_overlap(&self, k: &LatticePoint) -> Result<usize> {
        self.check(k)?;
        Ok(self
            .points
            .iter()
            .filter(|i| self.index.contains_key(&i.add(k)))
            .count())
    }

    /// `{ i ∈ Γ : i + k ∈ Γ }`.
    pub fn lag_set(&self, k: &LatticePoint) -> Result<Domain> {
        self.check(k)?;
        let pts = self
            .points
            .iter()
            .filter(|i| self.index.contains_key(&i.add(k)))
            .cloned()
            .collect();
        Domain::new(self.dim, pts)
    }

    /// Pairs of positions `(pos(i), pos(i + k))` for `i` in the lag set.
    pub fn lag_pairs(&self, k: &LatticePoint) -> Result<Vec<(usize, usize)>> {
        self.check(k)?;
        Ok(self
            .points
            .iter()
            .enumerate()
            .filter_map(|(n, i)| self.index.get(&i.add(k)).map(|&m| (n, m)))
            .collect())
    }

    /// All differences `j − i` for `i, j ∈ Γ`, with multiplicities.
    pub fn difference_counts(&self) -> HashMap<LatticePoint, usize> {
        let mut out = HashMap::new();
        for i in &self.points {
            for j in &self.points {
                *out.entry(j.sub(i)).or_insert(0) += 1;
            }
        }
        out
    }

    /// Parses the text format: a `dim=<d>` header, then one comma-separated
    /// point per line. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing `dim=<d>` header".into()))?;
        let dim = header
            .strip_prefix("dim=")
            .and_then(|d| d.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::Parse(format!("bad header {header:?}")))?;
        check_dim(dim)?;
        let points = lines
            .map(|l| {
                let p: LatticePoint = l.parse()?;
                p.expect_dim(dim)?;
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        Domain::new(dim, points)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("dim={}\n", self.dim);
        for p in &self.points {
            let row: Vec<String> = p.coords().iter().map(|c| c.to_string()).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Generators for test domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DomainShape {
    /// `{1..n}^d`.
    Box { n: usize, d: usize },
    /// `(1,1,..),(2,1,..),...,(n,1,..)`.
    Line { n: usize, d: usize },
    /// Two `arm × width` bars sharing the `width × width` corner, in d = 2.
    LShape { arm: usize, width: usize },
    /// `(i,i,..,i)` for `i` in `1..=n`.
    Diagonal { n: usize, d: usize },
    /// Each point of `{1..n}^d` kept independently with probability `keep`.
    RandomSubset { n: usize, d: usize, keep: f64, seed: u64 },
    /// `count` copies of `{1..n}^d` translated along the first axis with
    /// `gap` empty columns between consecutive boxes.
    SeparatedBoxes { count: usize, n: usize, d: usize, gap: usize },
}

impl DomainShape {
    pub fn dim(&self) -> usize {
        match *self {
            DomainShape::LShape { .. } => 2,
            DomainShape::Box { d, .. }
            | DomainShape::Line { d, .. }
            | DomainShape::Diagonal { d, .. }
            | DomainShape::RandomSubset { d, .. }
            | DomainShape::SeparatedBoxes { d, .. } => d,
        }
    }
}

fn box_points(n: usize, d: usize, offset0: i64) -> Vec<LatticePoint> {
    let total = n.pow(d as u32);
    let mut out = Vec::with_capacity(total);
    let mut c = vec![1i64; d];
    for _ in 0..total {
        let mut p = c.clone();
        p[0] += offset0;
        out.push(LatticePoint(p));
        for m in (0..d).rev() {
            if (c[m] as usize) < n {
                c[m] += 1;
                break;
            }
            c[m] = 1;
        }
    }
    out
}

/// Builds the domain described by `shape`.
pub fn make_domain(shape: &DomainShape) -> Result<Domain> {
    let bad = |msg: &str| Err(Error::InvalidShape(format!("{shape}: {msg}")));
    let d = shape.dim();
    check_dim(d)?;
    let points = match *shape {
        DomainShape::Box { n, d } => {
            if n == 0 {
                return bad("n must be positive");
            }
            box_points(n, d, 0)
        }
        DomainShape::Line { n, d } => {
            if n == 0 {
                return bad("n must be positive");
            }
            (1..=n as i64)
                .map(|i| {
                    let mut c = vec![1; d];
                    c[0] = i;
                    LatticePoint(c)
                })
                .collect()
        }
        DomainShape::Diagonal { n, d } => {
            if n == 0 {
                return bad("n must be positive");
            }
            (1..=n as i64).map(|i| LatticePoint(vec![i; d])).collect()
        }
        DomainShape::LShape { arm, width } => {
            if arm == 0 || width == 0 || width > arm {
                return bad("need 0 < width <= arm");
            }
            let mut pts = Vec::new();
            for x in 1..=arm as i64 {
                for y in 1..=arm as i64 {
                    if x <= width as i64 || y <= width as i64 {
                        pts.push(LatticePoint(vec![x, y]));
                    }
                }
            }
            pts
        }
        DomainShape::RandomSubset { n, d, keep, seed } => {
            if n == 0 || !(keep > 0.0 && keep <= 1.0) {
                return bad("need n > 0 and keep in (0, 1]");
            }
            let key = rng::derive_seed(seed, 0xD0_3A1A);
            box_points(n, d, 0)
                .into_iter()
                .filter(|p| rng::unit_open(rng::draw(rng::fold_coords(key, p.coords()), 0)) < keep)
                .collect()
        }
        DomainShape::SeparatedBoxes { count, n, d, gap } => {
            if count == 0 || n == 0 {
                return bad("count and n must be positive");
            }
            (0..count)
                .flat_map(|b| box_points(n, d, (b * (n + gap)) as i64))
                .collect()
        }
    };
    if points.is_empty() {
        return Err(Error::EmptyDomain);
    }
    Domain::new(d, points)
}

impl fmt::Display for DomainShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainShape::Box { n, d } => write!(f, "box:n={n},d={d}"),
            DomainShape::Line { n, d } => write!(f, "line:n={n},d={d}"),
            DomainShape::LShape { arm, width } => write!(f, "lshape:arm={arm},width={width}"),
            DomainShape::Diagonal { n, d } => write!(f, "diagonal:n={n},d={d}"),
            DomainShape::RandomSubset { n, d, keep, seed } => {
                write!(f, "random:n={n},d={d},keep={keep},seed={seed}")
            }
            DomainShape::SeparatedBoxes { count, n, d, gap } => {
                write!(f, "boxes:count={count},n={n},d={d},gap={gap}")
            }
        }
    }
}

impl FromStr for DomainShape {
    type Err = Error;

    /// Parses descriptors such as `box:n=64,d=2` or `random:n=68,d=2,keep=0.5,seed=7`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("shape {s:?} needs `kind:key=value,...`")))?;
        let mut kv = HashMap::new();
        for item in rest.split(',').filter(|t| !t.trim().is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad shape parameter {item:?}")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn get<T: FromStr>(kv: &HashMap<String, String>, key: &str, default: Option<T>) -> Result<T> {
            match kv.get(key) {
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad value for `{key}`: {v:?}"))),
                None => default.ok_or_else(|| Error::Parse(format!("missing shape parameter `{key}`"))),
            }
        }
        let shape = match kind.trim() {
            "box" => DomainShape::Box { n: get(&kv, "n", None)?, d: get(&kv, "d", Some(2))? },
            "line" => DomainShape::Line { n: get(&kv, "n", None)?, d: get(&kv, "d", Some(2))? },
            "diagonal" => DomainShape::Diagonal { n: get(&kv, "n", None)?, d: get(&kv, "d", Some(2))? },
            "lshape" => DomainShape::LShape {
                arm: get(&kv, "arm", None)?,
                width: get(&kv, "width", None)?,
            },
            "random" => DomainShape::RandomSubset {
                n: get(&kv, "n", None)?,
                d: get(&kv, "d", Some(2))?,
                keep: get(&kv, "keep", Some(0.5))?,
                seed: get(&kv, "seed", Some(0))?,
            },
            "boxes" => DomainShape::SeparatedBoxes {
                count: get(&kv, "count", None)?,
                n: get(&kv, "n", None)?,
                d: get(&kv, "d", Some(2))?,
                gap: get(&kv, "gap", Some(1))?,
            },
            other => return Err(Error::Parse(format!("unknown shape kind {other:?}"))),
        };
        Ok(shape)
    }
}

impl From<DomainShape> for String {
    fn from(s: DomainShape) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for DomainShape {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxd(n: usize, d: usize) -> Domain {
        make_domain(&DomainShape::Box { n, d }).unwrap()
    }

    fn brute_boundary(g: &Domain) -> usize {
        // Enumerate every l1-neighbour explicitly.
        g.iter()
            .filter(|i| {
                (0..g.dim()).any(|m| {
                    [-1, 1].iter().any(|s| {
                        let mut c = i.coords().to_vec();
                        c[m] += s;
                        !g.points().iter().any(|q| q.coords() == c.as_slice())
                    })
                })
            })
            .count()
    }

    #[test]
    fn boundary_of_squares() {
        assert_eq!(boxd(3, 2).boundary().len(), 8);
        assert_eq!(brute_boundary(&boxd(3, 2)), 8);
        let g = boxd(10, 2);
        assert_eq!(g.boundary().len(), brute_boundary(&g));
        assert_eq!(g.boundary().len(), 36);
    }

    #[test]
    fn boundary_of_single_point_is_itself() {
        let g = Domain::new(2, vec![LatticePoint::from([4, 4])]).unwrap();
        assert_eq!(g.boundary(), g);
    }

    #[test]
    fn boundary_fraction_shrinks_for_growing_boxes() {
        for d in 1..=3 {
            let mut prev = f64::INFINITY;
            for n in 2..=9 {
                let g = boxd(n, d);
                let r = g.boundary().len() as f64 / g.len() as f64;
                assert!(r <= prev, "d={d} n={n}");
                prev = r;
            }
        }
    }

    #[test]
    fn shift_overlap_examples() {
        let g = boxd(4, 2);
        assert_eq!(g.shift_overlap(&LatticePoint::from([1, 0])).unwrap(), 12);
        assert_eq!(g.shift_overlap(&LatticePoint::origin(2)).unwrap(), 16);
        assert_eq!(g.shift_overlap(&LatticePoint::from([5, 0])).unwrap(), 0);
        assert!(matches!(
            g.shift_overlap(&LatticePoint::from([1])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn lag_set_examples() {
        let g = boxd(4, 2);
        assert_eq!(g.lag_set(&LatticePoint::from([1, 1])).unwrap().len(), 9);
        assert_eq!(g.lag_set(&LatticePoint::origin(2)).unwrap(), g);
        assert!(g.lag_set(&LatticePoint::from([0, -4])).unwrap().is_empty());
    }

    #[test]
    fn shapes() {
        assert_eq!(boxd(3, 2).len(), 9);
        let line = make_domain(&"line:n=5,d=2".parse().unwrap()).unwrap();
        let expect: Vec<LatticePoint> = (1..=5).map(|i| LatticePoint::from([i, 1])).collect();
        assert_eq!(line.points(), expect.as_slice());
        let l = make_domain(&DomainShape::LShape { arm: 80, width: 16 }).unwrap();
        assert_eq!(l.len(), 2304);
        let sep = make_domain(&DomainShape::SeparatedBoxes { count: 3, n: 4, d: 2, gap: 2 }).unwrap();
        assert_eq!(sep.len(), 48);
        let diag = make_domain(&DomainShape::Diagonal { n: 6, d: 3 }).unwrap();
        assert!(diag.contains(&LatticePoint::from([6, 6, 6])));
        assert!(make_domain(&DomainShape::Box { n: 0, d: 2 }).is_err());
        assert!(make_domain(&DomainShape::Box { n: 2, d: 0 }).is_err());
    }

    #[test]
    fn random_subset_is_reproducible() {
        let shape = DomainShape::RandomSubset { n: 8, d: 2, keep: 0.5, seed: 7 };
        let a = make_domain(&shape).unwrap();
        let b = make_domain(&shape).unwrap();
        assert_eq!(a, b);
        assert!((16..=48).contains(&a.len()), "{}", a.len());
        let c = make_domain(&DomainShape::RandomSubset { n: 8, d: 2, keep: 0.5, seed: 8 }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn shape_descriptor_round_trip() {
        for s in [
            "box:n=64,d=2",
            "line:n=2304,d=2",
            "lshape:arm=80,width=16",
            "diagonal:n=3,d=3",
            "random:n=68,d=2,keep=0.5,seed=7",
            "boxes:count=2,n=5,d=1,gap=3",
        ] {
            let shape: DomainShape = s.parse().unwrap();
            assert_eq!(shape.to_string(), s);
        }
        assert!("blob:n=3".parse::<DomainShape>().is_err());
        assert!("box:d=2".parse::<DomainShape>().is_err());
    }

    #[test]
    fn domain_file_round_trip() {
        let g = make_domain(&DomainShape::LShape { arm: 5, width: 2 }).unwrap();
        let text = g.to_text();
        assert!(text.starts_with("dim=2\n"));
        assert_eq!(Domain::parse(&text).unwrap(), g);
        assert!(Domain::parse("1,2\n").is_err());
        assert!(Domain::parse("dim=2\n1,2,3\n").is_err());
    }

    #[test]
    fn iteration_is_lexicographic_and_deduplicated() {
        let g = Domain::new(
            2,
            vec![LatticePoint::from([2, 1]), LatticePoint::from([1, 5]), LatticePoint::from([2, 1])],
        )
        .unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.points()[0], LatticePoint::from([1, 5]));
    }
}
