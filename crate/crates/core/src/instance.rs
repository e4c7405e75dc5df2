//! TSP instances: TSPLIB `EUC_2D` parsing, the distance oracle, neighbor
//! lists and random uniform Euclidean (RUE) instances.

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;
use crate::rng::seeded_rng;

/// Vertex id, 0-based.
pub type Vertex = usize;

/// Default neighbor list length.
pub const DEFAULT_NEIGHBOR_K: usize = 10;

/// Smallest accepted dimension.
pub const MIN_DIMENSION: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("line {line}: malformed header: {msg}")]
    MalformedHeader { line: usize, msg: String },
    #[error("line {line}: unsupported EDGE_WEIGHT_TYPE `{found}` (only EUC_2D)")]
    UnsupportedWeightType { line: usize, found: String },
    #[error("line {line}: expected {expected} coordinate lines, found {found}")]
    CoordinateCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: non-numeric coordinate `{token}`")]
    NonNumericCoordinate { line: usize, token: String },
    #[error("line {line}: malformed node line: {msg}")]
    MalformedNode { line: usize, msg: String },
    #[error("dimension {0} is below the minimum of {MIN_DIMENSION}")]
    DimensionTooSmall(usize),
    #[error("vertex {vertex} out of range for dimension {dimension}")]
    VertexOutOfRange { vertex: Vertex, dimension: usize },
    #[error("side length must be at least 1")]
    InvalidSide,
    #[error("optimum sidecar: {0}")]
    Sidecar(String),
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Undirected edge, normalized so that `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeKey {
    pub u: Vertex,
    pub v: Vertex,
}

impl EdgeKey {
    pub fn new(a: Vertex, b: Vertex) -> Self {
        debug_assert_ne!(a, b, "self-loop edge");
        if a < b {
            EdgeKey { u: a, v: b }
        } else {
            EdgeKey { u: b, v: a }
        }
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{}}}", self.u + 1, self.v + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeWeightType {
    #[serde(rename = "EUC_2D")]
    Euc2d,
}

/// Immutable TSP instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    name: String,
    coords: Vec<(f64, f64)>,
    edge_weight_type: EdgeWeightType,
    neighbor_k: usize,
    /// Flat `dimension * neighbor_k` table.
    neighbors: Vec<Vertex>,
    known_optimum: Option<i64>,
    optimal_tour: Option<Vec<Vertex>>,
}

/// TSPLIB `nint` rounding of a Euclidean distance.
#[inline]
pub fn euc_2d(a: (f64, f64), b: (f64, f64)) -> i64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    ((dx * dx + dy * dy).sqrt() + 0.5).floor() as i64
}

impl Instance {
    /// Builds an instance from coordinates, computing neighbor lists eagerly.
    pub fn from_coords(
        name: impl Into<String>,
        coords: Vec<(f64, f64)>,
        neighbor_k: usize,
    ) -> Result<Self, InstanceError> {
        if coords.len() < MIN_DIMENSION {
            return Err(InstanceError::DimensionTooSmall(coords.len()));
        }
        let k = neighbor_k.min(coords.len() - 1);
        let neighbors = build_neighbor_lists(&coords, k);
        Ok(Instance {
            name: name.into(),
            coords,
            edge_weight_type: EdgeWeightType::Euc2d,
            neighbor_k: k,
            neighbors,
            known_optimum: None,
            optimal_tour: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[(f64, f64)] {
        &self.coords
    }

    pub fn edge_weight_type(&self) -> EdgeWeightType {
        self.edge_weight_type
    }

    pub fn neighbor_k(&self) -> usize {
        self.neighbor_k
    }

    /// The `min(k, N-1)` nearest vertices of `v`, nondecreasing by distance
    /// (ties by vertex id).
    #[inline]
    pub fn neighbors(&self, v: Vertex) -> &[Vertex] {
        &self.neighbors[v * self.neighbor_k..(v + 1) * self.neighbor_k]
    }

    pub fn known_optimum(&self) -> Option<i64> {
        self.known_optimum
    }

    pub fn optimal_tour(&self) -> Option<&[Vertex]> {
        self.optimal_tour.as_deref()
    }

    /// Rounded Euclidean distance. Panics on out-of-range ids; see
    /// [`Instance::try_distance`] for the checked variant.
    #[inline]
    pub fn distance(&self, u: Vertex, v: Vertex) -> i64 {
        euc_2d(self.coords[u], self.coords[v])
    }

    pub fn try_distance(&self, u: Vertex, v: Vertex) -> Result<i64, InstanceError> {
        let n = self.dimension();
        for w in [u, v] {
            if w >= n {
                return Err(InstanceError::VertexOutOfRange {
                    vertex: w,
                    dimension: n,
                });
            }
        }
        Ok(self.distance(u, v))
    }

    /// Rebuilds the neighbor lists with a different `k`.
    pub fn with_neighbor_k(mut self, k: usize) -> Self {
        let k = k.min(self.dimension() - 1);
        if k != self.neighbor_k {
            self.neighbor_k = k;
            self.neighbors = build_neighbor_lists(&self.coords, k);
        }
        self
    }

    /// Attaches optimum metadata. When a tour is given, its length must equal
    /// `optimum`.
    pub fn with_optimum(
        mut self,
        optimum: i64,
        tour: Option<Vec<Vertex>>,
    ) -> Result<Self, InstanceError> {
        if optimum < 0 {
            return Err(InstanceError::Sidecar(format!(
                "negative optimum {optimum}"
            )));
        }
        if let Some(t) = &tour {
            if !is_permutation(t, self.dimension()) {
                return Err(InstanceError::Sidecar(
                    "optimal tour is not a permutation of the instance vertices".into(),
                ));
            }
            let len = self.cycle_length(t);
            if len != optimum {
                return Err(InstanceError::Sidecar(format!(
                    "optimal tour has length {len}, sidecar claims {optimum}"
                )));
            }
        }
        self.known_optimum = Some(optimum);
        self.optimal_tour = tour;
        Ok(self)
    }

    /// Length of a closed vertex sequence; the caller guarantees ids are in
    /// range.
    pub(crate) fn cycle_length(&self, order: &[Vertex]) -> i64 {
        let n = order.len();
        (0..n)
            .map(|i| self.distance(order[i], order[(i + 1) % n]))
            .sum()
    }

    /// Serializes as a TSPLIB `EUC_2D` file.
    pub fn to_tsplib(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("NAME: {}\n", self.name));
        out.push_str("TYPE: TSP\n");
        out.push_str(&format!("DIMENSION: {}\n", self.dimension()));
        out.push_str("EDGE_WEIGHT_TYPE: EUC_2D\n");
        out.push_str("NODE_COORD_SECTION\n");
        for (i, (x, y)) in self.coords.iter().enumerate() {
            out.push_str(&format!("{} {} {}\n", i + 1, x, y));
        }
        out.push_str("EOF\n");
        out
    }

    /// Reads a TSPLIB file and, when present, its optimum sidecar
    /// (`<stem>.opt` next to the file, or `<file>.opt`).
    pub fn load(path: &Path, neighbor_k: usize) -> Result<Self, InstanceError> {
        let text = std::fs::read_to_string(path).map_err(|e| InstanceError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let inst = parse_tsplib(&text)?.with_neighbor_k(neighbor_k);
        let candidates = [
            path.with_extension("opt"),
            path.with_file_name(format!(
                "{}.opt",
                path.file_name()
                    .map(|f| f.to_string_lossy())
                    .unwrap_or_default()
            )),
        ];
        for sidecar in candidates {
            if sidecar.is_file() {
                let text = std::fs::read_to_string(&sidecar).map_err(|e| InstanceError::Io {
                    path: sidecar.display().to_string(),
                    msg: e.to_string(),
                })?;
                let (opt, tour) = parse_opt_sidecar(&text, inst.dimension())?;
                return inst.with_optimum(opt, tour);
            }
        }
        Ok(inst)
    }
}

fn build_neighbor_lists(coords: &[(f64, f64)], k: usize) -> Vec<Vertex> {
    let n = coords.len();
    let rows = par::map_indexed(n, true, |v| {
        let mut cand: Vec<(i64, Vertex)> = (0..n)
            .filter(|&w| w != v)
            .map(|w| (euc_2d(coords[v], coords[w]), w))
            .collect();
        if k < cand.len() {
            cand.select_nth_unstable(k);
            cand.truncate(k);
        }
        cand.sort_unstable();
        cand.into_iter().map(|(_, w)| w).collect::<Vec<_>>()
    });
    rows.concat()
}

pub(crate) fn is_permutation(order: &[Vertex], n: usize) -> bool {
    if order.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &v in order {
        if v >= n || seen[v] {
            return false;
        }
        seen[v] = true;
    }
    true
}

/// Parses the TSPLIB subset: `NAME`, `TYPE`, `COMMENT`, `DIMENSION`,
/// `EDGE_WEIGHT_TYPE`, `NODE_COORD_SECTION`, `EOF`. Unknown header keys are
/// ignored. File ids are 1-based and must match their line order.
pub fn parse_tsplib(text: &str) -> Result<Instance, InstanceError> {
    let mut name: Option<String> = None;
    let mut dimension: Option<usize> = None;
    let mut weight_seen = false;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut section_line = 0;

    for (line, raw) in lines.by_ref() {
        if raw.is_empty() {
            continue;
        }
        if raw == "NODE_COORD_SECTION" {
            section_line = line;
            break;
        }
        if raw == "EOF" {
            return Err(InstanceError::MalformedHeader {
                line,
                msg: "EOF before NODE_COORD_SECTION".into(),
            });
        }
        let Some((key, value)) = raw.split_once(':') else {
            return Err(InstanceError::MalformedHeader {
                line,
                msg: format!("expected `KEY: value`, got `{raw}`"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "NAME" => name = Some(value.to_string()),
            "TYPE" => {
                if value != "TSP" {
                    return Err(InstanceError::MalformedHeader {
                        line,
                        msg: format!("unsupported TYPE `{value}`"),
                    });
                }
            }
            "DIMENSION" => {
                let d = value
                    .parse::<usize>()
                    .map_err(|_| InstanceError::MalformedHeader {
                        line,
                        msg: format!("DIMENSION `{value}` is not a positive integer"),
                    })?;
                dimension = Some(d);
            }
            "EDGE_WEIGHT_TYPE" => {
                if value != "EUC_2D" {
                    return Err(InstanceError::UnsupportedWeightType {
                        line,
                        found: value.to_string(),
                    });
                }
                weight_seen = true;
            }
            _ => {}
        }
    }

    if section_line == 0 {
        return Err(InstanceError::MalformedHeader {
            line: text.lines().count(),
            msg: "missing NODE_COORD_SECTION".into(),
        });
    }
    let name = name.ok_or_else(|| InstanceError::MalformedHeader {
        line: section_line,
        msg: "missing NAME".into(),
    })?;
    let dimension = dimension.ok_or_else(|| InstanceError::MalformedHeader {
        line: section_line,
        msg: "missing DIMENSION".into(),
    })?;
    if !weight_seen {
        return Err(InstanceError::MalformedHeader {
            line: section_line,
            msg: "missing EDGE_WEIGHT_TYPE".into(),
        });
    }
    if dimension < MIN_DIMENSION {
        return Err(InstanceError::DimensionTooSmall(dimension));
    }

    let mut coords = Vec::with_capacity(dimension);
    let mut last_line = section_line;
    for (line, raw) in lines {
        last_line = line;
        if raw.is_empty() {
            continue;
        }
        if raw == "EOF" {
            break;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(InstanceError::MalformedNode {
                line,
                msg: format!("expected `id x y`, got {} fields", toks.len()),
            });
        }
        let id: usize = toks[0].parse().map_err(|_| InstanceError::MalformedNode {
            line,
            msg: format!("node id `{}` is not an integer", toks[0]),
        })?;
        if coords.len() == dimension {
            return Err(InstanceError::CoordinateCount {
                line,
                expected: dimension,
                found: dimension + 1,
            });
        }
        if id != coords.len() + 1 {
            return Err(InstanceError::MalformedNode {
                line,
                msg: format!(
                    "node id {id} out of sequence (expected {})",
                    coords.len() + 1
                ),
            });
        }
        let parse = |tok: &str| {
            tok.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| InstanceError::NonNumericCoordinate {
                    line,
                    token: tok.to_string(),
                })
        };
        coords.push((parse(toks[1])?, parse(toks[2])?));
    }
    if coords.len() != dimension {
        return Err(InstanceError::CoordinateCount {
            line: last_line,
            expected: dimension,
            found: coords.len(),
        });
    }
    Instance::from_coords(name, coords, DEFAULT_NEIGHBOR_K)
}

/// Parses an optimum sidecar: line 1 the optimum length, optional line 2 a
/// 1-based optimal tour.
pub fn parse_opt_sidecar(
    text: &str,
    dimension: usize,
) -> Result<(i64, Option<Vec<Vertex>>), InstanceError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines
        .next()
        .ok_or_else(|| InstanceError::Sidecar("empty sidecar".into()))?;
    let opt = first
        .parse::<i64>()
        .map_err(|_| InstanceError::Sidecar(format!("optimum `{first}` is not an integer")))?;
    let tour = match lines.next() {
        None => None,
        Some(l) => {
            let ids = l
                .split_whitespace()
                .map(|t| match t.parse::<usize>() {
                    Ok(id) if id >= 1 && id <= dimension => Ok(id - 1),
                    _ => Err(InstanceError::Sidecar(format!("bad tour id `{t}`"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(ids)
        }
    };
    Ok((opt, tour))
}

/// Random uniform Euclidean instance with `n` points on `[0, side]^2`.
pub fn generate_rue(n: usize, side: u64, seed: u64) -> Result<Instance, InstanceError> {
    if n < MIN_DIMENSION {
        return Err(InstanceError::DimensionTooSmall(n));
    }
    if side == 0 {
        return Err(InstanceError::InvalidSide);
    }
    let mut rng = seeded_rng(seed);
    let s = side as f64;
    let coords = (0..n)
        .map(|_| (rng.gen_range(0.0..=s), rng.gen_range(0.0..=s)))
        .collect();
    Instance::from_coords(format!("rue{n}-s{seed}"), coords, DEFAULT_NEIGHBOR_K)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: &str = "NAME: square\nTYPE: TSP\nDIMENSION: 4\nEDGE_WEIGHT_TYPE: EUC_2D\n\
NODE_COORD_SECTION\n1 0 0\n2 1 0\n3 1 1\n4 0 1\nEOF\n";

    #[test]
    fn unit_square_distances_all_round_to_one() {
        let inst = parse_tsplib(SQUARE).unwrap();
        assert_eq!(inst.dimension(), 4);
        for u in 0..4 {
            for v in 0..4 {
                if u != v {
                    assert_eq!(inst.distance(u, v), 1, "{u}-{v}");
                }
            }
        }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(euc_2d((0.0, 0.0), (3.0, 4.0)), 5);
        assert_eq!(euc_2d((0.0, 0.0), (1.0, 1.0)), 1);
        assert_eq!(euc_2d((0.0, 0.0), (0.2, 0.2)), 0);
        assert_eq!(euc_2d((0.0, 0.0), (1.5, 0.0)), 2);
    }

    #[test]
    fn try_distance_rejects_out_of_range() {
        let inst = parse_tsplib(SQUARE).unwrap();
        assert_eq!(
            inst.try_distance(0, 4),
            Err(InstanceError::VertexOutOfRange {
                vertex: 4,
                dimension: 4
            })
        );
        assert_eq!(inst.try_distance(1, 3), Ok(1));
    }

    #[test]
    fn coordinate_count_mismatch() {
        let text = SQUARE.replace("DIMENSION: 4", "DIMENSION: 5");
        match parse_tsplib(&text) {
            Err(InstanceError::CoordinateCount {
                expected: 5,
                found: 4,
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn distinct_parse_errors_name_lines() {
        let bad_type = SQUARE.replace("EUC_2D", "GEO");
        assert_eq!(
            parse_tsplib(&bad_type),
            Err(InstanceError::UnsupportedWeightType {
                line: 4,
                found: "GEO".into()
            })
        );
        let bad_coord = SQUARE.replace("3 1 1", "3 1 abc");
        assert_eq!(
            parse_tsplib(&bad_coord),
            Err(InstanceError::NonNumericCoordinate {
                line: 8,
                token: "abc".into()
            })
        );
        let bad_header = SQUARE.replace("DIMENSION: 4", "DIMENSION 4");
        assert!(matches!(
            parse_tsplib(&bad_header),
            Err(InstanceError::MalformedHeader { line: 3, .. })
        ));
        let no_section = "NAME: x\nDIMENSION: 4\nEDGE_WEIGHT_TYPE: EUC_2D\n";
        assert!(matches!(
            parse_tsplib(no_section),
            Err(InstanceError::MalformedHeader { .. })
        ));
        let tiny = SQUARE.replace("DIMENSION: 4", "DIMENSION: 3");
        assert_eq!(
            parse_tsplib(&tiny),
            Err(InstanceError::DimensionTooSmall(3))
        );
    }

    #[test]
    fn duplicate_coordinates_are_accepted() {
        let inst = Instance::from_coords(
            "dup",
            vec![(0.0, 0.0), (0.0, 0.0), (5.0, 0.0), (0.0, 5.0)],
            10,
        )
        .unwrap();
        assert_eq!(inst.distance(0, 1), 0);
    }

    #[test]
    fn neighbor_lists_are_sorted_and_complete() {
        let inst = generate_rue(60, 1000, 3).unwrap();
        for v in 0..inst.dimension() {
            let nb = inst.neighbors(v);
            assert_eq!(nb.len(), 10);
            assert!(!nb.contains(&v));
            let mut dedup = nb.to_vec();
            dedup.sort_unstable();
            dedup.dedup();
            assert_eq!(dedup.len(), nb.len());
            assert!(nb
                .windows(2)
                .all(|w| inst.distance(v, w[0]) <= inst.distance(v, w[1])));
            let last = inst.distance(v, *nb.last().unwrap());
            for w in 0..inst.dimension() {
                if w != v && !nb.contains(&w) {
                    assert!(inst.distance(v, w) >= last);
                }
            }
        }
        let small = generate_rue(6, 100, 1).unwrap();
        assert_eq!(small.neighbors(0).len(), 5);
    }

    #[test]
    fn rue_is_deterministic_per_seed() {
        let a = generate_rue(8, 100, 7).unwrap();
        let b = generate_rue(8, 100, 7).unwrap();
        let c = generate_rue(8, 100, 8).unwrap();
        assert_eq!(a.coords(), b.coords());
        assert_ne!(a.coords(), c.coords());
        assert_eq!(generate_rue(500, 1_000_000, 1).unwrap().dimension(), 500);
        assert!(a
            .coords()
            .iter()
            .all(|&(x, y)| (0.0..=100.0).contains(&x) && (0.0..=100.0).contains(&y)));
        assert_eq!(
            generate_rue(3, 100, 1).unwrap_err(),
            InstanceError::DimensionTooSmall(3)
        );
    }

    #[test]
    fn tsplib_round_trip_preserves_coordinates() {
        let a = generate_rue(20, 1000, 11).unwrap();
        let b = parse_tsplib(&a.to_tsplib()).unwrap();
        assert_eq!(a.coords(), b.coords());
        assert_eq!(a.name(), b.name());
    }

    #[test]
    fn sidecar_tour_must_match_optimum() {
        let inst = parse_tsplib(SQUARE).unwrap();
        let (opt, tour) = parse_opt_sidecar("4\n1 2 3 4\n", 4).unwrap();
        assert_eq!(opt, 4);
        let inst2 = inst.clone().with_optimum(opt, tour).unwrap();
        assert_eq!(inst2.known_optimum(), Some(4));
        assert!(inst
            .clone()
            .with_optimum(5, Some(vec![0, 1, 2, 3]))
            .is_err());
        assert!(parse_opt_sidecar("4\n1 2 9 4\n", 4).is_err());
        assert_eq!(parse_opt_sidecar("17\n", 4).unwrap(), (17, None));
    }
}
