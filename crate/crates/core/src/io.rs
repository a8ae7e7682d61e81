//! File formats: headerless CSV for arrays, JSON for metadata.
//!
//! Floats are written with 17 significant digits so a round trip through
//! text reproduces the exact bit pattern. Writes go to a temporary file in
//! the target directory followed by a rename.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::GroundedGraph;
use crate::manifold::{KernelSpec, ManifoldSpec, PointCloud};
use crate::matrix::Matrix;
use crate::{Result, VoltError};

/// Format one float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path, source: std::io::Error) -> VoltError {
    VoltError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> VoltError {
    VoltError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Write bytes to `path` atomically (temp file in the same directory, then
/// rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
        f.sync_all().map_err(|e| io_err(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| VoltError::Config(format!("serialize {}: {e}", path.display())))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| VoltError::Config(format!("{}: {e}", path.display())))
}

/// Sidecar for a points CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointCloudMeta {
    pub manifold: Option<ManifoldSpec>,
    pub n: usize,
    pub d: usize,
    pub seed: Option<u64>,
}

/// Sidecar for a graph edge list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphMeta {
    pub n: usize,
    pub rho_g: f64,
    pub kernel: Option<KernelSpec>,
    pub edge_count: usize,
}

/// One row per point, comma-separated coordinates.
pub fn write_points_csv(path: &Path, points: &Matrix) -> Result<()> {
    let mut out = String::new();
    for row in points.rows() {
        let mut first = true;
        for &x in row {
            if !first {
                out.push(',');
            }
            out.push_str(&fmt_f64(x));
            first = false;
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_points_csv(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(path, idx + 1, format!("bad float {tok:?}")))
            })
            .collect::<Result<_>>()?;
        if let Some(w) = width {
            if row.len() != w {
                return Err(parse_err(
                    path,
                    idx + 1,
                    format!("expected {w} columns, got {}", row.len()),
                ));
            }
        } else {
            width = Some(row.len());
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no rows"));
    }
    Matrix::from_rows(&rows)
}

pub fn write_cloud(dir: &Path, prefix: &str, cloud: &PointCloud) -> Result<()> {
    write_points_csv(&dir.join(format!("{prefix}.csv")), cloud.points())?;
    let meta = PointCloudMeta {
        manifold: cloud.manifold().cloned(),
        n: cloud.n(),
        d: cloud.dim(),
        seed: cloud.seed(),
    };
    write_json(&dir.join(format!("{prefix}.json")), &meta)
}

pub fn read_cloud(csv_path: &Path) -> Result<PointCloud> {
    let points = read_points_csv(csv_path)?;
    let meta_path = csv_path.with_extension("json");
    if meta_path.exists() {
        let meta: PointCloudMeta = read_json(&meta_path)?;
        if meta.n != points.nrows() || meta.d != points.ncols() {
            return Err(VoltError::Config(format!(
                "{}: sidecar says {} x {}, csv has {} x {}",
                meta_path.display(),
                meta.n,
                meta.d,
                points.nrows(),
                points.ncols()
            )));
        }
        PointCloud::with_metadata(points, meta.manifold, meta.seed)
    } else {
        Ok(PointCloud::from_points(points))
    }
}

/// Edge list `(i, j, weight)` with `i < j`, ascending.
pub fn write_graph(dir: &Path, prefix: &str, graph: &GroundedGraph) -> Result<()> {
    let mut out = String::new();
    for (i, j, w) in graph.edges() {
        out.push_str(&format!("{i},{j},{}\n", fmt_f64(w)));
    }
    atomic_write(&dir.join(format!("{prefix}.csv")), out.as_bytes())?;
    let meta = GraphMeta {
        n: graph.n(),
        rho_g: graph.rho(),
        kernel: graph.kernel().ok().copied(),
        edge_count: graph.edge_count(),
    };
    write_json(&dir.join(format!("{prefix}.json")), &meta)
}

/// Rebuild a graph from an exported edge list, optionally attaching the
/// point cloud the edges were built from.
pub fn read_graph(
    edges_path: &Path,
    meta_path: &Path,
    points: Option<PointCloud>,
) -> Result<GroundedGraph> {
    let meta: GraphMeta = read_json(meta_path)?;
    if let Some(cloud) = &points {
        if cloud.n() != meta.n {
            return Err(VoltError::Config(format!(
                "points file has {} rows but graph has n = {}",
                cloud.n(),
                meta.n
            )));
        }
    }
    let text = fs::read_to_string(edges_path).map_err(|e| io_err(edges_path, e))?;
    let mut edges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut field = |name: &str| {
            parts
                .next()
                .ok_or_else(|| parse_err(edges_path, idx + 1, format!("missing {name}")))
        };
        let i: usize = field("i")?
            .trim()
            .parse()
            .map_err(|_| parse_err(edges_path, idx + 1, "bad node index"))?;
        let j: usize = field("j")?
            .trim()
            .parse()
            .map_err(|_| parse_err(edges_path, idx + 1, "bad node index"))?;
        let w: f64 = field("weight")?
            .trim()
            .parse()
            .map_err(|_| parse_err(edges_path, idx + 1, "bad weight"))?;
        edges.push((i, j, w));
    }
    if edges.len() != meta.edge_count {
        return Err(VoltError::Config(format!(
            "{}: sidecar says {} edges, file has {}",
            meta_path.display(),
            meta.edge_count,
            edges.len()
        )));
    }
    GroundedGraph::from_edges(meta.n, &edges, meta.rho_g, points, meta.kernel)
}

/// `(node_index, value)` rows.
pub fn write_voltage_csv(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = String::new();
    for (i, &v) in values.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", fmt_f64(v)));
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_voltage_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (i_tok, v_tok) = line
            .split_once(',')
            .ok_or_else(|| parse_err(path, idx + 1, "expected index,value"))?;
        let i: usize = i_tok
            .trim()
            .parse()
            .map_err(|_| parse_err(path, idx + 1, "bad node index"))?;
        if i != values.len() {
            return Err(parse_err(
                path,
                idx + 1,
                format!("expected node {} next, got {i}", values.len()),
            ));
        }
        let v: f64 = v_tok
            .trim()
            .parse()
            .map_err(|_| parse_err(path, idx + 1, "bad value"))?;
        values.push(v);
    }
    Ok(values)
}

/// Plain rows of floats (embeddings, projections).
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    write_points_csv(path, m)
}

/// Space-separated two-column curve data, one `(x, y)` pair per line.
pub fn write_curve_dat(path: &Path, xs: &[f64], ys: &[f64]) -> Result<()> {
    let mut out = String::new();
    for (x, y) in xs.iter().zip(ys) {
        out.push_str(&format!("{} {}\n", fmt_f64(*x), fmt_f64(*y)));
    }
    atomic_write(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_grounded_graph;
    use crate::manifold::sample_manifold;

    #[test]
    fn float_format_round_trips_exactly() {
        for &x in &[
            0.1,
            1.0 / 3.0,
            std::f64::consts::PI,
            1e-300,
            -2.5e17,
            4.0 / 19.0,
        ] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(x.to_bits(), back.to_bits(), "{s}");
        }
    }

    #[test]
    fn cloud_round_trip_preserves_bits_and_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ManifoldSpec::Sphere { dim: 3 };
        let cloud = sample_manifold(&spec, 50, 123).unwrap();
        write_cloud(dir.path(), "points", &cloud).unwrap();
        let back = read_cloud(&dir.path().join("points.csv")).unwrap();
        assert_eq!(cloud, back);
    }

    #[test]
    fn graph_round_trip_preserves_edges() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = sample_manifold(&ManifoldSpec::UnitSquare, 200, 5).unwrap();
        let g = build_grounded_graph(&cloud, &KernelSpec::Radial { bandwidth: 0.1 }, 0.3).unwrap();
        write_cloud(dir.path(), "points", &cloud).unwrap();
        write_graph(dir.path(), "graph", &g).unwrap();
        let cloud_back = read_cloud(&dir.path().join("points.csv")).unwrap();
        let back = read_graph(
            &dir.path().join("graph.csv"),
            &dir.path().join("graph.json"),
            Some(cloud_back),
        )
        .unwrap();
        assert_eq!(back.n(), g.n());
        assert_eq!(back.rho(), g.rho());
        assert_eq!(back.edge_count(), g.edge_count());
        let a: Vec<_> = g.edges().collect();
        let b: Vec<_> = back.edges().collect();
        assert_eq!(a, b);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1.0,2.0\n1.0,oops\n").unwrap();
        match read_points_csv(&path) {
            Err(VoltError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn voltage_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        let values = vec![1.0, 1.0 / 3.0, 0.0];
        write_voltage_csv(&path, &values).unwrap();
        assert_eq!(read_voltage_csv(&path).unwrap(), values);
    }
}
