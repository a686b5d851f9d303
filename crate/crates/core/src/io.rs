//! Text file formats.
//!
//! * points: CSV, optional header. Header columns named `label` and `weight`
//!   are special, columns starting with `f` are features, the rest are
//!   coordinates. Without a header every column is a coordinate.
//! * graph: whitespace edge list `u v [w]`, 0-based, `#` comments.
//! * partition: `point_index block_index rep_flag` per line.
//! * coupling: `m_X m_Y N_X N_Y`, then `G p q mass` lines, then for every
//!   global entry a `L p q` line followed by `i j mass` lines in block-local
//!   indices.
//!
//! Floats are written in shortest round-trip form, so reading a written file
//! reproduces the values bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::ot::SparsePlan;
use crate::qgw::{QuantizationCoupling, DENSE_CAP};
use crate::space::PointedPartition;

/// Contents of a point cloud file.
#[derive(Debug, Clone, PartialEq)]
pub struct PointsFile {
    pub coords: Array2<f64>,
    pub features: Option<Array2<f64>>,
    pub labels: Option<Vec<String>>,
    pub weights: Option<Vec<f64>>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Column {
    Coord,
    Feature,
    Label,
    Weight,
}

pub fn read_points(path: &Path) -> Result<PointsFile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut records = reader.records();
    let first = match records.next() {
        Some(r) => r.map_err(|e| csv_err(path, e))?,
        None => return Err(parse_err(path, 1, "empty points file")),
    };
    let has_header = first.iter().any(|f| f.parse::<f64>().is_err());
    let columns: Vec<Column> = if has_header {
        first
            .iter()
            .map(|name| match name.to_ascii_lowercase().as_str() {
                "label" => Column::Label,
                "weight" => Column::Weight,
                n if n.starts_with('f') => Column::Feature,
                _ => Column::Coord,
            })
            .collect()
    } else {
        vec![Column::Coord; first.len()]
    };
    let count = |c| columns.iter().filter(|&&k| k == c).count();
    let (d, nf) = (count(Column::Coord), count(Column::Feature));
    if d == 0 {
        return Err(parse_err(path, 1, "no coordinate columns"));
    }
    let mut coords = Vec::new();
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    let mut weights = Vec::new();
    let mut push = |rec: &csv::StringRecord, line: usize| -> Result<()> {
        if rec.len() != columns.len() {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", columns.len(), rec.len())));
        }
        for (field, &col) in rec.iter().zip(&columns) {
            if col == Column::Label {
                labels.push(field.to_string());
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("not a number: {field:?}")))?;
            match col {
                Column::Coord => coords.push(v),
                Column::Feature => feats.push(v),
                Column::Weight => weights.push(v),
                Column::Label => unreachable!(),
            }
        }
        Ok(())
    };
    if !has_header {
        push(&first, line_of(&first))?;
    }
    for rec in records {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        push(&rec, line_of(&rec))?;
    }
    let n = coords.len() / d;
    if n == 0 {
        return Err(parse_err(path, 1, "no points"));
    }
    let shape = |v: Vec<f64>, w| Array2::from_shape_vec((n, w), v).expect("row lengths checked");
    Ok(PointsFile {
        coords: shape(coords, d),
        features: (nf > 0).then(|| shape(feats, nf)),
        labels: columns.contains(&Column::Label).then_some(labels),
        weights: columns.contains(&Column::Weight).then_some(weights),
    })
}

fn line_of(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_err(path, line, format!("{other:?}")),
    }
}

pub fn write_points(path: &Path, points: &PointsFile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let d = points.coords.ncols();
    let mut header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    if let Some(f) = &points.features {
        header.extend((0..f.ncols()).map(|k| format!("f{k}")));
    }
    if points.labels.is_some() {
        header.push("label".into());
    }
    if points.weights.is_some() {
        header.push("weight".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for i in 0..points.coords.nrows() {
        let mut fields: Vec<String> = points.coords.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(f) = &points.features {
            fields.extend(f.row(i).iter().map(|v| v.to_string()));
        }
        if let Some(l) = &points.labels {
            fields.push(l[i].clone());
        }
        if let Some(wt) = &points.weights {
            fields.push(wt[i].to_string());
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an edge list. Node count is `n` when given, else one past the
/// largest id.
pub fn read_graph(path: &Path, n: Option<usize>) -> Result<(usize, Vec<(usize, usize, f64)>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut edges = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let f: Vec<&str> = body.split_whitespace().collect();
        if f.len() != 2 && f.len() != 3 {
            return Err(parse_err(path, k + 1, "expected `u v [w]`"));
        }
        let id = |s: &str| s.parse::<usize>().map_err(|_| parse_err(path, k + 1, format!("bad node id {s:?}")));
        let w = match f.get(2) {
            Some(s) => s.parse::<f64>().map_err(|_| parse_err(path, k + 1, format!("bad weight {s:?}")))?,
            None => 1.0,
        };
        edges.push((id(f[0])?, id(f[1])?, w));
    }
    let inferred = edges.iter().map(|&(u, v, _)| u.max(v) + 1).max().unwrap_or(0);
    let n = n.unwrap_or(inferred);
    if n == 0 {
        return Err(parse_err(path, 0, "graph has no nodes"));
    }
    Ok((n, edges))
}

pub fn write_graph(path: &Path, edges: &[(usize, usize, f64)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for &(u, v, wt) in edges {
        writeln!(w, "{u} {v} {wt}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_partition(path: &Path, partition: &PointedPartition) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for x in 0..partition.num_points() {
        let p = partition.block_of(x);
        let flag = u8::from(partition.representative(p) == x);
        writeln!(w, "{x} {p} {flag}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a partition file; every point must appear once and every block must
/// flag exactly one representative.
pub fn read_partition(path: &Path, measure: &[f64]) -> Result<PointedPartition> {
    let n = measure.len();
    let reader = BufReader::new(File::open(path)?);
    let mut assignment = vec![usize::MAX; n];
    let mut reps: Vec<Option<usize>> = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let f: Vec<usize> = body
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(path, k + 1, "expected three integers"))?;
        let [x, p, flag] = f[..] else {
            return Err(parse_err(path, k + 1, "expected `point block rep_flag`"));
        };
        if x >= n {
            return Err(parse_err(path, k + 1, format!("point {x} out of range for {n} points")));
        }
        if assignment[x] != usize::MAX {
            return Err(parse_err(path, k + 1, format!("point {x} listed twice")));
        }
        if flag > 1 {
            return Err(parse_err(path, k + 1, "rep flag must be 0 or 1"));
        }
        assignment[x] = p;
        if reps.len() <= p {
            reps.resize(p + 1, None);
        }
        if flag == 1 {
            if reps[p].is_some() {
                return Err(parse_err(path, k + 1, format!("block {p} has two representatives")));
            }
            reps[p] = Some(x);
        }
    }
    if let Some(x) = assignment.iter().position(|&a| a == usize::MAX) {
        return Err(parse_err(path, 0, format!("point {x} is missing")));
    }
    let reps = reps
        .into_iter()
        .enumerate()
        .map(|(p, r)| r.ok_or_else(|| parse_err(path, 0, format!("block {p} has no representative"))))
        .collect::<Result<Vec<_>>>()?;
    PointedPartition::from_assignment(measure, &assignment, reps)
}

pub fn write_coupling(path: &Path, qc: &QuantizationCoupling) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let (s, t) = (qc.source(), qc.target());
    writeln!(w, "{} {} {} {}", s.len(), t.len(), s.num_points(), t.num_points())?;
    for &(p, q, m) in qc.global().triplets() {
        writeln!(w, "G {p} {q} {m}")?;
    }
    for (&(p, q, _), local) in qc.global().triplets().iter().zip(qc.locals()) {
        writeln!(w, "L {p} {q}")?;
        for &(i, j, m) in local.triplets() {
            writeln!(w, "{i} {j} {m}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a coupling file against the partitions it was computed with.
pub fn read_coupling(path: &Path, source: PointedPartition, target: PointedPartition) -> Result<QuantizationCoupling> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((k, l)) => {
                let l = l?;
                if !l.trim().is_empty() {
                    break (k + 1, l);
                }
            }
            None => return Err(parse_err(path, 0, "empty coupling file")),
        }
    };
    let dims: Vec<usize> = header
        .1
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(path, header.0, "bad header"))?;
    if dims != [source.len(), target.len(), source.num_points(), target.num_points()] {
        return Err(parse_err(path, header.0, "header does not match the partitions"));
    }
    let mut global = Vec::new();
    let mut locals: Vec<((usize, usize), Vec<(usize, usize, f64)>)> = Vec::new();
    for (k, line) in lines {
        let line = line?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| parse_err(path, k + 1, format!("bad index {s:?}")));
        let float = |s: &str| s.parse::<f64>().map_err(|_| parse_err(path, k + 1, format!("bad mass {s:?}")));
        match (f[0], f.len()) {
            ("G", 4) => {
                if !locals.is_empty() {
                    return Err(parse_err(path, k + 1, "global entry after local sections"));
                }
                global.push((int(f[1])?, int(f[2])?, float(f[3])?));
            }
            ("L", 3) => locals.push(((int(f[1])?, int(f[2])?), Vec::new())),
            (_, 3) => match locals.last_mut() {
                Some((_, t)) => t.push((int(f[0])?, int(f[1])?, float(f[2])?)),
                None => return Err(parse_err(path, k + 1, "local entry before any `L` line")),
            },
            _ => return Err(parse_err(path, k + 1, "unrecognized line")),
        }
    }
    let global = SparsePlan::from_triplets(global);
    if global.len() != locals.len() || global.triplets().iter().zip(&locals).any(|(&(p, q, _), (key, _))| (p, q) != *key) {
        return Err(parse_err(path, 0, "local sections do not follow the global entries"));
    }
    let locals = locals.into_iter().map(|(_, t)| SparsePlan::from_triplets(t)).collect();
    QuantizationCoupling::from_parts(global, locals, source, target)
}

/// Writes every coupling entry as `i j mass` in global indices. Refuses
/// above `N_X * N_Y = 10^6`.
pub fn write_dense_triplets(path: &Path, qc: &QuantizationCoupling) -> Result<()> {
    let (n, k) = (qc.source().num_points(), qc.target().num_points());
    if n.saturating_mul(k) > DENSE_CAP {
        return Err(Error::SizeCap {
            what: "dense export",
            size: n * k,
            cap: DENSE_CAP,
        });
    }
    let mut w = BufWriter::new(File::create(path)?);
    for (x, y, m) in qc.triplets() {
        writeln!(w, "{x} {y} {m}")?;
    }
    w.flush()?;
    Ok(())
}

/// One target index per line (or `source target` pairs, in source order).
pub fn read_index_list(path: &Path) -> Result<Vec<usize>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let f: Vec<&str> = line.split_whitespace().collect();
        let value = match f.len() {
            0 => continue,
            1 => f[0],
            2 => {
                if f[0].parse::<usize>().ok() != Some(out.len()) {
                    return Err(parse_err(path, k + 1, "pairs must be listed in source order"));
                }
                f[1]
            }
            _ => return Err(parse_err(path, k + 1, "expected one or two integers")),
        };
        out.push(value.parse().map_err(|_| parse_err(path, k + 1, format!("bad index {value:?}")))?);
    }
    Ok(out)
}

/// One label per line.
pub fn read_labels(path: &Path) -> Result<Vec<String>> {
    let reader = BufReader::new(File::open(path)?);
    reader
        .lines()
        .map(|l| Ok(l?.trim().to_string()))
        .filter(|l: &Result<String>| l.as_ref().map_or(true, |s| !s.is_empty()))
        .collect()
}

/// Comma-separated numeric table without a header.
pub fn read_table(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut values = Vec::new();
    let mut width = None;
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = line_of(&rec);
        if *width.get_or_insert(rec.len()) != rec.len() {
            return Err(parse_err(path, line, "ragged row"));
        }
        for f in rec.iter() {
            values.push(f.parse::<f64>().map_err(|_| parse_err(path, line, format!("not a number: {f:?}")))?);
        }
    }
    let w = width.ok_or_else(|| parse_err(path, 0, "empty table"))?;
    Ok(Array2::from_shape_vec((values.len() / w, w), values).expect("rectangular"))
}

pub fn write_table(path: &Path, table: ArrayView2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in table.rows() {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}
