//! CSV and binary (`WLAB1`) ensemble formats.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! magic        5 bytes  "WLAB1"
//! grid_kind    u8       0 uniform, 1 geometric-tail, 2 explicit
//! n_times      u64
//! times        f64 * n_times
//! process_kind u8
//! x0, drift_a, sigma   f64 * 3
//! dim_n        u32
//! r0           f64
//! master_seed  u64
//! n_paths      u64
//! streams      u64 * n_paths
//! values       f64 * n_paths * n_times   (path-major)
//! ```

use std::fmt::Write as _;
use std::sync::Arc;

use super::{GridKind, Path, PathEnsemble, ProcessKind, ProcessParams, ProcessTag, TimeGrid};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"WLAB1";
pub const CSV_HEADER: &str = "path_id,t,value";

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `path_id,t,value` rows, preceded by `# key=value` comment lines.
pub fn ensemble_to_csv(ens: &PathEnsemble, comments: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in comments {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (path, id) in ens.paths().iter().zip(ens.stream_indices()) {
        for (t, v) in path.times().iter().zip(path.values()) {
            let _ = writeln!(out, "{id},{},{}", fmt_f64(*t), fmt_f64(*v));
        }
    }
    out
}

/// Parses the CSV written by [`ensemble_to_csv`]. Rows of one path must be
/// contiguous and every path must share the first path's times. Comment lines
/// and blank lines are skipped; a `# master_seed=<u64>` comment is honored.
pub fn ensemble_from_csv(text: &str) -> Result<PathEnsemble> {
    let mut master_seed = 0u64;
    let mut header_seen = false;
    let mut ids: Vec<u64> = Vec::new();
    let mut rows: Vec<Vec<(f64, f64)>> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(seed) = comment.trim().strip_prefix("master_seed=") {
                master_seed = seed
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("line {}: bad master_seed", lineno + 1)))?;
            }
            continue;
        }
        if !header_seen {
            if line != CSV_HEADER {
                return Err(Error::Format(format!("expected header `{CSV_HEADER}`, got `{line}`")));
            }
            header_seen = true;
            continue;
        }
        let mut fields = line.split(',');
        let (Some(id), Some(t), Some(v), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::Format(format!("line {}: expected 3 fields", lineno + 1)));
        };
        let bad = |what: &str| Error::Format(format!("line {}: bad {what}", lineno + 1));
        let id: u64 = id.trim().parse().map_err(|_| bad("path_id"))?;
        let t: f64 = t.trim().parse().map_err(|_| bad("t"))?;
        let v: f64 = v.trim().parse().map_err(|_| bad("value"))?;
        if ids.last() != Some(&id) {
            if ids.contains(&id) {
                return Err(Error::Format(format!("line {}: rows of path {id} are not contiguous", lineno + 1)));
            }
            ids.push(id);
            rows.push(Vec::new());
        }
        if let Some(last) = rows.last_mut() {
            last.push((t, v));
        }
    }
    if !header_seen {
        return Err(Error::Format("missing CSV header".into()));
    }
    let Some(first) = rows.first() else {
        return Err(Error::Format("no data rows".into()));
    };
    let times: Vec<f64> = first.iter().map(|r| r.0).collect();
    let grid = Arc::new(TimeGrid::explicit(times)?);
    let paths = rows
        .into_iter()
        .map(|r| {
            if r.len() != grid.len() || r.iter().zip(grid.times()).any(|(row, t)| row.0 != *t) {
                return Err(Error::Grid("paths in CSV do not share one time grid".into()));
            }
            Path::new(grid.clone(), r.into_iter().map(|x| x.1).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    PathEnsemble::new(
        grid,
        paths,
        master_seed,
        ids,
        ProcessTag::new(ProcessKind::Imported, ProcessParams::default()),
    )
}

pub fn encode_ensemble(ens: &PathEnsemble) -> Vec<u8> {
    let grid = ens.grid();
    let n_times = grid.len();
    let mut out = Vec::with_capacity(64 + 8 * (n_times + ens.len() * (n_times + 1)));
    out.extend_from_slice(MAGIC);
    out.push(grid.kind().code());
    out.extend_from_slice(&(n_times as u64).to_le_bytes());
    for t in grid.times() {
        out.extend_from_slice(&t.to_le_bytes());
    }
    let tag = ens.process_tag();
    out.push(tag.kind.code());
    for x in [tag.params.x0, tag.params.drift_a, tag.params.sigma] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend_from_slice(&tag.params.dim_n.to_le_bytes());
    out.extend_from_slice(&tag.params.r0.to_le_bytes());
    out.extend_from_slice(&ens.master_seed().to_le_bytes());
    out.extend_from_slice(&(ens.len() as u64).to_le_bytes());
    for s in ens.stream_indices() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    for p in ens.paths() {
        for v in p.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated input reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_bits(self.u64(what)?))
    }

    /// Element count that must fit in the remaining bytes at `width` each.
    fn count(&mut self, width: usize, what: &str) -> Result<usize> {
        let n = self.u64(what)?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if n.checked_mul(width as u64).is_none_or(|b| b > remaining) {
            return Err(Error::Format(format!("{what} = {n} exceeds remaining input")));
        }
        Ok(n as usize)
    }
}

pub fn decode_ensemble(bytes: &[u8]) -> Result<PathEnsemble> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Format("bad magic, expected WLAB1".into()));
    }
    let kind = GridKind::from_code(r.u8("grid kind")?)
        .ok_or_else(|| Error::Format("unknown grid kind".into()))?;
    let n_times = r.count(8, "n_times")?;
    let times = (0..n_times).map(|_| r.f64("times")).collect::<Result<Vec<_>>>()?;
    let grid = Arc::new(TimeGrid::new(times, kind)?);
    let pkind = ProcessKind::from_code(r.u8("process kind")?)
        .ok_or_else(|| Error::Format("unknown process kind".into()))?;
    let params = ProcessParams {
        x0: r.f64("x0")?,
        drift_a: r.f64("drift_a")?,
        sigma: r.f64("sigma")?,
        dim_n: r.u32("dim_n")?,
        r0: r.f64("r0")?,
    };
    let master_seed = r.u64("master_seed")?;
    let n_paths = r.count(8, "n_paths")?;
    let streams = (0..n_paths).map(|_| r.u64("streams")).collect::<Result<Vec<_>>>()?;
    let needed = n_paths
        .checked_mul(n_times)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format("value block size overflows".into()))?;
    if bytes.len() - r.pos != needed {
        return Err(Error::Format(format!(
            "value block has {} bytes, expected {needed}",
            bytes.len() - r.pos
        )));
    }
    let mut paths = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        let values = (0..n_times).map(|_| r.f64("values")).collect::<Result<Vec<_>>>()?;
        paths.push(Path::new(grid.clone(), values)?);
    }
    PathEnsemble::new(grid, paths, master_seed, streams, ProcessTag::new(pkind, params))
}
