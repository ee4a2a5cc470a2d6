//! Output plumbing: schema-checked CSV tables, atomic writes, the run
//! manifest, and a deterministic index-parallel map.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Serialize;

/// One CSV cell.
#[derive(Debug, Clone)]
pub enum Cell {
    Text(String),
    Num(f64),
    Int(u64),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

/// A curve table with a fixed header; rows are checked against the schema
/// (width and finiteness) as they are added.
#[derive(Debug, Clone)]
pub struct CsvTable {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&'static str]) -> Result<Self> {
        if header.is_empty() {
            bail!("CSV table needs at least one column");
        }
        for (i, name) in header.iter().enumerate() {
            if name.is_empty() || header[..i].contains(name) {
                bail!("bad CSV column name {name:?}");
            }
        }
        Ok(Self { header: header.to_vec(), rows: Vec::new() })
    }

    pub fn push(&mut self, cells: Vec<Cell>) -> Result<()> {
        if cells.len() != self.header.len() {
            bail!(
                "row width {} does not match {} columns",
                cells.len(),
                self.header.len()
            );
        }
        let mut row = Vec::with_capacity(cells.len());
        for (cell, col) in cells.into_iter().zip(&self.header) {
            row.push(match cell {
                Cell::Text(s) => s,
                Cell::Int(v) => v.to_string(),
                Cell::Num(v) => {
                    if !v.is_finite() {
                        bail!("non-finite value {v} in column {col}");
                    }
                    v.to_string()
                }
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Serialize and write atomically (temp file + rename).
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(&self.header)?;
        for row in &self.rows {
            wtr.write_record(row)?;
        }
        let bytes = wtr.into_inner().context("flushing CSV")?;
        write_atomic(path, &bytes)
    }
}

/// Write via a sibling temp file and rename, so partial files never land
/// under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp.{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("renaming into place: {}", path.display()))?;
    Ok(())
}

/// Run metadata written next to the curves.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: &'static str,
    pub seed: u64,
    pub threads: usize,
    pub parameters: serde_json::Value,
    /// Curve files, relative to the manifest's directory.
    pub outputs: Vec<String>,
    pub duration_seconds: f64,
    /// Experiment-specific extras (fit parameters and the like).
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Manifest {
    pub fn write(&self, dir: &Path, elapsed: Duration) -> Result<PathBuf> {
        let mut doc = serde_json::to_value(self)?;
        doc["duration_seconds"] = serde_json::json!(elapsed.as_secs_f64());
        let path = dir.join("manifest.json");
        let mut bytes = serde_json::to_vec_pretty(&doc)?;
        bytes.push(b'\n');
        write_atomic(&path, &bytes)?;
        Ok(path)
    }
}

/// Map `f` over `0..n` with up to `threads` workers, returning results in
/// index order. Each index's work must be self-seeded, which makes the
/// output independent of the worker count.
pub fn parallel_map<T, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let threads = threads.clamp(1, n.max(1));
    if threads <= 1 || n <= 1 {
        return (0..n).map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = f(i);
                *slots[i].lock().expect("result slot poisoned") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("result slot poisoned")
                .expect("worker visited every index")
        })
        .collect()
}

/// Derive an independent sub-seed for grid point (`tag`, `index`).
///
/// Chains a full avalanche round per component (as the core library does for
/// its streams), so distinct points never share randomness no matter how the
/// grid is chunked across workers.
pub fn subseed(seed: u64, tag: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    let state = mix(seed ^ 0x9e37_79b9_7f4a_7c15);
    mix(mix(state ^ tag) ^ index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rejects_schema_violations() {
        assert!(CsvTable::new(&[]).is_err());
        assert!(CsvTable::new(&["a", "a"]).is_err());
        let mut t = CsvTable::new(&["a", "b"]).unwrap();
        assert!(t.push(vec![Cell::Num(1.0)]).is_err());
        assert!(t.push(vec![Cell::Num(f64::NAN), Cell::Num(0.0)]).is_err());
        assert!(t.push(vec![Cell::Num(1.5), Cell::Int(2)]).is_ok());
        assert!(!t.is_empty());
    }

    #[test]
    fn parallel_map_is_ordered_and_thread_independent() {
        let serial = parallel_map(17, 1, |i| Ok(subseed(5, 1, i as u64))).unwrap();
        let parallel = parallel_map(17, 8, |i| Ok(subseed(5, 1, i as u64))).unwrap();
        assert_eq!(serial, parallel);
        let failing: Result<Vec<u64>> =
            parallel_map(4, 2, |i| if i == 3 { bail!("boom") } else { Ok(0) });
        assert!(failing.is_err());
    }

    #[test]
    fn subseeds_do_not_collide_on_small_grids() {
        let mut seen = std::collections::HashSet::new();
        for tag in 0..8u64 {
            for i in 0..64u64 {
                assert!(seen.insert(subseed(42, tag, i)));
            }
        }
    }
}
