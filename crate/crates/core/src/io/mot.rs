//! MOTChallenge CSV: `frame,id,x,y,w,h,conf,class,visibility` with 1-based
//! frame numbers and no header.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq)]
pub struct MotRow {
    /// 1-based.
    pub frame: u32,
    pub id: u64,
    pub bbox: BBox,
    pub conf: f64,
    pub class: i64,
    pub visibility: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MotTable {
    pub rows: Vec<MotRow>,
}

impl MotTable {
    /// Highest frame number present (0 when empty).
    pub fn last_frame(&self) -> u32 {
        self.rows.iter().map(|r| r.frame).max().unwrap_or(0)
    }

    /// Rows grouped by 0-based frame index for `frames` frames. Rows past
    /// the end are ignored.
    pub fn by_frame(&self, frames: u32) -> Vec<Vec<&MotRow>> {
        let mut out = vec![Vec::new(); frames as usize];
        for r in &self.rows {
            if let Some(slot) = out.get_mut(r.frame as usize - 1) {
                slot.push(r);
            }
        }
        out
    }

    pub fn sort(&mut self) {
        self.rows.sort_by_key(|r| (r.frame, r.id));
    }
}

fn field<T: std::str::FromStr>(raw: &str, name: &str, at: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.trim()
        .parse()
        .map_err(|e| Error::validation(at, format!("column {name}: {e} ({raw:?})")))
}

pub fn parse_mot(text: &str, origin: &str) -> Result<MotTable> {
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = format!("{origin}:{}", i + 1);
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 9 {
            return Err(Error::validation(at, format!("expected 9 columns, found {}", cols.len())));
        }
        let frame: u32 = field(cols[0], "frame", &at)?;
        if frame == 0 {
            return Err(Error::validation(at, "frame numbers start at 1"));
        }
        let id: u64 = field(cols[1], "id", &at)?;
        let nums: Vec<f64> = ["x", "y", "w", "h"]
            .iter()
            .zip(&cols[2..6])
            .map(|(name, raw)| field(raw, name, &at))
            .collect::<Result<_>>()?;
        let bbox = BBox::new(nums[0], nums[1], nums[2], nums[3]).map_err(|e| Error::validation(&at, e.to_string()))?;
        let conf: f64 = field(cols[6], "conf", &at)?;
        let class: i64 = field(cols[7], "class", &at)?;
        let visibility: f64 = field(cols[8], "visibility", &at)?;
        if !conf.is_finite() || !visibility.is_finite() {
            return Err(Error::validation(at, "conf and visibility must be finite"));
        }
        if !seen.insert((frame, id)) {
            return Err(Error::validation(at, format!("id {id} appears twice in frame {frame}")));
        }
        rows.push(MotRow {
            frame,
            id,
            bbox,
            conf,
            class,
            visibility,
        });
    }
    Ok(MotTable { rows })
}

pub fn load_mot(path: &Path) -> Result<MotTable> {
    let text = super::read_to_string(path)?;
    parse_mot(&text, &path.display().to_string())
}

pub fn format_mot(table: &MotTable) -> String {
    let mut out = String::new();
    for r in &table.rows {
        let b = r.bbox;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.frame,
            r.id,
            b.x(),
            b.y(),
            b.w(),
            b.h(),
            r.conf,
            r.class,
            r.visibility
        );
    }
    out
}

pub fn write_mot(path: &Path, table: &MotTable) -> Result<()> {
    super::write_file(path, format_mot(table))
}
