use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{hausdorff_distance, point_segment_distance, segment_distance, LineSegment};
use crate::metric::Points;

/// Upper bound on sections per cylinder, reached only by very thin tubes around
/// long lines.
const MAX_SECTIONS: usize = 1 << 16;

/// Relative slack on the pruning thresholds so that points exactly on a
/// boundary are not lost to rounding; the final membership test is exact.
const SLACK: f64 = 1e-12;

/// Points within `max_radius` of a line, bucketed by position along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylindricalIndex {
    line: LineSegment,
    max_radius: f64,
    /// Per section, `(r, id)` sorted by `r` then id.
    sections: Vec<Vec<(f64, u32)>>,
}

impl CylindricalIndex {
    pub fn build(line: LineSegment, points: &Points, max_radius: f64) -> Result<Self> {
        if !(max_radius > 0.0) || !max_radius.is_finite() {
            return Err(Error::arg(format!(
                "cylinder radius must be finite and > 0, got {max_radius}"
            )));
        }
        if points.dim() != line.dim() {
            return Err(Error::dim("points and line differ in dimension"));
        }
        let num_sections = if line.is_degenerate() {
            1
        } else {
            ((line.length() / max_radius).ceil() as usize).clamp(1, MAX_SECTIONS)
        };
        let mut sections = vec![Vec::new(); num_sections];
        for (id, p) in points.rows().enumerate() {
            let r = point_segment_distance(p, &line);
            if r <= max_radius {
                let t = line.project(p);
                let s = ((t * num_sections as f64).floor() as usize).min(num_sections - 1);
                sections[s].push((r, id as u32));
            }
        }
        for s in &mut sections {
            s.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        Ok(Self {
            line,
            max_radius,
            sections,
        })
    }

    pub fn line(&self) -> &LineSegment {
        &self.line
    }

    pub fn max_radius(&self) -> f64 {
        self.max_radius
    }

    pub fn num_sections(&self) -> usize {
        self.sections.len()
    }

    /// Number of stored points.
    pub fn len(&self) -> usize {
        self.sections.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ids of all stored points, ascending.
    pub fn ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .sections
            .iter()
            .flatten()
            .map(|e| e.1 as usize)
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Stored points within `r` of the indexed line.
    pub fn count_within(&self, r: f64) -> usize {
        self.sections
            .iter()
            .map(|s| s.partition_point(|e| e.0 <= r))
            .sum()
    }

    /// Ids (ascending) of stored points within `r_q` of `query`. `points` must be
    /// the set the index was built over.
    pub fn search(&self, points: &Points, query: &LineSegment, r_q: f64) -> Result<Vec<usize>> {
        if !(r_q > 0.0) || !r_q.is_finite() {
            return Err(Error::arg(format!(
                "search radius must be finite and > 0, got {r_q}"
            )));
        }
        if query.dim() != self.line.dim() {
            return Err(Error::dim("query line and index differ in dimension"));
        }
        let adjusted = r_q + hausdorff_distance(&self.line, query);
        if adjusted > self.max_radius {
            return Err(Error::RadiusTooLarge {
                required: adjusted,
                available: self.max_radius,
            });
        }
        let fetch = adjusted * (1.0 + SLACK);
        // A hit sits within `adjusted` of its section and within `r_q` of the query,
        // so sections farther than their sum from the query hold no hits.
        let prune = (adjusted + r_q) * (1.0 + SLACK);
        let n = self.sections.len() as f64;
        let mut out = Vec::new();
        for (i, section) in self.sections.iter().enumerate() {
            if section.is_empty() {
                continue;
            }
            let sub = self.line.slice(i as f64 / n, (i + 1) as f64 / n);
            if segment_distance(query, &sub) > prune {
                continue;
            }
            let end = section.partition_point(|e| e.0 <= fetch);
            for &(_, id) in &section[..end] {
                if point_segment_distance(points.row(id as usize), query) <= r_q {
                    out.push(id as usize);
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }
}
