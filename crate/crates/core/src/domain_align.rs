//! Whether annotated domain boundaries coincide with token boundaries.

use std::collections::HashMap;

use crate::corpus::DomainAnnotation;
use crate::table::AnalysisTable;
use crate::tokenizer::Segmentation;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainHit {
    pub sequence_id: String,
    pub name: String,
    /// 1-based inclusive, as annotated.
    pub start: usize,
    pub end: usize,
    pub start_aligned: bool,
    pub end_aligned: bool,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DomainHitReport {
    pub rows: Vec<DomainHit>,
    pub skipped: usize,
}

impl DomainHitReport {
    pub fn evaluated(&self) -> usize {
        self.rows.len()
    }

    pub fn hits(&self) -> usize {
        self.rows.iter().filter(|r| r.hit).count()
    }

    /// 100 × hits / evaluated; zero when nothing was evaluated.
    pub fn hit_percentage(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            100.0 * self.hits() as f64 / self.evaluated() as f64
        }
    }

    pub fn rows_table(&self) -> AnalysisTable {
        let mut t = AnalysisTable::new(
            "domains",
            &[
                "sequence_id",
                "domain",
                "start",
                "end",
                "start_aligned",
                "end_aligned",
                "hit",
            ],
        );
        for r in &self.rows {
            t.push(vec![
                r.sequence_id.as_str().into(),
                r.name.as_str().into(),
                r.start.into(),
                r.end.into(),
                r.start_aligned.into(),
                r.end_aligned.into(),
                r.hit.into(),
            ]);
        }
        t
    }

    pub fn summary_table(&self) -> AnalysisTable {
        let mut t = AnalysisTable::new("domains_summary", &["evaluated", "hits", "skipped", "hit_percentage"]);
        t.push(vec![
            self.evaluated().into(),
            self.hits().into(),
            self.skipped.into(),
            self.hit_percentage().into(),
        ]);
        t
    }
}

/// Score each annotation against the segmentation of its sequence.
/// Annotations on absent sequences, or running past the sequence end, are
/// skipped and counted separately.
pub fn boundary_hits(segmentations: &[Segmentation], annotations: &[DomainAnnotation]) -> DomainHitReport {
    let by_id: HashMap<&str, &Segmentation> = segmentations.iter().map(|s| (s.sequence_id.as_str(), s)).collect();
    let mut report = DomainHitReport::default();
    let mut overlong = 0;
    for a in annotations {
        let Some(seg) = by_id.get(a.sequence_id.as_str()) else {
            report.skipped += 1;
            continue;
        };
        let length = seg.offsets.last().map_or(0, |o| o.1 as usize);
        let (start, end) = a.span();
        if a.start == 0 || start >= end || end > length {
            overlong += 1;
            report.skipped += 1;
            continue;
        }
        let start_aligned = seg.offsets.binary_search_by_key(&(start as u32), |o| o.0).is_ok();
        let end_aligned = seg.offsets.binary_search_by_key(&(end as u32), |o| o.1).is_ok();
        report.rows.push(DomainHit {
            sequence_id: a.sequence_id.clone(),
            name: a.name.clone(),
            start: a.start,
            end: a.end,
            start_aligned,
            end_aligned,
            hit: start_aligned && end_aligned,
        });
    }
    if overlong > 0 {
        log::warn!("skipped {overlong} domain annotations outside their sequence");
    }
    report
}
