//! Odds ratios of non-ordinary motion per PET band.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::PviRecord;
use crate::motion::MotionLabel;

const Z95: f64 = 1.96;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("band [{0}, {1}] is empty or inverted")]
    InvalidBand(f64, f64),
    #[error("bands [{0}, {1}] and [{2}, {3}] overlap")]
    Overlapping(f64, f64, f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PetBand {
    pub lo: f64,
    pub hi: f64,
    /// Whether `hi` itself belongs to the band.
    pub closed_hi: bool,
}

impl PetBand {
    pub const fn half_open(lo: f64, hi: f64) -> Self {
        PetBand { lo, hi, closed_hi: false }
    }

    pub const fn closed(lo: f64, hi: f64) -> Self {
        PetBand { lo, hi, closed_hi: true }
    }

    pub fn contains(&self, pet: f64) -> bool {
        pet >= self.lo && (pet < self.hi || (self.closed_hi && pet == self.hi))
    }

    pub fn label(&self) -> String {
        format!("[{}, {}{}", self.lo, self.hi, if self.closed_hi { "]" } else { ")" })
    }
}

/// The four bands tiling `[-4, 4]`; the last one is closed so that the
/// tiling matches the closed PC window.
pub fn default_bands() -> Vec<PetBand> {
    vec![
        PetBand::half_open(-4.0, -2.0),
        PetBand::half_open(-2.0, 0.0),
        PetBand::half_open(0.0, 2.0),
        PetBand::closed(2.0, 4.0),
    ]
}

pub fn validate_bands(bands: &[PetBand]) -> Result<(), StatsError> {
    for b in bands {
        if !(b.lo < b.hi) {
            return Err(StatsError::InvalidBand(b.lo, b.hi));
        }
    }
    let mut sorted = bands.to_vec();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    for w in sorted.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.hi > b.lo || (a.hi == b.lo && a.closed_hi) {
            return Err(StatsError::Overlapping(a.lo, a.hi, b.lo, b.hi));
        }
    }
    Ok(())
}

/// 2×2 table: `a` non-ordinary in band, `b` ordinary in band, `c`
/// non-ordinary outside, `d` ordinary outside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub odds_ratio: f64,
    pub ci95: (f64, f64),
    pub haldane_corrected: bool,
}

impl Counts {
    pub fn swapped(self) -> Counts {
        Counts {
            a: self.c,
            b: self.d,
            c: self.a,
            d: self.b,
        }
    }

    /// `None` when the band holds nobody or the complement is empty.
    pub fn odds_ratio(&self) -> Option<OddsRatio> {
        if self.a + self.b == 0 || self.c + self.d == 0 {
            return None;
        }
        let corrected = [self.a, self.b, self.c, self.d].contains(&0);
        let k = if corrected { 0.5 } else { 0.0 };
        let (a, b, c, d) = (
            self.a as f64 + k,
            self.b as f64 + k,
            self.c as f64 + k,
            self.d as f64 + k,
        );
        let ln = (a * d / (b * c)).ln();
        let se = (1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d).sqrt();
        Some(OddsRatio {
            odds_ratio: ln.exp(),
            ci95: ((ln - Z95 * se).exp(), (ln + Z95 * se).exp()),
            haldane_corrected: corrected,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyRow {
    pub pet_band: PetBand,
    pub n_nonordinary_in: u64,
    pub n_ordinary_in: u64,
    pub n_nonordinary_out: u64,
    pub n_ordinary_out: u64,
    pub odds_ratio: Option<f64>,
    pub ci95: Option<(f64, f64)>,
    pub haldane_corrected: bool,
    pub share_pct: f64,
}

impl ContingencyRow {
    pub fn from_counts(pet_band: PetBand, counts: Counts) -> Self {
        let total = counts.a + counts.b + counts.c + counts.d;
        let or = counts.odds_ratio();
        ContingencyRow {
            pet_band,
            n_nonordinary_in: counts.a,
            n_ordinary_in: counts.b,
            n_nonordinary_out: counts.c,
            n_ordinary_out: counts.d,
            odds_ratio: or.map(|o| o.odds_ratio),
            ci95: or.map(|o| o.ci95),
            haldane_corrected: or.is_some_and(|o| o.haldane_corrected),
            share_pct: if total == 0 {
                0.0
            } else {
                (counts.a + counts.b) as f64 / total as f64 * 100.0
            },
        }
    }

    pub fn counts(&self) -> Counts {
        Counts {
            a: self.n_nonordinary_in,
            b: self.n_ordinary_in,
            c: self.n_nonordinary_out,
            d: self.n_ordinary_out,
        }
    }
}

fn counts_for(population: &BTreeMap<String, MotionLabel>, in_band: &BTreeMap<&str, ()>) -> Counts {
    let mut n = Counts { a: 0, b: 0, c: 0, d: 0 };
    for (id, label) in population {
        let inside = in_band.contains_key(id.as_str());
        match (inside, label) {
            (true, MotionLabel::NonOrdinary) => n.a += 1,
            (true, MotionLabel::Ordinary) => n.b += 1,
            (false, MotionLabel::NonOrdinary) => n.c += 1,
            (false, MotionLabel::Ordinary) => n.d += 1,
        }
    }
    n
}

/// One row per band plus a final row for the whole PC window. Each pedestrian
/// of `population` is counted once; the band membership comes from its PC
/// record, everyone else is in the reference group.
pub fn odds_ratio_table(
    population: &BTreeMap<String, MotionLabel>,
    pc_records: &[PviRecord],
    bands: &[PetBand],
    pc_window: f64,
) -> Result<Vec<ContingencyRow>, StatsError> {
    validate_bands(bands)?;
    let usable: Vec<&PviRecord> = pc_records
        .iter()
        .filter(|r| population.contains_key(&r.pedestrian_id))
        .collect();
    let mut rows = Vec::with_capacity(bands.len() + 1);
    for band in bands {
        let members: BTreeMap<&str, ()> = usable
            .iter()
            .filter(|r| band.contains(r.pet))
            .map(|r| (r.pedestrian_id.as_str(), ()))
            .collect();
        rows.push(ContingencyRow::from_counts(*band, counts_for(population, &members)));
    }
    let pc_band = PetBand::closed(-pc_window, pc_window);
    let members: BTreeMap<&str, ()> = usable
        .iter()
        .filter(|r| pc_band.contains(r.pet))
        .map(|r| (r.pedestrian_id.as_str(), ()))
        .collect();
    rows.push(ContingencyRow::from_counts(pc_band, counts_for(population, &members)));
    Ok(rows)
}
