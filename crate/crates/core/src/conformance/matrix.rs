use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adversary::{run_attack, AttackId, AttackParams, Outcome};
use crate::endpoints::SimError;
use crate::profiles::NetworkProfile;

/// Column name of the best-of-operator-SA summary.
pub const COMBINED_SA: &str = "operator-sa*";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub rows: Vec<AttackId>,
    pub columns: Vec<String>,
    /// `cells[row][column]`.
    pub cells: Vec<Vec<Outcome>>,
    /// Producer stamp. Deliberately not a wall-clock time so reports are reproducible.
    pub generated_at: String,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix needs at least one profile and one attack")]
    Empty,
    #[error("{attack} on {profile}: {source}")]
    Run {
        attack: AttackId,
        profile: String,
        source: SimError,
    },
}

/// Seed for one cell, independent of which other cells are computed.
pub fn cell_seed(seed: u64, attack: AttackId, profile: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(attack.as_str().as_bytes());
    h.update([0]);
    h.update(profile.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

pub fn conformance_matrix(
    profiles: &[NetworkProfile],
    attacks: &[AttackId],
    seed: u64,
    params: &AttackParams,
) -> Result<MatrixReport, MatrixError> {
    if profiles.is_empty() || attacks.is_empty() {
        return Err(MatrixError::Empty);
    }
    let mut cells = Vec::with_capacity(attacks.len());
    for &attack in attacks {
        let mut row = Vec::with_capacity(profiles.len());
        for p in profiles {
            let (v, _) = run_attack(attack, p, params, cell_seed(seed, attack, &p.name)).map_err(|source| {
                MatrixError::Run {
                    attack,
                    profile: p.name.clone(),
                    source,
                }
            })?;
            row.push(v.outcome);
        }
        cells.push(row);
    }
    Ok(MatrixReport {
        rows: attacks.to_vec(),
        columns: profiles.iter().map(|p| p.name.clone()).collect(),
        cells,
        generated_at: format!("privsim {}", env!("CARGO_PKG_VERSION")),
        seed,
    })
}

impl MatrixReport {
    pub fn outcome(&self, attack: AttackId, profile: &str) -> Option<Outcome> {
        let r = self.rows.iter().position(|a| *a == attack)?;
        let c = self.columns.iter().position(|p| p == profile)?;
        Some(self.cells[r][c])
    }

    /// Adds a column holding the best result among the operator SA columns.
    pub fn with_combined_sa(mut self) -> Self {
        let sa: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.starts_with("operator-sa-"))
            .map(|(i, _)| i)
            .collect();
        if sa.is_empty() {
            return self;
        }
        for row in &mut self.cells {
            let best = sa.iter().map(|&i| row[i]).max().expect("non-empty");
            row.push(best);
        }
        self.columns.push(COMBINED_SA.to_owned());
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render_text(&self) -> String {
        let label = |o: Outcome| match o {
            Outcome::Vulnerable => "Vulnerable",
            Outcome::PartiallyMitigated => "Weak",
            Outcome::Mitigated => "Mitigated",
        };
        let first = self.rows.iter().map(|a| a.as_str().len()).max().unwrap_or(0).max("attack".len());
        let widths: Vec<usize> = self.columns.iter().map(|c| c.len().max("Vulnerable".len())).collect();
        let mut out = String::new();
        let _ = write!(out, "{:first$}", "attack");
        for (c, w) in self.columns.iter().zip(&widths) {
            let _ = write!(out, "  {c:w$}");
        }
        out.push('\n');
        for (a, row) in self.rows.iter().zip(&self.cells) {
            let _ = write!(out, "{:first$}", a.as_str());
            for (o, w) in row.iter().zip(&widths) {
                let _ = write!(out, "  {:w$}", label(*o));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "seed {:#x}; Weak = replay check stops the original tampering only", self.seed);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::preset;

    #[test]
    fn cell_seeds_differ_per_cell() {
        let a = cell_seed(1, AttackId::ImsiCatching, "oai");
        assert_ne!(a, cell_seed(1, AttackId::ImsiCatching, "operator-nsa"));
        assert_ne!(a, cell_seed(2, AttackId::ImsiCatching, "oai"));
        assert_eq!(a, cell_seed(1, AttackId::ImsiCatching, "oai"));
    }

    #[test]
    fn combined_column_takes_best() {
        let profiles: Vec<_> = ["operator-sa-a", "operator-sa-b"].iter().map(|n| preset(n).unwrap()).collect();
        let m = conformance_matrix(&profiles, &[AttackId::TmsiLinkability], 3, &AttackParams::default())
            .unwrap()
            .with_combined_sa();
        assert_eq!(m.columns.last().unwrap(), COMBINED_SA);
        assert_eq!(m.outcome(AttackId::TmsiLinkability, "operator-sa-a"), Some(Outcome::Vulnerable));
        assert_eq!(m.outcome(AttackId::TmsiLinkability, COMBINED_SA), Some(Outcome::Mitigated));
        assert!(m.render_text().contains(COMBINED_SA));
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(matches!(
            conformance_matrix(&[], &[AttackId::ImsiCatching], 0, &AttackParams::default()),
            Err(MatrixError::Empty)
        ));
    }
}
