//! Automatic rank selection from core consistency.
//!
//! Every candidate rank `1..=r_max` is fitted with both the L1 least-squares
//! model and the Poisson model. Per family, the selected rank is the largest
//! eligible one; the final rank is the larger of the two.
//!
//! A candidate is eligible when it reaches the consistency threshold and every
//! component is a distinct event: factors have full column rank, no component
//! is dead, every component predicts at least [`MIN_COMPONENT_PEAK`] posts in
//! some cell, and no two components exceed [`MAX_CONGRUENCE`].

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{corcondia, cp_als_nn_l1, cp_apr, SolverOptions, SparseTensor3};
use crate::{Error, Result};

pub const DEFAULT_CONSISTENCY_THRESHOLD: f64 = 50.0;

/// Components whose largest cell value stays below one post are diffuse
/// background rather than events.
pub const MIN_COMPONENT_PEAK: f64 = 1.0;

/// Component pairs above this congruence are one event split in two.
pub const MAX_CONGRUENCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    CpAls,
    CpApr,
}

/// One row of the rank audit table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCandidate {
    pub family: Family,
    pub rank: usize,
    pub score: f64,
    pub rank_deficient: bool,
    pub dead_components: usize,
    /// Components below [`MIN_COMPONENT_PEAK`].
    pub diffuse_components: usize,
    pub max_congruence: f64,
    pub sweeps: usize,
}

impl RankCandidate {
    pub fn eligible(&self, threshold: f64) -> bool {
        self.score >= threshold
            && !self.rank_deficient
            && self.dead_components == 0
            && self.diffuse_components == 0
            && self.max_congruence <= MAX_CONGRUENCE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSelection {
    pub selected: usize,
    pub als_rank: Option<usize>,
    pub apr_rank: Option<usize>,
    /// No candidate passed; `selected` is the best-scoring rank instead.
    pub fallback: bool,
    pub threshold: f64,
    pub candidates: Vec<RankCandidate>,
}

/// `min(50, smallest tensor dimension)`, at least 1.
pub fn default_max_rank(shape: (usize, usize, usize)) -> usize {
    shape.0.min(shape.1).min(shape.2).clamp(1, 50)
}

/// Fits one candidate and scores it.
pub fn evaluate_candidate(
    x: &SparseTensor3,
    family: Family,
    rank: usize,
    opts: &SolverOptions,
) -> Result<RankCandidate> {
    let model = match family {
        Family::CpAls => cp_als_nn_l1(x, rank, opts)?,
        Family::CpApr => cp_apr(x, rank, opts)?,
    };
    let cc = corcondia(x, &model)?;
    Ok(RankCandidate {
        family,
        rank,
        score: cc.score,
        rank_deficient: cc.rank_deficient,
        dead_components: model.dead_components(),
        diffuse_components: (0..rank).filter(|&r| model.component_peak(r) < MIN_COMPONENT_PEAK).count(),
        max_congruence: model.max_congruence(),
        sweeps: model.objective_trace.len().saturating_sub(1),
    })
}

/// Applies the selection rule to an evaluated candidate table.
pub fn select_rank(mut candidates: Vec<RankCandidate>, threshold: f64) -> Result<RankSelection> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no rank candidates".into()));
    }
    candidates.sort_by_key(|c| (c.family, c.rank));
    let best = |family: Family| {
        candidates
            .iter()
            .filter(|c| c.family == family && c.eligible(threshold))
            .map(|c| c.rank)
            .max()
    };
    let als_rank = best(Family::CpAls);
    let apr_rank = best(Family::CpApr);
    let (selected, fallback) = match als_rank.max(apr_rank) {
        Some(r) => (r, false),
        None => {
            let pool: Vec<&RankCandidate> = if candidates.iter().any(|c| !c.rank_deficient) {
                candidates.iter().filter(|c| !c.rank_deficient).collect()
            } else {
                candidates.iter().collect()
            };
            let mut top = pool[0];
            for c in &pool[1..] {
                if c.score > top.score || (c.score == top.score && c.rank < top.rank) {
                    top = c;
                }
            }
            log::warn!("no rank reached consistency {threshold}; falling back to rank {}", top.rank);
            (top.rank, true)
        }
    };
    Ok(RankSelection {
        selected,
        als_rank,
        apr_rank,
        fallback,
        threshold,
        candidates,
    })
}

/// Sequential rank sweep over `1..=r_max` for both families.
pub fn autoten_rank(
    x: &SparseTensor3,
    r_max: usize,
    opts: &SolverOptions,
    threshold: f64,
) -> Result<RankSelection> {
    if r_max == 0 {
        return Err(Error::InvalidParameter("r_max must be >= 1".into()));
    }
    let mut candidates = Vec::with_capacity(2 * r_max);
    for family in [Family::CpAls, Family::CpApr] {
        for rank in 1..=r_max {
            candidates.push(evaluate_candidate(x, family, rank, opts)?);
        }
    }
    select_rank(candidates, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cand(family: Family, rank: usize, score: f64) -> RankCandidate {
        RankCandidate {
            family,
            rank,
            score,
            rank_deficient: false,
            dead_components: 0,
            diffuse_components: 0,
            max_congruence: 0.0,
            sweeps: 1,
        }
    }

    #[test]
    fn max_of_family_maxima() {
        let sel = select_rank(
            vec![
                cand(Family::CpAls, 1, 100.0),
                cand(Family::CpAls, 2, 90.0),
                cand(Family::CpAls, 3, 20.0),
                cand(Family::CpApr, 1, 100.0),
                cand(Family::CpApr, 2, 40.0),
                cand(Family::CpApr, 3, 60.0),
            ],
            50.0,
        )
        .unwrap();
        assert_eq!(sel.als_rank, Some(2));
        assert_eq!(sel.apr_rank, Some(3));
        assert_eq!(sel.selected, 3);
        assert!(!sel.fallback);
    }

    #[test]
    fn dead_or_deficient_candidates_are_ineligible() {
        let mut dead = cand(Family::CpAls, 3, 75.0);
        dead.dead_components = 1;
        let mut deficient = cand(Family::CpApr, 3, 99.0);
        deficient.rank_deficient = true;
        let mut diffuse = cand(Family::CpApr, 4, 99.0);
        diffuse.diffuse_components = 1;
        let mut split = cand(Family::CpAls, 5, 97.0);
        split.max_congruence = 0.6;
        let sel = select_rank(
            vec![cand(Family::CpAls, 2, 80.0), dead, split, cand(Family::CpApr, 2, 10.0), deficient, diffuse],
            50.0,
        )
        .unwrap();
        assert_eq!(sel.selected, 2);
    }

    #[test]
    fn fallback_picks_best_score() {
        let sel = select_rank(
            vec![cand(Family::CpAls, 1, 10.0), cand(Family::CpAls, 2, 30.0), cand(Family::CpApr, 1, -5.0)],
            50.0,
        )
        .unwrap();
        assert!(sel.fallback);
        assert_eq!(sel.selected, 2);
    }

    #[test]
    fn default_max_rank_bounds() {
        assert_eq!(default_max_rank((100, 200, 240)), 50);
        assert_eq!(default_max_rank((100, 200, 12)), 12);
        assert_eq!(default_max_rank((0, 3, 3)), 1);
    }
}
