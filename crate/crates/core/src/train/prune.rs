//! Visibility-aware pruning: every anchor's confidence decays each
//! iteration, anchors picked by the sampler are boosted, and anchors whose
//! confidence falls under the threshold are removed for good.

use crate::error::{Error, Result};
use crate::scene::Scene;

/// Confidence assigned to new anchors.
pub const INITIAL_CONFIDENCE: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoostPolicy {
    /// Selected anchors go back to full confidence.
    Reset,
    /// Selected anchors gain this much, capped at full confidence.
    Increment(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PruneConfig {
    pub decay: f64,
    pub boost: BoostPolicy,
    pub tau_prune: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            decay: 0.995,
            boost: BoostPolicy::Reset,
            tau_prune: 0.01,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::Config(format!("decay {} outside (0, 1)", self.decay)));
        }
        if !(self.tau_prune > 0.0 && self.tau_prune < INITIAL_CONFIDENCE) {
            return Err(Error::Config(format!(
                "tau_prune {} outside (0, {INITIAL_CONFIDENCE})",
                self.tau_prune
            )));
        }
        if let BoostPolicy::Increment(v) = self.boost {
            if !(v > 0.0) {
                return Err(Error::Config(format!("boost increment {v} must be positive")));
            }
        }
        Ok(())
    }

    /// Iterations an unselected anchor at full confidence survives before
    /// removal, `⌈ln τ / ln γ⌉`.
    pub fn survival_iterations(&self) -> u64 {
        ((self.tau_prune / INITIAL_CONFIDENCE).ln() / self.decay.ln()).ceil() as u64
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PruneOutcome {
    /// One flag per anchor before removal.
    pub keep: Vec<bool>,
    /// Indices (before removal) of the anchors that were dropped.
    pub removed: Vec<usize>,
}

/// Decays every confidence, boosts `selected`, then removes anchors below
/// the threshold. Marks the BVH stale when anything was removed.
pub fn prune_update(scene: &mut Scene, selected: &[usize], cfg: &PruneConfig) -> Result<PruneOutcome> {
    let n = scene.anchors.len();
    if let Some(&bad) = selected.iter().find(|&&i| i >= n) {
        return Err(Error::SelectionOutOfRange {
            start: bad,
            end: bad + 1,
            count: n,
        });
    }
    for a in &mut scene.anchors {
        a.confidence *= cfg.decay;
    }
    for &i in selected {
        let c = &mut scene.anchors[i].confidence;
        *c = match cfg.boost {
            BoostPolicy::Reset => INITIAL_CONFIDENCE,
            BoostPolicy::Increment(v) => (*c + v).min(INITIAL_CONFIDENCE),
        };
    }
    let keep: Vec<bool> = scene.anchors.iter().map(|a| a.confidence >= cfg.tau_prune).collect();
    let removed: Vec<usize> = (0..n).filter(|&i| !keep[i]).collect();
    if !removed.is_empty() {
        let mut it = keep.iter();
        scene.anchors.retain(|_| *it.next().unwrap());
        scene.bvh_stale = true;
    }
    Ok(PruneOutcome { keep, removed })
}
