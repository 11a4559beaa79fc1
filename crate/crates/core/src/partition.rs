//! Mapping of scenario groups (backbone, one group per LAN) to logical
//! processes. A LAN is never split.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lp::LpId;
use crate::scenario::Domain;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionMapping {
    pub n_lps: u32,
    pub lan_lp: Vec<LpId>,
    pub backbone_lp: LpId,
}

impl PartitionMapping {
    pub fn lp_of(&self, d: Domain) -> LpId {
        match d {
            Domain::Backbone => self.backbone_lp,
            Domain::Lan(j) => self.lan_lp[j as usize],
        }
    }

    /// Number of LANs on each LP.
    pub fn lan_counts(&self) -> Vec<u32> {
        let mut c = alloc::vec![0; self.n_lps as usize];
        for lp in &self.lan_lp {
            c[lp.index()] += 1;
        }
        c
    }
}

/// With `n_lans + 1` LPs the backbone and every LAN get one LP each;
/// otherwise LANs go round-robin and the backbone joins the last LP.
pub fn assign_partitions(n_lans: u32, n_lps: u32) -> Result<PartitionMapping> {
    if n_lps == 0 || n_lps > n_lans + 1 {
        return Err(Error::Config(alloc::format!(
            "{n_lps} LPs requested; must be between 1 and {}",
            n_lans + 1
        )));
    }
    if n_lps == n_lans + 1 {
        return Ok(PartitionMapping {
            n_lps,
            lan_lp: (0..n_lans).map(LpId).collect(),
            backbone_lp: LpId(n_lans),
        });
    }
    Ok(PartitionMapping {
        n_lps,
        lan_lp: (0..n_lans).map(|j| LpId(j % n_lps)).collect(),
        backbone_lp: LpId(n_lps - 1),
    })
}
