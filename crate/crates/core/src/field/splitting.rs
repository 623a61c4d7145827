//! Prime splitting types and the on-disk splitting cache.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FieldSpec;
use crate::arith::modpoly::{factor, Fp};
use crate::arith::primes::sieve_primes;
use crate::error::{Error, Result};

const FACTOR_SEED: u64 = 0x5eed_f00d;

/// Multiset of (e, f) pairs, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplittingType(pub Vec<(u32, u32)>);

impl SplittingType {
    pub fn new(mut pairs: Vec<(u32, u32)>) -> Self {
        pairs.sort_unstable();
        SplittingType(pairs)
    }

    pub fn sum_ef(&self) -> u32 {
        self.0.iter().map(|&(e, f)| e * f).sum()
    }

    pub fn residue_degrees(&self) -> Vec<u32> {
        self.0.iter().map(|&(_, f)| f).collect()
    }

    pub fn is_ramified(&self) -> bool {
        self.0.iter().any(|&(e, _)| e > 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum PrimeClass {
    P0,
    P1,
    P2,
}

/// Splitting of p from the factorization of the defining polynomial mod p.
pub fn splitting_from_min_poly(min_poly: &[i128], p: u64) -> SplittingType {
    let f = Fp::from_ints(p, min_poly);
    let fac = factor(&f, FACTOR_SEED);
    SplittingType::new(fac.iter().map(|(g, e)| (*e, g.deg() as u32)).collect())
}

impl FieldSpec {
    pub fn splitting_type(&self, p: u64) -> Result<SplittingType> {
        if let Some(st) = self.overrides.get(&p) {
            return Ok(st.clone());
        }
        if self.index_primes.contains(&p) {
            return Err(Error::MissingSplittingData(p));
        }
        Ok(splitting_from_min_poly(&self.min_poly, p))
    }

    pub fn prime_class(&self, p: u64) -> Result<PrimeClass> {
        let st = self.splitting_type(p)?;
        Ok(classify(self.disc, p, &st))
    }
}

pub fn classify(disc: i128, p: u64, st: &SplittingType) -> PrimeClass {
    if disc % p as i128 == 0 {
        PrimeClass::P0
    } else if st.0.iter().any(|&(_, f)| f == 1) {
        PrimeClass::P1
    } else {
        PrimeClass::P2
    }
}

/// Splitting types for every prime up to a bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplittingTable {
    pub field_hash: String,
    pub limit: u64,
    pub entries: BTreeMap<u64, SplittingType>,
}

impl SplittingTable {
    pub fn compute(field: &FieldSpec, limit: u64) -> Result<Self> {
        let primes = sieve_primes(limit);
        let list: Vec<(u64, SplittingType)> = primes
            .par_iter()
            .map(|&p| field.splitting_type(p).map(|s| (p, s)))
            .collect::<Result<_>>()?;
        Ok(SplittingTable { field_hash: field.hash.clone(), limit, entries: list.into_iter().collect() })
    }

    fn cache_path(dir: &Path, field: &FieldSpec, limit: u64) -> PathBuf {
        dir.join(format!("splitting-{}-2-{}.json", &field.hash[..16], limit))
    }

    /// Load from the cache directory if present, otherwise compute and store.
    pub fn cached(field: &FieldSpec, limit: u64, dir: Option<&Path>) -> Result<(Self, bool)> {
        if let Some(d) = dir {
            let path = Self::cache_path(d, field, limit);
            if let Ok(text) = std::fs::read_to_string(&path) {
                if let Ok(t) = serde_json::from_str::<SplittingTable>(&text) {
                    if t.field_hash == field.hash && t.limit == limit {
                        return Ok((t, true));
                    }
                }
            }
            let t = Self::compute(field, limit)?;
            std::fs::create_dir_all(d)?;
            std::fs::write(&path, serde_json::to_string(&t)?)?;
            return Ok((t, false));
        }
        Ok((Self::compute(field, limit)?, false))
    }

    pub fn class(&self, field: &FieldSpec, p: u64) -> Option<PrimeClass> {
        self.entries.get(&p).map(|st| classify(field.disc, p, st))
    }
}
