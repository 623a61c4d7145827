//! Representation counts R(m; 𝔛, b, M) and the global counting function N(T).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dashmap::DashMap;
use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arith::multipoly::MultiPoly;
use crate::arith::primes::factorize;
use crate::cone::ConeSpec;
use crate::congruence::RhoEngine;
use crate::error::{Error, Result};
use crate::field::{FieldJson, FieldSpec};
use crate::units::{kappa_closed_form, kappa_eps, KappaMethod, LogDomain, Sign, UnitSystem};

const REGION_TOL: f64 = 1e-12;

/// Default cap on the number of prefixes a single representation count may visit.
pub const DEFAULT_REPR_BUDGET: u64 = 50_000_000;

// ---------------------------------------------------------------------------
// integer roots of a univariate polynomial

fn eval_f64(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

fn deriv_f64(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, &a)| k as f64 * a).collect()
}

fn trim_f64(c: &[f64]) -> &[f64] {
    let mut d = c.len();
    while d > 0 && c[d - 1] == 0.0 {
        d -= 1;
    }
    &c[..d]
}

/// Real roots in [lo, hi], located between the critical points.
fn real_roots(c: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let c = trim_f64(c);
    if c.len() <= 1 {
        return vec![];
    }
    if c.len() == 2 {
        let r = -c[0] / c[1];
        return if r >= lo && r <= hi { vec![r] } else { vec![] };
    }
    let mut cuts = vec![lo];
    cuts.extend(real_roots(&deriv_f64(c), lo, hi));
    cuts.push(hi);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (fa, fb) = (eval_f64(c, a), eval_f64(c, b));
        if fa == 0.0 {
            out.push(a);
            continue;
        }
        if fa.signum() == fb.signum() {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if eval_f64(c, mid).signum() == fa.signum() {
                a = mid;
            } else {
                b = mid;
            }
        }
        out.push(0.5 * (a + b));
    }
    out
}

fn eval_i128(c: &[i128], t: i128) -> Option<i128> {
    let mut acc: i128 = 0;
    for &a in c.iter().rev() {
        acc = acc.checked_mul(t)?.checked_add(a)?;
    }
    Some(acc)
}

/// All integers t ∈ [lo, hi] with Σ c_k t^k = 0 (coefficients ascending); exact.
pub fn integer_roots(c: &[i128], lo: i64, hi: i64) -> Vec<i64> {
    let mut d = c.len();
    while d > 0 && c[d - 1] == 0 {
        d -= 1;
    }
    let c = &c[..d];
    if lo > hi {
        return vec![];
    }
    if c.is_empty() {
        return (lo..=hi).collect();
    }
    if c.len() == 1 {
        return vec![];
    }
    let cf: Vec<f64> = c.iter().map(|&v| v as f64).collect();
    let crit = real_roots(&deriv_f64(&cf), lo as f64, hi as f64);
    let is_root = |t: i64| eval_i128(c, t as i128) == Some(0);
    let mut out = Vec::new();
    // segments between critical points are monotone; bisect exactly on integers
    let mut cuts: Vec<i64> = vec![lo];
    for &r in &crit {
        let k = r.floor() as i64;
        for t in (k - 2).max(lo)..=(k + 3).min(hi) {
            if is_root(t) {
                out.push(t);
            }
        }
        cuts.push(k - 3);
        cuts.push(k + 4);
    }
    cuts.push(hi);
    let mut segs = Vec::new();
    segs.push((lo, if crit.is_empty() { hi } else { cuts[1].min(hi) }));
    for w in cuts[2..cuts.len()].chunks(2) {
        if w.len() == 2 {
            segs.push((w[0].max(lo), w[1].min(hi)));
        }
    }
    for (a, b) in segs {
        if a > b {
            continue;
        }
        let (fa, fb) = match (eval_i128(c, a as i128), eval_i128(c, b as i128)) {
            (Some(x), Some(y)) => (x, y),
            _ => {
                // values overflow: fall back to a scan of this segment
                out.extend((a..=b).filter(|&t| is_root(t)));
                continue;
            }
        };
        if fa == 0 {
            out.push(a);
        }
        if fb == 0 && b != a {
            out.push(b);
        }
        if fa.signum() * fb.signum() >= 0 {
            continue;
        }
        let (mut l, mut r) = (a, b);
        while r - l > 1 {
            let mid = l + (r - l) / 2;
            match eval_i128(c, mid as i128) {
                Some(0) => {
                    out.push(mid);
                    break;
                }
                Some(v) if v.signum() == fa.signum() => l = mid,
                Some(_) => r = mid,
                None => {
                    out.extend((l..=r).filter(|&t| is_root(t)));
                    break;
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

// ---------------------------------------------------------------------------
// regions

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub a: Vec<f64>,
    pub c: f64,
}

/// A convex body 𝔎 ⊂ [−1,1]^s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// {u : a·u ≤ c for every half-space} ∩ [−1,1]^s
    Polytope { halfspaces: Vec<HalfSpace> },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn solve_f64(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for k in col..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Box { lo, .. } => lo.len(),
            Region::Ball { center, .. } => center.len(),
            Region::Polytope { halfspaces } => halfspaces.first().map(|h| h.a.len()).unwrap_or(0),
        }
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        match self {
            Region::Box { lo, hi } => u.iter().zip(lo.iter().zip(hi)).all(|(x, (l, h))| *x >= l - REGION_TOL && *x <= h + REGION_TOL),
            Region::Ball { center, radius } => {
                let d2: f64 = u.iter().zip(center).map(|(x, c)| (x - c).powi(2)).sum();
                d2 <= radius * radius + REGION_TOL
            }
            Region::Polytope { halfspaces } => {
                u.iter().all(|x| x.abs() <= 1.0 + REGION_TOL) && halfspaces.iter().all(|h| dot(&h.a, u) <= h.c + REGION_TOL)
            }
        }
    }

    fn polytope_constraints(&self) -> Vec<HalfSpace> {
        let s = self.dim();
        let mut cons = match self {
            Region::Polytope { halfspaces } => halfspaces.clone(),
            _ => vec![],
        };
        for i in 0..s {
            let mut e = vec![0.0; s];
            e[i] = 1.0;
            cons.push(HalfSpace { a: e.clone(), c: 1.0 });
            e[i] = -1.0;
            cons.push(HalfSpace { a: e, c: 1.0 });
        }
        cons
    }

    /// Vertices of a box or polytope.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let s = self.dim();
        match self {
            Region::Box { lo, hi } => (0..1u64 << s)
                .map(|mask| (0..s).map(|k| if mask >> k & 1 == 1 { hi[k] } else { lo[k] }).collect())
                .collect(),
            Region::Ball { .. } => vec![],
            Region::Polytope { .. } => {
                let cons = self.polytope_constraints();
                let mut out: Vec<Vec<f64>> = Vec::new();
                let mut idx: Vec<usize> = (0..s).collect();
                loop {
                    let a: Vec<Vec<f64>> = idx.iter().map(|&i| cons[i].a.clone()).collect();
                    let b: Vec<f64> = idx.iter().map(|&i| cons[i].c).collect();
                    if let Some(v) = solve_f64(a, b) {
                        if cons.iter().all(|h| dot(&h.a, &v) <= h.c + 1e-9)
                            && !out.iter().any(|w| w.iter().zip(&v).all(|(x, y)| (x - y).abs() < 1e-9))
                        {
                            out.push(v);
                        }
                    }
                    // next combination
                    let mut i = s;
                    loop {
                        if i == 0 {
                            return out;
                        }
                        i -= 1;
                        if idx[i] < cons.len() - s + i {
                            idx[i] += 1;
                            for j in i + 1..s {
                                idx[j] = idx[j - 1] + 1;
                            }
                            break;
                        }
                    }
                }
            }
        }
    }

    /// Range of the linear form f over the region.
    pub fn form_range(&self, f: &[f64]) -> (f64, f64) {
        match self {
            Region::Ball { center, radius } => {
                let c = dot(f, center);
                let r = radius * dot(f, f).sqrt();
                (c - r, c + r)
            }
            _ => {
                let vals: Vec<f64> = self.vertices().iter().map(|v| dot(f, v)).collect();
                (vals.iter().cloned().fold(f64::INFINITY, f64::min), vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            }
        }
    }

    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let s = self.dim();
        let mut lo = vec![0.0; s];
        let mut hi = vec![0.0; s];
        for k in 0..s {
            let mut e = vec![0.0; s];
            e[k] = 1.0;
            let (a, b) = self.form_range(&e);
            lo[k] = a;
            hi[k] = b;
        }
        (lo, hi)
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Region::Ball { radius, .. } => *radius < 0.0,
            _ => self.vertices().is_empty(),
        }
    }
}

// ---------------------------------------------------------------------------
// problem configuration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldRef {
    Path(String),
    Inline(Box<FieldJson>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldEntry {
    pub field: FieldRef,
    #[serde(default)]
    pub cone: ConeSpec,
    /// residue b_i mod M of the representing vector; zeros when absent
    #[serde(default)]
    pub b: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfigJson {
    #[serde(default)]
    pub name: Option<String>,
    pub fields: Vec<FieldEntry>,
    pub forms: Vec<Vec<i64>>,
    #[serde(default)]
    pub shifts: Vec<i64>,
    pub region: Region,
    #[serde(default = "one_u64")]
    pub modulus: u64,
    #[serde(default)]
    pub a: Vec<i64>,
}

fn one_u64() -> u64 {
    1
}

/// A validated counting problem with its fields and fundamental domains loaded.
#[derive(Clone, Debug)]
pub struct ProblemConfig {
    pub json: ProblemConfigJson,
    pub fields: Vec<Arc<FieldSpec>>,
    pub units: Vec<UnitSystem>,
    pub domains: Vec<Arc<LogDomain>>,
    pub cones: Vec<ConeSpec>,
    pub b: Vec<Vec<i64>>,
    pub forms: Vec<Vec<i64>>,
    pub shifts: Vec<i64>,
    pub region: Region,
    pub modulus: u64,
    pub a: Vec<i64>,
    pub s: usize,
    pub r: usize,
    pub hash: String,
}

impl ProblemConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let json: ProblemConfigJson = serde_json::from_str(&text)?;
        Self::from_json(json, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_json_str(s: &str, base: &Path) -> Result<Self> {
        Self::from_json(serde_json::from_str(s)?, base)
    }

    pub fn from_json(json: ProblemConfigJson, base: &Path) -> Result<Self> {
        let r = json.fields.len();
        if r == 0 {
            return Err(Error::InvalidConfig("at least one field is required".into()));
        }
        if json.forms.len() != r {
            return Err(Error::InvalidConfig(format!("{} forms for {r} fields", json.forms.len())));
        }
        let s = json.region.dim();
        if s == 0 {
            return Err(Error::InvalidConfig("region has dimension zero".into()));
        }
        if let Region::Box { lo, hi } = &json.region {
            if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| a > b) {
                return Err(Error::InvalidConfig("box bounds are inconsistent".into()));
            }
        }
        if let Region::Polytope { halfspaces } = &json.region {
            if halfspaces.iter().any(|h| h.a.len() != s) {
                return Err(Error::InvalidConfig("half-spaces have inconsistent dimension".into()));
            }
        }
        if json.region.is_empty() {
            return Err(Error::InvalidConfig("region is empty".into()));
        }
        let (lo, hi) = json.region.bbox();
        if lo.iter().chain(&hi).any(|v| v.abs() > 1.0 + 1e-9) {
            return Err(Error::InvalidConfig("region is not contained in [−1,1]^s".into()));
        }
        for (i, f) in json.forms.iter().enumerate() {
            if f.len() != s {
                return Err(Error::InvalidConfig(format!("form {i} has {} coefficients, expected {s}", f.len())));
            }
            if f.iter().all(|&c| c == 0) {
                return Err(Error::InvalidConfig(format!("form {i} is zero")));
            }
            let ff: Vec<f64> = f.iter().map(|&c| c as f64).collect();
            let (a, b) = json.region.form_range(&ff);
            if a.abs().max(b.abs()) > 1.0 + 1e-9 {
                return Err(Error::InvalidConfig(format!("|f_{i}| exceeds 1 on the region")));
            }
            if a.abs().max(b.abs()) < 1e-12 {
                return Err(Error::InvalidConfig(format!("form {i} vanishes identically on the region")));
            }
        }
        for i in 0..r {
            for j in i + 1..r {
                let (f, g) = (&json.forms[i], &json.forms[j]);
                let proportional = (0..s).all(|k| (0..s).all(|l| f[k] as i128 * g[l] as i128 == f[l] as i128 * g[k] as i128));
                if proportional {
                    return Err(Error::InvalidConfig(format!("forms {i} and {j} are proportional")));
                }
            }
        }
        if json.modulus == 0 {
            return Err(Error::InvalidConfig("modulus must be positive".into()));
        }
        let a = if json.a.is_empty() { vec![0; s] } else { json.a.clone() };
        if a.len() != s {
            return Err(Error::InvalidConfig("residue a has wrong length".into()));
        }
        let shifts = if json.shifts.is_empty() { vec![0; r] } else { json.shifts.clone() };
        if shifts.len() != r {
            return Err(Error::InvalidConfig("shifts have wrong length".into()));
        }
        let mut fields = Vec::new();
        let mut units = Vec::new();
        let mut domains = Vec::new();
        let mut cones = Vec::new();
        let mut bs = Vec::new();
        let mut hasher = Sha256::new();
        for e in &json.fields {
            let f = match &e.field {
                FieldRef::Path(p) => {
                    let pb = PathBuf::from(p);
                    FieldSpec::from_path(&if pb.is_absolute() { pb } else { base.join(pb) })?
                }
                FieldRef::Inline(j) => FieldSpec::from_json((**j).clone())?,
            };
            let u = UnitSystem::from_field(&f)?;
            e.cone.validate(f.n, f.r1, f.r2, u.mu_plus_order)?;
            let b = if e.b.is_empty() { vec![0; f.n] } else { e.b.clone() };
            if b.len() != f.n {
                return Err(Error::InvalidConfig(format!("residue b for {} has wrong length", f.name)));
            }
            hasher.update(f.hash.as_bytes());
            domains.push(Arc::new(LogDomain::new(&f, &u)?));
            fields.push(Arc::new(f));
            units.push(u);
            cones.push(e.cone.clone());
            bs.push(b);
        }
        let mut stripped = json.clone();
        for e in stripped.fields.iter_mut() {
            e.field = FieldRef::Path(String::new());
        }
        hasher.update(serde_json::to_vec(&stripped)?);
        let hash = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Ok(ProblemConfig {
            forms: json.forms.clone(),
            region: json.region.clone(),
            modulus: json.modulus,
            json,
            fields,
            units,
            domains,
            cones,
            b: bs,
            shifts,
            a,
            s,
            r,
            hash,
        })
    }

    pub fn form_value(&self, i: usize, u: &[i64]) -> i128 {
        self.forms[i].iter().zip(u).map(|(&c, &x)| c as i128 * x as i128).sum::<i128>() + self.shifts[i] as i128
    }

    pub fn counters(&self) -> Result<Vec<ReprCounter>> {
        (0..self.r)
            .map(|i| {
                ReprCounter::from_parts(self.fields[i].clone(), self.domains[i].clone(), self.cones[i].clone(), self.b[i].clone(), self.modulus)
            })
            .collect()
    }

    /// Copy with the modulus and residues replaced.
    pub fn with_congruence(&self, modulus: u64, a: Vec<i64>, b: Vec<Vec<i64>>) -> Result<Self> {
        let mut c = self.clone();
        c.modulus = modulus;
        c.a = a;
        c.b = b;
        c.json.modulus = modulus;
        c.json.a = c.a.clone();
        for (e, b) in c.json.fields.iter_mut().zip(&c.b) {
            e.b = b.clone();
        }
        Ok(c)
    }
}

// ---------------------------------------------------------------------------
// representation counts

/// R(m; 𝔛, b, M) for one field, with a memo table keyed on m.
pub struct ReprCounter {
    pub field: Arc<FieldSpec>,
    pub domain: Arc<LogDomain>,
    pub cone: ConeSpec,
    pub b: Vec<i64>,
    pub modulus: u64,
    pub budget: u64,
    last: Vec<MultiPoly>,
    memo: DashMap<i128, u64>,
}

impl ReprCounter {
    pub fn new(field: &FieldSpec, units: &UnitSystem, cone: ConeSpec, b: Vec<i64>, modulus: u64) -> Result<Self> {
        let domain = LogDomain::new(field, units)?;
        cone.validate(field.n, field.r1, field.r2, units.mu_plus_order)?;
        Self::from_parts(Arc::new(field.clone()), Arc::new(domain), cone, b, modulus)
    }

    pub fn from_parts(field: Arc<FieldSpec>, domain: Arc<LogDomain>, cone: ConeSpec, b: Vec<i64>, modulus: u64) -> Result<Self> {
        let b = if b.is_empty() { vec![0; field.n] } else { b };
        if b.len() != field.n || modulus == 0 {
            return Err(Error::InvalidConfig("residue vector or modulus invalid".into()));
        }
        let last = field.norm_poly.split_last();
        Ok(ReprCounter { field, domain, cone, b, modulus, budget: DEFAULT_REPR_BUDGET, last, memo: DashMap::new() })
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    fn ranges(&self, level: f64) -> Vec<i64> {
        self.domain.bounding_box(level).iter().map(|h| h.floor() as i64).collect()
    }

    fn congruent(&self, x: &[i128]) -> bool {
        let m = self.modulus as i128;
        m == 1 || x.iter().zip(&self.b).all(|(&v, &b)| (v - b as i128).rem_euclid(m) == 0)
    }

    fn admissible(&self, x: &[i128], norm: i128) -> bool {
        if !self.congruent(x) {
            return false;
        }
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let v = self.domain.embed.apply(&xf);
        self.domain.cone_member(&xf, &v, norm as f64, &self.cone)
    }

    /// The integer points x ∈ 𝔛 ∩ 𝔇₊ with N(x) = m and x ≡ b mod M.
    pub fn points(&self, m: i128) -> Result<Vec<Vec<i128>>> {
        if m == 0 {
            return Ok(vec![]);
        }
        let n = self.field.n;
        let h = self.ranges(m.unsigned_abs() as f64);
        let prefixes: u128 = h[..n - 1].iter().map(|&w| (2 * w + 1) as u128).product();
        if prefixes > self.budget as u128 {
            return Err(Error::BudgetExceeded(format!("{prefixes} prefixes for m = {m}")));
        }
        let mut out = Vec::new();
        let mut pre: Vec<i128> = h[..n - 1].iter().map(|&w| -(w as i128)).collect();
        loop {
            let mut c: Vec<i128> = self.last.iter().map(|p| p.eval_i128(&pre).expect("coefficient fits")).collect();
            c[0] -= m;
            for t in integer_roots(&c, -h[n - 1], h[n - 1]) {
                let mut x = pre.clone();
                x.push(t as i128);
                if self.admissible(&x, m) {
                    out.push(x);
                }
            }
            let mut k = 0;
            loop {
                if k == n - 1 {
                    return Ok(out);
                }
                pre[k] += 1;
                if pre[k] <= h[k] as i128 {
                    break;
                }
                pre[k] = -(h[k] as i128);
                k += 1;
            }
        }
    }

    pub fn count_unmemoized(&self, m: i128) -> Result<u64> {
        Ok(self.points(m)?.len() as u64)
    }

    pub fn count(&self, m: i128) -> Result<u64> {
        if m == 0 {
            return Ok(0);
        }
        if let Some(v) = self.memo.get(&m) {
            return Ok(*v);
        }
        let v = self.count_unmemoized(m)?;
        self.memo.insert(m, v);
        Ok(v)
    }

    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }

    /// Σ R(m) over 0 < εm ≤ x with `keep(m)`, by a single sweep of the bounding box at level x.
    pub fn tally(&self, eps: Sign, x: f64, keep: &(dyn Fn(i128) -> bool + Sync)) -> Result<u64> {
        if x < 1.0 {
            return Ok(0);
        }
        let n = self.field.n;
        let h = self.ranges(x);
        let total: u128 = h.iter().map(|&w| (2 * w + 1) as u128).product();
        if total > self.budget as u128 * 64 {
            return Err(Error::BudgetExceeded(format!("{total} lattice points below level {x}")));
        }
        let xi = x.floor() as i128;
        let first: Vec<i64> = if n > 1 { (-h[0]..=h[0]).collect() } else { vec![0] };
        let counts: Vec<u64> = first
            .par_iter()
            .map(|&x0| {
                let mut acc = 0u64;
                let mut pre: Vec<i128> = h[..n - 1].iter().map(|&w| -(w as i128)).collect();
                if n > 1 {
                    pre[0] = x0 as i128;
                }
                loop {
                    let c: Vec<i128> = self.last.iter().map(|p| p.eval_i128(&pre).expect("coefficient fits")).collect();
                    for t in -h[n - 1]..=h[n - 1] {
                        let nm = eval_i128(&c, t as i128).expect("norm fits");
                        let en = nm * eps.factor();
                        if en <= 0 || en > xi || !keep(nm) {
                            continue;
                        }
                        let mut pt = pre.clone();
                        pt.push(t as i128);
                        if self.admissible(&pt, nm) {
                            acc += 1;
                        }
                    }
                    let mut k = 1;
                    loop {
                        if k >= n - 1 {
                            return acc;
                        }
                        pre[k] += 1;
                        if pre[k] <= h[k] as i128 {
                            break;
                        }
                        pre[k] = -(h[k] as i128);
                        k += 1;
                    }
                }
            })
            .collect();
        Ok(counts.iter().sum())
    }

    /// R(m) for every 0 < |m| ≤ level in one sweep of the bounding box; absent m have R(m) = 0.
    pub fn table(&self, level: u64) -> Result<BTreeMap<i128, u64>> {
        let n = self.field.n;
        let h = self.ranges(level as f64);
        let total: u128 = h.iter().map(|&w| (2 * w + 1) as u128).product();
        if total > self.budget as u128 * 64 {
            return Err(Error::BudgetExceeded(format!("{total} lattice points below level {level}")));
        }
        let lv = level as i128;
        let first: Vec<i64> = if n > 1 { (-h[0]..=h[0]).collect() } else { vec![0] };
        let parts: Vec<BTreeMap<i128, u64>> = first
            .par_iter()
            .map(|&x0| {
                let mut acc = BTreeMap::new();
                let mut pre: Vec<i128> = h[..n - 1].iter().map(|&w| -(w as i128)).collect();
                if n > 1 {
                    pre[0] = x0 as i128;
                }
                loop {
                    let c: Vec<i128> = self.last.iter().map(|p| p.eval_i128(&pre).expect("coefficient fits")).collect();
                    for t in -h[n - 1]..=h[n - 1] {
                        let nm = eval_i128(&c, t as i128).expect("norm fits");
                        if nm == 0 || nm.abs() > lv {
                            continue;
                        }
                        let mut pt = pre.clone();
                        pt.push(t as i128);
                        if self.admissible(&pt, nm) {
                            *acc.entry(nm).or_insert(0) += 1;
                        }
                    }
                    let mut k = 1;
                    loop {
                        if k >= n - 1 {
                            return acc;
                        }
                        pre[k] += 1;
                        if pre[k] <= h[k] as i128 {
                            break;
                        }
                        pre[k] = -(h[k] as i128);
                        k += 1;
                    }
                }
            })
            .collect();
        let mut out = BTreeMap::new();
        for part in parts {
            for (k, v) in part {
                *out.entry(k).or_insert(0) += v;
            }
        }
        Ok(out)
    }

    /// Fill the memo for all 0 < |m| ≤ level from one sweep.
    pub fn prefill(&self, level: u64) -> Result<()> {
        let t = self.table(level)?;
        for m in 1..=level as i128 {
            for v in [m, -m] {
                self.memo.insert(v, t.get(&v).copied().unwrap_or(0));
            }
        }
        Ok(())
    }

    /// κ^ε(𝔛): closed form when available, otherwise a seeded QMC estimate.
    pub fn kappa(&self, eps: Sign, seed: u64) -> Result<f64> {
        if let Some(v) = kappa_closed_form(&self.domain, &self.cone, eps) {
            return Ok(v);
        }
        Ok(kappa_eps(&self.domain, &self.cone, eps, KappaMethod::Qmc, 1 << 18, seed, None)?.value)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProgressionReport {
    pub sum: u64,
    pub predicted: f64,
    pub residual: f64,
}

/// Σ_{0<εm≤x, m≡A mod q} R(m) against ρ(q,A;M)/q^n · κ^ε · x.
pub fn progression_sum(counter: &ReprCounter, eps: Sign, x: f64, q: u64, a: i128, seed: u64) -> Result<ProgressionReport> {
    if q == 0 || q % counter.modulus != 0 {
        return Err(Error::PreconditionUnmet(format!("M = {} must divide q = {q}", counter.modulus)));
    }
    let ar = a.rem_euclid(q as i128);
    let sum = counter.tally(eps, x, &|m| m.rem_euclid(q as i128) == ar)?;
    if x < 1.0 {
        return Ok(ProgressionReport { sum, predicted: 0.0, residual: 0.0 });
    }
    let engine = RhoEngine::new(&counter.field);
    let rho = engine.rho_composite(q, a, counter.modulus, &counter.b)? as f64;
    let n = counter.field.n as i32;
    let kappa = counter.kappa(eps, seed)?;
    let predicted = rho / (q as f64).powi(n) * kappa * x;
    let residual = (sum as f64 - predicted) / (q as f64 * x.powf(1.0 - 1.0 / n as f64));
    Ok(ProgressionReport { sum, predicted, residual })
}

// ---------------------------------------------------------------------------
// N(T)

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CountReport {
    #[serde(rename = "N")]
    pub n: u128,
    #[serde(rename = "T")]
    pub t: u64,
    /// contributions keyed by the sign pattern of (f_1(u), …, f_r(u))
    pub breakdown: BTreeMap<String, u128>,
}

fn lattice_ranges(config: &ProblemConfig, t: u64) -> Vec<(i64, i64)> {
    let (lo, hi) = config.region.bbox();
    let tf = t as f64;
    lo.iter().zip(&hi).map(|(a, b)| ((a * tf - 1e-9).ceil() as i64, (b * tf + 1e-9).floor() as i64)).collect()
}

fn in_scaled_region(config: &ProblemConfig, u: &[i64], t: u64) -> bool {
    let uf: Vec<f64> = u.iter().map(|&v| v as f64 / t as f64).collect();
    config.region.contains(&uf)
}

fn count_impl(config: &ProblemConfig, t: u64, counters: &[ReprCounter], memo: bool) -> Result<CountReport> {
    if t == 0 {
        return Ok(CountReport { n: 0, t, breakdown: BTreeMap::new() });
    }
    let ranges = lattice_ranges(config, t);
    let s = config.s;
    let m = config.modulus as i64;
    let first: Vec<i64> = (ranges[0].0..=ranges[0].1).filter(|u| (u - config.a[0]).rem_euclid(m) == 0).collect();
    let slabs: Vec<Result<BTreeMap<String, u128>>> = first
        .par_iter()
        .map(|&u0| {
            let mut acc: BTreeMap<String, u128> = BTreeMap::new();
            let mut u = vec![0i64; s];
            u[0] = u0;
            let starts: Vec<i64> = (0..s)
                .map(|k| {
                    let lo = ranges[k].0;
                    lo + (config.a[k] - lo).rem_euclid(m)
                })
                .collect();
            for k in 1..s {
                u[k] = starts[k];
            }
            if (1..s).any(|k| starts[k] > ranges[k].1) {
                return Ok(acc);
            }
            loop {
                if in_scaled_region(config, &u, t) {
                    let mut prod: u128 = 1;
                    let mut key = String::with_capacity(config.r);
                    for (i, c) in counters.iter().enumerate() {
                        let v = config.form_value(i, &u);
                        if v == 0 {
                            prod = 0;
                            break;
                        }
                        key.push(if v > 0 { '+' } else { '-' });
                        let r = if memo { c.count(v)? } else { c.count_unmemoized(v)? };
                        prod *= r as u128;
                        if prod == 0 {
                            break;
                        }
                    }
                    if prod > 0 {
                        *acc.entry(key).or_insert(0) += prod;
                    }
                }
                let mut k = 1;
                loop {
                    if k >= s {
                        return Ok(acc);
                    }
                    u[k] += m;
                    if u[k] <= ranges[k].1 {
                        break;
                    }
                    u[k] = starts[k];
                    k += 1;
                }
            }
        })
        .collect();
    let mut breakdown = BTreeMap::new();
    for slab in slabs {
        for (k, v) in slab? {
            *breakdown.entry(k).or_insert(0) += v;
        }
    }
    Ok(CountReport { n: breakdown.values().sum(), t, breakdown })
}

/// N(T) = Σ_{u ∈ ℤ^s ∩ T𝔎, u ≡ a mod M} ∏ R_i(f_i(u)).
pub fn count_nt(config: &ProblemConfig, t: u64) -> Result<CountReport> {
    let counters = config.counters()?;
    prefill_for(config, t, &counters)?;
    count_impl(config, t, &counters, true)
}

/// Fill each counter's memo up to the largest |f_i| + |shift_i| reachable on T𝔎.
pub fn prefill_for(config: &ProblemConfig, t: u64, counters: &[ReprCounter]) -> Result<()> {
    for (i, c) in counters.iter().enumerate() {
        let f: Vec<f64> = config.forms[i].iter().map(|&v| v as f64).collect();
        let (a, b) = config.region.form_range(&f);
        let level = (a.abs().max(b.abs()) * t as f64).ceil() as u64 + config.shifts[i].unsigned_abs() + 1;
        c.prefill(level)?;
    }
    Ok(())
}

/// Same count with caller-owned counters, so memo tables survive across calls.
pub fn count_nt_with(config: &ProblemConfig, t: u64, counters: &[ReprCounter]) -> Result<CountReport> {
    count_impl(config, t, counters, true)
}

/// Same count without memoization, for cross-checking.
pub fn count_nt_unmemoized(config: &ProblemConfig, t: u64) -> Result<CountReport> {
    let counters = config.counters()?;
    count_impl(config, t, &counters, false)
}

// ---------------------------------------------------------------------------
// W-trick

#[derive(Clone, Debug, Serialize)]
pub struct WTrickReport {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_diff: f64,
    /// ρ(W,A;M)/W^{n−1} and ρ(Wq,A+Wa;M)/(Wq)^{n−1} as exact rationals
    pub identity_lhs: String,
    pub identity_rhs: String,
    pub identity_holds: bool,
}

/// Check of ρ(W,A;M)/W^{n−1} = ρ(Wq,A+Wa;M)/(Wq)^{n−1}.
pub fn w_identity(engine: &RhoEngine, w_mod: u64, a: i128, q: u64, res: i128, modulus: u64, b: &[i64]) -> Result<(BigRational, BigRational)> {
    let n = engine.field.n as u32;
    let l = engine.rho_composite(w_mod, a, modulus, b)?;
    let wq = w_mod * q;
    let r = engine.rho_composite(wq, a + w_mod as i128 * res, modulus, b)?;
    Ok((
        BigRational::new(BigInt::from(l), BigInt::from(w_mod).pow(n - 1)),
        BigRational::new(BigInt::from(r), BigInt::from(wq).pow(n - 1)),
    ))
}

/// E_{0≤εm<T′} R(Wm+A) against E_{0≤εm<T″} R(W(qm+a)+A), T″ = ⌈T′/q⌉, plus the exact local identity.
/// `w` bounds the primes allowed in q.
#[allow(clippy::too_many_arguments)]
pub fn wtricked_average(counter: &ReprCounter, eps: Sign, w_mod: u64, w: u64, a: i128, t1: u64, q: u64, res: i128) -> Result<WTrickReport> {
    if w_mod % counter.modulus != 0 {
        return Err(Error::PreconditionUnmet("M must divide W".into()));
    }
    if let Some((p, _)) = factorize(q).into_iter().find(|&(p, _)| p >= w) {
        return Err(Error::PreconditionUnmet(format!("q = {q} has the prime factor {p} ≥ w = {w}")));
    }
    if t1 == 0 || q == 0 {
        return Err(Error::PreconditionUnmet("T′ and q must be positive".into()));
    }
    let e = eps.factor();
    let w_i = w_mod as i128;
    let mut s1 = 0u64;
    for m in 0..t1 as i128 {
        s1 += counter.count(w_i * e * m + a)?;
    }
    let lhs = s1 as f64 / t1 as f64;
    let t2 = t1.div_ceil(q);
    let mut s2 = 0u64;
    for m in 0..t2 as i128 {
        s2 += counter.count(w_i * (q as i128 * e * m + res) + a)?;
    }
    let rhs = s2 as f64 / t2 as f64;
    let engine = RhoEngine::new(&counter.field);
    let (il, ir) = w_identity(&engine, w_mod, a, q, res, counter.modulus, &counter.b)?;
    Ok(WTrickReport {
        lhs,
        rhs,
        rel_diff: if lhs != 0.0 { (lhs - rhs).abs() / lhs } else { (lhs - rhs).abs() },
        identity_holds: il == ir,
        identity_lhs: il.to_string(),
        identity_rhs: ir.to_string(),
    })
}
