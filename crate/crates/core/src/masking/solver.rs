//! Exact integer program for the number of positions to hide from the
//! newest family member.
//!
//! Variables are the counts `x_c` of positions with joint configuration
//! `c` to hide from the newest member, over configurations where the newest
//! member is heterozygous and at least one constrained partner is too.
//! Hiding such a position removes it from every pair the newest member is
//! in: for a partner `a`, `n11` and `a`'s heterozygote count drop by one
//! when `c[a] = 1`, and the newest member's heterozygote count always drops
//! by one. Opposing homozygote counts never change.
//!
//! With `s` the removed double-heterozygous positions of a pair and `t` the
//! total removed, the ceiling `φ <= Φ` holds exactly when
//! `min(g_new, g_partner) <= 0` where
//!
//! ```text
//! g_new     = 2n11 − 4opp − h_a + (1−4Φ)h_n − s − (1−4Φ)t
//! g_partner = 2n11 − 4opp − h_n + (1−4Φ)h_a − (3−4Φ)s + t
//! ```
//!
//! (the estimator divides by whichever heterozygote count is smaller, and
//! the smaller denominator always yields the smaller of the two). Every unit
//! of removal lowers either form by at most `2 − 4Φ`, which gives the
//! objective bound used for pruning. Leaves are still checked against the
//! kinship estimator itself.

use std::collections::BTreeMap;

use crate::error::{Error, PairViolation, Result};
use crate::kinship::{kinship, PairCounts};

use super::config::FamilyConfigCounts;
use super::{within_ceiling, Phi};

/// A kinship ceiling on one pair of family members (indices into the
/// family), with the pair's current counts oriented `a` → `i`, `b` → `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairConstraint {
    pub a: usize,
    pub b: usize,
    pub phi: Phi,
    pub base: PairCounts,
}

#[derive(Clone, Debug)]
struct Variable {
    config: String,
    capacity: u64,
    /// per active constraint: is the partner heterozygous in this configuration
    hits: Vec<bool>,
}

/// A constraint between the newest member and a partner, oriented so the
/// partner is `i` and the newest member is `k`.
#[derive(Clone, Debug)]
struct Active {
    partner: usize,
    phi: Phi,
    base: PairCounts,
    c_new: f64,
    c_partner: f64,
}

#[derive(Clone, Debug)]
pub struct HidingProblem {
    members: Vec<String>,
    variables: Vec<Variable>,
    active: Vec<Active>,
    /// constraints among earlier members; they cannot be changed here
    fixed: Vec<PairConstraint>,
}

impl HidingProblem {
    /// Problem whose pair counts are the marginals of `counts`. The newest
    /// member is the last one.
    pub fn from_counts(counts: &FamilyConfigCounts, pairs: &[(usize, usize, Phi)]) -> Result<Self> {
        let constraints = pairs
            .iter()
            .map(|&(a, b, phi)| {
                let f = counts.size();
                if a >= f || b >= f || a == b {
                    return Err(Error::validation(format!("bad pair ({a}, {b})")));
                }
                let pattern = |va: char, vb: char| {
                    let mut p = vec!['*'; f];
                    if va != '*' {
                        p[a] = va;
                    }
                    if vb != '*' {
                        p[b] = vb;
                    }
                    counts.count(&p.into_iter().collect::<String>())
                };
                let base = PairCounts {
                    n11: pattern('1', '1'),
                    n02: pattern('0', '2'),
                    n20: pattern('2', '0'),
                    het_i: pattern('1', '*'),
                    het_k: pattern('*', '1'),
                    n_valid: counts.total(),
                };
                Ok(PairConstraint { a, b, phi, base })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_baselines(counts, constraints)
    }

    /// Problem with explicitly supplied pair counts (e.g. computed over
    /// each pair's own visible positions rather than the family-wide ones).
    pub fn with_baselines(counts: &FamilyConfigCounts, constraints: Vec<PairConstraint>) -> Result<Self> {
        let f = counts.size();
        let newest = f - 1;
        let mut active = Vec::new();
        let mut fixed = Vec::new();
        for c in constraints {
            if c.a >= f || c.b >= f || c.a == c.b {
                return Err(Error::validation(format!("bad pair ({}, {})", c.a, c.b)));
            }
            let (partner, base) = if c.b == newest {
                (c.a, c.base)
            } else if c.a == newest {
                (c.b, c.base.swapped())
            } else {
                fixed.push(c);
                continue;
            };
            let p = c.phi.value();
            let two_n11 = 2.0 * base.n11 as f64;
            let opp4 = 4.0 * base.opposite_homozygotes() as f64;
            let (ha, hn) = (base.het_i as f64, base.het_k as f64);
            active.push(Active {
                partner,
                phi: c.phi,
                base,
                c_new: two_n11 - opp4 - ha + (1.0 - 4.0 * p) * hn,
                c_partner: two_n11 - opp4 - hn + (1.0 - 4.0 * p) * ha,
            });
        }

        let variables = counts
            .iter()
            .filter_map(|(config, capacity)| {
                let bytes = config.as_bytes();
                if bytes[newest] != b'1' {
                    return None;
                }
                let hits: Vec<bool> = active.iter().map(|c| bytes[c.partner] == b'1').collect();
                hits.iter().any(|&h| h).then(|| Variable {
                    config: config.to_string(),
                    capacity,
                    hits,
                })
            })
            .collect();

        Ok(HidingProblem {
            members: counts.members().to_vec(),
            variables,
            active,
            fixed,
        })
    }

    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn variable_configs(&self) -> impl Iterator<Item = (&str, u64)> {
        self.variables.iter().map(|v| (v.config.as_str(), v.capacity))
    }

    /// Counts of every newest-member pair after removing `x` (one entry per
    /// variable, in configuration order), oriented partner → newest.
    pub fn pair_counts_after(&self, x: &[u64]) -> Vec<(usize, PairCounts)> {
        let t: u64 = x.iter().sum();
        self.active
            .iter()
            .enumerate()
            .map(|(ci, c)| {
                let s: u64 = self
                    .variables
                    .iter()
                    .zip(x)
                    .filter(|(v, _)| v.hits[ci])
                    .map(|(_, n)| n)
                    .sum();
                (c.partner, removed(&c.base, s, t))
            })
            .collect()
    }

    pub fn is_feasible(&self, x: &[u64]) -> bool {
        x.len() == self.variables.len()
            && self.variables.iter().zip(x).all(|(v, n)| *n <= v.capacity)
            && self.fixed.iter().all(|c| within_ceiling(&c.base, c.phi))
            && self
                .pair_counts_after(x)
                .iter()
                .zip(&self.active)
                .all(|((_, pc), c)| within_ceiling(pc, c.phi))
    }

    fn violations(&self, x: &[u64]) -> Vec<PairViolation> {
        let newest = self.members.len() - 1;
        let mut out: Vec<PairViolation> = self
            .fixed
            .iter()
            .filter(|c| !within_ceiling(&c.base, c.phi))
            .map(|c| PairViolation {
                a: self.members[c.a].clone(),
                b: self.members[c.b].clone(),
                residual: kinship(&c.base).ok(),
            })
            .collect();
        for ((partner, pc), c) in self.pair_counts_after(x).into_iter().zip(&self.active) {
            if !within_ceiling(&pc, c.phi) {
                out.push(PairViolation {
                    a: self.members[partner].clone(),
                    b: self.members[newest].clone(),
                    residual: kinship(&pc).ok(),
                });
            }
        }
        out
    }
}

fn removed(base: &PairCounts, s: u64, t: u64) -> PairCounts {
    PairCounts {
        n11: base.n11 - s,
        n02: base.n02,
        n20: base.n20,
        het_i: base.het_i - s,
        het_k: base.het_k - t,
        n_valid: base.n_valid - t,
    }
}

/// Optimal removal counts per configuration.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HidingSolution {
    pub removals: BTreeMap<String, u64>,
    pub nodes_explored: u64,
}

impl HidingSolution {
    pub fn objective(&self) -> u64 {
        self.removals.values().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.objective() == 0
    }
}

/// Builds the problem from `counts` and solves it.
pub fn solve_hiding_ip(counts: &FamilyConfigCounts, pairs: &[(usize, usize, Phi)]) -> Result<HidingSolution> {
    solve(&HidingProblem::from_counts(counts, pairs)?)
}

const SLACK: f64 = 1e-9;

struct Search<'a> {
    problem: &'a HidingProblem,
    x: Vec<u64>,
    s: Vec<u64>,
    t: u64,
    /// remaining capacity from variable k on that hits / misses constraint c
    hit_cap: Vec<Vec<u64>>,
    miss_cap: Vec<Vec<u64>>,
    best: Option<Incumbent>,
    nodes: u64,
}

struct Incumbent {
    objective: u64,
    x: Vec<u64>,
    /// found by the lexicographic search rather than the greedy warm start
    exact: bool,
}

impl Search<'_> {
    fn forms(&self, ci: usize) -> (f64, f64) {
        let c = &self.problem.active[ci];
        let p = c.phi.value();
        let s = self.s[ci] as f64;
        let t = self.t as f64;
        (
            c.c_new - s - (1.0 - 4.0 * p) * t,
            c.c_partner - (3.0 - 4.0 * p) * s + t,
        )
    }

    fn all_satisfied(&self) -> bool {
        self.problem.active.iter().enumerate().all(|(ci, c)| {
            within_ceiling(&removed(&c.base, self.s[ci], self.t), c.phi)
        })
    }

    /// Lower bound on further removals, or `None` if the subtree cannot
    /// reach feasibility.
    fn bound(&self, k: usize) -> Option<u64> {
        let mut lb = 0u64;
        for ci in 0..self.problem.active.len() {
            let p = self.problem.active[ci].phi.value();
            let step = 2.0 - 4.0 * p;
            let (g_new, g_partner) = self.forms(ci);
            let need = g_new.min(g_partner);
            if need <= SLACK {
                continue;
            }
            let hits = self.hit_cap[k][ci] as f64;
            let misses = self.miss_cap[k][ci] as f64;
            let best_new = g_new - step * hits - (1.0 - 4.0 * p).max(0.0) * misses;
            let best_partner = g_partner - step * hits;
            if best_new.min(best_partner) > SLACK {
                return None;
            }
            lb = lb.max((need / step - SLACK).ceil() as u64);
        }
        Some(lb)
    }

    fn improves(&self, objective: u64) -> bool {
        match &self.best {
            None => true,
            Some(b) => objective < b.objective || (objective == b.objective && !b.exact),
        }
    }

    fn dfs(&mut self, k: usize) {
        self.nodes += 1;
        if self.all_satisfied() {
            if self.improves(self.t) {
                let mut x = self.x.clone();
                x[k..].iter_mut().for_each(|v| *v = 0);
                self.best = Some(Incumbent {
                    objective: self.t,
                    x,
                    exact: true,
                });
            }
            return;
        }
        let n = self.problem.variables.len();
        if k == n {
            return;
        }
        let Some(lb) = self.bound(k) else { return };
        if !self.improves(self.t + lb) {
            return;
        }
        let var = &self.problem.variables[k];
        let (capacity, hits) = (var.capacity, var.hits.clone());
        for value in 0..=capacity {
            if !self.improves(self.t + value) {
                break;
            }
            self.x[k] = value;
            self.t += value;
            for (ci, &h) in hits.iter().enumerate() {
                if h {
                    self.s[ci] += value;
                }
            }
            self.dfs(k + 1);
            self.t -= value;
            for (ci, &h) in hits.iter().enumerate() {
                if h {
                    self.s[ci] -= value;
                }
            }
        }
        self.x[k] = 0;
    }
}

/// Greedy warm start: add one unit at a time to the variable that most
/// reduces the total violation.
fn greedy(problem: &HidingProblem) -> Option<Vec<u64>> {
    let n = problem.variables.len();
    let mut x = vec![0u64; n];
    let violation = |x: &[u64]| -> f64 {
        let t: u64 = x.iter().sum();
        problem
            .active
            .iter()
            .enumerate()
            .map(|(ci, c)| {
                let s: u64 = problem
                    .variables
                    .iter()
                    .zip(x)
                    .filter(|(v, _)| v.hits[ci])
                    .map(|(_, n)| n)
                    .sum();
                let p = c.phi.value();
                let g_new = c.c_new - s as f64 - (1.0 - 4.0 * p) * t as f64;
                let g_partner = c.c_partner - (3.0 - 4.0 * p) * s as f64 + t as f64;
                g_new.min(g_partner).max(0.0)
            })
            .sum()
    };
    while !problem.is_feasible(&x) {
        let mut choice: Option<(usize, f64)> = None;
        for k in 0..n {
            if x[k] >= problem.variables[k].capacity {
                continue;
            }
            x[k] += 1;
            let v = violation(&x);
            x[k] -= 1;
            if choice.is_none_or(|(_, best)| v < best) {
                choice = Some((k, v));
            }
        }
        x[choice?.0] += 1;
    }
    Some(x)
}

/// Solves the problem exactly by depth-first branch-and-bound over the
/// variables in configuration order, trying smaller values first. Among
/// minimal solutions the lexicographically smallest removal vector wins.
pub fn solve(problem: &HidingProblem) -> Result<HidingSolution> {
    let n = problem.variables.len();
    let m = problem.active.len();
    let no_removal = vec![0u64; n];

    if problem.fixed.iter().any(|c| !within_ceiling(&c.base, c.phi)) {
        return Err(Error::Infeasible {
            step: None,
            pairs: problem.violations(&no_removal),
        });
    }

    let mut hit_cap = vec![vec![0u64; m]; n + 1];
    let mut miss_cap = vec![vec![0u64; m]; n + 1];
    for k in (0..n).rev() {
        for ci in 0..m {
            let v = &problem.variables[k];
            hit_cap[k][ci] = hit_cap[k + 1][ci] + if v.hits[ci] { v.capacity } else { 0 };
            miss_cap[k][ci] = miss_cap[k + 1][ci] + if v.hits[ci] { 0 } else { v.capacity };
        }
    }

    let mut search = Search {
        problem,
        x: vec![0; n],
        s: vec![0; m],
        t: 0,
        hit_cap,
        miss_cap,
        best: greedy(problem).map(|x| Incumbent {
            objective: x.iter().sum(),
            x,
            exact: false,
        }),
        nodes: 0,
    };
    search.dfs(0);

    match search.best {
        Some(best) if best.exact => Ok(HidingSolution {
            removals: problem
                .variables
                .iter()
                .zip(&best.x)
                .map(|(v, &n)| (v.config.clone(), n))
                .collect(),
            nodes_explored: search.nodes,
        }),
        // a greedy incumbent is always re-found by the exact search
        Some(_) => unreachable!("greedy incumbent not confirmed by exact search"),
        None => {
            // report what is left with every useful variable at capacity
            let full: Vec<u64> = problem.variables.iter().map(|v| v.capacity).collect();
            Err(Error::Infeasible {
                step: None,
                pairs: problem.violations(&full),
            })
        }
    }
}
