//! Declared familial relations and parent links.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinship::{classify_degree, Relatedness};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Degree {
    First,
    Second,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Pedigree {
    members: Vec<String>,
    relations: BTreeMap<(String, String), Degree>,
    parents: BTreeMap<String, (String, String)>,
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl Pedigree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_member(&mut self, id: impl Into<String>) {
        let id = id.into();
        if !self.members.contains(&id) {
            self.members.push(id);
        }
    }

    pub fn add_relation(&mut self, a: &str, b: &str, degree: Degree) -> Result<()> {
        if a == b {
            return Err(Error::validation(format!("self-relation on '{a}'")));
        }
        let key = pair_key(a, b);
        match self.relations.get(&key) {
            Some(existing) if *existing != degree => {
                return Err(Error::validation(format!(
                    "pair {a}~{b} declared with two degrees"
                )))
            }
            _ => {}
        }
        self.relations.insert(key, degree);
        self.add_member(a);
        self.add_member(b);
        Ok(())
    }

    /// Records `child`'s parents, rejecting links that would create a cycle.
    /// Parents may be latent (not members).
    pub fn set_parents(&mut self, child: &str, father: &str, mother: &str) -> Result<()> {
        if child == father || child == mother || father == mother {
            return Err(Error::validation(format!(
                "invalid parent link {child} <- ({father}, {mother})"
            )));
        }
        let previous = self
            .parents
            .insert(child.to_string(), (father.to_string(), mother.to_string()));
        if self.has_cycle() {
            match previous {
                Some(p) => self.parents.insert(child.to_string(), p),
                None => self.parents.remove(child),
            };
            return Err(Error::validation(format!(
                "parent link for '{child}' creates a cycle"
            )));
        }
        Ok(())
    }

    fn has_cycle(&self) -> bool {
        // walk ancestors from each child; a cycle revisits the start
        for start in self.parents.keys() {
            let mut stack: Vec<&str> = vec![start.as_str()];
            let mut seen = BTreeSet::new();
            while let Some(node) = stack.pop() {
                if let Some((f, m)) = self.parents.get(node) {
                    for p in [f.as_str(), m.as_str()] {
                        if p == start {
                            return true;
                        }
                        if seen.insert(p) {
                            stack.push(p);
                        }
                    }
                }
            }
        }
        false
    }

    pub fn members(&self) -> &[String] {
        &self.members
    }

    pub fn contains(&self, id: &str) -> bool {
        self.members.iter().any(|m| m == id)
    }

    pub fn degree(&self, a: &str, b: &str) -> Option<Degree> {
        self.relations.get(&pair_key(a, b)).copied()
    }

    pub fn relations(&self) -> impl Iterator<Item = (&str, &str, Degree)> {
        self.relations
            .iter()
            .map(|((a, b), d)| (a.as_str(), b.as_str(), *d))
    }

    pub fn parents_of(&self, child: &str) -> Option<(&str, &str)> {
        self.parents
            .get(child)
            .map(|(f, m)| (f.as_str(), m.as_str()))
    }

    pub fn parent_links(&self) -> &BTreeMap<String, (String, String)> {
        &self.parents
    }

    /// Relatives of `id` with their declared degree, in member order.
    pub fn relatives(&self, id: &str) -> Vec<(&str, Degree)> {
        self.members
            .iter()
            .filter_map(|m| self.degree(id, m).map(|d| (m.as_str(), d)))
            .collect()
    }

    pub fn is_related(&self, id: &str) -> bool {
        self.relations.keys().any(|(a, b)| a == id || b == id)
    }

    /// Connected components of the relation graph, each in member order.
    /// Members without relations are omitted.
    pub fn families(&self) -> Vec<Vec<String>> {
        let mut component: HashMap<&str, usize> = HashMap::new();
        let mut families: Vec<Vec<String>> = Vec::new();
        for member in &self.members {
            if component.contains_key(member.as_str()) || !self.is_related(member) {
                continue;
            }
            let idx = families.len();
            let mut stack = vec![member.as_str()];
            component.insert(member.as_str(), idx);
            while let Some(node) = stack.pop() {
                for (rel, _) in self.relatives(node) {
                    if !component.contains_key(rel) {
                        component.insert(rel, idx);
                        stack.push(rel);
                    }
                }
            }
            families.push(
                self.members
                    .iter()
                    .filter(|m| component.get(m.as_str()) == Some(&idx))
                    .cloned()
                    .collect(),
            );
        }
        families
    }

    /// Builds relations among `observed` from parent links by computing
    /// expected kinship through the full pedigree (latent ancestors
    /// included). Kinship 1/4 becomes first degree, 1/8 second degree.
    pub fn from_parent_links(
        links: &BTreeMap<String, (String, String)>,
        observed: &[String],
    ) -> Result<Self> {
        let mut ped = Pedigree::new();
        for id in observed {
            ped.add_member(id.clone());
        }
        for (child, (f, m)) in links {
            ped.set_parents(child, f, m)?;
        }
        let kin = ped.expected_kinship()?;
        for (x, a) in observed.iter().enumerate() {
            for b in &observed[x + 1..] {
                let phi = kin[&pair_key(a, b)];
                let degree = match classify_degree(phi) {
                    Relatedness::Duplicate | Relatedness::First => Some(Degree::First),
                    Relatedness::Second => Some(Degree::Second),
                    Relatedness::Unrelated => None,
                };
                if let Some(d) = degree {
                    ped.relations.insert(pair_key(a, b), d);
                }
            }
        }
        // keep only observed individuals as members; parent links stay
        ped.members = observed.to_vec();
        Ok(ped)
    }

    /// Nodes of the parent-link graph with parents listed before children.
    pub fn topological_order(&self) -> Result<Vec<String>> {
        let mut nodes: BTreeSet<&str> = self.members.iter().map(String::as_str).collect();
        for (c, (f, m)) in &self.parents {
            nodes.insert(c);
            nodes.insert(f);
            nodes.insert(m);
        }
        let mut order: Vec<String> = Vec::with_capacity(nodes.len());
        let mut placed: BTreeSet<&str> = BTreeSet::new();
        // stable: repeatedly take nodes whose parents are placed, in member-then-name order
        let mut pending: Vec<&str> = self
            .members
            .iter()
            .map(String::as_str)
            .chain(nodes.iter().copied())
            .collect::<Vec<_>>();
        let mut dedup = BTreeSet::new();
        pending.retain(|n| dedup.insert(*n));
        while !pending.is_empty() {
            let before = pending.len();
            pending.retain(|n| {
                let ready = match self.parents.get(*n) {
                    Some((f, m)) => placed.contains(f.as_str()) && placed.contains(m.as_str()),
                    None => true,
                };
                if ready {
                    placed.insert(n);
                    order.push(n.to_string());
                }
                !ready
            });
            if pending.len() == before {
                return Err(Error::validation("cyclic parent links"));
            }
        }
        Ok(order)
    }

    /// Expected kinship coefficient between every pair of pedigree nodes.
    pub fn expected_kinship(&self) -> Result<HashMap<(String, String), f64>> {
        let order = self.topological_order()?;
        let n = order.len();
        let index: HashMap<&str, usize> =
            order.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut k = vec![vec![0.0f64; n]; n];
        #[allow(clippy::needless_range_loop)]
        for c in 0..n {
            match self.parents.get(&order[c]) {
                Some((f, m)) => {
                    let (f, m) = (index[f.as_str()], index[m.as_str()]);
                    for x in 0..c {
                        let v = 0.5 * (k[f][x] + k[m][x]);
                        k[c][x] = v;
                        k[x][c] = v;
                    }
                    k[c][c] = 0.5 * (1.0 + k[f][m]);
                }
                None => k[c][c] = 0.5,
            }
        }
        let mut out = HashMap::new();
        for a in 0..n {
            for b in 0..n {
                out.insert(pair_key(&order[a], &order[b]), k[a][b]);
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = PedigreeFile {
            members: self.members.clone(),
            relations: self
                .relations
                .iter()
                .map(|((a, b), d)| (a.clone(), b.clone(), *d))
                .collect(),
            parents: self
                .parents
                .iter()
                .map(|(c, (f, m))| (c.clone(), [f.clone(), m.clone()]))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PedigreeFile = serde_json::from_str(text)?;
        let mut ped = Pedigree::new();
        for m in file.members {
            ped.add_member(m);
        }
        for (a, b, d) in file.relations {
            ped.add_relation(&a, &b, d)?;
        }
        for (child, [f, m]) in file.parents {
            ped.set_parents(&child, &f, &m)?;
        }
        Ok(ped)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct PedigreeFile {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    members: Vec<String>,
    relations: Vec<(String, String, Degree)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    parents: BTreeMap<String, [String; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn links(pairs: &[(&str, &str, &str)]) -> BTreeMap<String, (String, String)> {
        pairs
            .iter()
            .map(|(c, f, m)| (c.to_string(), (f.to_string(), m.to_string())))
            .collect()
    }

    #[test]
    fn relations_are_symmetric_and_single_degree() {
        let mut p = Pedigree::new();
        p.add_relation("a", "b", Degree::First).unwrap();
        assert_eq!(p.degree("b", "a"), Some(Degree::First));
        assert!(p.add_relation("b", "a", Degree::First).is_ok());
        assert!(p.add_relation("b", "a", Degree::Second).is_err());
        assert!(p.add_relation("a", "a", Degree::First).is_err());
    }

    #[test]
    fn cycles_are_rejected() {
        let mut p = Pedigree::new();
        p.set_parents("c", "f", "m").unwrap();
        assert!(p.set_parents("f", "c", "x").is_err());
        // the failed link leaves no trace
        assert!(p.parents_of("f").is_none());
    }

    #[test]
    fn derives_degrees_from_links() {
        let observed: Vec<String> = ["son", "father", "mother", "aunt"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let l = links(&[
            ("son", "father", "mother"),
            ("mother", "gf", "gm"),
            ("aunt", "gf", "gm"),
        ]);
        let p = Pedigree::from_parent_links(&l, &observed).unwrap();
        assert_eq!(p.degree("son", "father"), Some(Degree::First));
        assert_eq!(p.degree("son", "mother"), Some(Degree::First));
        assert_eq!(p.degree("mother", "aunt"), Some(Degree::First));
        assert_eq!(p.degree("son", "aunt"), Some(Degree::Second));
        assert_eq!(p.degree("father", "mother"), None);
        assert_eq!(p.degree("father", "aunt"), None);
        assert_eq!(p.members().len(), 4);
        assert_eq!(p.families(), vec![observed]);
    }

    #[test]
    fn json_round_trip() {
        let mut p = Pedigree::new();
        p.add_relation("son", "father", Degree::First).unwrap();
        p.add_relation("son", "aunt", Degree::Second).unwrap();
        p.set_parents("son", "father", "mother").unwrap();
        let back = Pedigree::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back.degree("aunt", "son"), Some(Degree::Second));
        assert_eq!(back.parents_of("son"), Some(("father", "mother")));
        let minimal = r#"{"relations": [["a","b","first"]]}"#;
        assert_eq!(Pedigree::from_json(minimal).unwrap().members().len(), 2);
    }
}
