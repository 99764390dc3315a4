//! Event-type taxonomy and event-to-type mapping.
//!
//! An event is mapped to the leaf type whose summed per-feature score is
//! largest. Scores come from a pluggable [`ScoreFunction`]; the default is
//! cosine similarity between the event's term weights and a profile built
//! from each type's name and definition.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::extraction::Event;
use crate::jsonl::{self, JsonlError};
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyNode {
    pub name: String,
    #[serde(default)]
    pub definition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(skip)]
    pub depth: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error(transparent)]
    Parse(#[from] JsonlError),
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("unknown taxonomy node `{0}`")]
    NotFound(String),
}

/// A validated single-rooted tree of event types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    nodes: BTreeMap<String, TaxonomyNode>,
    root: String,
    children: BTreeMap<String, Vec<String>>,
}

impl Taxonomy {
    /// Validates the node set: unique names, exactly one root, resolvable
    /// parents and no cycles. Depths are recomputed from the structure.
    pub fn new(nodes: Vec<TaxonomyNode>) -> Result<Self, TaxonomyError> {
        let invalid = |m: String| TaxonomyError::InvalidTaxonomy(m);
        let mut map = BTreeMap::new();
        for n in nodes {
            if n.name.trim().is_empty() {
                return Err(invalid("empty node name".into()));
            }
            if n.name.starts_with('#') || n.name.chars().any(char::is_whitespace) {
                return Err(invalid(format!("node name `{}` must not start with '#' or contain whitespace", n.name)));
            }
            if map.insert(n.name.clone(), n.clone()).is_some() {
                return Err(invalid(format!("duplicate node `{}`", n.name)));
            }
        }
        let roots: Vec<&String> = map.values().filter(|n| n.parent.is_none()).map(|n| &n.name).collect();
        let root = match roots.as_slice() {
            [r] => (*r).clone(),
            [] => return Err(invalid("no root node".into())),
            many => return Err(invalid(format!("multiple roots: {many:?}"))),
        };
        let mut children: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for n in map.values() {
            if let Some(p) = &n.parent {
                if !map.contains_key(p) {
                    return Err(invalid(format!("node `{}` has unknown parent `{p}`", n.name)));
                }
                children.entry(p.clone()).or_default().push(n.name.clone());
            }
        }
        // breadth-first depth assignment; anything unreached sits on a cycle
        let mut depth: HashMap<String, usize> = HashMap::new();
        depth.insert(root.clone(), 0);
        let mut frontier = vec![root.clone()];
        while let Some(name) = frontier.pop() {
            let d = depth[&name];
            for c in children.get(&name).into_iter().flatten() {
                if depth.insert(c.clone(), d + 1).is_some() {
                    return Err(invalid(format!("node `{c}` reached twice")));
                }
                frontier.push(c.clone());
            }
        }
        if depth.len() != map.len() {
            let stray: Vec<&String> = map.keys().filter(|k| !depth.contains_key(*k)).collect();
            return Err(invalid(format!("cycle or disconnected nodes: {stray:?}")));
        }
        for n in map.values_mut() {
            n.depth = depth[&n.name];
        }
        Ok(Taxonomy { nodes: map, root, children })
    }

    pub fn root(&self) -> &TaxonomyNode {
        &self.nodes[&self.root]
    }

    pub fn node(&self, name: &str) -> Option<&TaxonomyNode> {
        self.nodes.get(name)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TaxonomyNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn children(&self, name: &str) -> &[String] {
        self.children.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_leaf(&self, name: &str) -> bool {
        self.nodes.contains_key(name) && self.children(name).is_empty()
    }

    /// Leaves in lexicographic order.
    pub fn leaves(&self) -> impl Iterator<Item = &TaxonomyNode> {
        self.nodes.values().filter(|n| self.children(&n.name).is_empty())
    }

    /// Node names from the root down to `name`, inclusive.
    pub fn path_from_root(&self, name: &str) -> Result<Vec<String>, TaxonomyError> {
        let mut node = self.nodes.get(name).ok_or_else(|| TaxonomyError::NotFound(name.to_string()))?;
        let mut path = vec![node.name.clone()];
        while let Some(p) = &node.parent {
            node = &self.nodes[p];
            path.push(node.name.clone());
        }
        path.reverse();
        Ok(path)
    }

    pub fn write(&self, path: &Path) -> Result<(), JsonlError> {
        jsonl::write(path, self.nodes.values())
    }
}

pub fn load_taxonomy(path: &Path) -> Result<Taxonomy, TaxonomyError> {
    Taxonomy::new(jsonl::read_records(path)?)
}

pub fn path_from_root(node: &str, taxonomy: &Taxonomy) -> Result<Vec<String>, TaxonomyError> {
    taxonomy.path_from_root(node)
}

/// Sparse non-negative term weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub weights: BTreeMap<String, f64>,
}

impl FeatureVector {
    pub fn from_terms<I: IntoIterator<Item = String>>(terms: I, weight: f64) -> Self {
        let mut v = FeatureVector::default();
        v.add_terms(terms, weight);
        v
    }

    pub fn add_terms<I: IntoIterator<Item = String>>(&mut self, terms: I, weight: f64) {
        for t in terms {
            *self.weights.entry(t).or_insert(0.0) += weight;
        }
    }

    pub fn norm(&self) -> f64 {
        self.weights.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        small
            .weights
            .iter()
            .filter_map(|(t, w)| large.weights.get(t).map(|v| w * v))
            .sum()
    }
}

/// Term frequencies of trigger and mention; trigger terms count twice.
pub fn featurize_event(event: &Event) -> FeatureVector {
    let mut v = FeatureVector::from_terms(text::feature_terms(&event.trigger), 2.0);
    v.add_terms(text::feature_terms(&event.mention), 1.0);
    v
}

/// Profile of a type: split name words plus definition terms.
pub fn node_profile(node: &TaxonomyNode) -> FeatureVector {
    let name_terms = text::split_name(&node.name)
        .into_iter()
        .filter(|t| !text::is_stopword(t));
    let mut v = FeatureVector::from_terms(name_terms, 1.0);
    v.add_terms(text::feature_terms(&node.definition), 1.0);
    v
}

/// Per-feature score of one candidate type. The score of a type for an
/// event is the sum of this over the event's features.
pub trait ScoreFunction: Send + Sync {
    fn feature_score(&self, term: &str, weight: f64, features: &FeatureVector, node: &str) -> f64;

    /// Candidate types that can score nonzero for `term`, with no ordering
    /// requirement. `None` means every leaf must be scored explicitly.
    fn candidates(&self, _term: &str) -> Option<Vec<&str>> {
        None
    }
}

/// Cosine similarity between the event features and each type profile,
/// decomposed per feature: `w_k * p_k / (|w| |p|)`.
#[derive(Debug, Clone)]
pub struct CosineScore {
    profiles: HashMap<String, FeatureVector>,
    norms: HashMap<String, f64>,
    postings: HashMap<String, Vec<String>>,
}

impl CosineScore {
    pub fn new(taxonomy: &Taxonomy) -> Self {
        let mut profiles = HashMap::new();
        let mut norms = HashMap::new();
        let mut postings: HashMap<String, Vec<String>> = HashMap::new();
        for node in taxonomy.nodes() {
            let p = node_profile(node);
            for term in p.weights.keys() {
                postings.entry(term.clone()).or_default().push(node.name.clone());
            }
            norms.insert(node.name.clone(), p.norm());
            profiles.insert(node.name.clone(), p);
        }
        CosineScore { profiles, norms, postings }
    }

    pub fn profile(&self, node: &str) -> Option<&FeatureVector> {
        self.profiles.get(node)
    }
}

impl ScoreFunction for CosineScore {
    fn feature_score(&self, term: &str, weight: f64, features: &FeatureVector, node: &str) -> f64 {
        let (Some(profile), Some(&pn)) = (self.profiles.get(node), self.norms.get(node)) else {
            return 0.0;
        };
        let fv = features.norm();
        if pn == 0.0 || fv == 0.0 {
            return 0.0;
        }
        profile.weights.get(term).map_or(0.0, |p| weight * p / (fv * pn))
    }

    fn candidates(&self, term: &str) -> Option<Vec<&str>> {
        Some(
            self.postings
                .get(term)
                .map(|v| v.iter().map(String::as_str).collect())
                .unwrap_or_default(),
        )
    }
}

/// Multiplies another score function by a constant.
pub struct Scaled<S> {
    pub factor: f64,
    pub inner: S,
}

impl<S: ScoreFunction> ScoreFunction for Scaled<S> {
    fn feature_score(&self, term: &str, weight: f64, features: &FeatureVector, node: &str) -> f64 {
        self.factor * self.inner.feature_score(term, weight, features, node)
    }

    fn candidates(&self, term: &str) -> Option<Vec<&str>> {
        self.inner.candidates(term)
    }
}

/// Relative gap below which two leaf totals count as tied. Totals are sums
/// of per-feature terms, so leaves that tie exactly can differ by rounding.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Whether `a` is strictly better than `b` beyond the tie tolerance.
pub fn beats(a: f64, b: f64) -> bool {
    a - b > TIE_TOLERANCE * a.abs().max(b.abs())
}

/// Argmax over leaves of the summed feature scores; ties go to the
/// lexicographically smallest leaf name.
pub fn map_features_to_leaf<'t>(
    features: &FeatureVector,
    taxonomy: &'t Taxonomy,
    score: &dyn ScoreFunction,
) -> &'t TaxonomyNode {
    let mut totals: BTreeMap<&str, f64> = taxonomy.leaves().map(|n| (n.name.as_str(), 0.0)).collect();
    for (term, &weight) in &features.weights {
        match score.candidates(term) {
            Some(cands) => {
                for c in cands {
                    if let Some(t) = totals.get_mut(c) {
                        *t += score.feature_score(term, weight, features, c);
                    }
                }
            }
            None => {
                for (leaf, t) in totals.iter_mut() {
                    *t += score.feature_score(term, weight, features, leaf);
                }
            }
        }
    }
    // BTreeMap iterates names ascending, so a strict win keeps the smallest on ties
    let mut best: Option<(&str, f64)> = None;
    for (name, total) in totals {
        if best.is_none_or(|(_, b)| beats(total, b)) {
            best = Some((name, total));
        }
    }
    let (name, _) = best.expect("taxonomy has at least one leaf");
    &taxonomy.nodes[name]
}

pub fn map_event_to_type<'t>(
    event: &Event,
    taxonomy: &'t Taxonomy,
    score: &dyn ScoreFunction,
) -> &'t TaxonomyNode {
    map_features_to_leaf(&featurize_event(event), taxonomy, score)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(name: &str, parent: Option<&str>, def: &str) -> TaxonomyNode {
        TaxonomyNode { name: name.into(), definition: def.into(), parent: parent.map(Into::into), depth: 0 }
    }

    fn event(trigger: &str, mention: &str) -> Event {
        Event { event_id: "e1".into(), doc_id: "d".into(), trigger: trigger.into(), mention: mention.into() }
    }

    #[test]
    fn chain_depths() {
        let t = Taxonomy::new(vec![node("root", None, ""), node("A", Some("root"), ""), node("B", Some("A"), "")])
            .unwrap();
        assert_eq!(t.node("root").unwrap().depth, 0);
        assert_eq!(t.node("A").unwrap().depth, 1);
        assert_eq!(t.node("B").unwrap().depth, 2);
        assert_eq!(t.path_from_root("B").unwrap(), vec!["root", "A", "B"]);
        assert_eq!(t.path_from_root("root").unwrap(), vec!["root"]);
        assert!(matches!(t.path_from_root("Z"), Err(TaxonomyError::NotFound(_))));
    }

    #[test]
    fn rejects_bad_shapes() {
        let two_roots = Taxonomy::new(vec![node("a", None, ""), node("b", None, "")]);
        assert!(matches!(two_roots, Err(TaxonomyError::InvalidTaxonomy(_))));
        let self_parent = Taxonomy::new(vec![node("r", None, ""), node("a", Some("a"), "")]);
        assert!(matches!(self_parent, Err(TaxonomyError::InvalidTaxonomy(_))));
        let cycle = Taxonomy::new(vec![node("r", None, ""), node("a", Some("b"), ""), node("b", Some("a"), "")]);
        assert!(matches!(cycle, Err(TaxonomyError::InvalidTaxonomy(_))));
        let dangling = Taxonomy::new(vec![node("r", None, ""), node("a", Some("ghost"), "")]);
        assert!(matches!(dangling, Err(TaxonomyError::InvalidTaxonomy(_))));
        let dup = Taxonomy::new(vec![node("r", None, ""), node("r", None, "")]);
        assert!(dup.is_err());
    }

    #[test]
    fn featurize_weights_trigger_twice() {
        let v = featurize_event(&event("attacked", "The army attacked the fort"));
        let expected: BTreeMap<String, f64> =
            [("attacked", 3.0), ("army", 1.0), ("fort", 1.0)].into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        assert_eq!(v.weights, expected);
        assert!(featurize_event(&event("the", "of the")).is_empty());
    }

    #[test]
    fn maps_to_best_leaf() {
        let t = Taxonomy::new(vec![
            node("Event", None, ""),
            node("Attack", Some("Event"), "violent assault attack"),
            node("Harvest", Some("Event"), "gather crops"),
        ])
        .unwrap();
        let score = CosineScore::new(&t);
        let e = event("attack", "attack army fort");
        assert_eq!(map_event_to_type(&e, &t, &score).name, "Attack");
    }

    #[test]
    fn single_leaf_always_wins() {
        let t = Taxonomy::new(vec![node("Event", None, ""), node("Only", Some("Event"), "x")]).unwrap();
        let score = CosineScore::new(&t);
        assert_eq!(map_event_to_type(&event("zzz", "qqq"), &t, &score).name, "Only");
    }

    #[test]
    fn zero_scores_tie_break_lexicographically() {
        let t = Taxonomy::new(vec![
            node("R", None, ""),
            node("B", Some("R"), "bee"),
            node("A", Some("R"), "ant"),
            node("C", Some("R"), "cat"),
        ])
        .unwrap();
        let score = CosineScore::new(&t);
        assert_eq!(map_event_to_type(&event("zebra", "zebra"), &t, &score).name, "A");
    }
}
