use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Node<T> {
    children: BTreeMap<T, usize>,
    /// Set on the node reached by consuming an end-of-identifier sentinel.
    value: Option<String>,
}

impl<T> Default for Node<T> {
    fn default() -> Self {
        Node { children: BTreeMap::new(), value: None }
    }
}

/// Prefix tree over token sequences. Every stored sequence is terminated by
/// a sentinel token, which keeps the stored set prefix-free: no complete
/// path is a strict prefix of another.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixTrie<T> {
    nodes: Vec<Node<T>>,
    sentinel: T,
    len: usize,
    max_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("sequence already present for `{existing}`")]
pub struct DuplicateSequence {
    pub existing: String,
}

impl<T: Ord + Clone> PrefixTrie<T> {
    pub fn new(sentinel: T) -> Self {
        PrefixTrie { nodes: vec![Node::default()], sentinel, len: 0, max_depth: 0 }
    }

    pub fn sentinel(&self) -> &T {
        &self.sentinel
    }

    /// Number of stored sequences.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Longest stored sequence, sentinel excluded.
    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn insert(&mut self, tokens: &[T], value: String) -> Result<(), DuplicateSequence> {
        let mut at = 0;
        for tok in tokens.iter().chain(std::iter::once(&self.sentinel)) {
            at = match self.nodes[at].children.get(tok) {
                Some(&next) => next,
                None => {
                    self.nodes.push(Node::default());
                    let next = self.nodes.len() - 1;
                    self.nodes[at].children.insert(tok.clone(), next);
                    next
                }
            };
        }
        if let Some(existing) = &self.nodes[at].value {
            return Err(DuplicateSequence { existing: existing.clone() });
        }
        self.nodes[at].value = Some(value);
        self.len += 1;
        self.max_depth = self.max_depth.max(tokens.len());
        Ok(())
    }

    fn node_at(&self, prefix: &[T]) -> Option<usize> {
        let mut at = 0;
        for tok in prefix {
            at = *self.nodes[at].children.get(tok)?;
        }
        Some(at)
    }

    /// Tokens that may follow `prefix`, in ascending order; includes the
    /// sentinel where a stored sequence ends. Empty when the prefix is not
    /// in the trie or already ends with the sentinel.
    pub fn valid_next(&self, prefix: &[T]) -> Vec<&T> {
        self.node_at(prefix)
            .map(|n| self.nodes[n].children.keys().collect())
            .unwrap_or_default()
    }

    /// Value stored for `tokens` (sentinel not included).
    pub fn get(&self, tokens: &[T]) -> Option<&str> {
        let n = self.node_at(tokens)?;
        let end = *self.nodes[n].children.get(&self.sentinel)?;
        self.nodes[end].value.as_deref()
    }

    pub fn contains_prefix(&self, prefix: &[T]) -> bool {
        self.node_at(prefix).is_some()
    }

    /// All stored sequences (without sentinel) with their values, in
    /// lexicographic token order.
    pub fn enumerate(&self) -> Vec<(Vec<T>, String)> {
        let mut out = Vec::with_capacity(self.len);
        let mut stack: Vec<(usize, Vec<T>)> = vec![(0, Vec::new())];
        while let Some((n, path)) = stack.pop() {
            for (tok, &child) in self.nodes[n].children.iter().rev() {
                if *tok == self.sentinel {
                    if let Some(v) = &self.nodes[child].value {
                        out.push((path.clone(), v.clone()));
                    }
                } else {
                    let mut p = path.clone();
                    p.push(tok.clone());
                    stack.push((child, p));
                }
            }
        }
        out.sort();
        out
    }

    /// Re-keys the trie through `f`, e.g. from token strings to vocabulary
    /// ids.
    pub fn map_tokens<U: Ord + Clone>(&self, mut f: impl FnMut(&T) -> U) -> PrefixTrie<U> {
        PrefixTrie {
            nodes: self
                .nodes
                .iter()
                .map(|n| Node {
                    children: n.children.iter().map(|(k, &v)| (f(k), v)).collect(),
                    value: n.value.clone(),
                })
                .collect(),
            sentinel: f(&self.sentinel),
            len: self.len,
            max_depth: self.max_depth,
        }
    }
}
