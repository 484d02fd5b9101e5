/// Character trie mapping token surfaces to ids.
#[derive(Debug, Clone)]
pub(crate) struct Trie {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Default)]
struct Node {
    children: Vec<(char, u32)>,
    token: Option<u32>,
}

impl Default for Trie {
    fn default() -> Self {
        Self {
            nodes: vec![Node::default()],
        }
    }
}

impl Trie {
    pub fn insert(&mut self, surface: &str, token: u32) {
        let mut node = 0usize;
        for c in surface.chars() {
            node = match self.nodes[node].children.binary_search_by_key(&c, |&(k, _)| k) {
                Ok(i) => self.nodes[node].children[i].1 as usize,
                Err(i) => {
                    let child = self.nodes.len();
                    self.nodes.push(Node::default());
                    self.nodes[node].children.insert(i, (c, child as u32));
                    child
                }
            };
        }
        self.nodes[node].token = Some(token);
    }

    /// Calls `f(token, end)` for every token that is a prefix of
    /// `text[start..]`, shortest first.
    pub fn prefixes(&self, text: &[char], start: usize, mut f: impl FnMut(u32, usize)) {
        let mut node = 0usize;
        for (k, c) in text[start..].iter().enumerate() {
            let children = &self.nodes[node].children;
            match children.binary_search_by_key(c, |&(k, _)| k) {
                Ok(i) => node = children[i].1 as usize,
                Err(_) => return,
            }
            if let Some(t) = self.nodes[node].token {
                f(t, start + k + 1);
            }
        }
    }
}
