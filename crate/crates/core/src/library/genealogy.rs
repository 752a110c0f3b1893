use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{LibraryError, Origin, Result, SkillId, SkillRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenealogyNode {
    pub id: SkillId,
    pub origin: Origin,
    pub statement: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<GenealogyNode>,
}

impl GenealogyNode {
    pub fn size(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _| n += 1);
        n
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let mut deepest = 0;
        let mut stack = vec![(self, 0)];
        while let Some((node, d)) = stack.pop() {
            deepest = deepest.max(d);
            stack.extend(node.children.iter().map(|c| (c, d + 1)));
        }
        deepest
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a GenealogyNode, Option<SkillId>)) {
        let mut stack = vec![(self, None)];
        while let Some((node, parent)) = stack.pop() {
            f(node, parent);
            for child in node.children.iter().rev() {
                stack.push((child, Some(node.id)));
            }
        }
    }
}

/// The skill-evolution forest: roots are prover and request-solver skills,
/// children are directional transformations of their parent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<GenealogyNode>,
}

impl Drop for GenealogyNode {
    fn drop(&mut self) {
        let mut stack = std::mem::take(&mut self.children);
        while let Some(mut node) = stack.pop() {
            stack.append(&mut node.children);
        }
    }
}

impl Forest {
    pub fn build(skills: &[SkillRecord]) -> Result<Forest> {
        let known: HashMap<SkillId, &SkillRecord> = skills.iter().map(|s| (s.id, s)).collect();
        let mut children: HashMap<SkillId, Vec<SkillId>> = HashMap::new();
        let mut roots = Vec::new();
        for s in skills {
            match s.parent_id {
                None => roots.push(s.id),
                Some(p) => {
                    if !known.contains_key(&p) {
                        return Err(LibraryError::DanglingParent { child: s.id, parent: p });
                    }
                    children.entry(p).or_default().push(s.id);
                }
            }
        }

        // Build bottom-up with an explicit post-order so deep chains do not
        // recurse.
        let mut built: HashMap<SkillId, GenealogyNode> = HashMap::new();
        let mut trees = Vec::with_capacity(roots.len());
        for root in roots {
            let mut stack = vec![(root, false)];
            while let Some((id, expanded)) = stack.pop() {
                let kids = children.get(&id).map(Vec::as_slice).unwrap_or(&[]);
                if expanded {
                    let record = known[&id];
                    let node = GenealogyNode {
                        id,
                        origin: record.origin,
                        statement: record.statement.clone(),
                        children: kids.iter().map(|k| built.remove(k).expect("child built first")).collect(),
                    };
                    built.insert(id, node);
                } else {
                    stack.push((id, true));
                    stack.extend(kids.iter().rev().map(|&k| (k, false)));
                }
            }
            trees.push(built.remove(&root).expect("root built"));
        }

        let placed: usize = trees.iter().map(GenealogyNode::size).sum();
        if placed != skills.len() {
            // Whatever was not reached from a root sits on a parent cycle.
            let mut reached = std::collections::HashSet::new();
            for t in &trees {
                t.visit(&mut |n, _| {
                    reached.insert(n.id);
                });
            }
            let stuck = skills.iter().find(|s| !reached.contains(&s.id)).expect("some skill unreached");
            return Err(LibraryError::Cycle(stuck.id));
        }
        Ok(Forest { trees })
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(GenealogyNode::size).sum()
    }

    pub fn edges(&self) -> Vec<(SkillId, SkillId)> {
        let mut out = Vec::new();
        for t in &self.trees {
            t.visit(&mut |n, parent| {
                if let Some(p) = parent {
                    out.push((p, n.id));
                }
            });
        }
        out
    }

    /// Indented outline, one skill per line, children two spaces deeper
    /// than their parent.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.trees {
            let mut stack = vec![(t, 0usize)];
            while let Some((n, depth)) = stack.pop() {
                let _ = writeln!(out, "{}{} [{}] {}", "  ".repeat(depth), n.id, n.origin, truncate(&n.statement, 80));
                stack.extend(n.children.iter().rev().map(|c| (c, depth + 1)));
            }
        }
        out
    }

    /// Graphviz DOT rendering.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph skills {\n  rankdir=TB;\n  node [shape=box, fontname=\"monospace\"];\n");
        for t in &self.trees {
            t.visit(&mut |n, _| {
                let label = format!("{}\\n{}\\n{}", n.id, n.origin, dot_escape(&truncate(&n.statement, 80)));
                let _ = writeln!(out, "  \"{}\" [label=\"{}\"];", n.id, label);
            });
        }
        for (p, c) in self.edges() {
            let _ = writeln!(out, "  \"{p}\" -> \"{c}\";");
        }
        out.push_str("}\n");
        out
    }
}

fn truncate(s: &str, max: usize) -> String {
    let s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if s.chars().count() <= max {
        s
    } else {
        let mut t: String = s.chars().take(max).collect();
        t.push_str("...");
        t
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Skill counts and fractions per origin.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OriginDistribution {
    pub total: usize,
    pub counts: BTreeMap<Origin, usize>,
}

impl OriginDistribution {
    pub fn from_skills(skills: &[SkillRecord]) -> Self {
        let mut counts = BTreeMap::new();
        for s in skills {
            *counts.entry(s.origin).or_insert(0) += 1;
        }
        Self { total: skills.len(), counts }
    }

    pub fn count(&self, origin: Origin) -> usize {
        self.counts.get(&origin).copied().unwrap_or(0)
    }

    fn frac(&self, n: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            n as f64 / self.total as f64
        }
    }

    pub fn fraction(&self, origin: Origin) -> f64 {
        self.frac(self.count(origin))
    }

    pub fn prover_fraction(&self) -> f64 {
        self.fraction(Origin::Prover)
    }

    pub fn request_solver_fraction(&self) -> f64 {
        self.fraction(Origin::RequestSolver)
    }

    /// All four directional origins together.
    pub fn directional_fraction(&self) -> f64 {
        let n = self.counts.iter().filter(|(o, _)| !o.is_root()).map(|(_, c)| c).sum();
        self.frac(n)
    }
}
