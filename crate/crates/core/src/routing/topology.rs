//! Topology files: routers, directed links, demand pairs and candidate paths.
//!
//! ```text
//! # comment
//! [routers]
//! A B C
//! [links]
//! A -> B 1.0        # one directed link
//! B <-> C 2.5       # a link in each direction
//! [demands]
//! d0 A C 0.4 1.0    # id, source, sink, base-demand range
//! [paths]
//! d0 A B C          # demand id, then the node sequence
//! d0 A C
//! ```

use std::collections::HashMap;

use crate::{Error, Result};

const SMALL_TOPO: &str = include_str!("../../data/small.topo");
const LARGE_TOPO: &str = include_str!("../../data/large.topo");

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub src: usize,
    pub dst: usize,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandPair {
    pub id: String,
    pub src: usize,
    pub dst: usize,
    /// Range of the per-episode base demand.
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub nodes: Vec<usize>,
    /// Link ids in traversal order.
    pub links: Vec<usize>,
}

/// A validated routing topology. Demand pair `i` is controlled by agent `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub routers: Vec<String>,
    pub links: Vec<Link>,
    pub demands: Vec<DemandPair>,
    /// Candidate paths per demand pair.
    pub paths: Vec<Vec<Path>>,
}

#[derive(PartialEq, Eq, Clone, Copy)]
enum Section {
    None,
    Routers,
    Links,
    Demands,
    Paths,
}

fn invalid(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Validation(format!("line {line}: {msg}"))
}

fn number(tok: &str, line: usize, what: &str) -> Result<f64> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| invalid(line, format!("{what} '{tok}' is not a number")))
}

/// Parses and validates topology text.
pub fn load_topology(spec_text: &str) -> Result<Topology> {
    let mut routers: Vec<String> = Vec::new();
    let mut router_ix: HashMap<String, usize> = HashMap::new();
    let mut links: Vec<Link> = Vec::new();
    let mut demands: Vec<DemandPair> = Vec::new();
    let mut raw_paths: Vec<(usize, String, Vec<String>)> = Vec::new();
    let mut section = Section::None;

    let node = |ix: &HashMap<String, usize>, name: &str, line: usize| -> Result<usize> {
        ix.get(name)
            .copied()
            .ok_or_else(|| invalid(line, format!("unknown node '{name}'")))
    };

    for (n, raw) in spec_text.lines().enumerate() {
        let line = n + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        if text.starts_with('[') {
            section = match text {
                "[routers]" => Section::Routers,
                "[links]" => Section::Links,
                "[demands]" => Section::Demands,
                "[paths]" => Section::Paths,
                other => return Err(invalid(line, format!("unknown section {other}"))),
            };
            continue;
        }
        let toks: Vec<&str> = text.split_whitespace().collect();
        match section {
            Section::None => return Err(invalid(line, "content before the first section")),
            Section::Routers => {
                for name in toks {
                    if router_ix.contains_key(name) {
                        return Err(invalid(line, format!("duplicate router '{name}'")));
                    }
                    router_ix.insert(name.to_owned(), routers.len());
                    routers.push(name.to_owned());
                }
            }
            Section::Links => {
                if toks.len() != 4 {
                    return Err(invalid(line, "expected '<src> -> <dst> <capacity>'"));
                }
                let a = node(&router_ix, toks[0], line)?;
                let b = node(&router_ix, toks[2], line)?;
                let cap = number(toks[3], line, "capacity")?;
                if cap <= 0.0 {
                    return Err(invalid(
                        line,
                        format!("link {} {} {} has nonpositive capacity {cap}", toks[0], toks[1], toks[2]),
                    ));
                }
                match toks[1] {
                    "->" => links.push(Link { src: a, dst: b, capacity: cap }),
                    "<->" => {
                        links.push(Link { src: a, dst: b, capacity: cap });
                        links.push(Link { src: b, dst: a, capacity: cap });
                    }
                    op => return Err(invalid(line, format!("unknown link operator '{op}'"))),
                }
            }
            Section::Demands => {
                if toks.len() != 5 {
                    return Err(invalid(line, "expected '<id> <src> <dst> <min> <max>'"));
                }
                if demands.iter().any(|d| d.id == toks[0]) {
                    return Err(invalid(line, format!("duplicate demand '{}'", toks[0])));
                }
                let src = node(&router_ix, toks[1], line)?;
                let dst = node(&router_ix, toks[2], line)?;
                let min = number(toks[3], line, "demand minimum")?;
                let max = number(toks[4], line, "demand maximum")?;
                if src == dst || min < 0.0 || max < min {
                    return Err(invalid(line, format!("demand '{}' is malformed", toks[0])));
                }
                demands.push(DemandPair {
                    id: toks[0].to_owned(),
                    src,
                    dst,
                    min,
                    max,
                });
            }
            Section::Paths => {
                if toks.len() < 3 {
                    return Err(invalid(line, "expected '<demand id> <node> <node> ...'"));
                }
                raw_paths.push((
                    line,
                    toks[0].to_owned(),
                    toks[1..].iter().map(|s| s.to_string()).collect(),
                ));
            }
        }
    }

    let mut paths: Vec<Vec<Path>> = vec![Vec::new(); demands.len()];
    for (line, demand_id, names) in raw_paths {
        let d = demands
            .iter()
            .position(|d| d.id == demand_id)
            .ok_or_else(|| invalid(line, format!("path for unknown demand '{demand_id}'")))?;
        let nodes = names
            .iter()
            .map(|n| node(&router_ix, n, line))
            .collect::<Result<Vec<_>>>()?;
        let demand = &demands[d];
        if nodes[0] != demand.src || *nodes.last().unwrap() != demand.dst {
            return Err(invalid(
                line,
                format!("path {} does not connect {}", names.join("-"), demand.id),
            ));
        }
        for (i, a) in nodes.iter().enumerate() {
            if nodes[i + 1..].contains(a) {
                return Err(invalid(line, format!("path {} revisits {}", names.join("-"), routers[*a])));
            }
        }
        let mut path_links = Vec::with_capacity(nodes.len() - 1);
        for w in nodes.windows(2) {
            let l = links
                .iter()
                .position(|l| l.src == w[0] && l.dst == w[1])
                .ok_or_else(|| {
                    invalid(
                        line,
                        format!(
                            "path {} uses missing link {} -> {}",
                            names.join("-"),
                            routers[w[0]],
                            routers[w[1]]
                        ),
                    )
                })?;
            path_links.push(l);
        }
        paths[d].push(Path {
            nodes,
            links: path_links,
        });
    }

    if demands.is_empty() {
        return Err(Error::Validation("topology declares no demands".into()));
    }
    for (d, p) in demands.iter().zip(&paths) {
        if p.len() < 2 {
            return Err(Error::Validation(format!(
                "demand '{}' has {} candidate path(s); at least 2 are required",
                d.id,
                p.len()
            )));
        }
    }

    Ok(Topology {
        routers,
        links,
        demands,
        paths,
    })
}

impl Topology {
    /// The shipped six-router topology with two demand pairs sharing link E -> F.
    pub fn small() -> Self {
        load_topology(SMALL_TOPO).expect("shipped small topology is valid")
    }

    /// The shipped 11-router, 14-link backbone with four demand pairs.
    pub fn large() -> Self {
        load_topology(LARGE_TOPO).expect("shipped large topology is valid")
    }

    pub fn small_text() -> &'static str {
        SMALL_TOPO
    }

    pub fn large_text() -> &'static str {
        LARGE_TOPO
    }

    pub fn n_agents(&self) -> usize {
        self.demands.len()
    }

    pub fn router(&self, name: &str) -> Option<usize> {
        self.routers.iter().position(|r| r == name)
    }

    pub fn link_between(&self, src: usize, dst: usize) -> Option<usize> {
        self.links.iter().position(|l| l.src == src && l.dst == dst)
    }

    /// Number of router pairs connected in both directions.
    pub fn bidirectional_link_count(&self) -> usize {
        self.links
            .iter()
            .filter(|l| l.src < l.dst && self.link_between(l.dst, l.src).is_some())
            .count()
    }

    /// Sorted link ids on any of the agent's candidate paths.
    pub fn observable_links(&self, agent: usize) -> Vec<usize> {
        let mut ls: Vec<usize> = self.paths[agent]
            .iter()
            .flat_map(|p| p.links.iter().copied())
            .collect();
        ls.sort_unstable();
        ls.dedup();
        ls
    }

    pub fn path_names(&self, agent: usize) -> Vec<String> {
        self.paths[agent]
            .iter()
            .map(|p| p.nodes.iter().map(|&n| self.routers[n].as_str()).collect())
            .collect()
    }

    pub fn link_name(&self, link: usize) -> String {
        let l = &self.links[link];
        format!("{}{}", self.routers[l.src], self.routers[l.dst])
    }
}
