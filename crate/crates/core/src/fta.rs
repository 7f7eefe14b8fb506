//! Quantitative fault-tree analysis: hazard-scenario event chains,
//! propagation of basic-event probabilities to the top event, what-if
//! sensitivity, and back-allocation of a top-event target to basic-event
//! budgets.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::FtaError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "BE")]
    Basic,
    #[serde(rename = "IE")]
    Intermediate,
    #[serde(rename = "TE")]
    Top,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Gate {
    And,
    Or,
}

/// One event as it appears in the fault-tree file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventDef {
    pub id: String,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate: Option<Gate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<String>>,
    /// Free-text annotation, e.g. marking placeholder probabilities.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// The on-disk fault-tree document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaultTreeDoc {
    pub events: Vec<EventDef>,
    pub be_prob: BTreeMap<String, f64>,
    pub te: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A validated fault tree: a DAG rooted at the single top event, with
/// basic events at the leaves and a probability bound to every basic
/// event. Basic events are treated as mutually independent; that
/// assumption is declared in reports.
#[derive(Debug, Clone)]
pub struct FaultTree {
    ids: Vec<String>,
    index: BTreeMap<String, usize>,
    kinds: Vec<EventKind>,
    gates: Vec<Option<Gate>>,
    children: Vec<Vec<usize>>,
    be_prob: Vec<f64>,
    te: usize,
    /// Basic events in id order.
    basic_events: Vec<usize>,
    /// Children evaluated before parents.
    topo: Vec<usize>,
    /// Some event feeds more than one parent, so plain gate arithmetic
    /// would double-count it.
    has_repeats: bool,
}

/// How the top-event probability was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMethod {
    /// Exact bottom-up gate arithmetic; valid because no event is shared.
    GateArithmetic,
    /// Exact enumeration of all basic-event outcome combinations.
    Enumeration,
    /// Minimal-cut-set upper bound; approximate, used above the
    /// enumeration limit.
    McsUpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TeEvaluation {
    pub probability: f64,
    pub method: EvalMethod,
}

/// Enumeration is exact up to this many basic events; beyond it the
/// minimal-cut-set upper bound takes over for trees with shared events.
const ENUMERATION_LIMIT: usize = 20;
const CUT_SET_BUDGET: usize = 200_000;

impl FaultTree {
    pub fn from_doc(doc: &FaultTreeDoc) -> Result<Self, FtaError> {
        let n = doc.events.len();
        let mut index = BTreeMap::new();
        for (i, e) in doc.events.iter().enumerate() {
            if index.insert(e.id.clone(), i).is_some() {
                return Err(FtaError::InvalidTree(format!("duplicate event id {}", e.id)));
            }
        }
        let te = *index
            .get(&doc.te)
            .ok_or_else(|| FtaError::UnknownEvent(doc.te.clone()))?;
        let tops: Vec<&EventDef> = doc.events.iter().filter(|e| e.kind == EventKind::Top).collect();
        if tops.len() != 1 || doc.events[te].kind != EventKind::Top {
            return Err(FtaError::InvalidTree(
                "exactly one TE is required and `te` must name it".into(),
            ));
        }

        let mut kinds = Vec::with_capacity(n);
        let mut gates = Vec::with_capacity(n);
        let mut children: Vec<Vec<usize>> = Vec::with_capacity(n);
        for e in &doc.events {
            let kids = match &e.children {
                Some(ids) => ids
                    .iter()
                    .map(|c| {
                        index
                            .get(c)
                            .copied()
                            .ok_or_else(|| FtaError::UnknownEvent(c.clone()))
                    })
                    .collect::<Result<Vec<usize>, FtaError>>()?,
                None => Vec::new(),
            };
            match e.kind {
                EventKind::Basic => {
                    if !kids.is_empty() || e.gate.is_some() {
                        return Err(FtaError::InvalidEvent(
                            e.id.clone(),
                            "basic events are leaves without gates".into(),
                        ));
                    }
                }
                EventKind::Intermediate | EventKind::Top => {
                    if kids.is_empty() {
                        return Err(FtaError::InvalidEvent(
                            e.id.clone(),
                            "gate events need at least one child".into(),
                        ));
                    }
                    if e.gate.is_none() {
                        return Err(FtaError::InvalidEvent(
                            e.id.clone(),
                            "gate events need an AND/OR gate".into(),
                        ));
                    }
                }
            }
            kinds.push(e.kind);
            gates.push(e.gate);
            children.push(kids);
        }

        // Cycle check and reachability from the TE.
        let mut state = vec![0u8; n]; // 0 unseen, 1 on stack, 2 done
        let mut topo = Vec::with_capacity(n);
        let mut stack: Vec<(usize, usize)> = vec![(te, 0)];
        state[te] = 1;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if *next < children[node].len() {
                let child = children[node][*next];
                *next += 1;
                match state[child] {
                    0 => {
                        state[child] = 1;
                        stack.push((child, 0));
                    }
                    1 => return Err(FtaError::CyclicTree(doc.events[child].id.clone())),
                    _ => {}
                }
            } else {
                state[node] = 2;
                topo.push(node);
                stack.pop();
            }
        }
        if let Some(unreached) = (0..n).find(|&i| state[i] != 2) {
            return Err(FtaError::InvalidTree(format!(
                "event {} is unreachable from the TE",
                doc.events[unreached].id
            )));
        }

        let mut parent_counts = vec![0usize; n];
        for kids in &children {
            let distinct: BTreeSet<usize> = kids.iter().copied().collect();
            for k in distinct {
                parent_counts[k] += 1;
            }
        }
        let has_repeats = parent_counts.iter().any(|&c| c > 1)
            || children.iter().any(|kids| {
                let distinct: BTreeSet<usize> = kids.iter().copied().collect();
                distinct.len() != kids.len()
            });

        let mut be_prob = vec![f64::NAN; n];
        let mut basic_events = Vec::new();
        for (i, e) in doc.events.iter().enumerate() {
            if kinds[i] == EventKind::Basic {
                let p = *doc
                    .be_prob
                    .get(&e.id)
                    .ok_or_else(|| FtaError::UnboundBe(e.id.clone()))?;
                if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                    return Err(FtaError::ProbabilityOutOfRange {
                        id: e.id.clone(),
                        value: p,
                    });
                }
                be_prob[i] = p;
                basic_events.push(i);
            }
        }

        Ok(FaultTree {
            ids: doc.events.iter().map(|e| e.id.clone()).collect(),
            index,
            kinds,
            gates,
            children,
            be_prob,
            te,
            basic_events,
            topo,
            has_repeats,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, FtaError> {
        let doc: FaultTreeDoc = serde_json::from_str(text)
            .map_err(|e| FtaError::InvalidTree(format!("json: {e}")))?;
        FaultTree::from_doc(&doc)
    }

    pub fn te_id(&self) -> &str {
        &self.ids[self.te]
    }

    pub fn basic_event_ids(&self) -> Vec<&str> {
        self.basic_events.iter().map(|&i| self.ids[i].as_str()).collect()
    }

    pub fn be_probability(&self, id: &str) -> Result<f64, FtaError> {
        let i = self.be_index(id)?;
        Ok(self.be_prob[i])
    }

    fn be_index(&self, id: &str) -> Result<usize, FtaError> {
        let i = *self
            .index
            .get(id)
            .ok_or_else(|| FtaError::UnknownEvent(id.to_string()))?;
        if self.kinds[i] != EventKind::Basic {
            return Err(FtaError::UnknownEvent(format!("{id} is not a basic event")));
        }
        Ok(i)
    }

    pub fn with_be_probability(&self, id: &str, p: f64) -> Result<FaultTree, FtaError> {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(FtaError::ProbabilityOutOfRange {
                id: id.to_string(),
                value: p,
            });
        }
        let i = self.be_index(id)?;
        let mut tree = self.clone();
        tree.be_prob[i] = p;
        Ok(tree)
    }

    /// Top-event probability with the method recorded. Trees without
    /// shared events use exact gate arithmetic; shared-event trees are
    /// enumerated exactly up to the enumeration limit and bounded by
    /// minimal cut sets above it.
    pub fn evaluate_detailed(&self) -> Result<TeEvaluation, FtaError> {
        if !self.has_repeats {
            return Ok(TeEvaluation {
                probability: self.gate_arithmetic(),
                method: EvalMethod::GateArithmetic,
            });
        }
        if self.basic_events.len() <= ENUMERATION_LIMIT {
            return Ok(TeEvaluation {
                probability: self.enumerate(),
                method: EvalMethod::Enumeration,
            });
        }
        Ok(TeEvaluation {
            probability: self.mcs_upper_bound()?,
            method: EvalMethod::McsUpperBound,
        })
    }

    fn gate_arithmetic(&self) -> f64 {
        let mut prob = vec![0.0; self.ids.len()];
        for &node in &self.topo {
            prob[node] = match self.kinds[node] {
                EventKind::Basic => self.be_prob[node],
                _ => match self.gates[node].expect("validated gate") {
                    Gate::And => self.children[node].iter().map(|&c| prob[c]).product(),
                    Gate::Or => {
                        1.0 - self.children[node]
                            .iter()
                            .map(|&c| 1.0 - prob[c])
                            .product::<f64>()
                    }
                },
            };
        }
        prob[self.te]
    }

    fn enumerate(&self) -> f64 {
        let bes = &self.basic_events;
        let mut be_slot = vec![usize::MAX; self.ids.len()];
        for (slot, &i) in bes.iter().enumerate() {
            be_slot[i] = slot;
        }
        let mut total = 0.0;
        let mut truth = vec![false; self.ids.len()];
        for mask in 0u32..(1u32 << bes.len()) {
            let mut weight = 1.0;
            for (slot, &i) in bes.iter().enumerate() {
                let on = mask & (1 << slot) != 0;
                weight *= if on { self.be_prob[i] } else { 1.0 - self.be_prob[i] };
            }
            if weight == 0.0 {
                continue;
            }
            for &node in &self.topo {
                truth[node] = match self.kinds[node] {
                    EventKind::Basic => mask & (1 << be_slot[node]) != 0,
                    _ => match self.gates[node].expect("validated gate") {
                        Gate::And => self.children[node].iter().all(|&c| truth[c]),
                        Gate::Or => self.children[node].iter().any(|&c| truth[c]),
                    },
                };
            }
            if truth[self.te] {
                total += weight;
            }
        }
        total
    }

    /// Minimal cut sets by bottom-up expansion with absorption.
    fn minimal_cut_sets(&self) -> Result<Vec<BTreeSet<usize>>, FtaError> {
        let mut sets: Vec<Vec<BTreeSet<usize>>> = vec![Vec::new(); self.ids.len()];
        for &node in &self.topo {
            let cuts = match self.kinds[node] {
                EventKind::Basic => vec![BTreeSet::from([node])],
                _ => match self.gates[node].expect("validated gate") {
                    Gate::Or => {
                        let mut all = Vec::new();
                        for &c in &self.children[node] {
                            all.extend(sets[c].iter().cloned());
                        }
                        absorb(all)
                    }
                    Gate::And => {
                        let mut acc: Vec<BTreeSet<usize>> = vec![BTreeSet::new()];
                        for &c in &self.children[node] {
                            let mut next = Vec::new();
                            for a in &acc {
                                for b in &sets[c] {
                                    let mut u = a.clone();
                                    u.extend(b.iter().copied());
                                    next.push(u);
                                }
                                if next.len() > CUT_SET_BUDGET {
                                    return Err(FtaError::InvalidTree(
                                        "minimal-cut-set expansion exceeds budget".into(),
                                    ));
                                }
                            }
                            acc = next;
                        }
                        absorb(acc)
                    }
                },
            };
            sets[node] = cuts;
        }
        Ok(sets[self.te].clone())
    }

    fn mcs_upper_bound(&self) -> Result<f64, FtaError> {
        let cuts = self.minimal_cut_sets()?;
        let mut survive = 1.0;
        for cut in &cuts {
            let p_cut: f64 = cut.iter().map(|&i| self.be_prob[i]).product();
            survive *= 1.0 - p_cut;
        }
        Ok(1.0 - survive)
    }

    fn is_parent_of(&self, parent: usize, child: usize) -> bool {
        self.children[parent].contains(&child)
    }
}

/// Remove supersets, keeping only minimal sets.
fn absorb(mut sets: Vec<BTreeSet<usize>>) -> Vec<BTreeSet<usize>> {
    sets.sort_by_key(|s| s.len());
    let mut kept: Vec<BTreeSet<usize>> = Vec::new();
    'outer: for s in sets {
        for k in &kept {
            if k.is_subset(&s) {
                continue 'outer;
            }
        }
        kept.push(s);
    }
    kept
}

/// Top-event probability.
pub fn evaluate_te(tree: &FaultTree) -> Result<f64, FtaError> {
    Ok(tree.evaluate_detailed()?.probability)
}

/// Central finite-difference sensitivity of the TE probability to one
/// basic event's probability.
pub fn sensitivity(tree: &FaultTree, be_id: &str, delta: f64) -> Result<f64, FtaError> {
    if !(delta > 0.0) {
        return Err(FtaError::ProbabilityOutOfRange {
            id: be_id.to_string(),
            value: delta,
        });
    }
    let p = tree.be_probability(be_id)?;
    if p - delta < 0.0 || p + delta > 1.0 {
        return Err(FtaError::ProbabilityOutOfRange {
            id: be_id.to_string(),
            value: p,
        });
    }
    let hi = evaluate_te(&tree.with_be_probability(be_id, p + delta)?)?;
    let lo = evaluate_te(&tree.with_be_probability(be_id, p - delta)?)?;
    Ok((hi - lo) / (2.0 * delta))
}

/// Which basic events an allocation may rescale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum AllocationPolicy {
    /// Scale every basic event by a common factor.
    UniformScaling,
    /// Scale only the listed basic events; the rest keep their current
    /// probabilities.
    FixedSubset { ids: Vec<String> },
}

/// Outcome of a budget allocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    pub scale: f64,
    pub be_prob: BTreeMap<String, f64>,
    pub achieved_te: f64,
}

const ALLOCATION_BAND: f64 = 1e-6;
const SCALE_TOLERANCE: f64 = 1e-9;

/// Find a common scale on the selected basic events so that the TE
/// probability lands in [target*(1-1e-6), target]. Scaled probabilities
/// saturate at 1; the target is infeasible when even saturation cannot
/// reach it (or, for a fixed subset, when the unscaled floor already
/// exceeds it).
pub fn allocate_budget(
    tree: &FaultTree,
    te_target: f64,
    policy: &AllocationPolicy,
) -> Result<Allocation, FtaError> {
    if !(te_target > 0.0 && te_target < 1.0) {
        return Err(FtaError::Infeasible {
            target: te_target,
            reason: "target must lie strictly between 0 and 1".into(),
        });
    }
    let scaled_ids: Vec<String> = match policy {
        AllocationPolicy::UniformScaling => {
            tree.basic_event_ids().iter().map(|s| s.to_string()).collect()
        }
        AllocationPolicy::FixedSubset { ids } => {
            for id in ids {
                tree.be_probability(id)?;
            }
            ids.clone()
        }
    };
    let base: BTreeMap<String, f64> = tree
        .basic_event_ids()
        .iter()
        .map(|id| (id.to_string(), tree.be_probability(id).expect("validated")))
        .collect();

    let apply = |scale: f64| -> Result<(FaultTree, BTreeMap<String, f64>), FtaError> {
        let mut t = tree.clone();
        let mut probs = base.clone();
        for id in &scaled_ids {
            let p = (base[id] * scale).min(1.0);
            t = t.with_be_probability(id, p)?;
            probs.insert(id.clone(), p);
        }
        Ok((t, probs))
    };
    let te_at = |scale: f64| -> Result<f64, FtaError> { evaluate_te(&apply(scale)?.0) };

    let finish = |scale: f64| -> Result<Allocation, FtaError> {
        let (t, probs) = apply(scale)?;
        Ok(Allocation {
            scale,
            be_prob: probs,
            achieved_te: evaluate_te(&t)?,
        })
    };

    let at_one = te_at(1.0)?;
    if at_one <= te_target && at_one >= te_target * (1.0 - ALLOCATION_BAND) {
        return finish(1.0);
    }

    let (mut lo, mut hi) = if at_one > te_target {
        if te_at(0.0)? > te_target {
            return Err(FtaError::Infeasible {
                target: te_target,
                reason: "unscaled events alone exceed the target".into(),
            });
        }
        (0.0, 1.0)
    } else {
        // Saturation point: beyond it every scaled probability is 1.
        let min_positive = scaled_ids
            .iter()
            .map(|id| base[id])
            .filter(|&p| p > 0.0)
            .fold(f64::INFINITY, f64::min);
        if !min_positive.is_finite() {
            return Err(FtaError::Infeasible {
                target: te_target,
                reason: "all scalable events have probability 0".into(),
            });
        }
        let saturation = 1.0 / min_positive;
        if te_at(saturation)? < te_target {
            return Err(FtaError::Infeasible {
                target: te_target,
                reason: "target above the maximum reachable TE probability".into(),
            });
        }
        (1.0, saturation)
    };

    for _ in 0..200 {
        let te_lo = te_at(lo)?;
        if te_lo >= te_target * (1.0 - ALLOCATION_BAND)
            && te_lo <= te_target
        {
            break;
        }
        if hi - lo <= SCALE_TOLERANCE * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if te_at(mid)? <= te_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let out = finish(lo)?;
    if out.achieved_te > te_target || out.achieved_te < te_target * (1.0 - ALLOCATION_BAND) {
        return Err(FtaError::Infeasible {
            target: te_target,
            reason: format!(
                "bisection stalled at TE {} (scale {})",
                out.achieved_te, out.scale
            ),
        });
    }
    Ok(out)
}

/// A hazard-scenario event chain: ordered event ids from cause to
/// consequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventChain(pub Vec<String>);

/// Verify that the chain is a leaf-to-root path of the tree: it starts at
/// a basic event, ends at the top event, and each step moves to a direct
/// parent.
pub fn chain_to_path(chain: &EventChain, tree: &FaultTree) -> Result<(), FtaError> {
    let ids = &chain.0;
    if ids.len() < 2 {
        return Err(FtaError::PathNotInTree(
            "chain needs at least a cause and a consequence".into(),
        ));
    }
    let indices: Vec<usize> = ids
        .iter()
        .map(|id| {
            tree.index
                .get(id)
                .copied()
                .ok_or_else(|| FtaError::PathNotInTree(format!("unknown event {id}")))
        })
        .collect::<Result<_, _>>()?;
    let first = indices[0];
    if tree.kinds[first] != EventKind::Basic {
        return Err(FtaError::PathNotInTree(format!(
            "chain must start at a basic event, {} is not one",
            ids[0]
        )));
    }
    let last = *indices.last().expect("len checked");
    if last != tree.te {
        return Err(FtaError::PathNotInTree(format!(
            "chain must end at the top event {}, found {}",
            tree.te_id(),
            ids.last().expect("len checked")
        )));
    }
    for w in indices.windows(2) {
        if !tree.is_parent_of(w[1], w[0]) {
            return Err(FtaError::PathNotInTree(format!(
                "{} is not a direct parent of {}",
                tree.ids[w[1]], tree.ids[w[0]]
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn be(id: &str) -> EventDef {
        EventDef {
            id: id.into(),
            kind: EventKind::Basic,
            gate: None,
            children: None,
            note: None,
        }
    }

    fn gate(id: &str, kind: EventKind, g: Gate, children: &[&str]) -> EventDef {
        EventDef {
            id: id.into(),
            kind,
            gate: Some(g),
            children: Some(children.iter().map(|s| s.to_string()).collect()),
            note: None,
        }
    }

    fn two_be_tree(g: Gate, pa: f64, pb: f64) -> FaultTree {
        let doc = FaultTreeDoc {
            events: vec![be("A"), be("B"), gate("TE", EventKind::Top, g, &["A", "B"])],
            be_prob: BTreeMap::from([("A".to_string(), pa), ("B".to_string(), pb)]),
            te: "TE".into(),
            note: None,
        };
        FaultTree::from_doc(&doc).unwrap()
    }

    #[test]
    fn or_gate_hand_value() {
        let tree = two_be_tree(Gate::Or, 0.1, 0.2);
        let eval = tree.evaluate_detailed().unwrap();
        assert_abs_diff_eq!(eval.probability, 0.28, epsilon = 1e-15);
        assert_eq!(eval.method, EvalMethod::GateArithmetic);
    }

    #[test]
    fn and_gate_hand_value() {
        let tree = two_be_tree(Gate::And, 0.1, 0.2);
        assert_abs_diff_eq!(evaluate_te(&tree).unwrap(), 0.02, epsilon = 1e-15);
    }

    #[test]
    fn repeated_be_uses_enumeration_and_is_exact() {
        // TE = OR(AND(A,B), AND(A,C)) = A and (B or C).
        let doc = FaultTreeDoc {
            events: vec![
                be("A"),
                be("B"),
                be("C"),
                gate("I1", EventKind::Intermediate, Gate::And, &["A", "B"]),
                gate("I2", EventKind::Intermediate, Gate::And, &["A", "C"]),
                gate("TE", EventKind::Top, Gate::Or, &["I1", "I2"]),
            ],
            be_prob: BTreeMap::from([
                ("A".to_string(), 0.3),
                ("B".to_string(), 0.5),
                ("C".to_string(), 0.7),
            ]),
            te: "TE".into(),
            note: None,
        };
        let tree = FaultTree::from_doc(&doc).unwrap();
        let eval = tree.evaluate_detailed().unwrap();
        assert_eq!(eval.method, EvalMethod::Enumeration);
        let exact = 0.3 * (1.0 - 0.5 * 0.3);
        assert_abs_diff_eq!(eval.probability, exact, epsilon = 1e-15);
    }

    #[test]
    fn cyclic_tree_rejected() {
        let doc = FaultTreeDoc {
            events: vec![
                be("A"),
                gate("I1", EventKind::Intermediate, Gate::Or, &["I2"]),
                gate("I2", EventKind::Intermediate, Gate::Or, &["I1", "A"]),
                gate("TE", EventKind::Top, Gate::Or, &["I1"]),
            ],
            be_prob: BTreeMap::from([("A".to_string(), 0.1)]),
            te: "TE".into(),
            note: None,
        };
        assert!(matches!(
            FaultTree::from_doc(&doc),
            Err(FtaError::CyclicTree(_))
        ));
    }

    #[test]
    fn unbound_be_rejected() {
        let doc = FaultTreeDoc {
            events: vec![be("A"), gate("TE", EventKind::Top, Gate::Or, &["A"])],
            be_prob: BTreeMap::new(),
            te: "TE".into(),
            note: None,
        };
        assert!(matches!(FaultTree::from_doc(&doc), Err(FtaError::UnboundBe(_))));
    }

    #[test]
    fn sensitivity_or_gate_matches_analytic() {
        let tree = two_be_tree(Gate::Or, 0.1, 0.2);
        let s = sensitivity(&tree, "A", 0.01).unwrap();
        assert_abs_diff_eq!(s, 0.8, epsilon = 1e-9);
    }

    #[test]
    fn sensitivity_and_gate_matches_analytic() {
        let tree = two_be_tree(Gate::And, 0.1, 0.2);
        let s = sensitivity(&tree, "A", 0.01).unwrap();
        assert_abs_diff_eq!(s, 0.2, epsilon = 1e-9);
    }

    #[test]
    fn sensitivity_unknown_be_rejected() {
        let tree = two_be_tree(Gate::Or, 0.1, 0.2);
        assert!(matches!(
            sensitivity(&tree, "Z", 0.01),
            Err(FtaError::UnknownEvent(_))
        ));
    }

    #[test]
    fn sensitivity_out_of_range_delta_rejected() {
        let tree = two_be_tree(Gate::Or, 0.005, 0.2);
        assert!(matches!(
            sensitivity(&tree, "A", 0.01),
            Err(FtaError::ProbabilityOutOfRange { .. })
        ));
    }

    #[test]
    fn allocation_at_target_returns_current_probs() {
        let tree = two_be_tree(Gate::Or, 0.1, 0.2);
        let alloc = allocate_budget(&tree, 0.28, &AllocationPolicy::UniformScaling).unwrap();
        assert_eq!(alloc.scale, 1.0);
        assert_eq!(alloc.be_prob["A"], 0.1);
        assert_eq!(alloc.be_prob["B"], 0.2);
    }

    #[test]
    fn allocation_exact_arithmetic_target() {
        let tree = two_be_tree(Gate::Or, 0.1, 0.1);
        let alloc = allocate_budget(&tree, 0.19, &AllocationPolicy::UniformScaling).unwrap();
        assert_eq!(alloc.scale, 1.0);
    }

    #[test]
    fn allocation_scales_down_to_target() {
        let tree = two_be_tree(Gate::Or, 0.1, 0.2);
        let target = 0.1;
        let alloc = allocate_budget(&tree, target, &AllocationPolicy::UniformScaling).unwrap();
        assert!(alloc.achieved_te <= target);
        assert!(alloc.achieved_te >= target * (1.0 - 1e-6));
        assert!(alloc.scale < 1.0);
    }

    #[test]
    fn allocation_scales_up_to_target() {
        let tree = two_be_tree(Gate::Or, 0.1, 0.2);
        let target = 0.5;
        let alloc = allocate_budget(&tree, target, &AllocationPolicy::UniformScaling).unwrap();
        assert!(alloc.achieved_te <= target && alloc.achieved_te >= target * (1.0 - 1e-6));
        assert!(alloc.scale > 1.0);
    }

    #[test]
    fn allocation_infeasible_with_zero_probability_and() {
        let tree = two_be_tree(Gate::And, 0.0, 0.2);
        assert!(matches!(
            allocate_budget(&tree, 0.5, &AllocationPolicy::UniformScaling),
            Err(FtaError::Infeasible { .. })
        ));
    }

    #[test]
    fn allocation_fixed_subset_keeps_other_probs() {
        let tree = two_be_tree(Gate::Or, 0.1, 0.2);
        let alloc = allocate_budget(
            &tree,
            0.4,
            &AllocationPolicy::FixedSubset { ids: vec!["A".into()] },
        )
        .unwrap();
        assert_eq!(alloc.be_prob["B"], 0.2);
        assert!(alloc.be_prob["A"] > 0.1);
        assert!(alloc.achieved_te <= 0.4 && alloc.achieved_te >= 0.4 * (1.0 - 1e-6));
    }

    fn chain_tree() -> FaultTree {
        let doc = FaultTreeDoc {
            events: vec![
                be("BE-0-1"),
                be("BE-0-2"),
                gate("IE-1-1", EventKind::Intermediate, Gate::Or, &["BE-0-1", "BE-0-2"]),
                gate("IE-2-2", EventKind::Intermediate, Gate::Or, &["IE-1-1"]),
                gate("IE-3-2", EventKind::Intermediate, Gate::Or, &["IE-2-2"]),
                gate("TE", EventKind::Top, Gate::Or, &["IE-3-2"]),
            ],
            be_prob: BTreeMap::from([("BE-0-1".to_string(), 0.01), ("BE-0-2".to_string(), 0.02)]),
            te: "TE".into(),
            note: None,
        };
        FaultTree::from_doc(&doc).unwrap()
    }

    #[test]
    fn valid_chain_accepted() {
        let tree = chain_tree();
        let chain = EventChain(vec![
            "BE-0-1".into(),
            "IE-1-1".into(),
            "IE-2-2".into(),
            "IE-3-2".into(),
            "TE".into(),
        ]);
        chain_to_path(&chain, &tree).unwrap();
    }

    #[test]
    fn reversed_chain_rejected() {
        let tree = chain_tree();
        let chain = EventChain(vec![
            "TE".into(),
            "IE-3-2".into(),
            "IE-2-2".into(),
            "IE-1-1".into(),
            "BE-0-1".into(),
        ]);
        assert!(matches!(
            chain_to_path(&chain, &tree),
            Err(FtaError::PathNotInTree(_))
        ));
    }

    #[test]
    fn chain_skipping_a_level_rejected() {
        let tree = chain_tree();
        let chain = EventChain(vec![
            "BE-0-1".into(),
            "IE-1-1".into(),
            "IE-3-2".into(),
            "TE".into(),
        ]);
        assert!(matches!(
            chain_to_path(&chain, &tree),
            Err(FtaError::PathNotInTree(_))
        ));
    }

    #[test]
    fn te_is_monotone_in_be_probabilities() {
        let tree = chain_tree();
        let base = evaluate_te(&tree).unwrap();
        let bumped = evaluate_te(&tree.with_be_probability("BE-0-1", 0.5).unwrap()).unwrap();
        assert!(bumped >= base);
    }

    #[test]
    fn mcs_upper_bound_close_to_exact_for_small_probs() {
        // Same shared-event tree as the enumeration test, with rare
        // events; the MCS bound should be close to the exact value and
        // never below it.
        let doc = FaultTreeDoc {
            events: vec![
                be("A"),
                be("B"),
                be("C"),
                gate("I1", EventKind::Intermediate, Gate::And, &["A", "B"]),
                gate("I2", EventKind::Intermediate, Gate::And, &["A", "C"]),
                gate("TE", EventKind::Top, Gate::Or, &["I1", "I2"]),
            ],
            be_prob: BTreeMap::from([
                ("A".to_string(), 1e-3),
                ("B".to_string(), 2e-3),
                ("C".to_string(), 3e-3),
            ]),
            te: "TE".into(),
            note: None,
        };
        let tree = FaultTree::from_doc(&doc).unwrap();
        let exact = tree.enumerate();
        let bound = tree.mcs_upper_bound().unwrap();
        assert!(bound >= exact - 1e-15);
        assert!((bound - exact) / exact < 1e-2);
    }
}
