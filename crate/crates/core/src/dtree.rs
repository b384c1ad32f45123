//! Binary univariate decision trees: induction, rule extraction and
//! misclassification rates.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub sample_index: u32,
    /// Values aligned with the learning set's attribute names.
    pub attributes: Vec<f64>,
    pub label: bool,
    /// £ for the hour; higher is better.
    pub profit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub leaf_upper: f64,
    pub leaf_lower: f64,
    pub prune_low: f64,
    pub prune_high: f64,
    pub max_depth: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            leaf_upper: 0.9,
            leaf_lower: 0.1,
            prune_low: 0.42,
            prune_high: 0.58,
            max_depth: 25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "significance level {} outside (0, 1)",
                self.alpha
            )));
        }
        if !(0.0 < self.prune_low && self.prune_low <= self.prune_high && self.prune_high < 1.0) {
            return Err(Error::InvalidParameter("prune band must lie inside (0, 1)".into()));
        }
        if !(self.leaf_lower < self.leaf_upper) {
            return Err(Error::InvalidParameter("leaf bounds are inverted".into()));
        }
        Ok(())
    }

    /// Critical value of the chi-square distribution with one degree of freedom.
    pub fn critical_value(&self) -> f64 {
        chi2_critical(self.alpha)
    }
}

pub fn chi2_critical(alpha: f64) -> f64 {
    ChiSquared::new(1.0)
        .expect("one degree of freedom is valid")
        .inverse_cdf(1.0 - alpha)
}

/// Shannon entropy of a binary distribution, in bits.
pub fn entropy(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    term(p) + term(1.0 - p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub n: usize,
    pub n_true: usize,
}

impl Counts {
    pub fn of<'a>(samples: impl IntoIterator<Item = &'a LabeledSample>) -> Self {
        let mut c = Counts { n: 0, n_true: 0 };
        for s in samples {
            c.n += 1;
            c.n_true += s.label as usize;
        }
        c
    }

    pub fn purity(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.n_true as f64 / self.n as f64
        }
    }

    fn minus(&self, other: Counts) -> Counts {
        Counts {
            n: self.n - other.n,
            n_true: self.n_true - other.n_true,
        }
    }
}

/// Normalized information gain of splitting `parent` into `left` and `right`.
/// Returns `None` when either child is empty.
pub fn gain_from_counts(left: Counts, right: Counts) -> Option<f64> {
    if left.n == 0 || right.n == 0 {
        return None;
    }
    let parent = Counts {
        n: left.n + right.n,
        n_true: left.n_true + right.n_true,
    };
    let h = entropy(parent.purity());
    if h <= 0.0 {
        return Some(0.0);
    }
    let n = parent.n as f64;
    let remainder = left.n as f64 / n * entropy(left.purity()) + right.n as f64 / n * entropy(right.purity());
    Some(((h - remainder) / h).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub attribute: usize,
    pub threshold: f64,
}

impl Split {
    /// The left branch takes samples that satisfy `value >= threshold`.
    pub fn goes_left(&self, values: &[f64]) -> bool {
        values[self.attribute] >= self.threshold
    }

    fn partition(&self, samples: &[&LabeledSample]) -> (Counts, Counts) {
        let left = Counts::of(samples.iter().copied().filter(|s| self.goes_left(&s.attributes)));
        (left, Counts::of(samples.iter().copied()).minus(left))
    }
}

pub fn info_gain(parent: &[&LabeledSample], split: Split) -> Option<f64> {
    let (l, r) = split.partition(parent);
    gain_from_counts(l, r)
}

const GAIN_EPS: f64 = 1e-12;

/// Best split over all attributes and midpoint thresholds. Ties go to the
/// lowest attribute index, then the lowest threshold.
pub fn best_split(subset: &[&LabeledSample]) -> Option<(Split, f64)> {
    let n_attr = subset.first()?.attributes.len();
    let total = Counts::of(subset.iter().copied());
    let mut best: Option<(Split, f64)> = None;
    let mut order: Vec<&LabeledSample> = subset.to_vec();
    for attr in 0..n_attr {
        order.sort_by(|a, b| a.attributes[attr].total_cmp(&b.attributes[attr]));
        // Sweep ascending: everything before position i goes right (< threshold).
        let mut right = Counts { n: 0, n_true: 0 };
        for i in 0..order.len() {
            if i > 0 {
                let lo = order[i - 1].attributes[attr];
                let hi = order[i].attributes[attr];
                if hi > lo {
                    let threshold = lo + (hi - lo) / 2.0;
                    if let Some(g) = gain_from_counts(total.minus(right), right) {
                        if best.map_or(true, |(_, bg)| g > bg + GAIN_EPS) {
                            best = Some((Split { attribute: attr, threshold }, g));
                        }
                    }
                }
            }
            right.n += 1;
            right.n_true += order[i].label as usize;
        }
    }
    best
}

/// Pearson statistic of the 2x2 table children x classes with expected counts
/// from the parent ratio. `None` when an expected cell is zero.
pub fn chi2_statistic(left: Counts, right: Counts) -> Option<f64> {
    let n = (left.n + right.n) as f64;
    let p = (left.n_true + right.n_true) as f64 / n;
    let mut stat = 0.0;
    for c in [left, right] {
        for (observed, share) in [(c.n_true as f64, p), ((c.n - c.n_true) as f64, 1.0 - p)] {
            let expected = c.n as f64 * share;
            if expected <= 0.0 {
                return None;
            }
            stat += (observed - expected).powi(2) / expected;
        }
    }
    Some(stat)
}

pub fn chi2_accept(subset: &[&LabeledSample], split: Split, alpha: f64) -> bool {
    let (l, r) = split.partition(subset);
    match chi2_statistic(l, r) {
        Some(stat) => stat > chi2_critical(alpha),
        None => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Internal,
    Leaf,
    DeadEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalStats {
    pub true_count: usize,
    pub min_profit: f64,
    pub mean_profit: f64,
    /// Mean attribute vector of the node's True samples (all samples if none).
    pub mean_attributes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtNode {
    pub id: usize,
    pub depth: usize,
    pub size: usize,
    pub purity: f64,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    /// Positions of the (left, right) children in the node list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<(usize, usize)>,
    #[serde(default)]
    pub promoted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<TerminalStats>,
}

impl DtNode {
    /// A terminal that predicts True as a rule.
    pub fn is_true_rule(&self, cfg: &TrainConfig) -> bool {
        match self.kind {
            NodeKind::Leaf => self.purity > cfg.leaf_upper,
            NodeKind::DeadEnd => self.promoted,
            NodeKind::Internal => false,
        }
    }

    pub fn predicted_label(&self, cfg: &TrainConfig) -> bool {
        match self.kind {
            NodeKind::Leaf => self.purity > cfg.leaf_upper,
            NodeKind::DeadEnd => self.promoted || self.purity >= 0.5,
            NodeKind::Internal => unreachable!("internal nodes do not predict"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub attribute_names: Vec<String>,
    pub config: TrainConfig,
    /// Breadth-first order; node ids are positions plus one, so the root is node 1.
    pub nodes: Vec<DtNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub label: bool,
    pub leaf_id: usize,
    pub true_rule: bool,
}

struct Builder {
    cfg: TrainConfig,
    critical: f64,
    nodes: Vec<DtNode>,
}

impl Builder {
    fn terminal_stats(subset: &[&LabeledSample], n_attr: usize) -> TerminalStats {
        let trues: Vec<&LabeledSample> = subset.iter().copied().filter(|s| s.label).collect();
        let basis: &[&LabeledSample] = if trues.is_empty() { subset } else { &trues };
        let n = basis.len() as f64;
        let mut mean_attributes = vec![0.0; n_attr];
        for s in basis {
            for (m, v) in mean_attributes.iter_mut().zip(&s.attributes) {
                *m += v / n;
            }
        }
        TerminalStats {
            true_count: trues.len(),
            min_profit: basis.iter().map(|s| s.profit).fold(f64::INFINITY, f64::min),
            mean_profit: basis.iter().map(|s| s.profit).sum::<f64>() / n,
            mean_attributes,
        }
    }

    fn push(&mut self, subset: &[&LabeledSample], depth: usize, kind: NodeKind) -> usize {
        let counts = Counts::of(subset.iter().copied());
        let n_attr = subset[0].attributes.len();
        let stats = (kind != NodeKind::Internal).then(|| Self::terminal_stats(subset, n_attr));
        self.nodes.push(DtNode {
            id: 0,
            depth,
            size: counts.n,
            purity: counts.purity(),
            kind,
            split: None,
            children: None,
            promoted: false,
            stats,
        });
        self.nodes.len() - 1
    }

    fn in_band(&self, node: &DtNode) -> bool {
        node.kind == NodeKind::DeadEnd
            && node.purity >= self.cfg.prune_low
            && node.purity <= self.cfg.prune_high
    }

    fn grow(&mut self, subset: &[&LabeledSample], depth: usize) -> usize {
        let purity = Counts::of(subset.iter().copied()).purity();
        if purity > self.cfg.leaf_upper || purity < self.cfg.leaf_lower {
            return self.push(subset, depth, NodeKind::Leaf);
        }
        if depth >= self.cfg.max_depth {
            return self.push(subset, depth, NodeKind::DeadEnd);
        }
        let Some((split, _)) = best_split(subset) else {
            return self.push(subset, depth, NodeKind::DeadEnd);
        };
        let (lc, rc) = split.partition(subset);
        match chi2_statistic(lc, rc) {
            Some(stat) if stat > self.critical => {}
            _ => return self.push(subset, depth, NodeKind::DeadEnd),
        }
        let (left, right): (Vec<&LabeledSample>, Vec<&LabeledSample>) =
            subset.iter().copied().partition(|s| split.goes_left(&s.attributes));
        let me = self.push(subset, depth, NodeKind::Internal);
        let l = self.grow(&left, depth + 1);
        let r = self.grow(&right, depth + 1);
        let (ln, rn) = (&self.nodes[l], &self.nodes[r]);
        let both_dead = ln.kind == NodeKind::DeadEnd && rn.kind == NodeKind::DeadEnd;
        if both_dead && (self.in_band(ln) || self.in_band(rn)) {
            let n_attr = subset[0].attributes.len();
            let node = &mut self.nodes[me];
            node.kind = NodeKind::DeadEnd;
            node.stats = Some(Self::terminal_stats(subset, n_attr));
            return me;
        }
        let node = &mut self.nodes[me];
        node.split = Some(split);
        node.children = Some((l, r));
        me
    }
}

/// Grows a tree on `samples` whose attribute vectors follow `names`.
pub fn train(names: &[String], samples: &[LabeledSample], cfg: &TrainConfig) -> Result<DecisionTree> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyLearningSet);
    }
    if let Some(s) = samples.iter().find(|s| s.attributes.len() != names.len()) {
        return Err(Error::InvalidParameter(format!(
            "sample {} has {} attributes, schema has {}",
            s.sample_index,
            s.attributes.len(),
            names.len()
        )));
    }
    let refs: Vec<&LabeledSample> = samples.iter().collect();
    let mut b = Builder {
        cfg: *cfg,
        critical: cfg.critical_value(),
        nodes: Vec::new(),
    };
    let root = b.grow(&refs, 0);

    // Renumber breadth-first, dropping anything detached by pruning.
    let mut nodes = Vec::with_capacity(b.nodes.len());
    let mut queue = VecDeque::from([root]);
    let mut slot_of = BTreeMap::new();
    while let Some(old) = queue.pop_front() {
        slot_of.insert(old, nodes.len());
        let node = b.nodes[old].clone();
        if let Some((l, r)) = node.children {
            queue.push_back(l);
            queue.push_back(r);
        }
        nodes.push(node);
    }
    for (pos, node) in nodes.iter_mut().enumerate() {
        node.id = pos + 1;
        if let Some((l, r)) = node.children {
            node.children = Some((slot_of[&l], slot_of[&r]));
        }
    }

    // Without a True leaf the purest dead-end stands in for one.
    let mut tree = DecisionTree {
        attribute_names: names.to_vec(),
        config: *cfg,
        nodes,
    };
    if !tree.nodes.iter().any(|n| n.is_true_rule(cfg)) {
        let best = tree
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::DeadEnd)
            .fold(None::<(usize, f64)>, |acc, (i, n)| match acc {
                Some((_, p)) if p >= n.purity => acc,
                _ => Some((i, n.purity)),
            });
        if let Some((i, _)) = best {
            tree.nodes[i].promoted = true;
        }
    }
    Ok(tree)
}

impl DecisionTree {
    pub fn root(&self) -> &DtNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> Option<&DtNode> {
        id.checked_sub(1).and_then(|i| self.nodes.get(i))
    }

    pub fn classify(&self, values: &[f64]) -> Result<Prediction> {
        let mut pos = 0;
        loop {
            let node = &self.nodes[pos];
            match (node.split, node.children) {
                (Some(split), Some((l, r))) => {
                    if split.attribute >= values.len() {
                        return Err(Error::MissingAttribute(
                            self.attribute_names[split.attribute].clone(),
                        ));
                    }
                    pos = if split.goes_left(values) { l } else { r };
                }
                _ => {
                    return Ok(Prediction {
                        label: node.predicted_label(&self.config),
                        leaf_id: node.id,
                        true_rule: node.is_true_rule(&self.config),
                    })
                }
            }
        }
    }

    /// Classifies a sample given as name/value pairs.
    pub fn classify_named(&self, values: &BTreeMap<String, f64>) -> Result<Prediction> {
        let aligned = self
            .attribute_names
            .iter()
            .map(|n| values.get(n).copied().ok_or_else(|| Error::MissingAttribute(n.clone())))
            .collect::<Result<Vec<f64>>>()?;
        self.classify(&aligned)
    }

    /// Root-to-node predicates for every node, indexed by position.
    fn paths(&self) -> Vec<Vec<Predicate>> {
        let mut paths = vec![Vec::new(); self.nodes.len()];
        for pos in 0..self.nodes.len() {
            if let (Some(split), Some((l, r))) = (self.nodes[pos].split, self.nodes[pos].children) {
                let name = &self.attribute_names[split.attribute];
                for (child, op) in [(l, Op::Ge), (r, Op::Lt)] {
                    let mut p = paths[pos].clone();
                    p.push(Predicate {
                        attribute: name.clone(),
                        op,
                        threshold: split.threshold,
                    });
                    paths[child] = p;
                }
            }
        }
        paths
    }

    /// One rule per True terminal, in descending order of mean profit.
    pub fn extract_rules(&self) -> Vec<Rule> {
        let paths = self.paths();
        let mut rules: Vec<Rule> = self
            .nodes
            .iter()
            .zip(paths)
            .filter(|(n, _)| n.is_true_rule(&self.config))
            .map(|(n, predicates)| {
                let stats = n.stats.clone().expect("terminals carry statistics");
                Rule {
                    predicates,
                    label: true,
                    purity: n.purity,
                    promoted: n.promoted,
                    leaf_id: n.id,
                    support: n.size,
                    min_profit: stats.min_profit,
                    mean_profit: stats.mean_profit,
                    mean_attributes: stats.mean_attributes,
                }
            })
            .collect();
        rules.sort_by(|a, b| b.mean_profit.total_cmp(&a.mean_profit).then(a.leaf_id.cmp(&b.leaf_id)));
        rules
    }

    /// Terminal paths that predict False, for display alongside the True rules.
    pub fn false_rules(&self) -> Vec<Rule> {
        let paths = self.paths();
        self.nodes
            .iter()
            .zip(paths)
            .filter(|(n, _)| n.kind != NodeKind::Internal && !n.predicted_label(&self.config))
            .map(|(n, predicates)| {
                let stats = n.stats.clone().expect("terminals carry statistics");
                Rule {
                    predicates,
                    label: false,
                    purity: n.purity,
                    promoted: false,
                    leaf_id: n.id,
                    support: n.size,
                    min_profit: stats.min_profit,
                    mean_profit: stats.mean_profit,
                    mean_attributes: stats.mean_attributes,
                }
            })
            .collect()
    }

    pub fn evaluate_mr(&self, test: &[LabeledSample]) -> Result<MrReport> {
        if test.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        let mut wrong = 0;
        let mut rule_wrong = 0;
        for s in test {
            let p = self.classify(&s.attributes)?;
            if p.label != s.label {
                wrong += 1;
                if p.true_rule || s.label {
                    rule_wrong += 1;
                }
            }
        }
        Ok(MrReport::from_counts(test.len(), wrong, rule_wrong))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrReport {
    pub test_size: usize,
    pub misclassified: usize,
    pub rule_misclassified: usize,
    pub mr: f64,
    pub mrr: f64,
}

impl MrReport {
    pub fn from_counts(test_size: usize, misclassified: usize, rule_misclassified: usize) -> Self {
        Self {
            test_size,
            misclassified,
            rule_misclassified,
            mr: misclassified as f64 / test_size as f64,
            mrr: rule_misclassified as f64 / test_size as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub attribute: String,
    pub op: Op,
    pub threshold: f64,
}

impl Predicate {
    pub fn holds(&self, value: f64) -> bool {
        match self.op {
            Op::Ge => value >= self.threshold,
            Op::Lt => value < self.threshold,
        }
    }
}

/// Thresholds print with one decimal, dropping a trailing `.0`.
pub fn format_threshold(v: f64) -> String {
    let s = format!("{v:.1}");
    match s.strip_suffix(".0") {
        Some(int) if int == "-0" => "0".into(),
        Some(int) => int.into(),
        None => s,
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            Op::Ge => "≥",
            Op::Lt => "<",
        };
        write!(f, "({}{}{})", self.attribute, op, format_threshold(self.threshold))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub predicates: Vec<Predicate>,
    pub label: bool,
    pub purity: f64,
    pub promoted: bool,
    pub leaf_id: usize,
    pub support: usize,
    pub min_profit: f64,
    pub mean_profit: f64,
    pub mean_attributes: Vec<f64>,
}

impl Rule {
    pub fn matches(&self, names: &[String], values: &[f64]) -> Result<bool> {
        for p in &self.predicates {
            let i = names
                .iter()
                .position(|n| *n == p.attribute)
                .ok_or_else(|| Error::MissingAttribute(p.attribute.clone()))?;
            if !p.holds(values[i]) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = if self.label { "TRUE" } else { "FALSE" };
        if self.predicates.is_empty() {
            write!(f, "always {label}")?;
        } else {
            let conds: Vec<String> = self.predicates.iter().map(|p| p.to_string()).collect();
            write!(f, "if {} then {label}", conds.join(" and "))?;
        }
        write!(f, " (purity≈{:.0}%)", self.purity * 100.0)?;
        if self.promoted {
            write!(f, " [promoted dead-end]")?;
        }
        Ok(())
    }
}

/// Plain-text listing, one rule per line.
pub fn rules_text(rules: &[Rule]) -> String {
    rules.iter().map(|r| format!("{r}\n")).collect()
}
