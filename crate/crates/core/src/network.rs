//! Electrical model of the microgrid and feasibility screening.
//!
//! Impedances are entered in ohms and converted to per-unit on a common
//! apparent-power base (`base_kva`) and each branch's sending-bus nominal
//! voltage. Power flow uses a forward-backward sweep, so the topology must be
//! a tree rooted at the slack (grid interconnection) bus.

use std::collections::{HashMap, VecDeque};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type BusId = u32;

/// Voltage-update tolerance of the sweep, per-unit.
pub const PF_TOLERANCE: f64 = 1e-6;
/// Sweep iteration cap; beyond it the case is reported as non-convergent.
pub const PF_MAX_ITER: usize = 50;
/// Horizon over which short-term overload capabilities are judged, hours.
pub const SCHEDULING_HORIZON_H: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Slack,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub nominal_voltage_v: f64,
    pub kind: BusKind,
}

/// Declared short-term overload capability of a branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortTermRating {
    pub factor: f64,
    pub duration_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: String,
    pub from: BusId,
    pub to: BusId,
    pub resistance_ohm: f64,
    pub reactance_ohm: f64,
    pub rating_kva: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub short_term: Option<ShortTermRating>,
}

impl Branch {
    /// Loading limit (fraction of rating) that applies over the scheduling horizon.
    pub fn loading_limit(&self) -> f64 {
        match self.short_term {
            Some(st) if st.duration_h >= SCHEDULING_HORIZON_H => st.factor.max(1.0),
            _ => 1.0,
        }
    }
}

/// Voltage band as fractions of nominal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageBand {
    pub lower: f64,
    pub upper: f64,
}

impl Default for VoltageBand {
    fn default() -> Self {
        Self {
            lower: 0.9,
            upper: 1.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub base_kva: f64,
    #[serde(default)]
    pub voltage_band: VoltageBand,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
}

/// Dense complex bus admittance matrix in per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub bus_ids: Vec<BusId>,
    data: Vec<Complex64>,
}

impl AdmittanceMatrix {
    pub fn dim(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim() + j]
    }

    pub fn row_sum(&self, i: usize) -> Complex64 {
        let n = self.dim();
        self.data[i * n..(i + 1) * n].iter().sum()
    }
}

/// Net injection at one bus: positive is generation into the network.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BusInjection {
    pub p_kw: f64,
    pub q_kvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowResult {
    pub converged: bool,
    pub iterations: usize,
    /// Per-unit voltage magnitude, aligned with `NetworkModel::buses`.
    pub bus_voltages: Vec<f64>,
    /// Fraction of rated kVA, aligned with `NetworkModel::branches`.
    pub branch_loadings: Vec<f64>,
    /// Active power drawn from the slack bus into the network, kW.
    pub slack_injection_kw: f64,
    pub losses_kw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Voltage,
    Loading,
    NonConvergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub element: String,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            feasible: violations.is_empty(),
            violations,
        }
    }
}

/// Tree structure of a radial network, rooted at the slack bus.
#[derive(Debug, Clone)]
pub struct RadialTopology {
    /// Bus positions in breadth-first order from the slack bus.
    pub order: Vec<usize>,
    /// For each bus position: (parent position, branch index) or `None` for the root.
    pub parent: Vec<Option<(usize, usize)>>,
    pub slack: usize,
}

impl NetworkModel {
    pub fn bus_index(&self) -> HashMap<BusId, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn position(&self, id: BusId) -> Result<usize> {
        self.buses
            .iter()
            .position(|b| b.id == id)
            .ok_or(Error::UnknownBus(id))
    }

    pub fn slack_position(&self) -> Result<usize> {
        let slacks: Vec<usize> = self
            .buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Slack)
            .map(|(i, _)| i)
            .collect();
        match slacks.as_slice() {
            [s] => Ok(*s),
            _ => Err(Error::Validation(format!(
                "network must have exactly one slack bus, found {}",
                slacks.len()
            ))),
        }
    }

    /// Series impedance of a branch in per-unit.
    pub fn branch_impedance_pu(&self, branch: &Branch) -> Result<Complex64> {
        let from = &self.buses[self.position(branch.from)?];
        let z_base = from.nominal_voltage_v.powi(2) / (self.base_kva * 1e3);
        let z = Complex64::new(branch.resistance_ohm, branch.reactance_ohm) / z_base;
        if z.norm() == 0.0 {
            return Err(Error::ZeroImpedance(branch.id.clone()));
        }
        Ok(z)
    }

    /// Checks the structural invariants: one slack, positive ratings, connected.
    pub fn validate(&self) -> Result<()> {
        self.slack_position()?;
        if self.base_kva <= 0.0 {
            return Err(Error::Validation("base_kva must be positive".into()));
        }
        let band = self.voltage_band;
        if !(band.lower > 0.0 && band.lower < 1.0 && band.upper > 1.0) {
            return Err(Error::Validation(format!(
                "voltage band ({}, {}) must straddle 1.0",
                band.lower, band.upper
            )));
        }
        for bus in &self.buses {
            if bus.nominal_voltage_v <= 0.0 {
                return Err(Error::Validation(format!(
                    "bus {} nominal voltage must be positive",
                    bus.id
                )));
            }
        }
        for br in &self.branches {
            if br.rating_kva <= 0.0 {
                return Err(Error::Validation(format!(
                    "branch {} rating must be positive",
                    br.id
                )));
            }
            self.position(br.from)?;
            self.position(br.to)?;
        }
        self.check_connected()
    }

    fn adjacency(&self) -> Result<Vec<Vec<(usize, usize)>>> {
        let index = self.bus_index();
        let mut adj = vec![Vec::new(); self.buses.len()];
        for (k, br) in self.branches.iter().enumerate() {
            let f = *index.get(&br.from).ok_or(Error::UnknownBus(br.from))?;
            let t = *index.get(&br.to).ok_or(Error::UnknownBus(br.to))?;
            adj[f].push((t, k));
            adj[t].push((f, k));
        }
        Ok(adj)
    }

    fn check_connected(&self) -> Result<()> {
        let adj = self.adjacency()?;
        let start = self.slack_position()?;
        let mut seen = vec![false; self.buses.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(Error::Disconnected(self.buses[i].id)),
            None => Ok(()),
        }
    }

    pub fn radial_topology(&self) -> Result<RadialTopology> {
        self.check_connected()?;
        if self.branches.len() + 1 != self.buses.len() {
            return Err(Error::NotRadial(format!(
                "{} buses need {} branches, found {}",
                self.buses.len(),
                self.buses.len() - 1,
                self.branches.len()
            )));
        }
        let adj = self.adjacency()?;
        let slack = self.slack_position()?;
        let mut parent = vec![None; self.buses.len()];
        let mut seen = vec![false; self.buses.len()];
        let mut order = Vec::with_capacity(self.buses.len());
        let mut queue = VecDeque::from([slack]);
        seen[slack] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &(v, k) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some((u, k));
                    queue.push_back(v);
                }
            }
        }
        Ok(RadialTopology {
            order,
            parent,
            slack,
        })
    }
}

/// Bus admittance matrix: `Y[i][j] = -1/z_ij`, `Y[i][i] = sum of 1/z_ik`.
pub fn build_admittance(net: &NetworkModel) -> Result<AdmittanceMatrix> {
    net.check_connected()?;
    let index = net.bus_index();
    let n = net.buses.len();
    let mut data = vec![Complex64::new(0.0, 0.0); n * n];
    for br in &net.branches {
        let y = 1.0 / net.branch_impedance_pu(br)?;
        let i = index[&br.from];
        let j = index[&br.to];
        data[i * n + i] += y;
        data[j * n + j] += y;
        data[i * n + j] -= y;
        data[j * n + i] -= y;
    }
    Ok(AdmittanceMatrix {
        bus_ids: net.buses.iter().map(|b| b.id).collect(),
        data,
    })
}

/// Forward-backward sweep load flow with the slack bus held at 1.0 pu.
///
/// `injections` is aligned with `net.buses`. A case that does not converge
/// within [`PF_MAX_ITER`] sweeps is returned with `converged = false`.
pub fn solve_power_flow(net: &NetworkModel, injections: &[BusInjection]) -> Result<PowerFlowResult> {
    if injections.len() != net.buses.len() {
        return Err(Error::InvalidParameter(format!(
            "{} injections for {} buses",
            injections.len(),
            net.buses.len()
        )));
    }
    let topo = net.radial_topology()?;
    let n = net.buses.len();
    let base = net.base_kva;
    let z: Vec<Complex64> = net
        .branches
        .iter()
        .map(|br| net.branch_impedance_pu(br))
        .collect::<Result<_>>()?;
    // Demand convention inside the sweep: positive = consumed.
    let s_load: Vec<Complex64> = injections
        .iter()
        .map(|inj| Complex64::new(-inj.p_kw, -inj.q_kvar) / base)
        .collect();

    let mut v = vec![Complex64::new(1.0, 0.0); n];
    // Current flowing from parent into each bus through its feeding branch.
    let mut i_feed = vec![Complex64::new(0.0, 0.0); n];
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=PF_MAX_ITER {
        iterations = it;
        let mut acc: Vec<Complex64> = (0..n).map(|k| (s_load[k] / v[k]).conj()).collect();
        for &bus in topo.order.iter().rev() {
            if let Some((p, _)) = topo.parent[bus] {
                i_feed[bus] = acc[bus];
                let downstream = acc[bus];
                acc[p] += downstream;
            }
        }
        let mut max_dv: f64 = 0.0;
        for &bus in &topo.order {
            if let Some((p, k)) = topo.parent[bus] {
                let new_v = v[p] - z[k] * i_feed[bus];
                max_dv = max_dv.max((new_v - v[bus]).norm());
                v[bus] = new_v;
            }
        }
        if !max_dv.is_finite() {
            break;
        }
        if max_dv < PF_TOLERANCE {
            converged = true;
            break;
        }
    }

    // Final currents from the converged voltages.
    let mut acc: Vec<Complex64> = (0..n).map(|k| (s_load[k] / v[k]).conj()).collect();
    for &bus in topo.order.iter().rev() {
        if let Some((p, _)) = topo.parent[bus] {
            i_feed[bus] = acc[bus];
            let downstream = acc[bus];
            acc[p] += downstream;
        }
    }
    let slack_s = v[topo.slack] * acc[topo.slack].conj();

    let mut branch_loadings = vec![0.0; net.branches.len()];
    let mut losses = 0.0;
    for bus in 0..n {
        if let Some((p, k)) = topo.parent[bus] {
            let i = i_feed[bus];
            let s_send = (v[p] * i.conj()).norm().max((v[bus] * i.conj()).norm());
            branch_loadings[k] = s_send * base / net.branches[k].rating_kva;
            losses += i.norm_sqr() * z[k].re * base;
        }
    }

    let bus_voltages: Vec<f64> = v.iter().map(|x| x.norm()).collect();
    let finite = bus_voltages.iter().all(|x| x.is_finite()) && slack_s.re.is_finite();
    Ok(PowerFlowResult {
        converged: converged && finite,
        iterations,
        bus_voltages,
        branch_loadings,
        slack_injection_kw: slack_s.re * base,
        losses_kw: losses,
    })
}

/// Flags voltage-band and loading violations. A non-convergent flow is
/// reported as a single `NonConvergence` violation.
pub fn check_constraints(net: &NetworkModel, result: &PowerFlowResult) -> ConstraintReport {
    if !result.converged {
        return ConstraintReport::from_violations(vec![Violation {
            kind: ViolationKind::NonConvergence,
            element: "power_flow".into(),
            value: result.iterations as f64,
            limit: PF_MAX_ITER as f64,
        }]);
    }
    let band = net.voltage_band;
    let mut violations = Vec::new();
    for (bus, &vm) in net.buses.iter().zip(&result.bus_voltages) {
        if vm < band.lower {
            violations.push(Violation {
                kind: ViolationKind::Voltage,
                element: format!("bus {}", bus.id),
                value: vm,
                limit: band.lower,
            });
        } else if vm > band.upper {
            violations.push(Violation {
                kind: ViolationKind::Voltage,
                element: format!("bus {}", bus.id),
                value: vm,
                limit: band.upper,
            });
        }
    }
    for (br, &loading) in net.branches.iter().zip(&result.branch_loadings) {
        let limit = br.loading_limit();
        if loading > limit {
            violations.push(Violation {
                kind: ViolationKind::Loading,
                element: br.id.clone(),
                value: loading,
                limit,
            });
        }
    }
    ConstraintReport::from_violations(violations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bus(id: BusId, kind: BusKind) -> Bus {
        Bus {
            id,
            nominal_voltage_v: 1000.0,
            kind,
        }
    }

    fn branch(id: &str, from: BusId, to: BusId, r: f64, x: f64) -> Branch {
        Branch {
            id: id.into(),
            from,
            to,
            resistance_ohm: r,
            reactance_ohm: x,
            rating_kva: 1000.0,
            short_term: None,
        }
    }

    /// 1000 V nominal and a 1000 kVA base give a 1 ohm impedance base.
    fn chain(n: u32, r: f64, x: f64) -> NetworkModel {
        let mut buses = vec![bus(1, BusKind::Slack)];
        let mut branches = Vec::new();
        for k in 2..=n {
            buses.push(bus(k, BusKind::Pq));
            branches.push(branch(&format!("b{k}"), k - 1, k, r, x));
        }
        NetworkModel {
            base_kva: 1000.0,
            voltage_band: VoltageBand::default(),
            buses,
            branches,
        }
    }

    #[test]
    fn two_bus_admittance() {
        let net = chain(2, 0.1, 0.2);
        let y = build_admittance(&net).unwrap();
        let expect = 1.0 / Complex64::new(0.1, 0.2);
        assert!((y.get(0, 0) - expect).norm() < 1e-12);
        assert!((y.get(0, 1) + expect).norm() < 1e-12);
        assert!((y.get(1, 0) + expect).norm() < 1e-12);
        assert!((y.get(1, 1) - expect).norm() < 1e-12);
    }

    #[test]
    fn three_bus_middle_diagonal_is_double() {
        let net = chain(3, 0.1, 0.3);
        let y = build_admittance(&net).unwrap();
        assert!((y.get(1, 1) - 2.0 * y.get(0, 0)).norm() < 1e-12);
        assert!((y.get(2, 2) - y.get(0, 0)).norm() < 1e-12);
    }

    #[test]
    fn zero_impedance_rejected() {
        let net = chain(2, 0.0, 0.0);
        assert!(matches!(build_admittance(&net), Err(Error::ZeroImpedance(_))));
    }

    #[test]
    fn disconnected_rejected() {
        let mut net = chain(3, 0.1, 0.1);
        net.branches.pop();
        assert!(matches!(build_admittance(&net), Err(Error::Disconnected(3))));
    }

    #[test]
    fn mesh_is_not_radial() {
        let mut net = chain(3, 0.1, 0.1);
        net.branches.push(branch("loop", 1, 3, 0.1, 0.1));
        assert!(build_admittance(&net).is_ok());
        assert!(matches!(net.radial_topology(), Err(Error::NotRadial(_))));
    }

    #[test]
    fn flat_case() {
        let net = chain(4, 0.05, 0.05);
        let res = solve_power_flow(&net, &vec![BusInjection::default(); 4]).unwrap();
        assert!(res.converged);
        assert!(res.bus_voltages.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(res.branch_loadings.iter().all(|&l| l == 0.0));
        assert_eq!(res.slack_injection_kw, 0.0);
    }

    /// Closed-form receiving-end magnitude for a two-bus feeder with a PQ load.
    fn two_bus_oracle(p: f64, q: f64, r: f64, x: f64) -> f64 {
        let b = 1.0 - 2.0 * (p * r + q * x);
        let disc = b * b - 4.0 * (p * p + q * q) * (r * r + x * x);
        ((b + disc.sqrt()) / 2.0).sqrt()
    }

    #[test]
    fn two_bus_matches_closed_form() {
        let net = chain(2, 0.02, 0.04);
        for &(p, q) in &[(300.0, 100.0), (800.0, 250.0), (50.0, 0.0)] {
            let inj = vec![
                BusInjection::default(),
                BusInjection {
                    p_kw: -p,
                    q_kvar: -q,
                },
            ];
            let res = solve_power_flow(&net, &inj).unwrap();
            let expect = two_bus_oracle(p / 1000.0, q / 1000.0, 0.02, 0.04);
            assert!(res.converged);
            assert!(
                (res.bus_voltages[1] - expect).abs() < 1e-6,
                "{} vs {}",
                res.bus_voltages[1],
                expect
            );
        }
    }

    #[test]
    fn conservation_and_monotone_drop() {
        let net = chain(6, 0.01, 0.02);
        let inj: Vec<BusInjection> = (0..6)
            .map(|k| BusInjection {
                p_kw: if k == 0 { 0.0 } else { -40.0 * k as f64 },
                q_kvar: if k == 0 { 0.0 } else { -10.0 * k as f64 },
            })
            .collect();
        let res = solve_power_flow(&net, &inj).unwrap();
        let load: f64 = inj.iter().map(|i| -i.p_kw).sum();
        assert!((res.slack_injection_kw - (load + res.losses_kw)).abs() < 1e-6 * load.max(1.0) * 10.0);
        assert!(res.losses_kw > 0.0);
        for w in res.bus_voltages.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn constraint_checks() {
        let mut net = chain(3, 0.01, 0.01);
        let ok = PowerFlowResult {
            converged: true,
            iterations: 3,
            bus_voltages: vec![1.0; 3],
            branch_loadings: vec![0.5; 2],
            slack_injection_kw: 0.0,
            losses_kw: 0.0,
        };
        assert!(check_constraints(&net, &ok).feasible);

        let mut low = ok.clone();
        low.bus_voltages[2] = 0.88;
        let rep = check_constraints(&net, &low);
        assert!(!rep.feasible);
        assert_eq!(rep.violations.len(), 1);
        assert_eq!(rep.violations[0].kind, ViolationKind::Voltage);

        let mut over = ok.clone();
        over.branch_loadings[1] = 1.15;
        assert!(!check_constraints(&net, &over).feasible);
        net.branches[1].short_term = Some(ShortTermRating {
            factor: 1.2,
            duration_h: 1.0,
        });
        assert!(check_constraints(&net, &over).feasible);

        let mut nc = ok;
        nc.converged = false;
        let rep = check_constraints(&net, &nc);
        assert_eq!(rep.violations[0].kind, ViolationKind::NonConvergence);
    }

    #[test]
    fn deterministic() {
        let net = chain(5, 0.03, 0.01);
        let inj: Vec<BusInjection> = (0..5)
            .map(|k| BusInjection {
                p_kw: -(k as f64) * 17.3,
                q_kvar: 2.0,
            })
            .collect();
        let a = solve_power_flow(&net, &inj).unwrap();
        let b = solve_power_flow(&net, &inj).unwrap();
        assert_eq!(a, b);
    }
}
