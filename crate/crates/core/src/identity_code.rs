//! Codes delivering every source message (identity target) with distance
//! δ + 1, built edge by edge over extended global vectors.
//!
//! Each extended vector has one coordinate per message symbol and one per
//! edge. A source σ_i owns k imaginary message channels and every edge e an
//! imaginary error channel e′ carrying the unit vector 𝟏_e. For each error
//! pattern ρ of rank δ a family of sk + δ edge-disjoint paths is fixed, and a
//! frontier CUT_ρ walks down those paths keeping its vectors, restricted to
//! the coordinates [sk] ∪ ρ, linearly independent.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::code::{identity_target, LinearNetworkCode};
use crate::distance::{enumerate_r, min_distance, next_vector, phi_intersects, DistanceCertificate};
use crate::error::{CodeError, ConstructionError};
use crate::field::Field;
use crate::matrix::{Echelon, FieldMatrix};
use crate::network::{Network, PathFamily, PathOrigin};

/// Default cap on |R(δ)|.
pub const DEFAULT_PATTERN_CAP: usize = 20_000;
const SAMPLE_ATTEMPTS: usize = 256;
const ENUMERATION_LIMIT: u64 = 4096;

/// Coordinate layout of extended vectors: `sk` message coordinates followed
/// by one coordinate per edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExtendedLayout {
    pub sk: usize,
    pub edges: usize,
}

impl ExtendedLayout {
    pub fn len(&self) -> usize {
        self.sk + self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn in_rho(&self, c: usize, rho: &[usize]) -> bool {
        c < self.sk || rho.contains(&(c - self.sk))
    }

    pub fn unit(&self, c: usize) -> Vec<u32> {
        let mut v = vec![0; self.len()];
        v[c] = 1;
        v
    }

    /// f̃^ρ: the coordinates in [sk] ∪ ρ only.
    pub fn restrict(&self, v: &[u32], rho: &[usize]) -> Vec<u32> {
        (0..self.len())
            .filter(|&c| self.in_rho(c, rho))
            .map(|c| v[c])
            .collect()
    }

    /// f^ρ: coordinates outside [sk] ∪ ρ zeroed.
    pub fn mask_rho(&self, v: &[u32], rho: &[usize]) -> Vec<u32> {
        (0..self.len())
            .map(|c| if self.in_rho(c, rho) { v[c] } else { 0 })
            .collect()
    }

    /// f^{ρᶜ}: coordinates in [sk] ∪ ρ zeroed.
    pub fn mask_complement(&self, v: &[u32], rho: &[usize]) -> Vec<u32> {
        (0..self.len())
            .map(|c| if self.in_rho(c, rho) { 0 } else { v[c] })
            .collect()
    }
}

/// A channel of the extended network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    /// Imaginary message channel d_j, j ∈ [sk].
    Message(usize),
    /// Imaginary error channel e′ into the tail of edge e.
    Error(usize),
    Edge(usize),
}

#[derive(Clone, Debug)]
pub struct PatternState {
    pub rho: Vec<usize>,
    pub family: PathFamily,
    pub edges: HashSet<usize>,
    /// Previous channel of every path edge.
    pub pred: HashMap<usize, Channel>,
    pub cut: Vec<Channel>,
}

#[derive(Clone, Debug)]
pub struct ConstructionState {
    net: Network,
    field: Field,
    k: usize,
    delta: usize,
    layout: ExtendedLayout,
    f: Vec<Vec<u32>>,
    patterns: Vec<PatternState>,
}

impl ConstructionState {
    pub fn layout(&self) -> ExtendedLayout {
        self.layout
    }

    pub fn patterns(&self) -> &[PatternState] {
        &self.patterns
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    /// Current extended vector of an edge (zero before it is processed).
    pub fn vector(&self, ch: Channel) -> Vec<u32> {
        match ch {
            Channel::Message(j) => self.layout.unit(j),
            Channel::Error(e) => self.layout.unit(self.layout.sk + e),
            Channel::Edge(e) => self.f[e].clone(),
        }
    }

    /// dim L̃^ρ(CUT_ρ).
    pub fn cut_rank(&self, p: usize) -> usize {
        let ps = &self.patterns[p];
        let width = self.layout.sk + ps.rho.len();
        let rows: Vec<Vec<u32>> = ps
            .cut
            .iter()
            .map(|&c| self.layout.restrict(&self.vector(c), &ps.rho))
            .collect();
        Echelon::from_rows(&self.field, width, rows.iter().map(Vec::as_slice)).rank()
    }

    fn assert_invariant(&self, after: &str) -> Result<(), ConstructionError> {
        let want = self.net.source_count() * self.k + self.delta;
        for p in 0..self.patterns.len() {
            let r = self.cut_rank(p);
            if r != want {
                return Err(CodeError::Invariant(format!(
                    "after {after}: dim L̃^ρ(CUT_ρ) = {r} instead of {want} for ρ = {:?}",
                    self.patterns[p].rho
                ))
                .into());
            }
        }
        Ok(())
    }

    /// Channels feeding edge e: In(tail(e)) (message channels for a source)
    /// plus the error channel e′.
    fn feeding(&self, e: usize) -> Vec<Channel> {
        let tail = self.net.edge(e).tail;
        let mut out: Vec<Channel> = self.net.in_edges(tail).iter().map(|&d| Channel::Edge(d)).collect();
        if let Some(j) = self.net.source_position(tail) {
            out.extend((0..self.k).map(|t| Channel::Message(j * self.k + t)));
        }
        out.push(Channel::Error(e));
        out
    }

    fn relevant(&self, e: usize) -> Vec<usize> {
        (0..self.patterns.len())
            .filter(|&p| self.patterns[p].edges.contains(&e))
            .collect()
    }

    /// L^ρ(CUT_ρ ∖ {e_ρ}) + L^{ρᶜ}(In(i) ∪ {e′}) for every pattern whose
    /// paths use e.
    pub fn forbidden_spaces(&self, e: usize) -> Result<Vec<(usize, Echelon)>, ConstructionError> {
        let feed = self.feeding(e);
        let mut out = Vec::new();
        for p in self.relevant(e) {
            let ps = &self.patterns[p];
            let pred = ps.pred[&e];
            if !ps.cut.contains(&pred) {
                return Err(CodeError::Invariant(format!(
                    "predecessor of edge {} is not on the frontier of ρ = {:?}",
                    self.net.edge_id(e),
                    ps.rho
                ))
                .into());
            }
            let mut ech = Echelon::new(&self.field, self.layout.len());
            for &c in ps.cut.iter().filter(|&&c| c != pred) {
                ech.insert(&self.layout.mask_rho(&self.vector(c), &ps.rho));
            }
            for &c in &feed {
                ech.insert(&self.layout.mask_complement(&self.vector(c), &ps.rho));
            }
            out.push((p, ech));
        }
        Ok(out)
    }
}

/// Sets up imaginary channels, R(δ), a path family and CUT_ρ per pattern.
pub fn init_state(
    net: &Network,
    field: &Field,
    k: usize,
    delta: usize,
    cap: usize,
) -> Result<ConstructionState, ConstructionError> {
    let s = net.source_count();
    let layout = ExtendedLayout {
        sk: s * k,
        edges: net.edge_count(),
    };
    let rhos = enumerate_r(net, delta, cap)?;
    if rhos.is_empty() {
        return Err(ConstructionError::Invalid(format!("R({delta}) is empty")));
    }
    let mut patterns = Vec::with_capacity(rhos.len());
    for rho in rhos {
        let family = net.disjoint_path_family(&rho, k, delta)?;
        let mut pred = HashMap::new();
        let mut next_msg = vec![0usize; s];
        for path in &family.paths {
            let first = match path.origin {
                PathOrigin::Source(i) => {
                    let c = Channel::Message(i * k + next_msg[i]);
                    next_msg[i] += 1;
                    c
                }
                PathOrigin::Pattern(e) => {
                    if path.edges.first() != Some(&e) {
                        return Err(CodeError::Invariant("error path does not start on its edge".into()).into());
                    }
                    Channel::Error(e)
                }
            };
            let mut prev = first;
            for &e in &path.edges {
                pred.insert(e, prev);
                prev = Channel::Edge(e);
            }
        }
        let mut cut: Vec<Channel> = (0..s * k).map(Channel::Message).collect();
        cut.extend(rho.iter().map(|&e| Channel::Error(e)));
        patterns.push(PatternState {
            edges: family.edge_set(),
            rho,
            family,
            pred,
            cut,
        });
    }
    let state = ConstructionState {
        net: net.clone(),
        field: field.clone(),
        k,
        delta,
        layout,
        f: vec![vec![0; layout.len()]; net.edge_count()],
        patterns,
    };
    state.assert_invariant("initialization")?;
    Ok(state)
}

/// A vector in L̃(In(i) ∪ {e′}) outside every forbidden sum space. Random
/// draws first, then exhaustive enumeration when the span is small.
pub fn choose_g(state: &ConstructionState, e: usize, rng: &mut impl Rng) -> Result<Vec<u32>, ConstructionError> {
    let field = &state.field;
    let forbidden = state.forbidden_spaces(e)?;
    for (p, ech) in &forbidden {
        let pred = state.patterns[*p].pred[&e];
        if ech.contains(&state.vector(pred)) {
            return Err(CodeError::Invariant(format!(
                "predecessor vector of edge {} lies in its forbidden space",
                state.net.edge_id(e)
            ))
            .into());
        }
    }
    let span = Echelon::from_rows(
        field,
        state.layout.len(),
        state.feeding(e).iter().map(|&c| state.vector(c)).collect::<Vec<_>>().iter().map(Vec::as_slice),
    );
    let basis = span.basis();
    let combine = |coef: &[u32]| -> Vec<u32> {
        let mut v = vec![0u32; state.layout.len()];
        for (b, &c) in basis.iter().zip(coef) {
            if c == 0 {
                continue;
            }
            for (x, &y) in v.iter_mut().zip(b) {
                *x = field.add(*x, field.mul(c, y));
            }
        }
        v
    };
    let ok = |v: &[u32]| forbidden.iter().all(|(_, ech)| !ech.contains(v));
    let q = field.order();
    for _ in 0..SAMPLE_ATTEMPTS {
        let coef: Vec<u32> = (0..basis.len()).map(|_| rng.gen_range(0..q)).collect();
        let v = combine(&coef);
        if ok(&v) {
            return Ok(v);
        }
    }
    let size = (q as u64).checked_pow(basis.len() as u32);
    if size.is_some_and(|n| n <= ENUMERATION_LIMIT) {
        let mut coef = vec![0u32; basis.len()];
        while next_vector(&mut coef, q) {
            let v = combine(&coef);
            if ok(&v) {
                return Ok(v);
            }
        }
    }
    Err(ConstructionError::RetriesExhausted {
        attempts: SAMPLE_ATTEMPTS,
        detail: format!(
            "no admissible vector for edge {} over GF({q}); the field bound q ≥ |R(δ)| = {} should rule this out",
            state.net.edge_id(e),
            state.patterns.len()
        ),
    })
}

/// Fixes f̃_e and advances CUT_ρ along every path through e. `None` stands
/// for an edge on no path, which gets f̃_e = 𝟏_e.
pub fn update_edge(state: &mut ConstructionState, e: usize, g: Option<Vec<u32>>) -> Result<(), ConstructionError> {
    let field = state.field.clone();
    let own = state.layout.sk + e;
    let Some(mut g) = g else {
        state.f[e] = state.layout.unit(own);
        return Ok(());
    };
    if g[own] == 0 {
        g[own] = 1;
    } else {
        let inv = field.inv(g[own]).expect("nonzero");
        for x in g.iter_mut() {
            *x = field.mul(*x, inv);
        }
    }
    state.f[e] = g;
    for p in state.relevant(e) {
        let ps = &mut state.patterns[p];
        let pred = ps.pred[&e];
        let slot = ps.cut.iter().position(|&c| c == pred).expect("checked in choose_g");
        ps.cut[slot] = Channel::Edge(e);
    }
    state.assert_invariant(&format!("edge {}", state.net.edge_id(e)))
}

#[derive(Clone, Debug)]
pub struct IdentityBundle {
    pub code: LinearNetworkCode,
    pub delta: usize,
    pub pattern_count: usize,
    pub certificate: DistanceCertificate,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IdentitySummary {
    pub delta: usize,
    pub patterns: usize,
    pub k: usize,
    pub q: u32,
    pub d_min: usize,
    pub seed: u64,
}

impl IdentityBundle {
    pub fn summary(&self) -> IdentitySummary {
        IdentitySummary {
            delta: self.delta,
            patterns: self.pattern_count,
            k: self.code.k(),
            q: self.code.field().order(),
            d_min: self.certificate.d_min,
            seed: self.seed,
        }
    }
}

/// Largest k with δ ≥ 0: min over source subsets of ⌊mincut(I)/|I|⌋.
pub fn max_identity_rate(net: &Network) -> usize {
    let cuts = net.subset_mincuts();
    (1..cuts.len())
        .map(|mask| cuts[mask] / (mask as u32).count_ones() as usize)
        .min()
        .unwrap_or(0)
}

/// Identity-target code of rate k with d_min = δ + 1.
pub fn construct_identity_code(
    net: &Network,
    k: usize,
    field: &Field,
    seed: u64,
    cap: usize,
) -> Result<IdentityBundle, ConstructionError> {
    let s = net.source_count();
    let t = identity_target(field, s);
    let max = max_identity_rate(net);
    if k == 0 || k > max {
        return Err(ConstructionError::RateTooLarge { k, max });
    }
    let delta = net.cut_quantities(&t, k)?.delta;
    let delta = usize::try_from(delta).expect("k within the cut-set bound");
    let mut state = init_state(net, field, k, delta, cap)?;
    let count = state.patterns.len();
    if (field.order() as usize) < count {
        return Err(ConstructionError::FieldTooSmall {
            q: field.order() as u64,
            reason: format!("needs q ≥ |R({delta})| = {count}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let on_paths: HashSet<usize> = state.patterns.iter().flat_map(|p| p.edges.iter().copied()).collect();
    for &e in net.edge_topo_order() {
        let g = if on_paths.contains(&e) {
            Some(choose_g(&state, e, &mut rng)?)
        } else {
            None
        };
        update_edge(&mut state, e, g)?;
    }
    let sink_in: HashSet<usize> = net.sink_edges().iter().copied().collect();
    for ps in &state.patterns {
        if !ps.cut.iter().all(|c| matches!(c, Channel::Edge(e) if sink_in.contains(e))) {
            return Err(CodeError::Invariant(format!("frontier of ρ = {:?} did not reach the sink", ps.rho)).into());
        }
    }

    let code = extract_code(&state)?;
    if !code.computes_function(&t)? {
        return Err(CodeError::Invariant("identity code does not deliver the messages".into()).into());
    }
    for ps in &state.patterns {
        if phi_intersects(&code, &t, &ps.rho)?.is_some() {
            return Err(CodeError::Invariant(format!("Φ meets Δ(ρ) for ρ = {:?}", ps.rho)).into());
        }
    }
    let certificate = min_distance(&code, &t)?;
    if certificate.d_min != delta + 1 {
        return Err(CodeError::Invariant(format!(
            "identity code has distance {} instead of {}",
            certificate.d_min,
            delta + 1
        ))
        .into());
    }
    Ok(IdentityBundle {
        code,
        delta,
        pattern_count: count,
        certificate,
        seed,
    })
}

/// [`construct_identity_code`] over the smallest prime field with
/// q ≥ |R(δ)|, or `min_q` if that is larger.
pub fn construct_identity_code_auto(
    net: &Network,
    k: usize,
    seed: u64,
    cap: usize,
    min_q: u32,
) -> Result<IdentityBundle, ConstructionError> {
    let max = max_identity_rate(net);
    if k == 0 || k > max {
        return Err(ConstructionError::RateTooLarge { k, max });
    }
    let probe = Field::prime(2)?;
    let delta = net.cut_quantities(&identity_target(&probe, net.source_count()), k)?.delta as usize;
    let count = enumerate_r(net, delta, cap)?.len() as u64;
    let q = crate::field::next_prime(count.max(min_q as u64).max(2));
    let field = Field::prime(u32::try_from(q).map_err(|_| ConstructionError::TooManyPatterns {
        count: count as usize,
        cap,
    })?)?;
    construct_identity_code(net, k, &field, seed, cap)
}

/// Reads B_i and K off the final extended vectors: since f̃_d(d) = 1 and
/// f̃_{d′}(d) = 0 for the other in-edges d′ of the same node, the local
/// coefficient k_{d,e} is the d-coordinate of f̃_e.
fn extract_code(state: &ConstructionState) -> Result<LinearNetworkCode, ConstructionError> {
    let net = &state.net;
    let k = state.k;
    let sk = state.layout.sk;
    let mut code = LinearNetworkCode::zero(net, &state.field, k);
    for e in 0..net.edge_count() {
        let tail = net.edge(e).tail;
        if let Some(j) = net.source_position(tail) {
            for t in 0..k {
                code.set_source_coeff(j, t, e, state.f[e][j * k + t])?;
            }
        }
        for &d in net.in_edges(tail) {
            let v = state.f[e][sk + d];
            if v != 0 {
                code.set_transfer(d, e, v)?;
            }
        }
    }
    let rows: Vec<Vec<u32>> = state.f.clone();
    let expected = FieldMatrix::from_rows(&state.field, state.layout.len(), &rows)?.transpose();
    if code.global_vectors() != expected {
        return Err(CodeError::Invariant("extended vectors are not the code's global vectors".into()).into());
    }
    Ok(code)
}
