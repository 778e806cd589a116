//! Codes computing the sum of the source messages with distance meeting the
//! Singleton-like bound: a reverse-network multicast code supplies the
//! interior coefficients, and the source encoders map every source into a
//! common subspace that avoids all small error spans.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::code::{sum_target, LinearNetworkCode};
use crate::distance::{min_distance, projective_representatives, visit_independent, DistanceCertificate};
use crate::error::{CodeError, ConstructionError};
use crate::field::{next_prime, Field};
use crate::matrix::{Echelon, FieldMatrix};
use crate::network::{EdgeSpec, MulticastNetwork, Network, NetworkSpec};

/// Random draws of local coefficients before giving up on a field.
const MULTICAST_ATTEMPTS: usize = 64;
const FIND_D_ATTEMPTS: usize = 200;

/// A linear multicast solution on a reversed network.
#[derive(Clone, Debug)]
pub struct MulticastSolution {
    /// h × h coefficients on the source's out-edges (columns in out-edge order).
    pub b_tilde: FieldMatrix,
    /// Transfer matrix on the reversed network's edges.
    pub k: FieldMatrix,
    /// Per sink, the h × h matrix received on its in-edges.
    pub f: Vec<FieldMatrix>,
}

/// Network with every source of out-degree h and a sink of in-degree h.
#[derive(Clone, Debug)]
pub struct NormalizedNetwork {
    pub net: Network,
    /// Auxiliary source feeding each original source, when one was added.
    pub aux_sources: Vec<Option<usize>>,
    /// Auxiliary sink fed by the original sink, when one was added.
    pub aux_sink: Option<usize>,
    /// Edges `0..original_edges` are the original edges, same indices.
    pub original_edges: usize,
}

/// Exact evaluation of the subspace-counting inequality that guarantees a
/// good D exists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GaussianMargin {
    pub lhs: BigUint,
    pub rhs: BigUint,
    pub sufficient: bool,
}

#[derive(Clone, Debug)]
pub struct SumCodeBundle {
    pub code: LinearNetworkCode,
    pub h: usize,
    pub k: usize,
    /// k × h matrix whose row space carries every sink word. Absent for
    /// three-layer codes.
    pub d: Option<FieldMatrix>,
    /// Rows of G at each source's out-edges in the normalized network.
    pub f_prime: Vec<FieldMatrix>,
    /// Maps the sink's received word to the h outputs of the normalized
    /// network when an auxiliary sink was needed: F·M = [D; …; D].
    pub combiner: Option<FieldMatrix>,
    pub certificate: DistanceCertificate,
    pub margin: Option<GaussianMargin>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SumSummary {
    pub h: usize,
    pub k: usize,
    pub d_min: usize,
    pub q: u32,
    pub seed: u64,
}

impl SumCodeBundle {
    pub fn summary(&self) -> SumSummary {
        SumSummary {
            h: self.h,
            k: self.k,
            d_min: self.certificate.d_min,
            q: self.code.field().order(),
            seed: self.seed,
        }
    }

    /// Σx_i read off the received word at the pivot columns of D (after the
    /// combiner, if any). Only meaningful without errors.
    pub fn read_sum(&self, y: &[u32]) -> Result<Vec<u32>, CodeError> {
        let d = self
            .d
            .as_ref()
            .ok_or_else(|| CodeError::Invalid("bundle has no D matrix".into()))?;
        let y = match &self.combiner {
            Some(m) => m.vec_mul(y)?,
            None => y.to_vec(),
        };
        let (_, pivots) = d.rref();
        Ok(pivots.iter().map(|&c| y[c]).collect())
    }
}

fn random_matrix(field: &Field, rows: usize, cols: usize, rng: &mut impl Rng) -> FieldMatrix {
    let q = field.order();
    let data = (0..rows * cols).map(|_| rng.gen_range(0..q)).collect();
    FieldMatrix::new(field, rows, cols, data).expect("in range")
}

fn unique_name(taken: &[String], base: &str) -> String {
    let mut name = format!("{base}~aux");
    while taken.contains(&name) {
        name.push('~');
    }
    name
}

/// Adds an auxiliary source (h parallel edges) in front of every source
/// whose out-degree is not h, and an auxiliary sink (h parallel edges)
/// behind the sink when its in-degree is not h.
pub fn normalize_degrees(net: &Network, h: usize) -> Result<NormalizedNetwork, ConstructionError> {
    let mut spec = net.to_spec();
    let original_edges = spec.edges.len();
    let mut new_sources = Vec::new();
    let mut flagged = Vec::new();
    for &s in net.sources() {
        let name = net.vertex_name(s).to_string();
        if net.out_edges(s).len() != h {
            let aux = unique_name(&spec.vertices, &name);
            spec.vertices.push(aux.clone());
            for t in 0..h {
                spec.edges.push(EdgeSpec {
                    id: unique_name(&edge_ids(&spec), &format!("{name}.{t}")),
                    tail: aux.clone(),
                    head: name.clone(),
                });
            }
            new_sources.push(aux);
            flagged.push(true);
        } else {
            new_sources.push(name);
            flagged.push(false);
        }
    }
    spec.sources = new_sources;
    let sink_name = net.vertex_name(net.sink()).to_string();
    let sink_flag = net.sink_edges().len() != h;
    if sink_flag {
        let aux = unique_name(&spec.vertices, &sink_name);
        spec.vertices.push(aux.clone());
        for t in 0..h {
            spec.edges.push(EdgeSpec {
                id: unique_name(&edge_ids(&spec), &format!("{sink_name}.{t}")),
                tail: sink_name.clone(),
                head: aux.clone(),
            });
        }
        spec.sink = aux;
    }
    let out = Network::from_spec(&spec)?;
    let aux_sources = flagged
        .iter()
        .zip(out.sources())
        .map(|(&f, &s)| f.then_some(s))
        .collect();
    let aux_sink = sink_flag.then_some(out.sink());
    Ok(NormalizedNetwork {
        net: out,
        aux_sources,
        aux_sink,
        original_edges,
    })
}

fn edge_ids(spec: &NetworkSpec) -> Vec<String> {
    spec.edges.iter().map(|e| e.id.clone()).collect()
}

/// Random linear multicast of h symbols from the reversed network's source
/// to every sink, redrawn until every sink's h × h matrix is invertible.
pub fn multicast_reverse(
    mnet: &MulticastNetwork,
    h: usize,
    field: &Field,
    rng: &mut impl Rng,
) -> Result<MulticastSolution, ConstructionError> {
    let g = &mnet.graph;
    let out_src = g.out_edges(mnet.source).to_vec();
    if out_src.len() != h {
        return Err(ConstructionError::Invalid(format!(
            "source has out-degree {} instead of {h}",
            out_src.len()
        )));
    }
    for &t in &mnet.sinks {
        if g.in_edges(t).len() != h {
            return Err(ConstructionError::Invalid(format!(
                "sink {} has in-degree {} instead of {h}",
                g.name(t),
                g.in_edges(t).len()
            )));
        }
    }
    let topo = g
        .topo_order()
        .ok_or_else(|| ConstructionError::Invalid("reversed network has a cycle".into()))?;
    let mut pos = vec![0; g.vertex_count()];
    for (i, &v) in topo.iter().enumerate() {
        pos[v] = i;
    }
    let mut order: Vec<usize> = (0..g.edge_count()).collect();
    order.sort_by_key(|&e| (pos[g.edge(e).tail], e));
    let m = g.edge_count();
    for _ in 0..MULTICAST_ATTEMPTS {
        let b_tilde = random_matrix(field, h, h, rng);
        let mut k = FieldMatrix::zeros(field, m, m);
        for d in 0..m {
            for &e in g.out_edges(g.edge(d).head) {
                k.set(d, e, rng.gen_range(0..field.order()));
            }
        }
        // Global vectors as columns of an h × m matrix.
        let mut v = FieldMatrix::zeros(field, h, m);
        for &e in &order {
            if let Some(c) = out_src.iter().position(|&x| x == e) {
                for r in 0..h {
                    v.set(r, e, b_tilde.get(r, c));
                }
                continue;
            }
            for &d in g.in_edges(g.edge(e).tail) {
                let c = k.get(d, e);
                if c == 0 {
                    continue;
                }
                for r in 0..h {
                    let cur = v.get(r, e);
                    v.set(r, e, field.add(cur, field.mul(c, v.get(r, d))));
                }
            }
        }
        let f: Vec<FieldMatrix> = mnet
            .sinks
            .iter()
            .map(|&t| v.select_cols(g.in_edges(t)))
            .collect();
        if f.iter().all(|fi| fi.rank() == h) {
            return Ok(MulticastSolution { b_tilde, k, f });
        }
    }
    Err(ConstructionError::RetriesExhausted {
        attempts: MULTICAST_ATTEMPTS,
        detail: format!(
            "no invertible multicast solution over GF({}) for {} sinks; a larger field is needed",
            field.order(),
            mnet.sinks.len()
        ),
    })
}

/// Rows of `g` whose span meets the row space of `d` nontrivially, among
/// spans of at most `h − k` rows. `None` when D passes.
pub fn check_d(g: &FieldMatrix, d: &FieldMatrix, h: usize) -> Option<Vec<usize>> {
    let k = d.rows();
    let field = g.field();
    if d.rank() < k {
        return Some(Vec::new());
    }
    if k >= h {
        return None;
    }
    let reps = projective_representatives(field, g);
    let all_rank = Echelon::from_rows(field, g.cols(), reps.iter().map(|&e| g.row(e))).rank();
    let size = (h - k).min(all_rank);
    // Every span of ≤ size rows lies in the span of an independent set of
    // exactly `size` representatives, so those are the only ones checked.
    let mut bad = None;
    visit_independent(field, g, &reps, size, &mut |rows| {
        let mut ech = Echelon::from_rows(field, g.cols(), rows.iter().map(|&e| g.row(e)));
        let ok = (0..k).all(|r| ech.insert(d.row(r)));
        if !ok {
            bad = Some(rows.to_vec());
        }
        !ok
    });
    bad.map(|rows| smallest_violation(g, d, &rows))
}

/// Shrinks a violating row set to a minimal violating subset.
fn smallest_violation(g: &FieldMatrix, d: &FieldMatrix, rows: &[usize]) -> Vec<usize> {
    let field = g.field();
    let violates = |set: &[usize]| {
        let mut ech = Echelon::from_rows(field, g.cols(), set.iter().map(|&e| g.row(e)));
        !(0..d.rows()).all(|r| ech.insert(d.row(r)))
    };
    let mut cur = rows.to_vec();
    let mut i = 0;
    while i < cur.len() {
        let mut trial = cur.clone();
        trial.remove(i);
        if violates(&trial) {
            cur = trial;
        } else {
            i += 1;
        }
    }
    cur
}

/// A k × h matrix in reduced row-echelon form whose row space meets the
/// span of any h − k rows of `g` trivially.
pub fn find_d(g: &FieldMatrix, h: usize, k: usize, rng: &mut impl Rng) -> Result<FieldMatrix, ConstructionError> {
    if k == 0 || k > h || g.cols() != h {
        return Err(ConstructionError::Invalid(format!(
            "find_D needs 0 < k ≤ h = width of G (k={k}, h={h}, width={})",
            g.cols()
        )));
    }
    let field = g.field();
    let mut last = Vec::new();
    for _ in 0..FIND_D_ATTEMPTS {
        let d = random_matrix(field, k, h, rng);
        match check_d(g, &d, h) {
            None => return Ok(d.rref().0),
            Some(v) => last = v,
        }
    }
    Err(ConstructionError::RetriesExhausted {
        attempts: FIND_D_ATTEMPTS,
        detail: format!(
            "no D over GF({}) avoids all spans of {} rows; last violating rows {:?}",
            field.order(),
            h - k,
            last
        ),
    })
}

/// Gaussian binomial [h choose k]_q.
pub fn gaussian_binomial(h: u32, k: u32, q: u64) -> BigUint {
    let q = BigUint::from(q);
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..k {
        num *= q.pow(h) - q.pow(i);
        den *= q.pow(k) - q.pow(i);
    }
    num / den
}

fn binomial(n: u64, r: u64) -> BigUint {
    if r > n {
        return BigUint::zero();
    }
    let mut acc = BigUint::one();
    for i in 0..r {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Both sides of ([h k]_q − q^{k(h−k)})·C(E, h−k) < [h k]_q.
pub fn gaussian_margin(h: u32, k: u32, e: u64, q: u64) -> Result<GaussianMargin, ConstructionError> {
    if k >= h || (h - k) as u64 > e {
        return Err(ConstructionError::Invalid(format!(
            "need 0 < h − k ≤ E (h={h}, k={k}, E={e})"
        )));
    }
    let gauss = gaussian_binomial(h, k, q);
    let trivial = BigUint::from(q).pow(k * (h - k));
    let lhs = (&gauss - trivial) * binomial(e, (h - k) as u64);
    let sufficient = lhs < gauss;
    Ok(GaussianMargin {
        lhs,
        rhs: gauss,
        sufficient,
    })
}

/// Sum code of rate `k` with d_min = h − k + 1, where h is the smallest
/// source min-cut.
pub fn construct_sum_code(
    net: &Network,
    k: usize,
    field: &Field,
    seed: u64,
) -> Result<SumCodeBundle, ConstructionError> {
    let s = net.source_count();
    if (field.order() as usize) <= s {
        return Err(ConstructionError::FieldTooSmall {
            q: field.order() as u64,
            reason: format!("multicast to {s} sinks needs q > {s}"),
        });
    }
    let h = net.min_source_mincut();
    if k == 0 || k > h {
        return Err(ConstructionError::RateTooLarge { k, max: h });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let norm = normalize_degrees(net, h)?;
    let nn = &norm.net;
    let mc = multicast_reverse(&nn.reverse(), h, field, &mut rng)?;

    // Interior coefficients: transpose of the multicast transfer matrix.
    let mut code_n = LinearNetworkCode::zero(nn, field, k);
    for d in 0..nn.edge_count() {
        for &e in nn.out_edges(nn.edge(d).head) {
            code_n.set_transfer(d, e, mc.k.get(e, d))?;
        }
    }
    let g_n = code_n.derive_matrices()?.g.clone();
    let mut f_prime = Vec::with_capacity(s);
    for (i, &src) in nn.sources().iter().enumerate() {
        let fp = g_n.select_rows(nn.out_edges(src));
        // F_i' = F_iᵀ (B̃ᵀ)⁻¹ by transposing the multicast equation.
        let expect = mc.f[i].transpose().mul(&mc.b_tilde.transpose().inverse()?)?;
        if fp != expect {
            return Err(CodeError::Invariant("transposed multicast equation fails".into()).into());
        }
        f_prime.push(fp);
    }

    let g_orig = g_n.select_rows(&(0..norm.original_edges).collect::<Vec<_>>());
    let d = find_d(&g_orig, h, k, &mut rng)?;

    for (i, &src) in nn.sources().iter().enumerate() {
        let e_i = d.mul(&f_prime[i].inverse()?)?;
        for (c, &e) in nn.out_edges(src).iter().enumerate() {
            for j in 0..k {
                code_n.set_source_coeff(i, j, e, e_i.get(j, c))?;
            }
        }
    }
    let stacked = (1..s).try_fold(d.clone(), |acc, _| acc.vstack(&d))?;
    if code_n.derive_matrices()?.f != stacked {
        return Err(CodeError::Invariant("global matrix is not D stacked per source".into()).into());
    }

    let (code, combiner) = collapse(net, &norm, &code_n)?;
    let f = &code.derive_matrices()?.f;
    let effective = match &combiner {
        Some(m) => f.mul(m)?,
        None => f.clone(),
    };
    if effective != stacked {
        return Err(CodeError::Invariant("collapsed code lost x·F = (Σx)·D".into()).into());
    }
    probe_sum_identity(&code, &d, combiner.as_ref(), &mut rng)?;

    let t = sum_target(field, s);
    let certificate = min_distance(&code, &t)?;
    if certificate.d_min != h - k + 1 {
        return Err(CodeError::Invariant(format!(
            "constructed code has distance {} instead of {}",
            certificate.d_min,
            h - k + 1
        ))
        .into());
    }
    let margin = if k < h {
        gaussian_margin(h as u32, k as u32, net.edge_count() as u64, field.order() as u64).ok()
    } else {
        None
    };
    Ok(SumCodeBundle {
        code,
        h,
        k,
        d: Some(d),
        f_prime,
        combiner,
        certificate,
        margin,
        seed,
    })
}

/// Folds the auxiliary nodes back into the original network: auxiliary
/// source coefficients are composed into the real source's out-edges, and
/// the auxiliary sink's mixing becomes a combiner applied at the sink.
fn collapse(
    net: &Network,
    norm: &NormalizedNetwork,
    code_n: &LinearNetworkCode,
) -> Result<(LinearNetworkCode, Option<FieldMatrix>), ConstructionError> {
    let field = code_n.field();
    let k = code_n.k();
    let nn = &norm.net;
    let kn = code_n.transfer_matrix();
    let mut code = LinearNetworkCode::zero(net, field, k);
    for d in 0..net.edge_count() {
        for &e in net.out_edges(net.edge(d).head) {
            code.set_transfer(d, e, kn.get(d, e))?;
        }
    }
    for (i, &src) in net.sources().iter().enumerate() {
        let bn = code_n.source_matrix(i);
        match norm.aux_sources[i] {
            None => {
                for &e in net.out_edges(src) {
                    for j in 0..k {
                        code.set_source_coeff(i, j, e, bn.get(j, e))?;
                    }
                }
            }
            Some(aux) => {
                for &e in net.out_edges(src) {
                    for j in 0..k {
                        let mut acc = 0;
                        for &a in nn.out_edges(aux) {
                            acc = field.add(acc, field.mul(bn.get(j, a), kn.get(a, e)));
                        }
                        code.set_source_coeff(i, j, e, acc)?;
                    }
                }
            }
        }
    }
    let combiner = norm.aux_sink.map(|aux| {
        let outs = nn.in_edges(aux).to_vec();
        let ins = net.sink_edges();
        let mut m = FieldMatrix::zeros(field, ins.len(), outs.len());
        for (r, &d) in ins.iter().enumerate() {
            for (c, &a) in outs.iter().enumerate() {
                m.set(r, c, kn.get(d, a));
            }
        }
        m
    });
    Ok((code, combiner))
}

fn probe_sum_identity(
    code: &LinearNetworkCode,
    d: &FieldMatrix,
    combiner: Option<&FieldMatrix>,
    rng: &mut impl Rng,
) -> Result<(), ConstructionError> {
    let field = code.field();
    let (s, k) = (code.network().source_count(), code.k());
    let f = &code.derive_matrices()?.f;
    for _ in 0..100 {
        let x: Vec<u32> = (0..s * k).map(|_| rng.gen_range(0..field.order())).collect();
        let mut sum = vec![0u32; k];
        for i in 0..s {
            for j in 0..k {
                sum[j] = field.add(sum[j], x[i * k + j]);
            }
        }
        let mut y = f.vec_mul(&x)?;
        if let Some(m) = combiner {
            y = m.vec_mul(&y)?;
        }
        if y != d.vec_mul(&sum)? {
            return Err(CodeError::Invariant("x·F differs from (Σx)·D".into()).into());
        }
    }
    Ok(())
}

/// Runs [`construct_sum_code`] over prime fields, starting at the smallest
/// prime above both `min_q − 1` and the source count and at least doubling
/// q after every failed search. Returns the bundle and a log of attempts.
pub fn construct_sum_code_auto(
    net: &Network,
    k: usize,
    seed: u64,
    min_q: u32,
) -> Result<(SumCodeBundle, Vec<String>), ConstructionError> {
    let s = net.source_count() as u64;
    let mut q = next_prime((min_q as u64).max(s + 1));
    let mut log = Vec::new();
    loop {
        let field = Field::prime(q as u32)?;
        match construct_sum_code(net, k, &field, seed) {
            Ok(b) => {
                let margin = b
                    .margin
                    .as_ref()
                    .map_or("n/a".to_string(), |m| m.sufficient.to_string());
                log.push(format!("q={q}: success (gaussian margin sufficient: {margin})"));
                return Ok((b, log));
            }
            Err(e @ (ConstructionError::RetriesExhausted { .. } | ConstructionError::FieldTooSmall { .. })) => {
                log.push(format!("q={q}: {e}"));
                q = next_prime(2 * q);
                if q >= 1 << 20 {
                    return Err(e);
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Whether every edge goes source → relay or relay → sink, each relay has
/// exactly one edge to the sink, and no source reaches a relay twice.
fn three_layer_shape(net: &Network) -> Result<(), ConstructionError> {
    let sink = net.sink();
    let is_source = |v: usize| net.source_position(v).is_some();
    for e in 0..net.edge_count() {
        let ed = net.edge(e);
        let relay_to_sink = !is_source(ed.tail) && ed.head == sink;
        let source_to_relay = is_source(ed.tail) && ed.head != sink && !is_source(ed.head);
        if !(relay_to_sink || source_to_relay) {
            return Err(ConstructionError::NotThreeLayer(format!(
                "edge {} does not run source→relay or relay→sink",
                ed.id
            )));
        }
    }
    for v in 0..net.vertex_count() {
        if v == sink || is_source(v) {
            continue;
        }
        if net.out_edges(v).len() != 1 {
            return Err(ConstructionError::NotThreeLayer(format!(
                "relay {} has {} edges to the sink",
                net.vertex_name(v),
                net.out_edges(v).len()
            )));
        }
    }
    for &s in net.sources() {
        let mut heads: Vec<usize> = net.out_edges(s).iter().map(|&e| net.edge(e).head).collect();
        heads.sort_unstable();
        if heads.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConstructionError::NotThreeLayer(format!(
                "source {} has parallel edges to one relay",
                net.vertex_name(s)
            )));
        }
    }
    Ok(())
}

/// Three-layer sum code with d_min = c* − k + 1 (c* the smallest source
/// out-degree) over any field with q − 1 ≥ N relays.
///
/// The sink words live in a Reed–Solomon code of length N and dimension
/// N − c* + k. Source j is given k codewords supported on its own relays,
/// chosen so that a common projection P reads off the sum.
pub fn three_layer_sum_code(
    net: &Network,
    k: usize,
    field: &Field,
    seed: u64,
) -> Result<SumCodeBundle, ConstructionError> {
    three_layer_shape(net)?;
    let sink_edges = net.sink_edges().to_vec();
    let n = sink_edges.len();
    if (field.order() as usize) < n + 1 {
        return Err(ConstructionError::FieldTooSmall {
            q: field.order() as u64,
            reason: format!("needs q − 1 ≥ {n} relays"),
        });
    }
    let c_star = net
        .sources()
        .iter()
        .map(|&s| net.out_edges(s).len())
        .min()
        .unwrap_or(0);
    if k == 0 || k > c_star {
        return Err(ConstructionError::RateTooLarge { k, max: c_star });
    }
    let relay_col = |v: usize| sink_edges.iter().position(|&e| net.edge(e).tail == v);
    let dim = n - c_star + k;
    let mut gen = FieldMatrix::zeros(field, dim, n);
    for c in 0..n {
        let alpha = (c + 1) as u32;
        for r in 0..dim {
            gen.set(r, c, field.pow(alpha, r as u64));
        }
    }
    // S_j: messages whose codeword vanishes off source j's relays.
    let mut spaces = Vec::new();
    for &src in net.sources() {
        let mine: Vec<usize> = net
            .out_edges(src)
            .iter()
            .map(|&e| relay_col(net.edge(e).head).expect("relay feeds the sink"))
            .collect();
        let outside: Vec<usize> = (0..n).filter(|c| !mine.contains(c)).collect();
        let sj = if outside.is_empty() {
            FieldMatrix::identity(field, dim)
        } else {
            gen.select_cols(&outside).left_null_space()
        };
        spaces.push(sj);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = None;
    for _ in 0..FIND_D_ATTEMPTS {
        let p = random_matrix(field, dim, k, &mut rng);
        if spaces.iter().all(|sj| sj.mul(&p).map(|m| m.rank() == k).unwrap_or(false)) {
            chosen = Some(p);
            break;
        }
    }
    let p = chosen.ok_or_else(|| ConstructionError::RetriesExhausted {
        attempts: FIND_D_ATTEMPTS,
        detail: format!("no common projection over GF({})", field.order()),
    })?;

    let mut code = LinearNetworkCode::zero(net, field, k);
    for (i, &src) in net.sources().iter().enumerate() {
        let sj = &spaces[i];
        let mj = sj.mul(&p)?;
        let mut u = FieldMatrix::zeros(field, k, dim);
        for r in 0..k {
            let mut unit = vec![0u32; k];
            unit[r] = 1;
            let a = mj
                .solve_left(&unit)?
                .ok_or_else(|| CodeError::Invariant("projection lost rank".into()))?;
            let row = sj.vec_mul(&a)?;
            for (c, &v) in row.iter().enumerate() {
                u.set(r, c, v);
            }
        }
        let fj = u.mul(&gen)?;
        for &e in net.out_edges(src) {
            let c = relay_col(net.edge(e).head).unwrap();
            for j in 0..k {
                code.set_source_coeff(i, j, e, fj.get(j, c))?;
            }
        }
    }
    for &se in &sink_edges {
        let relay = net.edge(se).tail;
        for &d in net.in_edges(relay) {
            code.set_transfer(d, se, 1)?;
        }
    }
    let t = sum_target(field, net.source_count());
    if !code.computes_function(&t)? {
        return Err(CodeError::Invariant("three-layer code does not compute the sum".into()).into());
    }
    let certificate = min_distance(&code, &t)?;
    if certificate.d_min != c_star - k + 1 {
        return Err(CodeError::Invariant(format!(
            "three-layer code has distance {} instead of {}",
            certificate.d_min,
            c_star - k + 1
        ))
        .into());
    }
    Ok(SumCodeBundle {
        code,
        h: c_star,
        k,
        d: None,
        f_prime: Vec::new(),
        combiner: None,
        certificate,
        margin: None,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::fixtures::*;
    use crate::distance::min_distance_exhaustive;

    #[test]
    fn normalization_cases() {
        let net = two_source_net();
        let n = normalize_degrees(&net, 3).unwrap();
        assert_eq!(n.net, net);
        assert!(n.aux_sources.iter().all(Option::is_none));
        assert!(n.aux_sink.is_none());

        let wide = Network::from_edges(
            &["s"],
            "g",
            &[
                ("a", "s", "u"),
                ("b", "s", "u"),
                ("c", "s", "u"),
                ("d", "s", "g"),
                ("e", "s", "g"),
                ("f", "u", "g"),
                ("h", "u", "g"),
                ("i", "u", "g"),
            ],
        )
        .unwrap();
        let h = wide.min_source_mincut();
        assert_eq!(h, 5);
        let n = normalize_degrees(&wide, 3).unwrap();
        assert_eq!(n.net.out_edges(n.net.sources()[0]).len(), 3);
        assert_eq!(n.net.sink_edges().len(), 3);
        let again = normalize_degrees(&n.net, 3).unwrap();
        assert_eq!(again.net, n.net);
    }

    #[test]
    fn find_d_on_example_rows() {
        let code = two_source_odd(5);
        let g = code.derive_matrices().unwrap().g.clone();
        let f = code.field();
        let good = FieldMatrix::from_i64_rows(f, &[&[1, 1, 2]]).unwrap();
        assert_eq!(check_d(&g, &good, 3), None);
        let bad = FieldMatrix::from_i64_rows(f, &[&[1, 0, 0]]).unwrap();
        let v = check_d(&g, &bad, 3).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(g.row(v[0]), &[1, 0, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = find_d(&g, 3, 1, &mut rng).unwrap();
        assert_eq!(check_d(&g, &d, 3), None);
        // k = h: any invertible D, returned as the identity.
        assert_eq!(find_d(&g, 3, 3, &mut rng).unwrap(), FieldMatrix::identity(f, 3));
    }

    #[test]
    fn gaussian_values() {
        for q in [2u64, 3, 5, 7] {
            assert_eq!(gaussian_binomial(2, 1, q), BigUint::from(q + 1));
        }
        let m = gaussian_margin(3, 1, 12, 5).unwrap();
        // [3 1]_5 = 31, q^{k(h−k)} = 25, C(12, 2) = 66.
        assert_eq!(m.rhs, BigUint::from(31u32));
        assert_eq!(m.lhs, BigUint::from(6u32 * 66));
        assert!(!m.sufficient);
        assert!(gaussian_margin(3, 3, 12, 5).is_err());
        // [3 1]_q − q² = q + 1 and C(E, 2) copies of it stay below q² + q + 1
        // once q + 1 > C(E, 2) roughly.
        let m = gaussian_margin(3, 1, 4, 7).unwrap();
        assert_eq!(m.lhs, BigUint::from(8u32 * 6));
        assert!(m.sufficient);
    }

    #[test]
    fn single_edge_multicast() {
        let net = Network::from_edges(&["s"], "g", &[("e", "s", "g")]).unwrap();
        let f = Field::prime(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mc = multicast_reverse(&net.reverse(), 1, &f, &mut rng).unwrap();
        assert_eq!(mc.f.len(), 1);
        assert_eq!(mc.f[0].rank(), 1);
        let b = construct_sum_code(&net, 1, &f, 0).unwrap();
        assert_eq!(b.certificate.d_min, 1);
    }

    #[test]
    fn example_network_sum_code() {
        let net = two_source_net();
        let f = Field::prime(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mc = multicast_reverse(&net.reverse(), 3, &f, &mut rng).unwrap();
        assert!(mc.f.iter().all(|m| m.rank() == 3));
        let b = construct_sum_code(&net, 1, &f, 11).unwrap();
        assert_eq!(b.certificate.d_min, 3);
        let t = sum_target(&f, 2);
        assert_eq!(min_distance_exhaustive(&b.code, &t).unwrap(), 3);
        let b3 = construct_sum_code(&net, 3, &f, 11).unwrap();
        assert_eq!(b3.certificate.d_min, 1);
        assert!(matches!(
            construct_sum_code(&net, 4, &f, 11),
            Err(ConstructionError::RateTooLarge { .. })
        ));
    }

    #[test]
    fn sum_read_off_pivots() {
        let net = two_source_net();
        let f = Field::prime(7).unwrap();
        let b = construct_sum_code(&net, 2, &f, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x: Vec<u32> = (0..4).map(|_| rng.gen_range(0..7)).collect();
            let y = b.code.transmit(&x, &crate::code::ErrorVector::zero(12)).unwrap();
            let want = vec![(x[0] + x[2]) % 7, (x[1] + x[3]) % 7];
            assert_eq!(b.read_sum(&y).unwrap(), want);
        }
    }

    #[test]
    fn plain_dual_loses_distance() {
        // Negative control: source encoders taken straight from the dual
        // (first k rows of F_i'⁻¹) compute the sum but with distance 1.
        let net = two_source_net();
        let f = Field::prime(5).unwrap();
        let b = construct_sum_code(&net, 1, &f, 2).unwrap();
        let mut dual = b.code.clone();
        for (i, &src) in net.sources().iter().enumerate() {
            let inv = b.f_prime[i].inverse().unwrap();
            for (c, &e) in net.out_edges(src).iter().enumerate() {
                dual.set_source_coeff(i, 0, e, inv.get(0, c)).unwrap();
            }
        }
        let t = sum_target(&f, 2);
        assert!(dual.computes_function(&t).unwrap());
        assert_eq!(min_distance(&dual, &t).unwrap().d_min, 1);
        assert_eq!(min_distance(&b.code, &t).unwrap().d_min, 3);
    }

    #[test]
    fn irregular_network_with_aux_nodes() {
        let net = Network::from_edges(
            &["s1", "s2"],
            "g",
            &[
                ("a", "s1", "u"),
                ("b", "s1", "v"),
                ("c", "s1", "g"),
                ("d", "s2", "u"),
                ("e", "s2", "v"),
                ("f", "u", "g"),
                ("h", "u", "v"),
                ("i", "v", "g"),
                ("j", "v", "g"),
            ],
        )
        .unwrap();
        let (b, _) = construct_sum_code_auto(&net, 1, 4, 3).unwrap();
        assert_eq!(b.h, 2);
        assert_eq!(b.certificate.d_min, 2);
        let t = sum_target(b.code.field(), 2);
        assert_eq!(min_distance_exhaustive(&b.code, &t).unwrap(), 2);
        assert_eq!(
            net.cut_quantities(&t, 1).unwrap().singleton_bound,
            b.certificate.d_min as i64
        );
    }

    fn bipartite(sources: usize, relays: usize, adj: &dyn Fn(usize, usize) -> bool) -> Network {
        let names_s: Vec<String> = (0..sources).map(|i| format!("D{i}")).collect();
        let names_r: Vec<String> = (0..relays).map(|i| format!("W{i}")).collect();
        let mut edges = Vec::new();
        for i in 0..sources {
            for r in 0..relays {
                if adj(i, r) {
                    edges.push((format!("D{i}W{r}"), names_s[i].clone(), names_r[r].clone()));
                }
            }
        }
        for r in 0..relays {
            edges.push((format!("W{r}M"), names_r[r].clone(), "M".to_string()));
        }
        let e: Vec<(&str, &str, &str)> = edges.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str())).collect();
        let s: Vec<&str> = names_s.iter().map(String::as_str).collect();
        Network::from_edges(&s, "M", &e).unwrap()
    }

    #[test]
    fn three_layer_full_bipartite() {
        let net = bipartite(3, 4, &|_, _| true);
        let f = Field::prime(5).unwrap();
        let b = three_layer_sum_code(&net, 1, &f, 0).unwrap();
        assert_eq!(b.certificate.d_min, 4);
        assert_eq!(min_distance_exhaustive(&b.code, &sum_target(&f, 3)).unwrap(), 4);
        let full = three_layer_sum_code(&net, 4, &f, 0).unwrap();
        assert_eq!(full.certificate.d_min, 1);
        let small = Field::prime(3).unwrap();
        assert!(matches!(
            three_layer_sum_code(&net, 1, &small, 0),
            Err(ConstructionError::FieldTooSmall { .. })
        ));
        // q = N is still too small.
        let four = Field::binary(2).unwrap();
        assert!(three_layer_sum_code(&net, 1, &four, 0).is_err());
    }

    #[test]
    fn three_layer_cyclic() {
        let net = bipartite(5, 5, &|i, r| (r + 5 - i) % 5 < 3);
        let f = Field::prime(7).unwrap();
        for k in 1..=3 {
            let b = three_layer_sum_code(&net, k, &f, 1).unwrap();
            assert_eq!(b.certificate.d_min, 3 - k + 1);
        }
        assert!(matches!(
            three_layer_sum_code(&two_source_net(), 1, &f, 0),
            Err(ConstructionError::NotThreeLayer(_))
        ));
    }
}
