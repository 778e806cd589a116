//! Minimum distance of a code with respect to a target function, the code
//! metric d_C, and error-pattern ranks.

use std::collections::HashMap;

use serde::Serialize;

use crate::code::{ErrorVector, LinearNetworkCode};
use crate::error::{CodeError, ConstructionError};
use crate::field::Field;
use crate::matrix::{Echelon, FieldMatrix};
use crate::network::Network;

/// Rank of an error pattern: the min-cut from its virtual source to γ.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PatternRankReport {
    pub pattern: Vec<usize>,
    pub rank: usize,
    /// Edges of the original network on a minimum σ_ρ–γ cut. Arcs of the
    /// split gadget that are not network edges are omitted.
    pub cut: Vec<usize>,
}

/// d_min together with a witness: a pattern ρ of size d_min, a message x
/// with x(T⊗I_k) ≠ 0 and an error z matching ρ with xF = zG.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DistanceCertificate {
    pub d_min: usize,
    pub pattern: Vec<usize>,
    pub x: Vec<u32>,
    pub z: Vec<u32>,
}

/// x and z with xF = zG, z matching a pattern, and x(T⊗I_k) ≠ 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhiWitness {
    pub x: Vec<u32>,
    pub z: Vec<u32>,
}

impl DistanceCertificate {
    /// Checks the witness by direct matrix arithmetic.
    pub fn verify(&self, code: &LinearNetworkCode, t: &FieldMatrix) -> Result<bool, CodeError> {
        let mats = code.derive_matrices()?;
        let tk = code.target_kron(t)?;
        let z = ErrorVector {
            values: self.z.clone(),
        };
        Ok(z.matches(&self.pattern)
            && self.pattern.len() == self.d_min
            && mats.f.vec_mul(&self.x)? == mats.g.vec_mul(&self.z)?
            && tk.vec_mul(&self.x)?.iter().any(|&v| v != 0))
    }
}

/// Basis of Δ(ρ) = span of the G-rows indexed by ρ.
pub fn delta_space(code: &LinearNetworkCode, rho: &[usize]) -> Result<FieldMatrix, CodeError> {
    let g = &code.derive_matrices()?.g;
    let ech = Echelon::from_rows(code.field(), g.cols(), rho.iter().map(|&e| g.row(e)));
    let basis = ech.basis();
    Ok(FieldMatrix::from_rows(code.field(), g.cols(), &basis)?)
}

/// Whether Φ ∩ Δ(ρ) ≠ ∅, with a witness. The left kernel of [F; −G_ρ]
/// parametrizes every (x, z) with xF = zG and z matching ρ; the projection
/// x ↦ x(T⊗I_k) is linear, so it vanishes on the kernel iff it vanishes on
/// a basis.
pub fn phi_intersects(
    code: &LinearNetworkCode,
    t: &FieldMatrix,
    rho: &[usize],
) -> Result<Option<PhiWitness>, CodeError> {
    let mats = code.derive_matrices()?;
    let tk = code.target_kron(t)?;
    Ok(phi_witness(code.field(), &mats.f, &mats.g, &tk, rho))
}

fn phi_witness(
    field: &Field,
    f: &FieldMatrix,
    g: &FieldMatrix,
    tk: &FieldMatrix,
    rho: &[usize],
) -> Option<PhiWitness> {
    let sk = f.rows();
    let neg_g = g.select_rows(rho).scale(field.neg(1));
    let stacked = f.vstack(&neg_g).expect("same width");
    let ns = stacked.left_null_space();
    for r in 0..ns.rows() {
        let v = ns.row(r);
        let x = &v[..sk];
        if tk.vec_mul(x).expect("dims").iter().any(|&c| c != 0) {
            let mut z = vec![0u32; g.rows()];
            for (i, &e) in rho.iter().enumerate() {
                z[e] = v[sk + i];
            }
            return Some(PhiWitness { x: x.to_vec(), z });
        }
    }
    None
}

/// One representative edge per projective class of nonzero G-rows. Two
/// edges whose rows are scalar multiples span the same Δ.
pub(crate) fn projective_representatives(field: &Field, g: &FieldMatrix) -> Vec<usize> {
    let mut seen: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut reps = Vec::new();
    for e in 0..g.rows() {
        let row = g.row(e);
        let Some(p) = row.iter().position(|&v| v != 0) else {
            continue;
        };
        let inv = field.inv(row[p]).expect("nonzero");
        let normal: Vec<u32> = row.iter().map(|&v| field.mul(v, inv)).collect();
        if seen.insert(normal, e).is_none() {
            reps.push(e);
        }
    }
    reps
}

/// Visits every `size`-subset of `candidates` whose rows are linearly
/// independent, in lexicographic order. Stops when `visit` returns true.
pub(crate) fn visit_independent(
    field: &Field,
    rows: &FieldMatrix,
    candidates: &[usize],
    size: usize,
    visit: &mut dyn FnMut(&[usize]) -> bool,
) -> bool {
    fn rec(
        rows: &FieldMatrix,
        candidates: &[usize],
        start: usize,
        size: usize,
        chosen: &mut Vec<usize>,
        ech: &Echelon,
        visit: &mut dyn FnMut(&[usize]) -> bool,
    ) -> bool {
        if chosen.len() == size {
            return visit(chosen);
        }
        let need = size - chosen.len();
        for i in start..candidates.len() {
            if candidates.len() - i < need {
                break;
            }
            let e = candidates[i];
            let mut next = ech.clone();
            if !next.insert(rows.row(e)) {
                continue;
            }
            chosen.push(e);
            if rec(rows, candidates, i + 1, size, chosen, &next, visit) {
                return true;
            }
            chosen.pop();
        }
        false
    }
    let ech = Echelon::new(field, rows.cols());
    rec(rows, candidates, 0, size, &mut Vec::new(), &ech, visit)
}

/// d_min(C, T, k): the smallest |ρ| with Φ ∩ Δ(ρ) ≠ ∅.
///
/// Only patterns with independent G-rows drawn from one representative per
/// projective class are searched; any other pattern spans the same Δ as a
/// smaller or equal one that is searched.
pub fn min_distance(code: &LinearNetworkCode, t: &FieldMatrix) -> Result<DistanceCertificate, CodeError> {
    let mats = code.derive_matrices()?;
    let tk = code.target_kron(t)?;
    let field = code.field();
    if let Some(w) = phi_witness(field, &mats.f, &mats.g, &tk, &[]) {
        return Ok(DistanceCertificate {
            d_min: 0,
            pattern: Vec::new(),
            x: w.x,
            z: w.z,
        });
    }
    let reps = projective_representatives(field, &mats.g);
    let h = mats.g.cols();
    for size in 1..=h {
        let mut found = None;
        visit_independent(field, &mats.g, &reps, size, &mut |rho| {
            if let Some(w) = phi_witness(field, &mats.f, &mats.g, &tk, rho) {
                found = Some((rho.to_vec(), w));
                true
            } else {
                false
            }
        });
        if let Some((pattern, w)) = found {
            return Ok(DistanceCertificate {
                d_min: size,
                pattern,
                x: w.x,
                z: w.z,
            });
        }
    }
    Err(CodeError::NotComputing)
}

/// d_min by scanning every edge subset of each size without pruning. Only
/// usable on small networks; kept as an independent cross-check.
pub fn min_distance_exhaustive(code: &LinearNetworkCode, t: &FieldMatrix) -> Result<usize, CodeError> {
    let mats = code.derive_matrices()?;
    let tk = code.target_kron(t)?;
    let m = mats.g.rows();
    assert!(m <= 24, "exhaustive search limited to 24 edges");
    let mut by_size: Vec<Vec<u32>> = vec![Vec::new(); m + 1];
    for mask in 0u32..1 << m {
        by_size[mask.count_ones() as usize].push(mask);
    }
    for (size, masks) in by_size.iter().enumerate() {
        for &mask in masks {
            let rho: Vec<usize> = (0..m).filter(|e| mask >> e & 1 == 1).collect();
            if phi_witness(code.field(), &mats.f, &mats.g, &tk, &rho).is_some() {
                return Ok(size);
            }
        }
    }
    Err(CodeError::NotComputing)
}

/// d_C(y1, y2): minimum Hamming weight of z with zG = y1 − y2.
pub fn dist_c(code: &LinearNetworkCode, y1: &[u32], y2: &[u32]) -> Result<usize, CodeError> {
    let mats = code.derive_matrices()?;
    let g = &mats.g;
    let field = code.field();
    if y1.len() != g.cols() || y2.len() != g.cols() {
        return Err(CodeError::Dimension("word length differs from |In(γ)|".into()));
    }
    let diff: Vec<u32> = y1.iter().zip(y2).map(|(&a, &b)| field.sub(a, b)).collect();
    if diff.iter().all(|&v| v == 0) {
        return Ok(0);
    }
    // A minimum-weight solution uses independent rows, and scalar multiples
    // of a row are interchangeable.
    let reps = projective_representatives(field, g);
    for size in 1..=g.cols() {
        let hit = visit_independent(field, g, &reps, size, &mut |rho| {
            let ech = Echelon::from_rows(field, g.cols(), rho.iter().map(|&e| g.row(e)));
            ech.contains(&diff)
        });
        if hit {
            return Ok(size);
        }
    }
    Err(CodeError::Invariant("G does not span the output space".into()))
}

/// Rank(ρ) = mincut(σ_ρ, γ) in 𝒩_ρ.
pub fn pattern_rank(net: &Network, rho: &[usize]) -> Result<PatternRankReport, CodeError> {
    let aug = net.augment_with_pattern(rho)?;
    let (rank, cut) = aug.pattern_mincut();
    Ok(PatternRankReport {
        pattern: aug.pattern.clone(),
        rank,
        cut,
    })
}

/// R(δ): every δ-subset of edges of rank δ, in lexicographic order. Rank is
/// hereditary (a subset of a full-rank pattern has full rank), so the
/// search only extends full-rank prefixes. Fails once more than `cap`
/// patterns are found.
pub fn enumerate_r(net: &Network, delta: usize, cap: usize) -> Result<Vec<Vec<usize>>, ConstructionError> {
    if delta == 0 {
        return Ok(vec![Vec::new()]);
    }
    let m = net.edge_count();
    let mut out = Vec::new();
    fn rec(
        net: &Network,
        m: usize,
        delta: usize,
        cap: usize,
        chosen: &mut Vec<usize>,
        start: usize,
        out: &mut Vec<Vec<usize>>,
    ) -> Result<(), ConstructionError> {
        if chosen.len() == delta {
            if out.len() >= cap {
                return Err(ConstructionError::TooManyPatterns {
                    count: out.len() + 1,
                    cap,
                });
            }
            out.push(chosen.clone());
            return Ok(());
        }
        for e in start..m {
            if m - e < delta - chosen.len() {
                break;
            }
            chosen.push(e);
            let rank = net.augment_with_pattern(chosen)?.pattern_mincut().0;
            if rank == chosen.len() {
                rec(net, m, delta, cap, chosen, e + 1, out)?;
            }
            chosen.pop();
        }
        Ok(())
    }
    rec(net, m, delta, cap, &mut Vec::new(), 0, &mut out)?;
    Ok(out)
}

/// Robustness via the distance criterion: d_min ≥ 2τ + 1.
pub fn is_robust(code: &LinearNetworkCode, t: &FieldMatrix, tau: usize) -> Result<bool, CodeError> {
    if tau == 0 {
        return code.computes_function(t);
    }
    Ok(min_distance(code, t)?.d_min > 2 * tau)
}

/// Robustness by definition: no sink word is reachable from two messages
/// with different target values under errors of weight ≤ τ. Enumerates all
/// q^{sk} messages and all errors of weight ≤ τ; `budget` bounds the number
/// of (x, z) pairs.
pub fn robust_by_exhaustion(
    code: &LinearNetworkCode,
    t: &FieldMatrix,
    tau: usize,
    budget: u64,
) -> Result<bool, CodeError> {
    let mats = code.derive_matrices()?;
    let tk = code.target_kron(t)?;
    let field = code.field();
    let q = field.order() as u64;
    let sk = code.message_len();
    let m = code.network().edge_count();
    let h = mats.g.cols();

    // All error contributions zG with wt(z) ≤ τ.
    let mut offsets: Vec<Vec<u32>> = vec![vec![0; h]];
    let mut supports: Vec<Vec<usize>> = Vec::new();
    for w in 1..=tau.min(m) {
        combinations(m, w, &mut |c| supports.push(c.to_vec()));
    }
    for sup in &supports {
        let w = sup.len();
        let mut vals = vec![1u32; w];
        loop {
            let mut y = vec![0u32; h];
            for (&e, &v) in sup.iter().zip(&vals) {
                for (c, slot) in y.iter_mut().enumerate() {
                    *slot = field.add(*slot, field.mul(v, mats.g.get(e, c)));
                }
            }
            offsets.push(y);
            // Next nonzero value tuple.
            let mut i = 0;
            while i < w {
                vals[i] += 1;
                if vals[i] < q as u32 {
                    break;
                }
                vals[i] = 1;
                i += 1;
            }
            if i == w {
                break;
            }
        }
    }
    let total = q.checked_pow(sk as u32).and_then(|n| n.checked_mul(offsets.len() as u64));
    if total.is_none_or(|n| n > budget) {
        return Err(CodeError::Invalid(format!(
            "exhaustive robustness check exceeds budget {budget}"
        )));
    }
    let mut owner: HashMap<Vec<u32>, Vec<u32>> = HashMap::new();
    let mut x = vec![0u32; sk];
    loop {
        let a = tk.vec_mul(&x)?;
        let base = mats.f.vec_mul(&x)?;
        for off in &offsets {
            let y: Vec<u32> = base.iter().zip(off).map(|(&b, &o)| field.add(b, o)).collect();
            match owner.get(&y) {
                Some(prev) if *prev != a => return Ok(false),
                Some(_) => {}
                None => {
                    owner.insert(y, a.clone());
                }
            }
        }
        if !next_vector(&mut x, q as u32) {
            break;
        }
    }
    Ok(true)
}

/// Advances `x` to the next vector in base-q counting order.
pub(crate) fn next_vector(x: &mut [u32], q: u32) -> bool {
    for v in x.iter_mut() {
        *v += 1;
        if *v < q {
            return true;
        }
        *v = 0;
    }
    false
}

/// Calls `f` on every `k`-subset of `0..n` in lexicographic order.
pub(crate) fn combinations(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(n, k, i + 1, cur, f);
            cur.pop();
        }
    }
    rec(n, k, 0, &mut Vec::new(), f);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::fixtures::*;
    use crate::code::sum_target;
    use crate::network::Network;
    use proptest::prelude::*;

    fn sum_t(code: &LinearNetworkCode) -> FieldMatrix {
        sum_target(code.field(), code.network().source_count())
    }

    #[test]
    fn delta_space_dimensions() {
        let code = two_source_odd(5);
        let net = code.network();
        assert_eq!(delta_space(&code, &[]).unwrap().rows(), 0);
        let e1 = net.edge_index("e1").unwrap();
        let d = delta_space(&code, &[e1]).unwrap();
        assert_eq!(d.row_vecs(), vec![vec![1, 0, 0]]);
        let wx = net.edge_index("wx").unwrap();
        assert_eq!(delta_space(&code, &[e1, wx]).unwrap().rows(), 2);
    }

    #[test]
    fn phi_on_example() {
        let code = two_source_odd(5);
        let t = sum_t(&code);
        assert!(phi_intersects(&code, &t, &[]).unwrap().is_none());
        combinations(12, 2, &mut |rho| {
            assert!(phi_intersects(&code, &t, rho).unwrap().is_none());
        });
        // Oracle: a 3-subset whose G-rows span (1,1,2); the three sink edges do.
        let g = &code.derive_matrices().unwrap().g;
        let mut spanning = None;
        combinations(12, 3, &mut |rho| {
            if spanning.is_none() {
                let ech = Echelon::from_rows(code.field(), 3, rho.iter().map(|&e| g.row(e)));
                if ech.contains(&[1, 1, 2]) {
                    spanning = Some(rho.to_vec());
                }
            }
        });
        let rho = spanning.unwrap();
        let w = phi_intersects(&code, &t, &rho).unwrap().unwrap();
        let mats = code.derive_matrices().unwrap();
        assert_eq!(mats.f.vec_mul(&w.x).unwrap(), mats.g.vec_mul(&w.z).unwrap());
    }

    #[test]
    fn example_distance() {
        for code in [two_source_odd(5), two_source_odd(7), two_source_even()] {
            let t = sum_t(&code);
            let cert = min_distance(&code, &t).unwrap();
            assert_eq!(cert.d_min, 3);
            assert!(cert.verify(&code, &t).unwrap());
            assert_eq!(min_distance_exhaustive(&code, &t).unwrap(), 3);
        }
    }

    #[test]
    fn routing_code_distance_one() {
        let net = Network::from_edges(&["s"], "g", &[("a", "s", "g"), ("b", "s", "g")]).unwrap();
        let f = Field::prime(3).unwrap();
        let mut code = LinearNetworkCode::zero(&net, &f, 2);
        code.set_source_coeff(0, 0, 0, 1).unwrap();
        code.set_source_coeff(0, 1, 1, 1).unwrap();
        let t = sum_target(&f, 1);
        assert_eq!(min_distance(&code, &t).unwrap().d_min, 1);
    }

    #[test]
    fn dist_c_examples() {
        let code = two_source_odd(5);
        assert_eq!(dist_c(&code, &[1, 2, 3], &[1, 2, 3]).unwrap(), 0);
        assert_eq!(dist_c(&code, &[1, 2, 3], &[1, 2, 4]).unwrap(), 1);
        assert_eq!(dist_c(&code, &[1, 0, 1], &[0, 0, 0]).unwrap(), 1);
        assert_eq!(dist_c(&code, &[1, 1, 0], &[0, 0, 0]).unwrap(), 2);
    }

    #[test]
    fn pattern_ranks() {
        let net = two_source_net();
        let sink = net.sink_edges().to_vec();
        assert_eq!(pattern_rank(&net, &sink).unwrap().rank, 3);
        let relay = Network::from_edges(
            &["s"],
            "g",
            &[("a", "s", "r"), ("b", "s", "r"), ("c", "r", "g"), ("d", "s", "g")],
        )
        .unwrap();
        assert_eq!(pattern_rank(&relay, &[0, 1]).unwrap().rank, 1);
        // Oracle: a, d lie on edge-disjoint paths to g.
        assert_eq!(pattern_rank(&relay, &[0, 3]).unwrap().rank, 2);
    }

    #[test]
    fn r_enumeration() {
        let net = two_source_net();
        let r1 = enumerate_r(&net, 1, 1000).unwrap();
        assert_eq!(r1.len(), 12);
        let star =
            Network::from_edges(&["s"], "g", &[("a", "s", "g"), ("b", "s", "g"), ("c", "s", "g")]).unwrap();
        assert_eq!(enumerate_r(&star, 3, 10).unwrap(), vec![vec![0, 1, 2]]);
        let path = Network::from_edges(&["s"], "g", &[("a", "s", "u"), ("b", "u", "v"), ("c", "v", "g")]).unwrap();
        assert!(enumerate_r(&path, 3, 10).unwrap().is_empty());
        assert!(enumerate_r(&path, 2, 10).unwrap().is_empty());
        assert!(matches!(
            enumerate_r(&net, 1, 5),
            Err(ConstructionError::TooManyPatterns { .. })
        ));
    }

    #[test]
    fn enumerate_r_matches_brute_force() {
        let net = two_source_net();
        for delta in 1..=3 {
            let mut brute = Vec::new();
            combinations(12, delta, &mut |rho| {
                if pattern_rank(&net, rho).unwrap().rank == delta {
                    brute.push(rho.to_vec());
                }
            });
            assert_eq!(enumerate_r(&net, delta, 10_000).unwrap(), brute);
        }
    }

    #[test]
    fn robustness_example() {
        let code = two_source_odd(5);
        let t = sum_t(&code);
        assert!(is_robust(&code, &t, 0).unwrap());
        assert!(is_robust(&code, &t, 1).unwrap());
        assert!(!is_robust(&code, &t, 2).unwrap());
        assert!(robust_by_exhaustion(&code, &t, 1, 1_000_000).unwrap());
        assert!(!robust_by_exhaustion(&code, &t, 2, 10_000_000).unwrap());
    }

    #[test]
    fn distance_equals_metric_reformulation() {
        // min over x with x·T ≠ 0 of d_C(xF, 0), q^{sk} = 25.
        let code = two_source_odd(5);
        let t = sum_t(&code);
        let f = &code.derive_matrices().unwrap().f;
        let tk = code.target_kron(&t).unwrap();
        let mut best = usize::MAX;
        let mut x = vec![0u32; 2];
        while next_vector(&mut x, 5) {
            if tk.vec_mul(&x).unwrap()[0] != 0 {
                let y = f.vec_mul(&x).unwrap();
                best = best.min(dist_c(&code, &y, &[0, 0, 0]).unwrap());
            }
        }
        assert_eq!(best, min_distance(&code, &t).unwrap().d_min);
    }

    #[test]
    fn distance_below_singleton() {
        let code = two_source_even();
        let t = sum_t(&code);
        let sb = code.network().cut_quantities(&t, 1).unwrap().singleton_bound;
        assert!(min_distance(&code, &t).unwrap().d_min as i64 <= sb);
    }

    fn brute_dist_c(code: &LinearNetworkCode, y1: &[u32], y2: &[u32]) -> usize {
        let g = &code.derive_matrices().unwrap().g;
        let f = code.field();
        let diff: Vec<u32> = y1.iter().zip(y2).map(|(&a, &b)| f.sub(a, b)).collect();
        for w in 0..=g.rows() {
            let mut hit = false;
            combinations(g.rows(), w, &mut |rho| {
                if !hit && g.select_rows(rho).row_space_contains(&diff) {
                    hit = true;
                }
            });
            if hit {
                return w;
            }
        }
        unreachable!()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn dist_c_is_a_metric(a in prop::collection::vec(0u32..5, 3), b in prop::collection::vec(0u32..5, 3), c in prop::collection::vec(0u32..5, 3)) {
            let code = two_source_odd(5);
            let ab = dist_c(&code, &a, &b).unwrap();
            prop_assert_eq!(ab, dist_c(&code, &b, &a).unwrap());
            prop_assert_eq!(ab == 0, a == b);
            let bc = dist_c(&code, &b, &c).unwrap();
            let ac = dist_c(&code, &a, &c).unwrap();
            prop_assert!(ac <= ab + bc);
            prop_assert_eq!(ab, brute_dist_c(&code, &a, &b));
        }
    }
}
