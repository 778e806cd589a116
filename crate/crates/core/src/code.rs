//! Scalar linear network codes: local coefficients, global encoding
//! matrices, and edge-by-edge transmission with injected errors.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::CodeError;
use crate::field::{Field, FieldSpec};
use crate::matrix::FieldMatrix;
use crate::network::Network;

/// Source and transfer coefficients of a rate-`k` scalar linear code.
#[derive(Clone)]
pub struct LinearNetworkCode {
    net: Network,
    field: Field,
    k: usize,
    /// One k × |ℰ| matrix per source.
    b: Vec<FieldMatrix>,
    /// |ℰ| × |ℰ| transfer matrix.
    kmat: FieldMatrix,
    cache: OnceLock<EncodingMatrices>,
}

impl fmt::Debug for LinearNetworkCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearNetworkCode")
            .field("field", &self.field)
            .field("k", &self.k)
            .field("edges", &self.net.edge_count())
            .finish()
    }
}

/// F (sk × |In(γ)|) and G (|ℰ| × |In(γ)|).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodingMatrices {
    pub f: FieldMatrix,
    pub g: FieldMatrix,
}

impl EncodingMatrices {
    /// The extended matrix [F; G].
    pub fn extended(&self) -> FieldMatrix {
        self.f.vstack(&self.g).expect("same width")
    }
}

/// Error vector z ∈ F_q^{|ℰ|}.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorVector {
    pub values: Vec<u32>,
}

impl ErrorVector {
    pub fn zero(edges: usize) -> Self {
        ErrorVector {
            values: vec![0; edges],
        }
    }

    pub fn single(edges: usize, e: usize, value: u32) -> Self {
        let mut z = Self::zero(edges);
        z.values[e] = value;
        z
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&e| self.values[e] != 0).collect()
    }

    pub fn weight(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    /// Whether the support lies inside `rho`.
    pub fn matches(&self, rho: &[usize]) -> bool {
        self.support().iter().all(|e| rho.contains(e))
    }
}

/// Word observed at the sink; `None` marks an erasure (⋆).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReceivedWord(pub Vec<Option<u32>>);

impl ReceivedWord {
    pub fn from_values(v: &[u32]) -> Self {
        ReceivedWord(v.iter().map(|&x| Some(x)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn erasures(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i].is_none()).collect()
    }

    /// The values when nothing is erased.
    pub fn values(&self) -> Option<Vec<u32>> {
        self.0.iter().copied().collect()
    }

    pub fn erase(&mut self, i: usize) {
        self.0[i] = None;
    }
}

impl fmt::Display for ReceivedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|s| s.map_or_else(|| "*".to_string(), |v| v.to_string()))
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

impl FromStr for ReceivedWord {
    type Err = CodeError;

    /// Whitespace- or comma-separated symbols, `*` for an erasure.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                if t == "*" {
                    Ok(None)
                } else {
                    t.parse::<u32>()
                        .map(Some)
                        .map_err(|_| CodeError::Invalid(format!("bad symbol {t:?}")))
                }
            })
            .collect::<Result<Vec<_>, _>>()
            .map(ReceivedWord)
    }
}

impl LinearNetworkCode {
    /// The all-zero code on `net`.
    pub fn zero(net: &Network, field: &Field, k: usize) -> Self {
        let m = net.edge_count();
        LinearNetworkCode {
            net: net.clone(),
            field: field.clone(),
            k,
            b: vec![FieldMatrix::zeros(field, k, m); net.source_count()],
            kmat: FieldMatrix::zeros(field, m, m),
            cache: OnceLock::new(),
        }
    }

    /// Builds a code from full coefficient matrices, checking that every
    /// nonzero coefficient respects the topology.
    pub fn new(
        net: &Network,
        field: &Field,
        k: usize,
        b: Vec<FieldMatrix>,
        kmat: FieldMatrix,
    ) -> Result<Self, CodeError> {
        let m = net.edge_count();
        if b.len() != net.source_count() {
            return Err(CodeError::Dimension(format!(
                "{} source matrices for {} sources",
                b.len(),
                net.source_count()
            )));
        }
        let mut code = Self::zero(net, field, k);
        for (i, bi) in b.iter().enumerate() {
            if bi.rows() != k || bi.cols() != m || bi.field() != field {
                return Err(CodeError::Dimension(format!("source matrix {i}")));
            }
            for j in 0..k {
                for e in 0..m {
                    code.set_source_coeff(i, j, e, bi.get(j, e))?;
                }
            }
        }
        if kmat.rows() != m || kmat.cols() != m || kmat.field() != field {
            return Err(CodeError::Dimension("transfer matrix".into()));
        }
        for d in 0..m {
            for e in 0..m {
                code.set_transfer(d, e, kmat.get(d, e))?;
            }
        }
        Ok(code)
    }

    /// Sets k_{(i,j),e}; nonzero only if e leaves source i.
    pub fn set_source_coeff(&mut self, i: usize, j: usize, e: usize, v: u32) -> Result<(), CodeError> {
        if i >= self.b.len() || j >= self.k || e >= self.net.edge_count() {
            return Err(CodeError::Dimension(format!("source coefficient ({i},{j},{e})")));
        }
        if !self.field.contains(v) {
            return Err(CodeError::Invalid(format!("value {v} outside the field")));
        }
        if v != 0 && self.net.edge(e).tail != self.net.sources()[i] {
            return Err(CodeError::Topology {
                edge: self.net.edge_id(e).to_string(),
                reason: format!("not an outgoing edge of source {}", self.net.vertex_name(self.net.sources()[i])),
            });
        }
        self.b[i].set(j, e, v);
        self.cache = OnceLock::new();
        Ok(())
    }

    /// Sets k_{d,e}; nonzero only if head(d) = tail(e).
    pub fn set_transfer(&mut self, d: usize, e: usize, v: u32) -> Result<(), CodeError> {
        let m = self.net.edge_count();
        if d >= m || e >= m {
            return Err(CodeError::Dimension(format!("transfer coefficient ({d},{e})")));
        }
        if !self.field.contains(v) {
            return Err(CodeError::Invalid(format!("value {v} outside the field")));
        }
        if v != 0 && self.net.edge(d).head != self.net.edge(e).tail {
            return Err(CodeError::Topology {
                edge: self.net.edge_id(e).to_string(),
                reason: format!("does not leave the head of {}", self.net.edge_id(d)),
            });
        }
        self.kmat.set(d, e, v);
        self.cache = OnceLock::new();
        Ok(())
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn source_matrix(&self, i: usize) -> &FieldMatrix {
        &self.b[i]
    }

    pub fn transfer_matrix(&self) -> &FieldMatrix {
        &self.kmat
    }

    /// sk, the length of the message vector.
    pub fn message_len(&self) -> usize {
        self.k * self.net.source_count()
    }

    /// |In(γ)|, the length of a received word.
    pub fn output_len(&self) -> usize {
        self.net.sink_edges().len()
    }

    /// Global vectors of every edge as columns of an (sk + |ℰ|) × |ℰ|
    /// matrix, i.e. [B₁;…;B_s; I](I−K)⁻¹, by forward substitution along
    /// the topological edge order.
    pub fn global_vectors(&self) -> FieldMatrix {
        let f = &self.field;
        let m = self.net.edge_count();
        let sk = self.message_len();
        let mut r = FieldMatrix::zeros(f, sk + m, m);
        for &e in self.net.edge_topo_order() {
            for (i, bi) in self.b.iter().enumerate() {
                for j in 0..self.k {
                    r.set(i * self.k + j, e, bi.get(j, e));
                }
            }
            r.set(sk + e, e, 1);
            let tail = self.net.edge(e).tail;
            for &d in self.net.in_edges(tail) {
                let c = self.kmat.get(d, e);
                if c == 0 {
                    continue;
                }
                for row in 0..sk + m {
                    let v = r.get(row, d);
                    if v != 0 {
                        let cur = r.get(row, e);
                        r.set(row, e, f.add(cur, f.mul(v, c)));
                    }
                }
            }
        }
        r
    }

    /// F = [B₁;…;B_s](I−K)⁻¹A_{In(γ)}ᵀ and G = (I−K)⁻¹A_{In(γ)}ᵀ.
    pub fn derive_matrices(&self) -> Result<&EncodingMatrices, CodeError> {
        if let Some(m) = self.cache.get() {
            return Ok(m);
        }
        let r = self.global_vectors();
        let sk = self.message_len();
        let m = self.net.edge_count();
        let cols = self.net.sink_edges().to_vec();
        let sel = r.select_cols(&cols);
        let f = sel.select_rows(&(0..sk).collect::<Vec<_>>());
        let g = sel.select_rows(&(sk..sk + m).collect::<Vec<_>>());
        for (c, &e) in cols.iter().enumerate() {
            for (c2, _) in cols.iter().enumerate() {
                let want = u32::from(c == c2);
                if g.get(e, c2) != want {
                    return Err(CodeError::Invariant(
                        "rows of G at In(γ) do not form an identity".into(),
                    ));
                }
            }
        }
        Ok(self.cache.get_or_init(|| EncodingMatrices { f, g }))
    }

    /// Simulates propagation edge by edge and checks the result against
    /// x·F + z·G.
    pub fn transmit(&self, x: &[u32], z: &ErrorVector) -> Result<Vec<u32>, CodeError> {
        let f = &self.field;
        let m = self.net.edge_count();
        if x.len() != self.message_len() || z.values.len() != m {
            return Err(CodeError::Dimension(format!(
                "message of length {} and error of length {}",
                x.len(),
                z.values.len()
            )));
        }
        let mut u = vec![0u32; m];
        for &e in self.net.edge_topo_order() {
            let mut acc = z.values[e];
            for (i, bi) in self.b.iter().enumerate() {
                for j in 0..self.k {
                    acc = f.add(acc, f.mul(x[i * self.k + j], bi.get(j, e)));
                }
            }
            for &d in self.net.in_edges(self.net.edge(e).tail) {
                acc = f.add(acc, f.mul(u[d], self.kmat.get(d, e)));
            }
            u[e] = acc;
        }
        let y: Vec<u32> = self.net.sink_edges().iter().map(|&e| u[e]).collect();
        let mats = self.derive_matrices()?;
        let xf = mats.f.vec_mul(x)?;
        let zg = mats.g.vec_mul(&z.values)?;
        let expect: Vec<u32> = xf.iter().zip(&zg).map(|(&a, &b)| f.add(a, b)).collect();
        if expect != y {
            return Err(CodeError::Invariant(
                "edge-by-edge propagation disagrees with xF + zG".into(),
            ));
        }
        Ok(y)
    }

    /// Whether the sink can compute x·(T⊗I_k) from x·F: every x in the left
    /// kernel of F is also in the left kernel of T⊗I_k.
    pub fn computes_function(&self, t: &FieldMatrix) -> Result<bool, CodeError> {
        let tk = self.target_kron(t)?;
        let f = &self.derive_matrices()?.f;
        let ns = f.left_null_space();
        if ns.rows() == 0 {
            return Ok(true);
        }
        Ok(ns.mul(&tk)?.is_zero())
    }

    /// T⊗I_k, checking that T has s rows over the code's field.
    pub fn target_kron(&self, t: &FieldMatrix) -> Result<FieldMatrix, CodeError> {
        if t.rows() != self.net.source_count() {
            return Err(CodeError::Dimension(format!(
                "target has {} rows for {} sources",
                t.rows(),
                self.net.source_count()
            )));
        }
        if t.field() != &self.field {
            return Err(CodeError::Invalid("target matrix over a different field".into()));
        }
        Ok(t.kronecker(&FieldMatrix::identity(&self.field, self.k))?)
    }

    pub fn to_file(&self) -> CodeFile {
        let mut source_coefficients = Vec::new();
        for (i, bi) in self.b.iter().enumerate() {
            for j in 0..self.k {
                for e in 0..self.net.edge_count() {
                    let v = bi.get(j, e);
                    if v != 0 {
                        source_coefficients.push(SourceCoefficient {
                            source: self.net.vertex_name(self.net.sources()[i]).to_string(),
                            j,
                            edge: self.net.edge_id(e).to_string(),
                            value: v,
                        });
                    }
                }
            }
        }
        let mut transfer = Vec::new();
        for d in 0..self.net.edge_count() {
            for e in 0..self.net.edge_count() {
                let v = self.kmat.get(d, e);
                if v != 0 {
                    transfer.push(TransferCoefficient {
                        from: self.net.edge_id(d).to_string(),
                        to: self.net.edge_id(e).to_string(),
                        value: v,
                    });
                }
            }
        }
        CodeFile {
            field: self.field.spec(),
            k: self.k,
            source_coefficients,
            transfer,
        }
    }

    pub fn from_file(net: &Network, file: &CodeFile) -> Result<Self, CodeError> {
        let field = Field::from_spec(&file.field)?;
        let mut code = Self::zero(net, &field, file.k);
        for c in &file.source_coefficients {
            let v = net.vertex_index(&c.source)?;
            let i = net
                .source_position(v)
                .ok_or_else(|| CodeError::Invalid(format!("{} is not a source", c.source)))?;
            code.set_source_coeff(i, c.j, net.edge_index(&c.edge)?, c.value)?;
        }
        for t in &file.transfer {
            code.set_transfer(net.edge_index(&t.from)?, net.edge_index(&t.to)?, t.value)?;
        }
        Ok(code)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCoefficient {
    pub source: String,
    pub j: usize,
    pub edge: String,
    pub value: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferCoefficient {
    pub from: String,
    pub to: String,
    pub value: u32,
}

/// On-disk code description; only nonzero coefficients are listed, in
/// source/edge index order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeFile {
    pub field: FieldSpec,
    pub k: usize,
    pub source_coefficients: Vec<SourceCoefficient>,
    pub transfer: Vec<TransferCoefficient>,
}

/// The all-ones column: target for the sum x₁ + … + x_s.
pub fn sum_target(field: &Field, s: usize) -> FieldMatrix {
    FieldMatrix::new(field, s, 1, vec![1; s]).expect("ones")
}

/// The s × s identity target.
pub fn identity_target(field: &Field, s: usize) -> FieldMatrix {
    FieldMatrix::identity(field, s)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::network::Network;
    use proptest::prelude::*;

    #[test]
    fn example_global_matrix() {
        let code = two_source_odd(5);
        let m = code.derive_matrices().unwrap();
        let f = code.field();
        assert_eq!(m.f, FieldMatrix::from_i64_rows(f, &[&[1, 1, 2], &[1, 1, 2]]).unwrap());
        let mut rows = m.g.row_vecs();
        rows.sort();
        let mut expect = Vec::new();
        for r in [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1]] {
            for _ in 0..3 {
                expect.push(r.to_vec());
            }
        }
        expect.sort();
        assert_eq!(rows, expect);
    }

    #[test]
    fn even_characteristic_global_matrix() {
        let code = two_source_even();
        let m = code.derive_matrices().unwrap();
        assert_eq!(m.f.row_vecs(), vec![vec![1, 1, 3], vec![1, 1, 3]]);
    }

    #[test]
    fn zero_code_has_identity_sink_rows() {
        let net = two_source_net();
        let f = Field::prime(3).unwrap();
        let code = LinearNetworkCode::zero(&net, &f, 1);
        let m = code.derive_matrices().unwrap();
        assert!(m.f.is_zero());
        let sink_rows = m.g.select_rows(net.sink_edges());
        assert_eq!(sink_rows, FieldMatrix::identity(&f, 3));
        assert!(!code.computes_function(&sum_target(&f, 2)).unwrap());
    }

    #[test]
    fn transmit_example() {
        let code = two_source_odd(5);
        let z = ErrorVector::zero(12);
        // Oracle: (1,1) times rows (1,1,2),(1,1,2) over GF(5).
        let f = code.field();
        let want: Vec<u32> = (0..3)
            .map(|c| f.add(code.derive_matrices().unwrap().f.get(0, c), code.derive_matrices().unwrap().f.get(1, c)))
            .collect();
        assert_eq!(want, vec![2, 2, 4]);
        assert_eq!(code.transmit(&[1, 1], &z).unwrap(), want);
        assert_eq!(code.transmit(&[0, 0], &z).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn single_sink_edge_error_shifts_one_coordinate() {
        let code = two_source_odd(7);
        let net = code.network().clone();
        let clean = code.transmit(&[3, 4], &ErrorVector::zero(12)).unwrap();
        for (pos, &e) in net.sink_edges().iter().enumerate() {
            let y = code.transmit(&[3, 4], &ErrorVector::single(12, e, 5)).unwrap();
            for c in 0..3 {
                let expect = if c == pos { (clean[c] + 5) % 7 } else { clean[c] };
                assert_eq!(y[c], expect);
            }
        }
    }

    #[test]
    fn computes_sum_and_identity_routing() {
        let code = two_source_odd(5);
        assert!(code.computes_function(&sum_target(code.field(), 2)).unwrap());
        assert!(!code.computes_function(&identity_target(code.field(), 2)).unwrap());

        let net = Network::from_edges(&["s1", "s2"], "g", &[("a", "s1", "g"), ("b", "s2", "g")]).unwrap();
        let f = Field::prime(3).unwrap();
        let mut r = LinearNetworkCode::zero(&net, &f, 1);
        r.set_source_coeff(0, 0, 0, 1).unwrap();
        r.set_source_coeff(1, 0, 1, 1).unwrap();
        // Oracle: every one of the 9 messages is recovered from y = x.
        let mut seen = std::collections::HashSet::new();
        for a in 0..3 {
            for b in 0..3 {
                let y = r.transmit(&[a, b], &ErrorVector::zero(2)).unwrap();
                assert!(seen.insert(y));
            }
        }
        assert!(r.computes_function(&identity_target(&f, 2)).unwrap());
    }

    #[test]
    fn topology_violations_rejected() {
        let net = two_source_net();
        let f = Field::prime(5).unwrap();
        let mut code = LinearNetworkCode::zero(&net, &f, 1);
        let e1 = net.edge_index("e1").unwrap();
        assert!(matches!(code.set_source_coeff(0, 0, e1, 1), Err(CodeError::Topology { .. })));
        let s1a = net.edge_index("s1a").unwrap();
        assert!(code.set_transfer(s1a, e1, 1).is_ok());
        let e2 = net.edge_index("e2").unwrap();
        assert!(matches!(code.set_transfer(s1a, e2, 1), Err(CodeError::Topology { .. })));
    }

    #[test]
    fn code_file_round_trip() {
        let code = two_source_odd(7);
        let file = code.to_file();
        let json = serde_json::to_string(&file).unwrap();
        let back: CodeFile = serde_json::from_str(&json).unwrap();
        let again = LinearNetworkCode::from_file(code.network(), &back).unwrap();
        assert_eq!(serde_json::to_string(&again.to_file()).unwrap(), json);
        assert_eq!(again.derive_matrices().unwrap(), code.derive_matrices().unwrap());
    }

    #[test]
    fn received_word_parsing() {
        let w: ReceivedWord = "3 * 6".parse().unwrap();
        assert_eq!(w.0, vec![Some(3), None, Some(6)]);
        assert_eq!(w.to_string(), "3 * 6");
        assert!("3 x".parse::<ReceivedWord>().is_err());
    }

    #[test]
    fn exhaustive_transmit_gf2() {
        // Every x and every z over GF(2) on a small relay network.
        let net = Network::from_edges(
            &["s"],
            "g",
            &[("a", "s", "r"), ("b", "s", "r"), ("c", "r", "g"), ("d", "s", "g")],
        )
        .unwrap();
        let f = Field::prime(2).unwrap();
        let mut code = LinearNetworkCode::zero(&net, &f, 2);
        code.set_source_coeff(0, 0, 0, 1).unwrap();
        code.set_source_coeff(0, 1, 1, 1).unwrap();
        code.set_source_coeff(0, 1, 3, 1).unwrap();
        code.set_transfer(0, 2, 1).unwrap();
        code.set_transfer(1, 2, 1).unwrap();
        for x in 0..4u32 {
            for zm in 0..16u32 {
                let xs = vec![x & 1, x >> 1 & 1];
                let z = ErrorVector {
                    values: (0..4).map(|i| zm >> i & 1).collect(),
                };
                code.transmit(&xs, &z).unwrap();
            }
        }
    }

    proptest! {
        #[test]
        fn transmit_matches_matrices(seed in any::<u64>(), x in prop::collection::vec(0u32..7, 2), z in prop::collection::vec(0u32..7, 12)) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let net = two_source_net();
            let f = Field::prime(7).unwrap();
            let mut code = LinearNetworkCode::zero(&net, &f, 1);
            for e in 0..12 {
                if let Some(i) = net.source_position(net.edge(e).tail) {
                    code.set_source_coeff(i, 0, e, rng.gen_range(0..7)).unwrap();
                }
                for &d in net.in_edges(net.edge(e).tail) {
                    code.set_transfer(d, e, rng.gen_range(0..7)).unwrap();
                }
            }
            // transmit itself asserts agreement with xF + zG.
            let z = ErrorVector { values: z };
            prop_assert!(code.transmit(&x, &z).is_ok());
        }
    }
}
