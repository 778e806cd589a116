//! Cut-set upper bounds and constructive lower bounds on how many target
//! values per network use survive τ adversarial edge errors.

use num_rational::Rational64;
use serde::{Serialize, Serializer};

use crate::code::{ErrorVector, LinearNetworkCode, ReceivedWord};
use crate::decoder::md_decode;
use crate::distance::min_distance;
use crate::error::{CodeError, ConstructionError};
use crate::field::Field;
use crate::identity_code::{construct_identity_code, construct_identity_code_auto, DEFAULT_PATTERN_CAP};
use crate::matrix::FieldMatrix;
use crate::network::Network;
use crate::sum_code::{construct_sum_code, construct_sum_code_auto};

fn ratio<S: Serializer>(r: &Rational64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

/// How the lower bound is achieved.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scheme {
    /// One (scaled) sum code of rate k.
    Sum { k: usize },
    /// One identity code of rate k, T applied at the sink.
    Identity { k: usize },
    /// `rounds` network uses, each a scaled-sum code of rate `rate`.
    TimeSharing { rounds: usize, rate: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WitnessSummary {
    pub q: u32,
    /// Distance of each round's code (one entry unless time-sharing).
    pub d_min: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CapacityReport {
    #[serde(serialize_with = "ratio")]
    pub upper: Rational64,
    #[serde(serialize_with = "ratio")]
    pub lower: Rational64,
    pub scheme: Scheme,
    /// Lower bound strictly below the upper bound.
    pub gap: bool,
    pub witness: Option<WitnessSummary>,
    /// Why no witness was built, when there is none.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_note: Option<String>,
}

fn check_tau(net: &Network, tau: usize) -> Result<Vec<usize>, ConstructionError> {
    let cuts = net.subset_mincuts();
    let smallest = cuts.iter().skip(1).copied().min().unwrap_or(0);
    if 2 * tau >= smallest {
        return Err(ConstructionError::TauTooLarge { tau, mincut: smallest });
    }
    Ok(cuts)
}

fn members(mask: usize, s: usize) -> Vec<usize> {
    (0..s).filter(|i| mask >> i & 1 == 1).collect()
}

/// min over nonempty source subsets I with Rank(T_I) > 0 of
/// (mincut(I) − 2τ) / Rank(T_I).
pub fn robust_upper(net: &Network, t: &FieldMatrix, tau: usize) -> Result<Rational64, ConstructionError> {
    let s = net.source_count();
    if t.rows() != s {
        return Err(ConstructionError::Invalid(format!("target has {} rows for {s} sources", t.rows())));
    }
    let cuts = check_tau(net, tau)?;
    let mut best: Option<Rational64> = None;
    for (mask, &cut) in cuts.iter().enumerate().skip(1) {
        let rank = t.select_rows(&members(mask, s)).rank() as i64;
        if rank == 0 {
            continue;
        }
        let r = Rational64::new(cut as i64 - 2 * tau as i64, rank);
        best = Some(best.map_or(r, |b| b.min(r)));
    }
    best.ok_or_else(|| ConstructionError::Invalid("target matrix is zero".into()))
}

fn is_identity_like(t: &FieldMatrix) -> bool {
    t.rows() == t.cols() && t.rank() == t.rows()
}

fn is_zero_one(t: &FieldMatrix) -> bool {
    t.data().iter().all(|&v| v <= 1)
}

/// Constructive lower bound together with a witness code built and
/// verified at the reported rate.
pub fn robust_lower(net: &Network, t: &FieldMatrix, tau: usize, seed: u64) -> Result<CapacityReport, ConstructionError> {
    let s = net.source_count();
    let upper = robust_upper(net, t, tau)?;
    let cuts = check_tau(net, tau)?;
    let l = t.cols();
    if t.rank() != l {
        return Err(ConstructionError::Invalid("target must have full column rank".into()));
    }
    let smallest = cuts.iter().skip(1).copied().min().unwrap();
    let (lower, scheme) = if l == 1 {
        let k = support_rate(net, t, 0, tau);
        (Rational64::from_integer(k as i64), Scheme::Sum { k })
    } else if is_identity_like(t) {
        let k = (1..cuts.len())
            .map(|mask| (cuts[mask] - 2 * tau) / members(mask, s).len())
            .min()
            .unwrap();
        (Rational64::from_integer(k as i64), Scheme::Identity { k })
    } else {
        let w = smallest - 2 * tau;
        (Rational64::new(w as i64, l as i64), Scheme::TimeSharing { rounds: l, rate: w })
    };
    let (witness, witness_note) = match build_witness(net, t, tau, &scheme, seed) {
        Ok(w) => (Some(w), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(CapacityReport {
        upper,
        lower,
        gap: lower < upper,
        scheme,
        witness,
        witness_note,
    })
}

/// min over sources with t_i ≠ 0 in column `col` of mincut(σ_i) − 2τ. A
/// subset's min-cut is at least each member's, so singletons suffice.
fn support_rate(net: &Network, t: &FieldMatrix, col: usize, tau: usize) -> usize {
    let cuts = net.subset_mincuts();
    (0..net.source_count())
        .filter(|&i| t.get(i, col) != 0)
        .map(|i| cuts[1 << i] - 2 * tau)
        .min()
        .unwrap_or(0)
}

fn build_witness(
    net: &Network,
    t: &FieldMatrix,
    tau: usize,
    scheme: &Scheme,
    seed: u64,
) -> Result<WitnessSummary, ConstructionError> {
    match *scheme {
        Scheme::Identity { k } => {
            if k == 0 {
                return Err(ConstructionError::Invalid("rate 0 needs no code".into()));
            }
            let b = match construct_identity_code(net, k, t.field(), seed, DEFAULT_PATTERN_CAP) {
                Ok(b) => b,
                // The identity code only delivers x; T is applied afterwards,
                // so any field works for the witness when T is 0/1-valued.
                Err(ConstructionError::FieldTooSmall { .. }) if is_zero_one(t) => {
                    construct_identity_code_auto(net, k, seed, DEFAULT_PATTERN_CAP, 2)?
                }
                Err(e) => return Err(e),
            };
            if b.certificate.d_min <= 2 * tau {
                return Err(CodeError::Invariant("identity witness is not robust".into()).into());
            }
            Ok(WitnessSummary {
                q: b.code.field().order(),
                d_min: vec![b.certificate.d_min],
            })
        }
        Scheme::Sum { k } => {
            let field = t.field();
            match time_sharing_at_rate(net, t, tau, field, k, seed) {
                Ok(ts) => Ok(ts.summary()),
                Err(ConstructionError::FieldTooSmall { .. } | ConstructionError::RetriesExhausted { .. })
                    if is_zero_one(t) =>
                {
                    let support: Vec<usize> = (0..t.rows()).filter(|&i| t.get(i, 0) != 0).collect();
                    let sub = sub_network(net, &support)?;
                    let (b, _) = construct_sum_code_auto(&sub, k, seed, field.order())?;
                    Ok(WitnessSummary {
                        q: b.code.field().order(),
                        d_min: vec![b.certificate.d_min],
                    })
                }
                Err(e) => Err(e),
            }
        }
        Scheme::TimeSharing { rate, .. } => {
            Ok(time_sharing_at_rate(net, t, tau, t.field(), rate, seed)?.summary())
        }
    }
}

/// One network use computing x·T_i for a single column of T.
#[derive(Clone, Debug)]
pub struct Round {
    pub column: usize,
    /// Sources with a nonzero coefficient in this column.
    pub support: Vec<usize>,
    pub code: LinearNetworkCode,
    /// The column T_i as an s × 1 target.
    pub target: FieldMatrix,
    pub d_min: usize,
}

/// x·T computed `rate` times over `rounds.len()` network uses.
#[derive(Clone, Debug)]
pub struct TimeSharingScheme {
    pub rounds: Vec<Round>,
    pub rate: usize,
    pub tau: usize,
}

impl TimeSharingScheme {
    pub fn summary(&self) -> WitnessSummary {
        WitnessSummary {
            q: self.rounds[0].code.field().order(),
            d_min: self.rounds.iter().map(|r| r.d_min).collect(),
        }
    }

    /// Received words of every round for messages `x` (s·rate symbols,
    /// source-major) and one error vector per round.
    pub fn transmit(&self, x: &[u32], errors: &[ErrorVector]) -> Result<Vec<Vec<u32>>, CodeError> {
        if errors.len() != self.rounds.len() {
            return Err(CodeError::Dimension(format!(
                "{} error vectors for {} rounds",
                errors.len(),
                self.rounds.len()
            )));
        }
        self.rounds
            .iter()
            .zip(errors)
            .map(|(r, z)| r.code.transmit(x, z))
            .collect()
    }

    /// Decodes every round and concatenates the results into x·(T ⊗ I_rate):
    /// column i occupies positions i·rate .. (i+1)·rate. `None` when some
    /// round reports a detected failure.
    pub fn decode(&self, words: &[ReceivedWord]) -> Result<Option<Vec<u32>>, CodeError> {
        let mut out = Vec::with_capacity(self.rounds.len() * self.rate);
        for (r, w) in self.rounds.iter().zip(words) {
            let res = md_decode(&r.code, &r.target, w, self.tau)?;
            match res.value {
                Some(v) if res.is_ok() => out.extend(v),
                _ => return Ok(None),
            }
        }
        Ok(Some(out))
    }
}

/// The network with only `support` kept as sources; the other source
/// vertices stay as ordinary vertices without in-edges. Edge indices are
/// unchanged.
fn sub_network(net: &Network, support: &[usize]) -> Result<Network, ConstructionError> {
    let mut spec = net.to_spec();
    spec.sources = support
        .iter()
        .map(|&i| net.vertex_name(net.sources()[i]).to_string())
        .collect();
    Ok(Network::from_spec(&spec)?)
}

/// A sum code on the support of column `col`, lifted to the full network
/// with source i's encoder scaled by t_i.
fn scaled_sum_round(
    net: &Network,
    t: &FieldMatrix,
    col: usize,
    rate: usize,
    field: &Field,
    seed: u64,
) -> Result<Round, ConstructionError> {
    let support: Vec<usize> = (0..t.rows()).filter(|&i| t.get(i, col) != 0).collect();
    if support.is_empty() {
        return Err(ConstructionError::Invalid(format!("column {col} of T is zero")));
    }
    let sub = sub_network(net, &support)?;
    let b = construct_sum_code(&sub, rate, field, seed)?;
    let mut code = LinearNetworkCode::zero(net, field, rate);
    let kmat = b.code.transfer_matrix();
    for d in 0..net.edge_count() {
        for &e in net.out_edges(net.edge(d).head) {
            let v = kmat.get(d, e);
            if v != 0 {
                code.set_transfer(d, e, v)?;
            }
        }
    }
    for (pos, &i) in support.iter().enumerate() {
        let bi = b.code.source_matrix(pos);
        let ti = t.get(i, col);
        for &e in net.out_edges(net.sources()[i]) {
            for j in 0..rate {
                code.set_source_coeff(i, j, e, field.mul(ti, bi.get(j, e)))?;
            }
        }
    }
    let target = t.select_cols(&[col]);
    if !code.computes_function(&target)? {
        return Err(CodeError::Invariant(format!("round {col} does not compute its column")).into());
    }
    let d_min = min_distance(&code, &target)?.d_min;
    Ok(Round {
        column: col,
        support,
        code,
        target,
        d_min,
    })
}

fn time_sharing_at_rate(
    net: &Network,
    t: &FieldMatrix,
    tau: usize,
    field: &Field,
    rate: usize,
    seed: u64,
) -> Result<TimeSharingScheme, ConstructionError> {
    if rate == 0 {
        return Err(ConstructionError::Invalid("rate w′ = min|C| − 2τ must be positive".into()));
    }
    if t.field() != field {
        return Err(ConstructionError::Invalid("target and code fields differ".into()));
    }
    let mut rounds = Vec::with_capacity(t.cols());
    for col in 0..t.cols() {
        let r = scaled_sum_round(net, t, col, rate, field, seed.wrapping_add(col as u64))?;
        if r.d_min <= 2 * tau {
            return Err(CodeError::Invariant(format!("round {col} has distance {} ≤ 2τ", r.d_min)).into());
        }
        rounds.push(r);
    }
    Ok(TimeSharingScheme { rounds, rate, tau })
}

/// l rounds of scaled-sum codes, round i computing x·T_i at the common rate
/// w′ = min|C| − 2τ. Requires T of full column rank.
pub fn time_sharing_scheme(
    net: &Network,
    t: &FieldMatrix,
    tau: usize,
    seed: u64,
) -> Result<TimeSharingScheme, ConstructionError> {
    let cuts = check_tau(net, tau)?;
    if t.rows() != net.source_count() || t.rank() != t.cols() {
        return Err(ConstructionError::Invalid(
            "target must have one row per source and full column rank".into(),
        ));
    }
    let w = cuts.iter().skip(1).copied().min().unwrap() - 2 * tau;
    time_sharing_at_rate(net, t, tau, t.field(), w, seed)
}
