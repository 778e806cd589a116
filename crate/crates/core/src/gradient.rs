//! Straggler- and Byzantine-tolerant gradient coding on top of three-layer
//! sum codes: data subsets are sources, workers are relays and the master
//! is the sink.

use std::time::Instant;

use num_rational::Rational64;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::code::{sum_target, CodeFile, LinearNetworkCode, ReceivedWord};
use crate::decoder::{erasure_decode, md_decode};
use crate::distance::min_distance;
use crate::error::{CodeError, GradientError};
use crate::field::Field;
use crate::matrix::FieldMatrix;
use crate::network::Network;
use crate::sum_code::three_layer_sum_code;

/// Rationals travel as "a/b" strings in JSON.
pub mod ratio_serde {
    use num_rational::Rational64;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rational64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|r| r.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational64>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|s| s.trim().parse::<Rational64>().map_err(|e| D::Error::custom(format!("bad rational {s:?}: {e}"))))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkerProfile {
    /// Largest fraction of the data the worker can hold.
    pub storage: Rational64,
    /// Fraction of the data processed per unit time.
    pub speed: Rational64,
}

/// Data partition and placement. Subsets and workers are 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataAssignment {
    #[serde(rename = "K")]
    pub subsets: usize,
    /// Relative subset sizes, summing to 1.
    #[serde(with = "ratio_serde")]
    pub sizes: Vec<Rational64>,
    /// Subset indices held by each worker.
    pub workers: Vec<Vec<usize>>,
}

impl DataAssignment {
    /// K equal subsets with the given placement.
    pub fn uniform(subsets: usize, workers: Vec<Vec<usize>>) -> Self {
        DataAssignment {
            subsets,
            sizes: vec![Rational64::new(1, subsets as i64); subsets],
            workers,
        }
    }

    /// Worker i holds subsets i, i+1, …, i+width−1 (mod K), with K = n.
    pub fn cyclic(n: usize, width: usize) -> Self {
        let workers = (0..n).map(|i| (0..width).map(|t| (i + t) % n).collect()).collect();
        Self::uniform(n, workers)
    }

    pub fn worker_count(&self) -> usize {
        self.workers.len()
    }

    /// Number of workers holding each subset.
    pub fn replication(&self) -> Vec<usize> {
        let mut r = vec![0; self.subsets];
        for z in &self.workers {
            for &j in z {
                if j < self.subsets {
                    r[j] += 1;
                }
            }
        }
        r
    }

    /// μ_i: total size of the subsets held by worker i.
    pub fn loads(&self) -> Vec<Rational64> {
        self.workers
            .iter()
            .map(|z| z.iter().map(|&j| self.sizes[j]).sum())
            .collect()
    }

    fn validate(&self) -> Result<(), GradientError> {
        if self.sizes.len() != self.subsets {
            return Err(GradientError::Invalid(format!(
                "{} sizes for {} subsets",
                self.sizes.len(),
                self.subsets
            )));
        }
        for (i, z) in self.workers.iter().enumerate() {
            let mut seen = vec![false; self.subsets];
            for &j in z {
                if j >= self.subsets {
                    return Err(GradientError::Invalid(format!("worker {i} holds unknown subset {j}")));
                }
                if std::mem::replace(&mut seen[j], true) {
                    return Err(GradientError::Invalid(format!("worker {i} lists subset {j} twice")));
                }
            }
        }
        Ok(())
    }
}

fn subset_name(j: usize) -> String {
    format!("D{}", j + 1)
}

fn worker_name(i: usize) -> String {
    format!("W{}", i + 1)
}

/// N(𝒵): one source per subset, one relay per worker, the master as sink.
/// Worker i's edge to the master is the i-th sink edge.
pub fn build_network(a: &DataAssignment) -> Result<Network, GradientError> {
    a.validate()?;
    if let Some(j) = a.replication().iter().position(|&r| r == 0) {
        return Err(GradientError::OrphanSubset(j));
    }
    let mut edges: Vec<(String, String, String)> = Vec::new();
    for (i, z) in a.workers.iter().enumerate() {
        let mut z = z.clone();
        z.sort_unstable();
        for j in z {
            edges.push((format!("{}-{}", subset_name(j), worker_name(i)), subset_name(j), worker_name(i)));
        }
    }
    for i in 0..a.worker_count() {
        edges.push((format!("{}-M", worker_name(i)), worker_name(i), "M".into()));
    }
    let names: Vec<String> = (0..a.subsets).map(subset_name).collect();
    let sources: Vec<&str> = names.iter().map(String::as_str).collect();
    let e: Vec<(&str, &str, &str)> = edges.iter().map(|(x, y, z)| (x.as_str(), y.as_str(), z.as_str())).collect();
    Ok(Network::from_edges(&sources, "M", &e)?)
}

/// Every subset held by at least τ_s + m workers.
pub fn check_replication(a: &DataAssignment, tau_s: usize, m: usize) -> bool {
    a.replication().iter().all(|&r| r >= tau_s + m)
}

/// Fixed-point embedding of reals into a prime field. Values are scaled,
/// rounded and reduced mod q; decoding maps the upper half of the field to
/// negatives. Sums only survive while they stay inside (−q/2, q/2)/scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quantizer {
    pub q: u32,
    pub scale: u64,
}

impl Quantizer {
    pub fn quantize(&self, v: &[f64]) -> Vec<u32> {
        let q = self.q as i64;
        v.iter()
            .map(|&x| ((x * self.scale as f64).round() as i64).rem_euclid(q) as u32)
            .collect()
    }

    pub fn dequantize(&self, v: &[u32]) -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let signed = if x > self.q / 2 { x as i64 - self.q as i64 } else { x as i64 };
                signed as f64 / self.scale as f64
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct GradientCodingScheme {
    pub assignment: DataAssignment,
    pub network: Network,
    pub code: LinearNetworkCode,
    pub tau_s: usize,
    pub tau_b: usize,
    pub m: usize,
    pub p: usize,
    pub seed: u64,
    pub d_min: usize,
    /// f_i: column of F at worker i's sink edge, length mK.
    pub encoders: Vec<Vec<u32>>,
    pub quantizer: Option<Quantizer>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchemeFile {
    pub assignment: DataAssignment,
    pub code: CodeFile,
    pub tau_s: usize,
    pub tau_b: usize,
    pub m: usize,
    pub p: usize,
    pub q: u32,
    pub seed: u64,
    pub d_min: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantizer: Option<Quantizer>,
}

fn required_replication(tau_s: usize, tau_b: usize, m: usize) -> usize {
    if tau_b > 0 {
        (tau_s + m).max(2 * tau_b + m)
    } else {
        tau_s + m
    }
}

/// Three-layer sum code of rate m on N(𝒵) with distance at least
/// max(τ_s + 1, 2τ_b + 1).
pub fn build_scheme(
    a: &DataAssignment,
    tau_s: usize,
    tau_b: usize,
    m: usize,
    p: usize,
    field: &Field,
    seed: u64,
) -> Result<GradientCodingScheme, GradientError> {
    if m == 0 || p == 0 || !p.is_multiple_of(m) {
        return Err(GradientError::Invalid(format!("p = {p} must be a positive multiple of m = {m}")));
    }
    let net = build_network(a)?;
    let required = required_replication(tau_s, tau_b, m);
    let found = a.replication().into_iter().min().unwrap_or(0);
    if found < required {
        return Err(GradientError::InsufficientReplication { found, required });
    }
    let bundle = three_layer_sum_code(&net, m, field, seed)?;
    let d_min = bundle.certificate.d_min;
    if d_min < tau_s + 1 || d_min < 2 * tau_b + 1 {
        return Err(CodeError::Invariant(format!("scheme distance {d_min} is below the budgets")).into());
    }
    finish_scheme(a.clone(), net, bundle.code, tau_s, tau_b, m, p, seed, d_min)
}

#[allow(clippy::too_many_arguments)]
fn finish_scheme(
    assignment: DataAssignment,
    network: Network,
    code: LinearNetworkCode,
    tau_s: usize,
    tau_b: usize,
    m: usize,
    p: usize,
    seed: u64,
    d_min: usize,
) -> Result<GradientCodingScheme, GradientError> {
    let f = code.derive_matrices()?.f.clone();
    let mut encoders = Vec::with_capacity(assignment.worker_count());
    for (i, z) in assignment.workers.iter().enumerate() {
        let col = f.column(i);
        for (c, &v) in col.iter().enumerate() {
            if v != 0 && !z.contains(&(c / m)) {
                return Err(CodeError::Invariant(format!(
                    "encoder of worker {i} uses subset {} it does not hold",
                    c / m
                ))
                .into());
            }
        }
        encoders.push(col);
    }
    Ok(GradientCodingScheme {
        assignment,
        network,
        code,
        tau_s,
        tau_b,
        m,
        p,
        seed,
        d_min,
        encoders,
        quantizer: None,
    })
}

impl GradientCodingScheme {
    pub fn field(&self) -> &Field {
        self.code.field()
    }

    pub fn blocks(&self) -> usize {
        self.p / self.m
    }

    pub fn to_file(&self) -> SchemeFile {
        SchemeFile {
            assignment: self.assignment.clone(),
            code: self.code.to_file(),
            tau_s: self.tau_s,
            tau_b: self.tau_b,
            m: self.m,
            p: self.p,
            q: self.field().order(),
            seed: self.seed,
            d_min: self.d_min,
            quantizer: self.quantizer,
        }
    }

    /// Rebuilds a scheme, recomputing its distance.
    pub fn from_file(file: &SchemeFile) -> Result<Self, GradientError> {
        let net = build_network(&file.assignment)?;
        let code = LinearNetworkCode::from_file(&net, &file.code)?;
        if code.k() != file.m {
            return Err(GradientError::Invalid(format!("code rate {} differs from m = {}", code.k(), file.m)));
        }
        let d = min_distance(&code, &sum_target(code.field(), file.assignment.subsets))?.d_min;
        if d != file.d_min {
            return Err(CodeError::Invariant(format!("stored distance {} but the code has {d}", file.d_min)).into());
        }
        let mut s = finish_scheme(
            file.assignment.clone(),
            net,
            code,
            file.tau_s,
            file.tau_b,
            file.m,
            file.p,
            file.seed,
            d,
        )?;
        s.quantizer = file.quantizer;
        Ok(s)
    }
}

/// Worker i's message: for each block ℓ, (g_1(ℓ), …, g_K(ℓ))·f_i where
/// g_j(ℓ) is the ℓ-th run of m symbols of g_j. `grads[j]` must be present
/// for every held subset; other entries are ignored.
pub fn worker_encode(
    scheme: &GradientCodingScheme,
    i: usize,
    grads: &[Option<Vec<u32>>],
) -> Result<Vec<u32>, GradientError> {
    let field = scheme.field();
    let z = scheme
        .assignment
        .workers
        .get(i)
        .ok_or_else(|| GradientError::Invalid(format!("no worker {i}")))?;
    let f = &scheme.encoders[i];
    let m = scheme.m;
    let mut out = vec![0u32; scheme.blocks()];
    for &j in z {
        let g = grads
            .get(j)
            .and_then(Option::as_ref)
            .ok_or(GradientError::MissingGradient { worker: i, subset: j })?;
        if g.len() != scheme.p {
            return Err(GradientError::Invalid(format!(
                "gradient of subset {j} has length {} instead of {}",
                g.len(),
                scheme.p
            )));
        }
        for (l, o) in out.iter_mut().enumerate() {
            for t in 0..m {
                *o = field.add(*o, field.mul(g[l * m + t], f[j * m + t]));
            }
        }
    }
    Ok(out)
}

/// Σ_j g_j from the workers' messages (`None` for stragglers). Erasure
/// decoding when τ_b = 0, otherwise minimum-distance decoding per block
/// with error budget min(τ_b, ⌊(d − 1 − #stragglers)/2⌋).
pub fn master_decode(scheme: &GradientCodingScheme, messages: &[Option<Vec<u32>>]) -> Result<Vec<u32>, GradientError> {
    let n = scheme.assignment.worker_count();
    if messages.len() != n {
        return Err(GradientError::Invalid(format!("{} messages for {n} workers", messages.len())));
    }
    let stragglers = messages.iter().filter(|m| m.is_none()).count();
    if stragglers + 1 > scheme.d_min {
        return Err(GradientError::Code(CodeError::DecodeFailure(format!(
            "{stragglers} stragglers exceed the distance budget d − 1 = {}",
            scheme.d_min - 1
        ))));
    }
    let blocks = scheme.blocks();
    for (i, msg) in messages.iter().enumerate() {
        if let Some(v) = msg {
            if v.len() != blocks {
                return Err(GradientError::Invalid(format!(
                    "message of worker {i} has length {} instead of {blocks}",
                    v.len()
                )));
            }
        }
    }
    let t = sum_target(scheme.field(), scheme.assignment.subsets);
    let budget = scheme.tau_b.min((scheme.d_min - 1 - stragglers) / 2);
    let mut out = Vec::with_capacity(scheme.p);
    for l in 0..blocks {
        let word = ReceivedWord(messages.iter().map(|m| m.as_ref().map(|v| v[l])).collect());
        let res = if scheme.tau_b == 0 {
            erasure_decode(&scheme.code, &t, &word)?
        } else {
            md_decode(&scheme.code, &t, &word, budget)?
        };
        match res.value {
            Some(v) if res.is_ok() => out.extend(v),
            _ => {
                return Err(GradientError::Code(CodeError::DecodeFailure(format!(
                    "block {l}: no sum within {budget} corrupted workers"
                ))))
            }
        }
    }
    Ok(out)
}

/// Σ_i min(r_i, t·s_i).
fn coverage(profiles: &[WorkerProfile], t: Rational64) -> Rational64 {
    profiles.iter().map(|w| w.storage.min(t * w.speed)).sum()
}

/// Loads minimizing max μ_i/s_i subject to μ_i ≤ r_i and Σμ_i ≥ τ_s + m.
/// μ*_i = min(r_i, t*·s_i) for the smallest t* reaching the total; t* is
/// located among the breakpoints r_i/s_i by bisection and then solved
/// exactly on the linear piece.
pub fn optimize_load(profiles: &[WorkerProfile], tau_s: usize, m: usize) -> Result<Vec<Rational64>, GradientError> {
    let need = Rational64::from_integer((tau_s + m) as i64);
    for (i, w) in profiles.iter().enumerate() {
        if w.speed <= Rational64::zero() {
            return Err(GradientError::Invalid(format!("worker {i} has non-positive speed")));
        }
        if w.storage < Rational64::zero() || w.storage > Rational64::one() {
            return Err(GradientError::Invalid(format!("worker {i} storage outside [0, 1]")));
        }
    }
    let total: Rational64 = profiles.iter().map(|w| w.storage).sum();
    if total < need {
        return Err(GradientError::Infeasible(format!("Σr = {total} is below τ_s + m = {need}")));
    }
    let mut breaks: Vec<Rational64> = profiles.iter().map(|w| w.storage / w.speed).collect();
    breaks.sort();
    breaks.dedup();
    // First breakpoint whose coverage reaches the need.
    let (mut lo, mut hi) = (0usize, breaks.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if coverage(profiles, breaks[mid]) >= need {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let upper = breaks[lo];
    let lower = if lo == 0 { Rational64::zero() } else { breaks[lo - 1] };
    // On (lower, upper] the saturated workers are those with r/s ≤ lower.
    let mut saturated = Rational64::zero();
    let mut slope = Rational64::zero();
    for w in profiles {
        if w.storage / w.speed <= lower {
            saturated += w.storage;
        } else {
            slope += w.speed;
        }
    }
    let t = (need - saturated) / slope;
    debug_assert!(t > lower && t <= upper);
    let mu: Vec<Rational64> = profiles.iter().map(|w| w.storage.min(t * w.speed)).collect();
    debug_assert_eq!(mu.iter().copied().sum::<Rational64>(), need);
    Ok(mu)
}

/// Lays worker intervals of lengths μ_i end to end around a unit circle;
/// since Σμ ≥ τ_s + m and every μ_i ≤ 1, each point is covered by at least
/// τ_s + m distinct workers. Subsets are the arcs between interval
/// endpoints, so realized loads equal μ exactly.
pub fn load_to_assignment(mu: &[Rational64], tau_s: usize, m: usize) -> Result<DataAssignment, GradientError> {
    let need = Rational64::from_integer((tau_s + m) as i64);
    let total: Rational64 = mu.iter().copied().sum();
    if total < need {
        return Err(GradientError::Infeasible(format!("Σμ = {total} is below τ_s + m = {need}")));
    }
    if mu.iter().any(|&x| x < Rational64::zero() || x > Rational64::one()) {
        return Err(GradientError::Invalid("every load must lie in [0, 1]".into()));
    }
    let frac = |x: Rational64| x - x.floor();
    let mut starts = Vec::with_capacity(mu.len());
    let mut acc = Rational64::zero();
    let mut cuts = vec![Rational64::zero()];
    for &x in mu {
        starts.push(acc);
        cuts.push(frac(acc));
        acc += x;
        cuts.push(frac(acc));
    }
    cuts.sort();
    cuts.dedup();
    let arcs: Vec<(Rational64, Rational64)> = cuts
        .iter()
        .enumerate()
        .map(|(i, &a)| (a, cuts.get(i + 1).copied().unwrap_or(Rational64::one())))
        .collect();
    let mut workers = Vec::with_capacity(mu.len());
    for (&start, &len) in starts.iter().zip(mu) {
        let mut z = Vec::new();
        if len > Rational64::zero() {
            let a = frac(start);
            let b = a + len;
            for (j, &(lo, _)) in arcs.iter().enumerate() {
                // Arcs never straddle an endpoint, so an arc lies in [a, b)
                // (mod 1) exactly when its left end does.
                if (lo >= a && lo < b) || (lo + 1 >= a && lo + 1 < b) {
                    z.push(j);
                }
            }
        }
        workers.push(z);
    }
    let a = DataAssignment {
        subsets: arcs.len(),
        sizes: arcs.iter().map(|&(lo, hi)| hi - lo).collect(),
        workers,
    };
    if a.loads() != mu {
        return Err(GradientError::Invalid("interval filling did not realize the loads".into()));
    }
    Ok(a)
}

/// Stragglers send nothing; Byzantine workers add a nonzero vector to
/// their message (drawn from the seed unless given).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Adversary {
    pub stragglers: Vec<usize>,
    pub byzantine: Vec<(usize, Option<Vec<u32>>)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Timings {
    pub encode_us: u128,
    pub decode_us: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SimulationReport {
    pub success: bool,
    /// Stragglers + 2·corruptions ≤ d − 1 and corruptions ≤ τ_b.
    pub within_budget: bool,
    pub expected: Vec<u32>,
    pub decoded: Option<Vec<u32>>,
    pub error: Option<String>,
    pub stragglers: Vec<usize>,
    pub byzantine: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

/// Encode at every worker, apply the adversary, decode at the master and
/// compare with the direct sum.
pub fn simulate(
    scheme: &GradientCodingScheme,
    grads: &[Vec<u32>],
    adv: &Adversary,
    seed: u64,
) -> Result<SimulationReport, GradientError> {
    let field = scheme.field();
    let k = scheme.assignment.subsets;
    if grads.len() != k || grads.iter().any(|g| g.len() != scheme.p) {
        return Err(GradientError::Invalid(format!("need {k} gradients of length {}", scheme.p)));
    }
    let n = scheme.assignment.worker_count();
    for &w in adv.stragglers.iter().chain(adv.byzantine.iter().map(|(w, _)| w)) {
        if w >= n {
            return Err(GradientError::Invalid(format!("no worker {w}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let expected: Vec<u32> = (0..scheme.p)
        .map(|c| grads.iter().fold(0, |acc, g| field.add(acc, g[c])))
        .collect();
    let held: Vec<Option<Vec<u32>>> = grads.iter().cloned().map(Some).collect();

    let t0 = Instant::now();
    let mut messages = Vec::with_capacity(n);
    for i in 0..n {
        messages.push(Some(worker_encode(scheme, i, &held)?));
    }
    let encode_us = t0.elapsed().as_micros();

    for (w, offset) in &adv.byzantine {
        let msg = messages[*w].as_mut().expect("encoded");
        let delta = match offset {
            Some(d) if d.len() == msg.len() => d.clone(),
            Some(d) => {
                return Err(GradientError::Invalid(format!(
                    "corruption for worker {w} has length {} instead of {}",
                    d.len(),
                    msg.len()
                )))
            }
            None => loop {
                let d: Vec<u32> = (0..msg.len()).map(|_| rng.gen_range(0..field.order())).collect();
                if d.iter().any(|&x| x != 0) {
                    break d;
                }
            },
        };
        for (x, d) in msg.iter_mut().zip(delta) {
            *x = field.add(*x, d);
        }
    }
    for &w in &adv.stragglers {
        messages[w] = None;
    }
    let erased = messages.iter().filter(|m| m.is_none()).count();
    let corrupted: Vec<usize> = adv
        .byzantine
        .iter()
        .map(|(w, _)| *w)
        .filter(|w| !adv.stragglers.contains(w))
        .collect();
    let within_budget = erased + 2 * corrupted.len() < scheme.d_min && corrupted.len() <= scheme.tau_b;

    let t1 = Instant::now();
    let outcome = master_decode(scheme, &messages);
    let decode_us = t1.elapsed().as_micros();
    let (decoded, error) = match outcome {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SimulationReport {
        success: decoded.as_ref() == Some(&expected),
        within_budget,
        expected,
        decoded,
        error,
        stragglers: adv.stragglers.clone(),
        byzantine: corrupted,
        timings: Some(Timings { encode_us, decode_us }),
    })
}

/// Uniform random gradients for K subsets.
pub fn random_gradients(field: &Field, subsets: usize, p: usize, seed: u64) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..subsets)
        .map(|_| (0..p).map(|_| rng.gen_range(0..field.order())).collect())
        .collect()
}

/// Encoders as a (mK) × n matrix, one column per worker.
pub fn encoder_matrix(scheme: &GradientCodingScheme) -> FieldMatrix {
    scheme.code.derive_matrices().expect("derived at build time").f.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::{combinations, min_distance_exhaustive};

    fn r(a: i64, b: i64) -> Rational64 {
        Rational64::new(a, b)
    }

    fn profiles(rs: &[Rational64], ss: &[Rational64]) -> Vec<WorkerProfile> {
        rs.iter()
            .zip(ss)
            .map(|(&storage, &speed)| WorkerProfile { storage, speed })
            .collect()
    }

    #[test]
    fn network_shapes() {
        let full = DataAssignment::uniform(2, vec![vec![0, 1], vec![0, 1]]);
        let net = build_network(&full).unwrap();
        assert_eq!(net.edge_count(), 6);
        assert_eq!(net.sink_edges().len(), 2);
        let cyc = build_network(&DataAssignment::cyclic(3, 2)).unwrap();
        assert!(cyc.sources().iter().all(|&s| cyc.out_edges(s).len() == 2));
        let orphan = DataAssignment::uniform(3, vec![vec![0], vec![1]]);
        assert_eq!(build_network(&orphan), Err(GradientError::OrphanSubset(2)));
    }

    #[test]
    fn replication_checks() {
        let full = DataAssignment::uniform(3, vec![vec![0, 1, 2]; 3]);
        assert!(check_replication(&full, 1, 2));
        let cyc = DataAssignment::cyclic(3, 2);
        assert_eq!(cyc.replication(), vec![2, 2, 2]);
        assert!(check_replication(&cyc, 1, 1));
        assert!(!check_replication(&cyc, 2, 1));
    }

    #[test]
    fn cyclic_scheme_tolerates_any_straggler() {
        let f = Field::prime(5).unwrap();
        let a = DataAssignment::cyclic(3, 2);
        let s = build_scheme(&a, 1, 0, 1, 1, &f, 0).unwrap();
        assert!(s.d_min >= 2);
        assert_eq!(min_distance_exhaustive(&s.code, &sum_target(&f, 3)).unwrap(), s.d_min);
        let mut g = vec![0u32; 3];
        loop {
            let held: Vec<Option<Vec<u32>>> = g.iter().map(|&v| Some(vec![v])).collect();
            let msgs: Vec<Option<Vec<u32>>> = (0..3).map(|i| Some(worker_encode(&s, i, &held).unwrap())).collect();
            let want = vec![(g[0] + g[1] + g[2]) % 5];
            assert_eq!(master_decode(&s, &msgs).unwrap(), want);
            for drop in 0..3 {
                let mut m = msgs.clone();
                m[drop] = None;
                assert_eq!(master_decode(&s, &m).unwrap(), want);
            }
            if !crate::distance::next_vector(&mut g, 5) {
                break;
            }
        }
        assert!(matches!(
            build_scheme(&a, 2, 0, 1, 1, &f, 0),
            Err(GradientError::InsufficientReplication { found: 2, required: 3 })
        ));
    }

    #[test]
    fn full_replication_triple_reduction() {
        let f = Field::prime(5).unwrap();
        let a = DataAssignment::uniform(3, vec![vec![0, 1, 2]; 3]);
        let s = build_scheme(&a, 0, 0, 3, 6, &f, 0).unwrap();
        assert_eq!(s.d_min, 1);
        assert_eq!(s.blocks(), 2);
        let g = random_gradients(&f, 3, 6, 1);
        let rep = simulate(&s, &g, &Adversary::default(), 0).unwrap();
        assert!(rep.success);
    }

    #[test]
    fn encoding_is_blockwise_inner_product() {
        let f = Field::prime(7).unwrap();
        let a = DataAssignment::cyclic(4, 3);
        let s = build_scheme(&a, 1, 0, 2, 4, &f, 3).unwrap();
        let g = random_gradients(&f, 4, 4, 2);
        let held: Vec<Option<Vec<u32>>> = g.iter().cloned().map(Some).collect();
        let fm = encoder_matrix(&s);
        for i in 0..4 {
            let msg = worker_encode(&s, i, &held).unwrap();
            // Oracle: stack block ℓ of every subset into a row and multiply.
            for l in 0..2 {
                let row: Vec<u32> = (0..4).flat_map(|j| g[j][2 * l..2 * l + 2].to_vec()).collect();
                let want = fm.vec_mul(&row).unwrap()[i];
                assert_eq!(msg[l], want);
            }
        }
        let mut missing = held.clone();
        missing[a.workers[0][0]] = None;
        assert!(matches!(
            worker_encode(&s, 0, &missing),
            Err(GradientError::MissingGradient { worker: 0, .. })
        ));
    }

    #[test]
    fn single_byzantine_worker() {
        let f = Field::prime(7).unwrap();
        let a = DataAssignment::cyclic(5, 3);
        let s = build_scheme(&a, 0, 1, 1, 2, &f, 0).unwrap();
        assert!(s.d_min >= 3);
        let g = random_gradients(&f, 5, 2, 4);
        for w in 0..5 {
            for d0 in 0..7 {
                for d1 in 0..7 {
                    if d0 == 0 && d1 == 0 {
                        continue;
                    }
                    let adv = Adversary {
                        stragglers: vec![],
                        byzantine: vec![(w, Some(vec![d0, d1]))],
                    };
                    let rep = simulate(&s, &g, &adv, 0).unwrap();
                    assert!(rep.success && rep.within_budget, "{rep:?}");
                }
            }
        }
        // Two corruptions exceed the budget and are flagged.
        let adv = Adversary {
            stragglers: vec![],
            byzantine: vec![(0, None), (1, None)],
        };
        assert!(!simulate(&s, &g, &adv, 1).unwrap().within_budget);
    }

    #[test]
    fn straggler_sweep_and_overrun() {
        let f = Field::prime(7).unwrap();
        let a = DataAssignment::cyclic(5, 3);
        let s = build_scheme(&a, 2, 0, 1, 3, &f, 9).unwrap();
        let g = random_gradients(&f, 5, 3, 0);
        combinations(5, 2, &mut |set| {
            let adv = Adversary {
                stragglers: set.to_vec(),
                byzantine: vec![],
            };
            assert!(simulate(&s, &g, &adv, 0).unwrap().success);
        });
        let adv = Adversary {
            stragglers: vec![0, 1, 2],
            byzantine: vec![],
        };
        let rep = simulate(&s, &g, &adv, 0).unwrap();
        assert!(!rep.success && !rep.within_budget && rep.error.is_some());
    }

    #[test]
    fn load_examples() {
        let p = profiles(&[r(1, 1); 3], &[r(1, 1), r(1, 1), r(2, 1)]);
        assert_eq!(optimize_load(&p, 1, 1).unwrap(), vec![r(1, 2), r(1, 2), r(1, 1)]);
        let h = profiles(&[r(1, 1); 3], &[r(1, 1); 3]);
        assert_eq!(optimize_load(&h, 1, 1).unwrap(), vec![r(2, 3); 3]);
        let small = profiles(&[r(1, 2); 2], &[r(1, 1); 2]);
        assert!(matches!(optimize_load(&small, 1, 1), Err(GradientError::Infeasible(_))));
    }

    #[test]
    fn filling_examples() {
        let a = load_to_assignment(&[r(2, 3); 3], 1, 1).unwrap();
        assert_eq!(a.subsets, 3);
        assert_eq!(a.sizes, vec![r(1, 3); 3]);
        assert_eq!(a.workers, vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        let one = load_to_assignment(&[r(1, 1)], 0, 1).unwrap();
        assert_eq!((one.subsets, one.workers.clone()), (1, vec![vec![0]]));
        let mixed = [r(1, 2), r(1, 2), r(1, 1)];
        let a = load_to_assignment(&mixed, 1, 1).unwrap();
        assert!(a.subsets <= 6);
        assert_eq!(a.loads(), mixed.to_vec());
        assert_eq!(a.replication(), vec![2; a.subsets]);
    }

    #[test]
    fn heterogeneous_pipeline() {
        let p = profiles(&[r(1, 1), r(3, 4), r(1, 1), r(1, 2)], &[r(1, 1), r(1, 2), r(2, 1), r(1, 1)]);
        let mu = optimize_load(&p, 1, 1).unwrap();
        let a = load_to_assignment(&mu, 1, 1).unwrap();
        assert!(check_replication(&a, 1, 1));
        let f = Field::prime(11).unwrap();
        let s = build_scheme(&a, 1, 0, 1, 2, &f, 0).unwrap();
        let g = random_gradients(&f, a.subsets, 2, 5);
        for w in 0..4 {
            let adv = Adversary {
                stragglers: vec![w],
                byzantine: vec![],
            };
            assert!(simulate(&s, &g, &adv, 0).unwrap().success);
        }
    }

    #[test]
    fn scheme_file_round_trip() {
        let f = Field::prime(5).unwrap();
        let s = build_scheme(&DataAssignment::cyclic(3, 2), 1, 0, 1, 2, &f, 0).unwrap();
        let json = serde_json::to_string(&s.to_file()).unwrap();
        let back = GradientCodingScheme::from_file(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.encoders, s.encoders);
        assert_eq!(back.d_min, s.d_min);
    }

    #[test]
    fn quantizer_round_trip() {
        let qz = Quantizer { q: 1_000_003, scale: 1000 };
        let v = [1.25, -0.5, 3.0];
        let back = qz.dequantize(&qz.quantize(&v));
        assert_eq!(back, vec![1.25, -0.5, 3.0]);
        let f = Field::prime(1_000_003).unwrap();
        let a = qz.quantize(&[1.5]);
        let b = qz.quantize(&[-2.25]);
        assert_eq!(qz.dequantize(&[f.add(a[0], b[0])]), vec![-0.75]);
    }
}
