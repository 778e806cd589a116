//! Sink-side decoders: minimum-distance decoding against edge errors,
//! decoding with known outage locations, and plain erasure decoding.

use serde::Serialize;

use crate::code::{LinearNetworkCode, ReceivedWord};
use crate::distance::combinations;
use crate::error::CodeError;
use crate::matrix::{Echelon, FieldMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeStatus {
    Ok,
    DetectedFailure,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecodeResult {
    pub status: DecodeStatus,
    /// The computed value a = x(T⊗I_k).
    pub value: Option<Vec<u32>>,
    /// Message and error explaining the received word.
    pub x: Option<Vec<u32>>,
    pub z: Option<Vec<u32>>,
}

impl DecodeResult {
    fn failure() -> Self {
        DecodeResult {
            status: DecodeStatus::DetectedFailure,
            value: None,
            x: None,
            z: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == DecodeStatus::Ok
    }
}

struct Problem<'a> {
    code: &'a LinearNetworkCode,
    tk: FieldMatrix,
    /// Non-erased coordinates of the received word.
    known: Vec<usize>,
    y: Vec<u32>,
}

enum Solve {
    None,
    Unique { a: Vec<u32>, x: Vec<u32>, z: Vec<u32> },
    Ambiguous,
}

impl<'a> Problem<'a> {
    fn new(code: &'a LinearNetworkCode, t: &FieldMatrix, word: &ReceivedWord) -> Result<Self, CodeError> {
        if word.len() != code.output_len() {
            return Err(CodeError::Dimension(format!(
                "received word of length {} for {} sink edges",
                word.len(),
                code.output_len()
            )));
        }
        for v in word.0.iter().flatten() {
            if !code.field().contains(*v) {
                return Err(CodeError::Invalid(format!("symbol {v} outside the field")));
            }
        }
        let known: Vec<usize> = (0..word.len()).filter(|&i| word.0[i].is_some()).collect();
        let y = known.iter().map(|&i| word.0[i].unwrap()).collect();
        Ok(Problem {
            tk: code.target_kron(t)?,
            code,
            known,
            y,
        })
    }

    /// Solves x·F + w·G_ρ = y on the known coordinates and reports whether
    /// the target value is determined.
    fn solve(&self, rho: &[usize]) -> Result<Solve, CodeError> {
        let mats = self.code.derive_matrices()?;
        let sk = self.code.message_len();
        let a_full = mats.f.vstack(&mats.g.select_rows(rho))?;
        let a = a_full.select_cols(&self.known);
        let Some(sol) = a.solve_left(&self.y)? else {
            return Ok(Solve::None);
        };
        let ns = a.left_null_space();
        for r in 0..ns.rows() {
            if self.tk.vec_mul(&ns.row(r)[..sk])?.iter().any(|&v| v != 0) {
                return Ok(Solve::Ambiguous);
            }
        }
        let x = sol[..sk].to_vec();
        let mut z = vec![0u32; self.code.network().edge_count()];
        for (i, &e) in rho.iter().enumerate() {
            z[e] = sol[sk + i];
        }
        Ok(Solve::Unique {
            a: self.tk.vec_mul(&x)?,
            x,
            z,
        })
    }
}

/// Minimum-distance decoding: searches error supports of size 0, 1, …, τ
/// and returns the target value of the first size that explains the word.
/// Erased coordinates are ignored. Every support of that size must agree on
/// the value, otherwise [`CodeError::Ambiguous`] is returned.
pub fn md_decode(
    code: &LinearNetworkCode,
    t: &FieldMatrix,
    word: &ReceivedWord,
    tau: usize,
) -> Result<DecodeResult, CodeError> {
    let prob = Problem::new(code, t, word)?;
    let g = &code.derive_matrices()?.g;
    let field = code.field();
    // Minimal supports use rows independent on the known coordinates; one
    // edge per class of proportional rows suffices.
    let gk = g.select_cols(&prob.known);
    let mut reps: Vec<usize> = Vec::new();
    {
        let mut classes: Vec<Vec<u32>> = Vec::new();
        for e in 0..gk.rows() {
            let row = gk.row(e);
            let Some(p) = row.iter().position(|&v| v != 0) else {
                continue;
            };
            let inv = field.inv(row[p]).unwrap();
            let n: Vec<u32> = row.iter().map(|&v| field.mul(v, inv)).collect();
            if !classes.contains(&n) {
                classes.push(n);
                reps.push(e);
            }
        }
    }
    for size in 0..=tau {
        let mut found: Option<(Vec<u32>, Vec<u32>, Vec<u32>)> = None;
        let mut err: Option<CodeError> = None;
        combinations(reps.len(), size, &mut |idx| {
            if err.is_some() {
                return;
            }
            let rho: Vec<usize> = idx.iter().map(|&i| reps[i]).collect();
            let ech = Echelon::from_rows(field, gk.cols(), rho.iter().map(|&e| gk.row(e)));
            if ech.rank() < rho.len() {
                return;
            }
            match prob.solve(&rho) {
                Ok(Solve::None) => {}
                Ok(Solve::Ambiguous) => {
                    err = Some(CodeError::Ambiguous(format!(
                        "support of size {size} leaves the target undetermined"
                    )))
                }
                Ok(Solve::Unique { a, x, z }) => match &found {
                    Some((a0, _, _)) if *a0 != a => {
                        err = Some(CodeError::Ambiguous(format!(
                            "supports of size {size} give different values"
                        )))
                    }
                    Some(_) => {}
                    None => found = Some((a, x, z)),
                },
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if let Some((a, x, z)) = found {
            return Ok(DecodeResult {
                status: DecodeStatus::Ok,
                value: Some(a),
                x: Some(x),
                z: Some(z),
            });
        }
    }
    Ok(DecodeResult::failure())
}

/// Decoding with known outage locations `outages` (edge indices). Erased
/// coordinates must be sink edges inside the outage set.
pub fn outage_decode(
    code: &LinearNetworkCode,
    t: &FieldMatrix,
    word: &ReceivedWord,
    outages: &[usize],
) -> Result<DecodeResult, CodeError> {
    let net = code.network();
    for &e in outages {
        if e >= net.edge_count() {
            return Err(CodeError::Invalid(format!("unknown outage edge #{e}")));
        }
    }
    for c in word.erasures() {
        if c < net.sink_edges().len() && !outages.contains(&net.sink_edges()[c]) {
            return Err(CodeError::Invalid(format!(
                "erased coordinate {} is not an outage edge",
                net.edge_id(net.sink_edges()[c])
            )));
        }
    }
    let mut rho = outages.to_vec();
    rho.sort_unstable();
    rho.dedup();
    let prob = Problem::new(code, t, word)?;
    match prob.solve(&rho)? {
        Solve::Unique { a, x, z } => Ok(DecodeResult {
            status: DecodeStatus::Ok,
            value: Some(a),
            x: Some(x),
            z: Some(z),
        }),
        Solve::None => Err(CodeError::DecodeFailure(
            "no message explains the word under the given outages".into(),
        )),
        Solve::Ambiguous => Err(CodeError::Ambiguous(
            "outages exceed what the code distance can resolve".into(),
        )),
    }
}

/// Erasure decoding: find the target value of any message whose output
/// agrees with the word on every non-erased coordinate.
pub fn erasure_decode(
    code: &LinearNetworkCode,
    t: &FieldMatrix,
    word: &ReceivedWord,
) -> Result<DecodeResult, CodeError> {
    let prob = Problem::new(code, t, word)?;
    match prob.solve(&[])? {
        Solve::Unique { a, x, z } => Ok(DecodeResult {
            status: DecodeStatus::Ok,
            value: Some(a),
            x: Some(x),
            z: Some(z),
        }),
        Solve::None => Err(CodeError::DecodeFailure(
            "no codeword matches the non-erased coordinates".into(),
        )),
        Solve::Ambiguous => Err(CodeError::Ambiguous(
            "too many erasures to determine the target".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::fixtures::*;
    use crate::code::{sum_target, ErrorVector};
    use crate::distance::next_vector;

    fn sum_of(code: &LinearNetworkCode) -> FieldMatrix {
        sum_target(code.field(), 2)
    }

    #[test]
    fn example_decoder_branches() {
        let code = two_source_odd(7);
        let t = sum_of(&code);
        let r = md_decode(&code, &t, &ReceivedWord::from_values(&[3, 1, 6]), 1).unwrap();
        assert_eq!(r.value, Some(vec![3]));
        // Otherwise branch: sum 4 with an error on the first sink edge.
        let r = md_decode(&code, &t, &ReceivedWord::from_values(&[1, 4, 1]), 1).unwrap();
        assert_eq!(r.value, Some(vec![4]));
        // (1,4,3) is two errors from every codeword, so the ball decoder
        // refuses instead of guessing.
        let r = md_decode(&code, &t, &ReceivedWord::from_values(&[1, 4, 3]), 1).unwrap();
        assert_eq!(r.status, DecodeStatus::DetectedFailure);
    }

    #[test]
    fn closed_form_rule_agrees_inside_the_ball() {
        // Rule: output y1 when 2·y1 = y3, else y2. Must match md_decode on
        // every word produced by at most one error.
        let code = two_source_odd(7);
        let t = sum_of(&code);
        let mut x = vec![0u32; 2];
        loop {
            for e in 0..12 {
                for v in 0..7 {
                    let y = code.transmit(&x, &ErrorVector::single(12, e, v)).unwrap();
                    let rule = if 2 * y[0] % 7 == y[2] { y[0] } else { y[1] };
                    let r = md_decode(&code, &t, &ReceivedWord::from_values(&y), 1).unwrap();
                    assert_eq!(r.value, Some(vec![rule]));
                }
            }
            if !next_vector(&mut x, 7) {
                break;
            }
        }
    }

    #[test]
    fn error_free_word_decodes_with_zero_budget() {
        let code = two_source_odd(5);
        let t = sum_of(&code);
        let y = code.transmit(&[2, 4], &ErrorVector::zero(12)).unwrap();
        let r = md_decode(&code, &t, &ReceivedWord::from_values(&y), 0).unwrap();
        assert_eq!(r.value, Some(vec![1]));
    }

    #[test]
    fn too_many_errors_detected_or_wrong_but_never_panics() {
        let code = two_source_odd(5);
        let t = sum_of(&code);
        // (1,0,0) is two errors away from every codeword multiple of (1,1,2)
        // except 0, where it is one away.
        let r = md_decode(&code, &t, &ReceivedWord::from_values(&[1, 2, 0]), 0).unwrap();
        assert_eq!(r.status, DecodeStatus::DetectedFailure);
    }

    #[test]
    fn outage_decoding_exhaustive() {
        let code = two_source_odd(5);
        let t = sum_of(&code);
        let net = code.network().clone();
        let sinks = net.sink_edges().to_vec();
        let mut x = vec![0u32; 2];
        loop {
            let y = code.transmit(&x, &ErrorVector::zero(12)).unwrap();
            let want = vec![(x[0] + x[1]) % 5];
            assert_eq!(outage_decode(&code, &t, &ReceivedWord::from_values(&y), &[]).unwrap().value, Some(want.clone()));
            for c in 0..3 {
                let mut w = ReceivedWord::from_values(&y);
                w.erase(c);
                let r = outage_decode(&code, &t, &w, &[sinks[c]]).unwrap();
                assert_eq!(r.value, Some(want.clone()));
                let e = erasure_decode(&code, &t, &w).unwrap();
                assert_eq!(e.value, r.value);
                for c2 in c + 1..3 {
                    let mut w2 = w.clone();
                    w2.erase(c2);
                    let r = outage_decode(&code, &t, &w2, &[sinks[c], sinks[c2]]).unwrap();
                    assert_eq!(r.value, Some(want.clone()));
                }
            }
            if !next_vector(&mut x, 5) {
                break;
            }
        }
    }

    #[test]
    fn erasure_decoder_cases() {
        let code = two_source_odd(5);
        let t = sum_of(&code);
        let w: ReceivedWord = "* 3 *".parse().unwrap();
        assert_eq!(erasure_decode(&code, &t, &w).unwrap().value, Some(vec![3]));
        let all: ReceivedWord = "* * *".parse().unwrap();
        assert!(erasure_decode(&code, &t, &all).is_err());
        let clean = ReceivedWord::from_values(&[4, 4, 3]);
        assert_eq!(erasure_decode(&code, &t, &clean).unwrap().value, Some(vec![4]));
    }

    #[test]
    fn outage_on_interior_edge() {
        // A dead interior edge is an error confined to a known location.
        let code = two_source_odd(7);
        let t = sum_of(&code);
        let net = code.network().clone();
        let wx = net.edge_index("wx").unwrap();
        let u_wx = (2 * 3 + 5) % 7;
        let z = ErrorVector::single(12, wx, (7 - u_wx) % 7);
        let y = code.transmit(&[3, 5], &z).unwrap();
        let r = outage_decode(&code, &t, &ReceivedWord::from_values(&y), &[wx]).unwrap();
        assert_eq!(r.value, Some(vec![1]));
    }

    #[test]
    fn completeness_single_errors_gf5() {
        let code = two_source_odd(5);
        let t = sum_of(&code);
        let mut x = vec![0u32; 2];
        loop {
            for e in 0..12 {
                for v in 0..5 {
                    let y = code.transmit(&x, &ErrorVector::single(12, e, v)).unwrap();
                    let r = md_decode(&code, &t, &ReceivedWord::from_values(&y), 1).unwrap();
                    assert_eq!(r.value, Some(vec![(x[0] + x[1]) % 5]));
                }
            }
            if !next_vector(&mut x, 5) {
                break;
            }
        }
    }
}
