//! Exact arithmetic in GF(p) and GF(p^m).
//!
//! Elements are stored as `u32` canonical representatives. For a prime field
//! the representative is the residue in `0..p`; for an extension field it is
//! the coefficient vector of the reducing polynomial representation, packed
//! as base-`p` digits with the constant coefficient least significant. In
//! GF(4) with modulus `x^2 + x + 1` the primitive element `x` is therefore
//! `2` and `x + 1` is `3`.
//!
//! A [`Field`] is a cheap, cloneable handle. Matrices and codes carry one and
//! operate on raw `u32` values through it; [`FieldElement`] bundles a value
//! with its field for callers who want checked operations.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::FieldError;

/// Largest extension-field order for which log/exp tables are built.
const MAX_EXTENSION_ORDER: u64 = 1 << 20;

/// Binary reducing polynomials for GF(2^m), m = 1..=16, coefficients
/// low-to-high. Each entry is primitive, so `x` generates the multiplicative
/// group.
const BINARY_MODULI: [&[u32]; 16] = [
    &[1, 1],
    &[1, 1, 1],
    &[1, 1, 0, 1],
    &[1, 1, 0, 0, 1],
    &[1, 0, 1, 0, 0, 1],
    &[1, 1, 0, 1, 1, 0, 1],
    &[1, 1, 0, 0, 0, 0, 0, 1],
    &[1, 0, 1, 1, 1, 0, 0, 0, 1],
    &[1, 0, 0, 0, 1, 0, 0, 0, 0, 1],
    &[1, 1, 1, 1, 0, 1, 1, 0, 0, 0, 1],
    &[1, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1],
    &[1, 1, 0, 1, 0, 1, 1, 1, 0, 0, 0, 0, 1],
    &[1, 1, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1],
    &[1, 0, 0, 1, 0, 1, 0, 1, 0, 0, 0, 0, 0, 0, 1],
    &[1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1],
    &[1, 0, 1, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1],
];

/// Serializable description of a field: characteristic, degree and the
/// reducing polynomial (low-to-high, monic, length `m + 1`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub p: u32,
    pub m: u32,
    pub modulus: Vec<u32>,
}

struct Tables {
    exp: Vec<u32>,
    log: Vec<u32>,
}

struct Inner {
    p: u32,
    m: u32,
    q: u32,
    modulus: Vec<u32>,
    primitive: u32,
    tables: Option<Tables>,
}

/// Handle to a finite field GF(p^m).
#[derive(Clone)]
pub struct Field {
    inner: Arc<Inner>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.inner.m == 1 {
            write!(f, "GF({})", self.inner.p)
        } else {
            write!(
                f,
                "GF({}^{}) mod {:?}",
                self.inner.p, self.inner.m, self.inner.modulus
            )
        }
    }
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.p == other.inner.p && self.inner.modulus == other.inner.modulus)
    }
}

impl Eq for Field {}

impl Field {
    /// The prime field GF(p).
    pub fn prime(p: u32) -> Result<Self, FieldError> {
        if !is_prime(p as u64) {
            return Err(FieldError::NotPrime(p as u64));
        }
        if p as u64 >= 1 << 31 {
            return Err(FieldError::TooLarge(p as u64));
        }
        let primitive = prime_primitive_root(p);
        Ok(Field {
            inner: Arc::new(Inner {
                p,
                m: 1,
                q: p,
                modulus: vec![0, 1],
                primitive,
                tables: None,
            }),
        })
    }

    /// GF(2^m) using the built-in primitive modulus table (m ≤ 16).
    pub fn binary(m: u32) -> Result<Self, FieldError> {
        if m == 0 || m > 16 {
            return Err(FieldError::BadModulus(format!(
                "no built-in binary modulus for degree {m}"
            )));
        }
        Self::extension(2, BINARY_MODULI[(m - 1) as usize].to_vec())
    }

    /// GF(p^m) with a caller-supplied monic irreducible modulus of degree m
    /// (coefficients low-to-high).
    pub fn extension(p: u32, modulus: Vec<u32>) -> Result<Self, FieldError> {
        if !is_prime(p as u64) {
            return Err(FieldError::NotPrime(p as u64));
        }
        if modulus.len() < 2 {
            return Err(FieldError::BadModulus("degree must be at least 1".into()));
        }
        if modulus.iter().any(|&c| c >= p) {
            return Err(FieldError::BadModulus(
                "coefficients must be reduced modulo p".into(),
            ));
        }
        if *modulus.last().unwrap() != 1 {
            return Err(FieldError::BadModulus("modulus must be monic".into()));
        }
        let m = (modulus.len() - 1) as u32;
        if m == 1 {
            return Self::prime(p);
        }
        let q = (p as u64).checked_pow(m).unwrap_or(u64::MAX);
        if q > MAX_EXTENSION_ORDER {
            return Err(FieldError::TooLarge(q));
        }
        if !poly_is_irreducible(&modulus, p) {
            return Err(FieldError::NotIrreducible);
        }
        let q = q as u32;
        let mut inner = Inner {
            p,
            m,
            q,
            modulus,
            primitive: 0,
            tables: None,
        };
        let primitive = (2..q)
            .find(|&g| ext_is_primitive(&inner, g))
            .expect("multiplicative group of a finite field is cyclic");
        inner.primitive = primitive;
        let mut exp = vec![0u32; (q - 1) as usize];
        let mut log = vec![0u32; q as usize];
        let mut acc = 1u32;
        for (i, slot) in exp.iter_mut().enumerate() {
            *slot = acc;
            log[acc as usize] = i as u32;
            acc = ext_mul_slow(&inner, acc, primitive);
        }
        inner.tables = Some(Tables { exp, log });
        Ok(Field {
            inner: Arc::new(inner),
        })
    }

    /// GF(p^m). For `m > 1` without a supplied modulus, binary fields use the
    /// built-in table and odd characteristics use the lexicographically first
    /// monic irreducible polynomial.
    pub fn new(p: u32, m: u32, modulus: Option<Vec<u32>>) -> Result<Self, FieldError> {
        match (m, modulus) {
            (0, _) => Err(FieldError::BadModulus("degree must be positive".into())),
            (1, None) => Self::prime(p),
            (_, Some(modulus)) => {
                if modulus.len() as u32 != m + 1 {
                    return Err(FieldError::BadModulus(format!(
                        "modulus has degree {} but m = {m}",
                        modulus.len().saturating_sub(1)
                    )));
                }
                Self::extension(p, modulus)
            }
            (_, None) if p == 2 => Self::binary(m),
            (_, None) => {
                if !is_prime(p as u64) {
                    return Err(FieldError::NotPrime(p as u64));
                }
                let q = (p as u64).checked_pow(m).unwrap_or(u64::MAX);
                if q > MAX_EXTENSION_ORDER {
                    return Err(FieldError::TooLarge(q));
                }
                let modulus = first_irreducible(p, m);
                Self::extension(p, modulus)
            }
        }
    }

    pub fn from_spec(spec: &FieldSpec) -> Result<Self, FieldError> {
        if spec.m == 1 {
            let f = Self::prime(spec.p)?;
            // Prime fields accept any degree-1 monic modulus in a file.
            if spec.modulus.len() == 2 && spec.modulus[1] == 1 && spec.modulus[0] < spec.p {
                return Ok(f);
            }
            return Err(FieldError::BadModulus(
                "prime field modulus must be a monic linear polynomial".into(),
            ));
        }
        Self::new(spec.p, spec.m, Some(spec.modulus.clone()))
    }

    pub fn spec(&self) -> FieldSpec {
        FieldSpec {
            p: self.inner.p,
            m: self.inner.m,
            modulus: self.inner.modulus.clone(),
        }
    }

    pub fn characteristic(&self) -> u32 {
        self.inner.p
    }

    pub fn degree(&self) -> u32 {
        self.inner.m
    }

    /// Field order q = p^m.
    pub fn order(&self) -> u32 {
        self.inner.q
    }

    pub fn is_prime_field(&self) -> bool {
        self.inner.m == 1
    }

    /// A generator of the multiplicative group.
    pub fn primitive_element(&self) -> u32 {
        self.inner.primitive
    }

    pub fn contains(&self, a: u32) -> bool {
        a < self.inner.q
    }

    /// Image of an integer in the prime subfield.
    pub fn from_i64(&self, v: i64) -> u32 {
        v.rem_euclid(self.inner.p as i64) as u32
    }

    /// All elements in canonical order `0, 1, …, q−1`.
    pub fn elements(&self) -> impl Iterator<Item = u32> {
        0..self.inner.q
    }

    #[inline]
    pub fn add(&self, a: u32, b: u32) -> u32 {
        let inner = &*self.inner;
        if inner.m == 1 {
            let s = a as u64 + b as u64;
            (s % inner.p as u64) as u32
        } else if inner.p == 2 {
            a ^ b
        } else {
            digitwise(inner.p, inner.m, a, b, |x, y, p| (x + y) % p)
        }
    }

    #[inline]
    pub fn neg(&self, a: u32) -> u32 {
        let inner = &*self.inner;
        if a == 0 {
            0
        } else if inner.m == 1 {
            inner.p - a
        } else if inner.p == 2 {
            a
        } else {
            digitwise(inner.p, inner.m, a, 0, |x, _, p| (p - x) % p)
        }
    }

    #[inline]
    pub fn sub(&self, a: u32, b: u32) -> u32 {
        self.add(a, self.neg(b))
    }

    #[inline]
    pub fn mul(&self, a: u32, b: u32) -> u32 {
        if a == 0 || b == 0 {
            return 0;
        }
        let inner = &*self.inner;
        match &inner.tables {
            None => ((a as u64 * b as u64) % inner.p as u64) as u32,
            Some(t) => {
                let n = inner.q as usize - 1;
                let idx = t.log[a as usize] as usize + t.log[b as usize] as usize;
                t.exp[if idx >= n { idx - n } else { idx }]
            }
        }
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(&self, a: u32) -> Option<u32> {
        if a == 0 {
            return None;
        }
        let inner = &*self.inner;
        match &inner.tables {
            None => Some(self.pow(a, inner.p as u64 - 2)),
            Some(t) => {
                let n = inner.q - 1;
                let l = t.log[a as usize];
                Some(t.exp[((n - l) % n) as usize])
            }
        }
    }

    pub fn div(&self, a: u32, b: u32) -> Option<u32> {
        self.inv(b).map(|ib| self.mul(a, ib))
    }

    pub fn pow(&self, a: u32, mut e: u64) -> u32 {
        let mut base = a;
        let mut acc = 1u32;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// Multiplicative order of a nonzero element.
    pub fn element_order(&self, a: u32) -> Option<u64> {
        if a == 0 {
            return None;
        }
        let n = self.inner.q as u64 - 1;
        let mut order = n;
        for r in prime_factors(n) {
            while order.is_multiple_of(r) && self.pow(a, order / r) == 1 {
                order /= r;
            }
        }
        Some(order)
    }
}

/// Arithmetic operations accepted by [`field_arith`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// A field element bound to its field, for checked arithmetic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldElement {
    value: u32,
    field: Field,
}

impl FieldElement {
    pub fn new(field: &Field, value: u32) -> Result<Self, FieldError> {
        if !field.contains(value) {
            return Err(FieldError::InvalidElement {
                value: value as u64,
                order: field.order() as u64,
            });
        }
        Ok(FieldElement {
            value,
            field: field.clone(),
        })
    }

    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn apply(&self, op: FieldOp, other: &FieldElement) -> Result<FieldElement, FieldError> {
        field_arith(self, other, op)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

pub fn field_arith(
    a: &FieldElement,
    b: &FieldElement,
    op: FieldOp,
) -> Result<FieldElement, FieldError> {
    if a.field != b.field {
        return Err(FieldError::SpecMismatch);
    }
    let f = &a.field;
    let value = match op {
        FieldOp::Add => f.add(a.value, b.value),
        FieldOp::Sub => f.sub(a.value, b.value),
        FieldOp::Mul => f.mul(a.value, b.value),
        FieldOp::Div => f.div(a.value, b.value).ok_or(FieldError::DivisionByZero)?,
    };
    Ok(FieldElement {
        value,
        field: f.clone(),
    })
}

// ---------------------------------------------------------------------------
// Integer and polynomial helpers
// ---------------------------------------------------------------------------

pub(crate) fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// Smallest prime ≥ n.
pub fn next_prime(n: u64) -> u64 {
    let mut c = n.max(2);
    while !is_prime(c) {
        c += 1;
    }
    c
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            out.push(d);
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn mod_pow(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    acc
}

fn prime_primitive_root(p: u32) -> u32 {
    if p == 2 {
        return 1;
    }
    let n = p as u64 - 1;
    let factors = prime_factors(n);
    (2..p)
        .find(|&g| factors.iter().all(|&r| mod_pow(g as u64, n / r, p as u64) != 1))
        .expect("prime fields have primitive roots")
}

fn digitwise(p: u32, m: u32, a: u32, b: u32, f: impl Fn(u32, u32, u32) -> u32) -> u32 {
    let (mut a, mut b) = (a, b);
    let mut out = 0u32;
    let mut scale = 1u32;
    for _ in 0..m {
        out += f(a % p, b % p, p) * scale;
        a /= p;
        b /= p;
        scale = scale.wrapping_mul(p);
    }
    out
}

fn unpack(p: u32, m: u32, mut a: u32) -> Vec<u32> {
    (0..m)
        .map(|_| {
            let d = a % p;
            a /= p;
            d
        })
        .collect()
}

fn pack(p: u32, digits: &[u32]) -> u32 {
    digits.iter().rev().fold(0u32, |acc, &d| acc * p + d)
}

fn ext_mul_slow(inner: &Inner, a: u32, b: u32) -> u32 {
    let p = inner.p;
    let m = inner.m as usize;
    let x = unpack(p, inner.m, a);
    let y = unpack(p, inner.m, b);
    let mut prod = vec![0u32; 2 * m - 1];
    for (i, &xi) in x.iter().enumerate() {
        for (j, &yj) in y.iter().enumerate() {
            prod[i + j] = ((prod[i + j] as u64 + xi as u64 * yj as u64) % p as u64) as u32;
        }
    }
    let rem = poly_rem(&prod, &inner.modulus, p);
    let mut digits = rem;
    digits.resize(m, 0);
    pack(p, &digits)
}

fn ext_is_primitive(inner: &Inner, g: u32) -> bool {
    let n = inner.q as u64 - 1;
    let pow = |mut e: u64| {
        let mut base = g;
        let mut acc = 1u32;
        while e > 0 {
            if e & 1 == 1 {
                acc = ext_mul_slow(inner, acc, base);
            }
            base = ext_mul_slow(inner, base, base);
            e >>= 1;
        }
        acc
    };
    prime_factors(n).into_iter().all(|r| pow(n / r) != 1)
}

fn trim(mut v: Vec<u32>) -> Vec<u32> {
    while v.len() > 1 && *v.last().unwrap() == 0 {
        v.pop();
    }
    v
}

/// Remainder of `a` modulo the monic polynomial `m` over GF(p).
fn poly_rem(a: &[u32], m: &[u32], p: u32) -> Vec<u32> {
    let deg_m = m.len() - 1;
    let mut r: Vec<u32> = a.to_vec();
    while r.len() > deg_m && r.len() >= m.len() {
        let lead = *r.last().unwrap();
        let shift = r.len() - m.len();
        if lead != 0 {
            for (i, &mi) in m.iter().enumerate() {
                let sub = (lead as u64 * mi as u64) % p as u64;
                r[shift + i] = ((r[shift + i] as u64 + p as u64 - sub) % p as u64) as u32;
            }
        }
        r.pop();
    }
    trim(r)
}

/// Trial factoring: no monic polynomial of degree 1..=deg/2 divides `f`.
pub(crate) fn poly_is_irreducible(f: &[u32], p: u32) -> bool {
    let deg = f.len() - 1;
    if deg <= 1 {
        return deg == 1;
    }
    for d in 1..=deg / 2 {
        let count = (p as u64).pow(d as u32);
        for low in 0..count {
            let mut g = unpack(p, d as u32, low as u32);
            g.push(1);
            let r = poly_rem(f, &g, p);
            if r.iter().all(|&c| c == 0) {
                return false;
            }
        }
    }
    true
}

fn first_irreducible(p: u32, m: u32) -> Vec<u32> {
    let count = (p as u64).pow(m);
    for low in 0..count {
        let mut f = unpack(p, m, low as u32);
        f.push(1);
        if f[0] != 0 && poly_is_irreducible(&f, p) {
            return f;
        }
    }
    unreachable!("irreducible polynomials exist in every degree")
}
