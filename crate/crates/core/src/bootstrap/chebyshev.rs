//! Chebyshev interpolation and Paterson–Stockmeyer evaluation.
//!
//! The evaluation is written once against [`Backend`], so the same schedule
//! runs on plain numbers (the test oracle), on bare levels (depth planning)
//! and on ciphertexts.

use std::f64::consts::PI;

/// Chebyshev coefficients `c_j` of the degree-`degree` interpolant of `f`
/// on `[-1, 1]`, with `p(x) = Σ c_j T_j(x)`.
pub fn interpolate(f: impl Fn(f64) -> f64, degree: usize) -> Vec<f64> {
    let m = degree + 1;
    let samples: Vec<(f64, f64)> = (0..m)
        .map(|k| {
            let theta = PI * (k as f64 + 0.5) / m as f64;
            (theta, f(theta.cos()))
        })
        .collect();
    (0..m)
        .map(|j| {
            let s: f64 = samples.iter().map(|&(t, y)| y * (j as f64 * t).cos()).sum();
            let c = 2.0 * s / m as f64;
            if j == 0 {
                c / 2.0
            } else {
                c
            }
        })
        .collect()
}

/// Clenshaw evaluation of `Σ c_j T_j(x)`.
pub fn evaluate(coeffs: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &c in coeffs.iter().skip(1).rev() {
        let b = 2.0 * x * b1 - b2 + c;
        b2 = b1;
        b1 = b;
    }
    x * b1 - b2 + coeffs.first().copied().unwrap_or(0.0)
}

/// Writes `p = q·T_m + r` with `deg r < m`, all in the Chebyshev basis.
/// Requires `deg p <= 2m`.
pub fn divide(p: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    if p.len() <= m {
        return (Vec::new(), p.to_vec());
    }
    let d = p.len() - 1;
    assert!(d <= 2 * m, "quotient degree must not exceed the divisor degree");
    let mut q = vec![0.0; d - m + 1];
    q[0] = p[m];
    for i in m + 1..=d {
        q[i - m] = 2.0 * p[i];
    }
    // T_m·T_k = (T_{m+k} + T_{m-k}) / 2 for k <= m
    let mut r = p[..m].to_vec();
    for (k, &qk) in q.iter().enumerate().skip(1) {
        r[m - k] -= qk / 2.0;
    }
    (q, r)
}

/// Operations needed by the evaluation schedule.
pub trait Backend {
    type Value: Clone;
    type Error;

    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value, Self::Error>;
    fn square(&mut self, a: &Self::Value) -> Result<Self::Value, Self::Error>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value, Self::Error>;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value, Self::Error>;
    fn mul_integer(&mut self, a: &Self::Value, k: i64) -> Result<Self::Value, Self::Error>;
    fn add_constant(&mut self, a: &Self::Value, c: f64) -> Result<Self::Value, Self::Error>;
    /// `Σ w_i · v_i + constant`; consumes one level.
    fn linear_combination(&mut self, terms: &[(&Self::Value, f64)], constant: f64) -> Result<Self::Value, Self::Error>;
}

/// Power-of-two baby-step count for a polynomial of `degree`.
pub fn baby_steps(degree: usize) -> usize {
    let bits = usize::BITS - degree.max(1).leading_zeros();
    1 << bits.div_ceil(2)
}

/// `2·v² − 1`, i.e. `T_2` applied to `v`.
pub fn double_angle<B: Backend>(be: &mut B, v: &B::Value) -> Result<B::Value, B::Error> {
    let s = be.square(v)?;
    let s2 = be.mul_integer(&s, 2)?;
    be.add_constant(&s2, -1.0)
}

/// `T_1..T_{count-1}` from `x = T_1`, built by products of lower terms.
fn chebyshev_basis<B: Backend>(be: &mut B, x: &B::Value, count: usize) -> Result<Vec<Option<B::Value>>, B::Error> {
    let mut t: Vec<Option<B::Value>> = vec![None; count.max(2)];
    t[1] = Some(x.clone());
    for i in 2..count {
        let v = if i.is_power_of_two() {
            double_angle(be, t[i / 2].as_ref().expect("built"))?
        } else {
            // T_{a+b} = 2·T_a·T_b − T_{a−b} with a the largest power of two below i
            let a = 1usize << (usize::BITS - 1 - i.leading_zeros());
            let b = i - a;
            let p = be.mul(t[a].as_ref().expect("built"), t[b].as_ref().expect("built"))?;
            let p2 = be.mul_integer(&p, 2)?;
            if a == b {
                be.add_constant(&p2, -1.0)?
            } else {
                be.sub(&p2, t[a - b].as_ref().expect("built"))?
            }
        };
        t[i] = Some(v);
    }
    Ok(t)
}

/// Evaluates `Σ c_j T_j(x)` for `x` with values in `[-1, 1]`.
pub fn paterson_stockmeyer<B: Backend>(be: &mut B, x: &B::Value, coeffs: &[f64]) -> Result<B::Value, B::Error> {
    Ok(paterson_stockmeyer_many(be, x, &[coeffs])?.pop().expect("one polynomial"))
}

/// Evaluates several polynomials at the same point, sharing the baby and
/// giant steps.
pub fn paterson_stockmeyer_many<B: Backend>(
    be: &mut B,
    x: &B::Value,
    polys: &[&[f64]],
) -> Result<Vec<B::Value>, B::Error> {
    let degree = polys.iter().map(|p| p.len().saturating_sub(1)).max().unwrap_or(0);
    let b = baby_steps(degree);
    let baby = chebyshev_basis(be, x, b)?;
    let mut giants: Vec<(usize, B::Value)> = Vec::new();
    let mut m = b;
    while m <= degree {
        let half = match giants.last() {
            Some((_, g)) => g,
            None => baby[b / 2].as_ref().expect("baby set contains b/2"),
        };
        let v = double_angle(be, half)?;
        giants.push((m, v));
        m *= 2;
    }
    polys
        .iter()
        .map(|p| match recurse(be, &baby, &giants, p)? {
            Node::Value(v) => Ok(v),
            Node::Constant(c) => be.linear_combination(&[(x, 0.0)], c),
        })
        .collect()
}

enum Node<V> {
    Constant(f64),
    Value(V),
}

fn recurse<B: Backend>(
    be: &mut B,
    baby: &[Option<B::Value>],
    giants: &[(usize, B::Value)],
    p: &[f64],
) -> Result<Node<B::Value>, B::Error> {
    let b = baby.len();
    let c0 = p.first().copied().unwrap_or(0.0);
    if p.len() <= b {
        let terms: Vec<(&B::Value, f64)> = p
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &c)| c != 0.0)
            .map(|(i, &c)| (baby[i].as_ref().expect("built"), c))
            .collect();
        if terms.is_empty() {
            return Ok(Node::Constant(c0));
        }
        return Ok(Node::Value(be.linear_combination(&terms, c0)?));
    }
    let (m, tm) = giants
        .iter()
        .rev()
        .find(|(m, _)| *m < p.len())
        .expect("degree covered by giant steps");
    let (q, r) = divide(p, *m);
    let prod = match recurse(be, baby, giants, &q)? {
        Node::Constant(c) => be.linear_combination(&[(tm, c)], 0.0)?,
        Node::Value(v) => be.mul(&v, tm)?,
    };
    Ok(Node::Value(match recurse(be, baby, giants, &r)? {
        Node::Constant(c) => be.add_constant(&prod, c)?,
        Node::Value(v) => be.add(&prod, &v)?,
    }))
}

/// Plain-number backend over a batch of sample points.
pub struct Plain;

impl Backend for Plain {
    type Value = Vec<f64>;
    type Error = std::convert::Infallible;

    fn mul(&mut self, a: &Vec<f64>, b: &Vec<f64>) -> Result<Vec<f64>, Self::Error> {
        Ok(a.iter().zip(b).map(|(x, y)| x * y).collect())
    }
    fn square(&mut self, a: &Vec<f64>) -> Result<Vec<f64>, Self::Error> {
        Ok(a.iter().map(|x| x * x).collect())
    }
    fn add(&mut self, a: &Vec<f64>, b: &Vec<f64>) -> Result<Vec<f64>, Self::Error> {
        Ok(a.iter().zip(b).map(|(x, y)| x + y).collect())
    }
    fn sub(&mut self, a: &Vec<f64>, b: &Vec<f64>) -> Result<Vec<f64>, Self::Error> {
        Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
    }
    fn mul_integer(&mut self, a: &Vec<f64>, k: i64) -> Result<Vec<f64>, Self::Error> {
        Ok(a.iter().map(|x| x * k as f64).collect())
    }
    fn add_constant(&mut self, a: &Vec<f64>, c: f64) -> Result<Vec<f64>, Self::Error> {
        Ok(a.iter().map(|x| x + c).collect())
    }
    fn linear_combination(&mut self, terms: &[(&Vec<f64>, f64)], constant: f64) -> Result<Vec<f64>, Self::Error> {
        let n = terms.first().map_or(1, |t| t.0.len());
        let mut out = vec![constant; n];
        for (v, w) in terms {
            out.iter_mut().zip(v.iter()).for_each(|(o, x)| *o += w * x);
        }
        Ok(out)
    }
}

/// Tracks only the level of each intermediate; used to plan depth.
pub struct Levels;

impl Backend for Levels {
    type Value = i64;
    type Error = std::convert::Infallible;

    fn mul(&mut self, a: &i64, b: &i64) -> Result<i64, Self::Error> {
        Ok(a.min(b) - 1)
    }
    fn square(&mut self, a: &i64) -> Result<i64, Self::Error> {
        Ok(a - 1)
    }
    fn add(&mut self, a: &i64, b: &i64) -> Result<i64, Self::Error> {
        Ok(*a.min(b))
    }
    fn sub(&mut self, a: &i64, b: &i64) -> Result<i64, Self::Error> {
        Ok(*a.min(b))
    }
    fn mul_integer(&mut self, a: &i64, _: i64) -> Result<i64, Self::Error> {
        Ok(*a)
    }
    fn add_constant(&mut self, a: &i64, _: f64) -> Result<i64, Self::Error> {
        Ok(*a)
    }
    fn linear_combination(&mut self, terms: &[(&i64, f64)], _: f64) -> Result<i64, Self::Error> {
        Ok(terms.iter().map(|t| *t.0).min().unwrap_or(0) - 1)
    }
}

/// Levels consumed by evaluating a polynomial with these coefficients.
pub fn depth(coeffs: &[f64]) -> usize {
    let Ok(out) = paterson_stockmeyer(&mut Levels, &0, coeffs);
    (-out) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos_target(k: f64, r: u32) -> impl Fn(f64) -> f64 {
        move |x| ((2.0 * PI * k * x - PI / 2.0) / 2f64.powi(r as i32)).cos()
    }

    #[test]
    fn interpolant_of_the_scaled_cosine_is_accurate() {
        let f = cos_target(256.0, 6);
        let c = interpolate(&f, 59);
        for i in 0..=2000 {
            let x = -1.0 + i as f64 / 1000.0;
            assert!((evaluate(&c, x) - f(x)).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn division_reconstructs_the_polynomial() {
        let p: Vec<f64> = (0..40).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        for m in [20usize, 24, 32, 40] {
            let (q, r) = divide(&p, m);
            assert_eq!(r.len(), m);
            for i in 0..=50 {
                let x = -1.0 + i as f64 / 25.0;
                let tm = (m as f64 * x.acos()).cos();
                let got = evaluate(&q, x) * tm + evaluate(&r, x);
                assert!((got - evaluate(&p, x)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn schedule_matches_clenshaw() {
        let xs: Vec<f64> = (0..=200).map(|i| -1.0 + i as f64 / 100.0).collect();
        for degree in [1usize, 2, 3, 7, 8, 15, 31, 59, 88] {
            let c = interpolate(|x| (3.0 * x).sin() + 0.3, degree);
            let Ok(got) = paterson_stockmeyer(&mut Plain, &xs, &c);
            for (x, g) in xs.iter().zip(&got) {
                assert!((g - evaluate(&c, *x)).abs() < 1e-10, "degree {degree} x {x}");
            }
        }
    }

    #[test]
    fn shared_steps_evaluate_each_polynomial() {
        let xs: Vec<f64> = (0..=100).map(|i| -1.0 + i as f64 / 50.0).collect();
        let a = interpolate(|x| (25.0 * x).cos(), 59);
        let b = interpolate(|x| (25.0 * x).sin(), 59);
        let short = vec![0.25, 0.0, 0.5];
        let Ok(got) = paterson_stockmeyer_many(&mut Plain, &xs, &[&a, &b, &short]);
        for (p, g) in [&a, &b, &short].iter().zip(&got) {
            for (x, v) in xs.iter().zip(g) {
                assert!((v - evaluate(p, *x)).abs() < 1e-10);
            }
        }
        let Ok(levels) = paterson_stockmeyer_many(&mut Levels, &0, &[&a, &b]);
        assert_eq!(levels, vec![-(depth(&a) as i64), -(depth(&b) as i64)]);
    }

    #[test]
    fn depth_is_near_logarithmic() {
        assert_eq!(depth(&vec![1.0; 60]), 6);
        assert_eq!(depth(&vec![1.0; 89]), 7);
        assert_eq!(depth(&[0.5, 1.0, 1.0]), 2);
        for d in [3usize, 7, 15, 31, 63, 127] {
            let c = vec![1.0; d + 1];
            let lower = (usize::BITS - d.leading_zeros()) as usize;
            assert!(depth(&c) <= lower + 1, "degree {d}");
        }
    }
}
