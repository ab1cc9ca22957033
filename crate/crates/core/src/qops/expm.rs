//! Matrix exponential by scaling and squaring with a degree-13 Padé
//! approximant (Higham 2005).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

#[allow(dead_code)]
pub(crate) fn one_norm(a: &DMatrix<Complex64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub(crate) fn expm(a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let n = a.nrows();
    let ident = DMatrix::<Complex64>::identity(n, n);
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::Overflow("matrix exponential input"));
    }
    if norm == 0.0 {
        return Ok(ident);
    }

    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * Complex64::from(0.5f64.powi(squarings));

    let b = |k: usize| Complex64::from(PADE13[k]);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9));
    let u = &a * (inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &ident * b(1));
    let inner_v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8));
    let v = inner_v + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &ident * b(0);

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .ok_or(Error::Overflow("Padé denominator"))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Overflow("matrix exponential"));
    }
    Ok(r)
}
