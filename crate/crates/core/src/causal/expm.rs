//! Matrix exponential by scaling and squaring with diagonal Padé
//! approximants (orders 3 through 13, Higham 2005 thresholds).

use nalgebra::DMatrix;

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
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

const THETA: [(f64, &[f64]); 4] = [
    (1.495585217958292e-2, &PADE3),
    (2.539398330063230e-1, &PADE5),
    (9.504178996162932e-1, &PADE7),
    (2.097847961257068e0, &PADE9),
];
const THETA13: f64 = 5.371920351148152;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols()).map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `(V - U)^{-1}(V + U)`.
fn pade_solve(u: DMatrix<f64>, v: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let p = &v + &u;
    let q = v - u;
    q.lu().solve(&p)
}

fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let a2 = a * a;
    let mut even = DMatrix::identity(n, n);
    let mut u_acc = DMatrix::zeros(n, n);
    let mut v_acc = DMatrix::zeros(n, n);
    for (j, &c) in b.iter().enumerate() {
        if j % 2 == 0 {
            v_acc += &even * c;
        } else {
            u_acc += &even * c;
            even = &even * &a2;
        }
    }
    pade_solve(a * u_acc, v_acc)
}

fn pade13(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let b = &PADE13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    pade_solve(u, v)
}

/// `e^A`; `None` when the Padé denominator is singular or the result
/// overflows.
pub fn expm(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    assert!(a.is_square(), "expm needs a square matrix");
    let norm = one_norm(a);
    if !norm.is_finite() {
        return None;
    }
    for (theta, coeffs) in THETA {
        if norm <= theta {
            return pade_low(a, coeffs).filter(|m| m.iter().all(|v| v.is_finite()));
        }
    }
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(s);
    let mut r = pade13(&scaled)?;
    for _ in 0..s {
        r = &r * &r;
    }
    r.iter().all(|v| v.is_finite()).then_some(r)
}
