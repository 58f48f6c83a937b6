//! Brute-force spectral pooling: DFT, centre crop, inverse DFT.

use std::f64::consts::PI;

use uffia_core::numerics::Tensor;

type C = (f64, f64);

fn dft(x: &[f64]) -> Vec<C> {
    let t = x.len();
    (0..t)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (i, &v)| {
                let a = -2.0 * PI * (k * i) as f64 / t as f64;
                (re + v * a.cos(), im + v * a.sin())
            })
        })
        .collect()
}

/// Frequencies `-(n-1)/2 ..= n/2` of the cropped spectrum, with the even-`n`
/// Nyquist bin split evenly between `+n/2` and `-n/2`.
fn oracle_row(x: &[f64], n: usize) -> Vec<f64> {
    let t = x.len();
    let spec = dft(x);
    let at = |f: i64| spec[f.rem_euclid(t as i64) as usize];
    let lo = -((n as i64 - 1) / 2);
    let hi = n as i64 / 2;
    (0..n)
        .map(|j| {
            let mut acc = 0.0;
            for f in lo..=hi {
                let (re, im) = if n % 2 == 0 && f == hi {
                    let (a, b) = (at(f), at(-f));
                    ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0)
                } else {
                    at(f)
                };
                let ang = 2.0 * PI * (f * j as i64) as f64 / n as f64;
                acc += re * ang.cos() - im * ang.sin();
            }
            acc / t as f64
        })
        .collect()
}

pub fn oracle(values: &Tensor, n: usize) -> Tensor {
    let (t, m) = values.dims2().unwrap();
    let mut out = vec![0.0; n * m];
    for b in 0..m {
        let col: Vec<f64> = (0..t).map(|i| values.at2(i, b)).collect();
        for (j, v) in oracle_row(&col, n).into_iter().enumerate() {
            out[j * m + b] = v;
        }
    }
    Tensor::new([n, m], out).unwrap()
}

