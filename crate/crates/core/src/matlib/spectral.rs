//! Eigenvalues of general real matrices: diagonal balancing, Householder
//! reduction to upper Hessenberg form, and Francis double-shift QR.

use super::{MatError, Matrix};
use crate::scalar::Scalar;

/// Eigenvalues as `(re, im)` pairs; complex eigenvalues come in conjugate pairs.
pub fn eigenvalues<T: Scalar>(m: &Matrix<T>) -> Result<Vec<(T, T)>, MatError> {
    if !m.is_square() {
        return Err(MatError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let n = m.rows();
    if n == 0 {
        return Ok(vec![]);
    }
    let mut h: Vec<T> = (0..n * n).map(|k| m[(k / n, k % n)]).collect();
    balance(n, &mut h);
    orthes(n, &mut h);
    hqr(n, &mut h)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius<T: Scalar>(m: &Matrix<T>) -> Result<T, MatError> {
    Ok(eigenvalues(m)?
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(T::zero(), T::max))
}

/// Eigenvalue moduli in descending order.
pub fn eigenvalue_moduli<T: Scalar>(m: &Matrix<T>) -> Result<Vec<T>, MatError> {
    let mut v: Vec<T> = eigenvalues(m)?
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(v)
}

fn balance<T: Scalar>(n: usize, a: &mut [T]) {
    let radix = T::lit(2.0);
    let radix2 = radix * radix;
    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < 100 {
        sweeps += 1;
        converged = true;
        for i in 0..n {
            let mut c = T::zero();
            let mut r = T::zero();
            for j in 0..n {
                if j != i {
                    c += a[j * n + i].abs();
                    r += a[i * n + j].abs();
                }
            }
            if c == T::zero() || r == T::zero() {
                continue;
            }
            let s = c + r;
            let mut f = T::one();
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= radix2;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= radix2;
            }
            if (c + r) / f < T::lit(0.95) * s {
                converged = false;
                let ginv = T::one() / f;
                for j in 0..n {
                    a[i * n + j] *= ginv;
                }
                for j in 0..n {
                    a[j * n + i] *= f;
                }
            }
        }
    }
}

fn orthes<T: Scalar>(n: usize, h: &mut [T]) {
    let high = n - 1;
    let mut ort = vec![T::zero(); n];
    for m in 1..high {
        let mut scale = T::zero();
        for i in m..=high {
            scale += h[i * n + m - 1].abs();
        }
        if scale == T::zero() {
            continue;
        }
        let mut hh = T::zero();
        for i in (m..=high).rev() {
            ort[i] = h[i * n + m - 1] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > T::zero() {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;
        for j in m..n {
            let mut f = T::zero();
            for i in (m..=high).rev() {
                f += ort[i] * h[i * n + j];
            }
            f /= hh;
            for i in m..=high {
                h[i * n + j] -= f * ort[i];
            }
        }
        for i in 0..=high {
            let mut f = T::zero();
            for j in (m..=high).rev() {
                f += ort[j] * h[i * n + j];
            }
            f /= hh;
            for j in m..=high {
                h[i * n + j] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[m * n + m - 1] = scale * g;
    }
}

#[allow(unused_assignments)]
fn hqr<T: Scalar>(nn: usize, h: &mut [T]) -> Result<Vec<(T, T)>, MatError> {
    let at = |i: usize, j: usize| i * nn + j;
    let mut d = vec![T::zero(); nn];
    let mut e = vec![T::zero(); nn];
    let eps = T::epsilon();
    let max_iter = 30 * nn.max(10);
    let mut total_iter = 0usize;
    let mut exshift = T::zero();
    let (mut p, mut q, mut r, mut s, mut z) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());

    let mut norm = T::zero();
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[at(i, j)].abs();
        }
    }

    let mut n = nn as isize - 1;
    let mut iter = 0;
    while n >= 0 {
        let nu = n as usize;
        let mut l = nu;
        while l > 0 {
            s = h[at(l - 1, l - 1)].abs() + h[at(l, l)].abs();
            if s == T::zero() {
                s = norm;
            }
            if h[at(l, l - 1)].abs() <= eps * s {
                break;
            }
            l -= 1;
        }

        if l == nu {
            h[at(nu, nu)] += exshift;
            d[nu] = h[at(nu, nu)];
            e[nu] = T::zero();
            n -= 1;
            iter = 0;
        } else if l + 1 == nu {
            let w = h[at(nu, nu - 1)] * h[at(nu - 1, nu)];
            p = (h[at(nu - 1, nu - 1)] - h[at(nu, nu)]) / T::lit(2.0);
            q = p * p + w;
            z = q.abs().sqrt();
            h[at(nu, nu)] += exshift;
            h[at(nu - 1, nu - 1)] += exshift;
            let x = h[at(nu, nu)];
            if q >= T::zero() {
                z = if p >= T::zero() { p + z } else { p - z };
                d[nu - 1] = x + z;
                d[nu] = d[nu - 1];
                if z != T::zero() {
                    d[nu] = x - w / z;
                }
                e[nu - 1] = T::zero();
                e[nu] = T::zero();
            } else {
                d[nu - 1] = x + p;
                d[nu] = x + p;
                e[nu - 1] = z;
                e[nu] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            let mut x = h[at(nu, nu)];
            let mut y = T::zero();
            let mut w = T::zero();
            if l < nu {
                y = h[at(nu - 1, nu - 1)];
                w = h[at(nu, nu - 1)] * h[at(nu - 1, nu)];
            }
            if iter == 10 {
                exshift += x;
                for i in 0..=nu {
                    h[at(i, i)] -= x;
                }
                s = h[at(nu, nu - 1)].abs() + h[at(nu - 1, nu - 2)].abs();
                x = T::lit(0.75) * s;
                y = x;
                w = T::lit(-0.4375) * s * s;
            }
            if iter == 30 {
                s = (y - x) / T::lit(2.0);
                s = s * s + w;
                if s > T::zero() {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / T::lit(2.0) + s);
                    for i in 0..=nu {
                        h[at(i, i)] -= s;
                    }
                    exshift += s;
                    x = T::lit(0.964);
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total_iter += 1;
            if total_iter > max_iter {
                return Err(MatError::NoConvergence {
                    what: "Hessenberg QR",
                    iterations: max_iter,
                });
            }

            let mut m = nu - 2;
            loop {
                z = h[at(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[at(m + 1, m)] + h[at(m, m + 1)];
                q = h[at(m + 1, m + 1)] - z - r - s;
                r = h[at(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[at(m, m - 1)].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[at(m - 1, m - 1)].abs() + z.abs() + h[at(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nu {
                h[at(i, i - 2)] = T::zero();
                if i > m + 2 {
                    h[at(i, i - 3)] = T::zero();
                }
            }

            for k in m..nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[at(k, k - 1)];
                    q = h[at(k + 1, k - 1)];
                    r = if notlast { h[at(k + 2, k - 1)] } else { T::zero() };
                    x = p.abs() + q.abs() + r.abs();
                    if x == T::zero() {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < T::zero() {
                    s = -s;
                }
                if s != T::zero() {
                    if k != m {
                        h[at(k, k - 1)] = -s * x;
                    } else if l != m {
                        h[at(k, k - 1)] = -h[at(k, k - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..nn {
                        p = h[at(k, j)] + q * h[at(k + 1, j)];
                        if notlast {
                            p += r * h[at(k + 2, j)];
                            h[at(k + 2, j)] -= p * z;
                        }
                        h[at(k, j)] -= p * x;
                        h[at(k + 1, j)] -= p * y;
                    }
                    for i in 0..=nu.min(k + 3) {
                        p = x * h[at(i, k)] + y * h[at(i, k + 1)];
                        if notlast {
                            p += z * h[at(i, k + 2)];
                            h[at(i, k + 2)] -= p * r;
                        }
                        h[at(i, k)] -= p;
                        h[at(i, k + 1)] -= p * q;
                    }
                }
            }
        }
    }
    Ok(d.into_iter().zip(e).collect())
}
