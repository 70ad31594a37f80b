//! Exact moments of the error up to fourth order.
//!
//! The state is the fourth-moment tensor of the augmented vector `[e; 1]`,
//! which carries every lower-order moment through the constant coordinate.
//! With `u = A_cl e + Ā x` (`x = e + z`) and `e⁺ = u + w`, one step is an
//! exact polynomial expansion over the joint moments of `Ā` and `w`.

use std::collections::HashMap;

use crate::moments::NoiseSampler;
use crate::Mat;

pub(super) struct FourthMoments<'a> {
    n: usize,
    acl: Mat,
    /// `W^{1/2}` and the kurtosis of its whitened entries.
    w_half: Option<(Mat, f64)>,
    sampler: &'a NoiseSampler,
    /// Full `(n+1)^4` tensor, first index fastest.
    t: Vec<f64>,
}

fn idx4(d: usize, i: [usize; 4]) -> usize {
    i[0] + d * (i[1] + d * (i[2] + d * i[3]))
}

/// Applies `r` (rows × d) along every mode of a `d^4` tensor.
fn transform(t: &[f64], d: usize, r: &Mat) -> Vec<f64> {
    let big = r.rows();
    let mut cur = t.to_vec();
    let mut dims = [d; 4];
    for mode in 0..4 {
        let mut nd = dims;
        nd[mode] = big;
        let mut out = vec![0.0; nd.iter().product()];
        let stride = |ds: &[usize; 4], m: usize| ds[..m].iter().product::<usize>();
        let (s_old, s_new) = (stride(&dims, mode), stride(&nd, mode));
        let inner = s_old;
        let outer: usize = dims[mode + 1..].iter().product();
        for o in 0..outer {
            for k in 0..d {
                for row in 0..big {
                    let c = r[(row, k)];
                    if c == 0.0 {
                        continue;
                    }
                    let src = o * s_old * d + k * s_old;
                    let dst = o * s_new * big + row * s_new;
                    for i in 0..inner {
                        out[dst + i] += c * cur[src + i];
                    }
                }
            }
        }
        cur = out;
        dims = nd;
    }
    cur
}

impl<'a> FourthMoments<'a> {
    pub(super) fn new(acl: &Mat, w_half: Option<(Mat, f64)>, sampler: &'a NoiseSampler) -> Self {
        let n = acl.rows();
        let d = n + 1;
        let mut t = vec![0.0; d * d * d * d];
        t[idx4(d, [n; 4])] = 1.0;
        Self {
            n,
            acl: acl.clone(),
            w_half,
            sampler,
            t,
        }
    }

    fn get(&self, i: [usize; 4]) -> f64 {
        self.t[idx4(self.n + 1, i)]
    }

    /// `E[e_i e_j]`.
    pub(super) fn second(&self, i: usize, j: usize) -> f64 {
        let n = self.n;
        self.get([i, j, n, n])
    }

    /// `Var(e_i e_j)`.
    pub(super) fn product_variance(&self, i: usize, j: usize) -> f64 {
        let s = self.second(i, j);
        (self.get([i, j, i, j]) - s * s).max(0.0)
    }

    fn w_moment(&self, a: &[usize]) -> f64 {
        if a.is_empty() {
            return 1.0;
        }
        let Some((l, kurt)) = &self.w_half else {
            return 0.0;
        };
        let w = |p: usize, q: usize| (0..self.n).map(|t| l[(p, t)] * l[(q, t)]).sum::<f64>();
        match a {
            [p, q] => w(*p, *q),
            [p, q, r, s] => {
                let excess: f64 = (0..self.n).map(|t| l[(*p, t)] * l[(*q, t)] * l[(*r, t)] * l[(*s, t)]).sum();
                w(*p, *q) * w(*r, *s) + w(*p, *r) * w(*q, *s) + w(*p, *s) * w(*q, *r) + (kurt - 3.0) * excess
            }
            _ => 0.0,
        }
    }

    /// Advances one step with nominal state `z`.
    pub(super) fn step(&mut self, z: &[f64]) {
        let n = self.n;
        let d = n + 1;
        // y = [A_cl e; e + z; 1]
        let big = 2 * n + 1;
        let mut r = Mat::zeros(big, d);
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] = self.acl[(i, j)];
            }
            r[(n + i, i)] = 1.0;
            r[(n + i, n)] = z[i];
        }
        r[(2 * n, n)] = 1.0;
        let ty = transform(&self.t, d, &r);
        let ty_at = |i: [usize; 4]| ty[idx4(big, i)];

        // E[Π u_{a_t}] with u_a = (A_cl e)_a + Σ_j Ā[a, j] x_j
        let mut u_cache: HashMap<Vec<usize>, f64> = HashMap::new();
        let mut moment_u = |a: &[usize]| -> f64 {
            let mut key = a.to_vec();
            key.sort_unstable();
            if let Some(v) = u_cache.get(&key) {
                return *v;
            }
            let k = key.len();
            let mut total = 0.0;
            for mask in 0..(1usize << k) {
                let picked: Vec<usize> = (0..k).filter(|t| mask >> t & 1 == 1).collect();
                let combos = n.pow(picked.len() as u32);
                for c in 0..combos {
                    let mut js = Vec::with_capacity(picked.len());
                    let mut rem = c;
                    for _ in &picked {
                        js.push(rem % n);
                        rem /= n;
                    }
                    let abar: Vec<usize> = picked.iter().zip(&js).map(|(t, j)| j * n + key[*t]).collect();
                    let mu = self.sampler.joint_moment(&abar);
                    if mu == 0.0 {
                        continue;
                    }
                    let mut yi = [2 * n; 4];
                    let mut pi = 0;
                    for t in 0..k {
                        yi[t] = if mask >> t & 1 == 1 {
                            pi += 1;
                            n + js[pi - 1]
                        } else {
                            key[t]
                        };
                    }
                    total += mu * ty_at(yi);
                }
            }
            u_cache.insert(key, total);
            total
        };

        let mut e_cache: HashMap<Vec<usize>, f64> = HashMap::new();
        let mut next = vec![0.0; self.t.len()];
        for flat in 0..next.len() {
            let full = [flat % d, flat / d % d, flat / (d * d) % d, flat / (d * d * d)];
            let mut key: Vec<usize> = full.iter().copied().filter(|&i| i < n).collect();
            key.sort_unstable();
            if let Some(v) = e_cache.get(&key) {
                next[flat] = *v;
                continue;
            }
            let k = key.len();
            let mut v = 0.0;
            for mask in 0..(1usize << k) {
                let (mut qa, mut qw) = (Vec::new(), Vec::new());
                for (t, &i) in key.iter().enumerate() {
                    if mask >> t & 1 == 1 {
                        qa.push(i);
                    } else {
                        qw.push(i);
                    }
                }
                let mw = self.w_moment(&qw);
                if mw != 0.0 {
                    v += moment_u(&qa) * mw;
                }
            }
            e_cache.insert(key, v);
            next[flat] = v;
        }
        self.t = next;
    }
}
