//! Exact squared Euclidean distance transform with per-axis spacing,
//! computed one axis at a time with lower envelopes of parabolas.

/// Squared physical distance from every voxel to the nearest site.
/// Returns `f64::INFINITY` everywhere when there are no sites.
pub fn squared_distance_to(sites: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let mut f: Vec<f64> = sites.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let strides = [dims[1] * dims[2], dims[2], 1];
    let n = f.len();
    let mut line = Vec::new();
    let mut out = Vec::new();
    let mut env = Envelope::default();
    for axis in 0..3 {
        let len = dims[axis];
        let stride = strides[axis];
        let w = spacing[axis] * spacing[axis];
        for start in 0..n {
            // visit each line once, from its first element
            if (start / stride) % len != 0 {
                continue;
            }
            line.clear();
            line.extend((0..len).map(|i| f[start + i * stride]));
            env.transform(&line, w, &mut out);
            for (i, &v) in out.iter().enumerate() {
                f[start + i * stride] = v;
            }
        }
    }
    f
}

#[derive(Default)]
struct Envelope {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Envelope {
    /// `out[q] = min_i w*(q-i)^2 + f[i]`.
    fn transform(&mut self, f: &[f64], w: f64, out: &mut Vec<f64>) {
        let n = f.len();
        out.clear();
        out.resize(n, f64::INFINITY);
        self.v.clear();
        self.z.clear();
        let meet = |p: usize, q: usize| {
            let (pf, qf) = (p as f64, q as f64);
            ((f[q] + w * qf * qf) - (f[p] + w * pf * pf)) / (2.0 * w * (qf - pf))
        };
        for q in (0..n).filter(|&q| f[q].is_finite()) {
            loop {
                match self.v.last() {
                    None => {
                        self.v.push(q);
                        self.z.push(f64::NEG_INFINITY);
                        break;
                    }
                    Some(&p) => {
                        let s = meet(p, q);
                        if s <= *self.z.last().unwrap() {
                            self.v.pop();
                            self.z.pop();
                        } else {
                            self.v.push(q);
                            self.z.push(s);
                            break;
                        }
                    }
                }
            }
        }
        if self.v.is_empty() {
            return;
        }
        let mut k = 0;
        for (q, o) in out.iter_mut().enumerate() {
            while k + 1 < self.v.len() && self.z[k + 1] < q as f64 {
                k += 1;
            }
            let p = self.v[k];
            let d = q as f64 - p as f64;
            *o = w * d * d + f[p];
        }
    }
}
