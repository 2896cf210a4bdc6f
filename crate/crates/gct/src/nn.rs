//! Minimal dense-layer toolkit: Glorot-initialized linear layers, ReLU,
//! masked softmax, and SGD with momentum. Everything is f64, single-threaded,
//! and deterministic given its seeds.

use rand::Rng;

/// Logit offset applied to illegal actions before softmax.
pub const MASK_NEG: f64 = -1e9;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    /// Uniform init in +/- sqrt(6 / (fan_in + fan_out)), bias zero.
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Linear {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Linear {
            in_dim,
            out_dim,
            w,
            b: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut y = self.b.clone();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            *yo += row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and writes the input
    /// gradient into `dx` (overwriting it).
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut LinearGrad, dx: &mut [f64]) {
        dx.fill(0.0);
        for (o, &g) in dy.iter().enumerate() {
            grad.db[o] += g;
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad.dw[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearGrad {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

impl LinearGrad {
    pub fn zeros(layer: &Linear) -> LinearGrad {
        LinearGrad {
            dw: vec![0.0; layer.w.len()],
            db: vec![0.0; layer.b.len()],
        }
    }

    pub fn reset(&mut self) {
        self.dw.fill(0.0);
        self.db.fill(0.0);
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.dw.iter_mut().chain(self.db.iter_mut()) {
            *g *= factor;
        }
    }
}

/// Classic momentum: v <- m*v + g; p <- p - lr*v.
#[derive(Debug, Clone)]
pub struct Momentum {
    pub momentum: f64,
    vw: Vec<f64>,
    vb: Vec<f64>,
}

impl Momentum {
    pub fn new(layer: &Linear, momentum: f64) -> Momentum {
        Momentum {
            momentum,
            vw: vec![0.0; layer.w.len()],
            vb: vec![0.0; layer.b.len()],
        }
    }

    pub fn step(&mut self, layer: &mut Linear, grad: &LinearGrad, lr: f64) {
        for ((v, p), g) in self.vw.iter_mut().zip(&mut layer.w).zip(&grad.dw) {
            *v = self.momentum * *v + g;
            *p -= lr * *v;
        }
        for ((v, p), g) in self.vb.iter_mut().zip(&mut layer.b).zip(&grad.db) {
            *v = self.momentum * *v + g;
            *p -= lr * *v;
        }
    }
}

pub fn relu(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// dx_i = dy_i if the forward activation was positive, else 0.
pub fn relu_backward(activated: &[f64], dy: &mut [f64]) {
    for (a, g) in activated.iter().zip(dy.iter_mut()) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Softmax over logits with illegal entries pushed to MASK_NEG.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let masked: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { l } else { l + MASK_NEG })
        .collect();
    let max = masked.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = masked.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    probs
}

/// Cross-entropy loss and logit gradient for a masked-softmax classifier.
pub fn masked_ce(logits: &[f64], mask: &[bool], target: usize) -> (f64, Vec<f64>) {
    let probs = masked_softmax(logits, mask);
    let loss = -(probs[target].max(1e-300)).ln();
    let mut dlogits = probs;
    dlogits[target] -= 1.0;
    (loss, dlogits)
}

/// Draws an index from a probability vector by inverse CDF.
pub fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_nonzero
}

/// Greedy argmax restricted to legal entries; ties break to the lowest index.
pub fn masked_argmax(logits: &[f64], mask: &[bool]) -> usize {
    let mut best = usize::MAX;
    let mut best_val = f64::NEG_INFINITY;
    for (i, (&l, &m)) in logits.iter().zip(mask).enumerate() {
        if m && l > best_val {
            best_val = l;
            best = i;
        }
    }
    assert!(best != usize::MAX, "masked_argmax with empty mask");
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn masked_softmax_kills_illegal_actions() {
        let logits = vec![2.0, 1.0, 0.0, 3.0];
        let mask = vec![true, false, true, false];
        let p = masked_softmax(&logits, &mask);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[1] < 1e-9);
        assert!(p[3] < 1e-9);
        assert!(p[0] > p[2]);
    }

    #[test]
    fn linear_gradcheck_central_differences() {
        let mut rng = stream(3, &[0]);
        let mut layer = Linear::new(5, 4, &mut rng);
        let x: Vec<f64> = (0..5).map(|i| 0.3 * i as f64 - 0.7).collect();
        let mask = vec![true, true, false, true];
        let target = 1;
        let loss_of = |layer: &Linear| {
            let y = layer.forward(&x);
            masked_ce(&y, &mask, target).0
        };
        let y = layer.forward(&x);
        let (_, dy) = masked_ce(&y, &mask, target);
        let mut grad = LinearGrad::zeros(&layer);
        let mut dx = vec![0.0; 5];
        layer.backward(&x, &dy, &mut grad, &mut dx);
        let h = 1e-5;
        for i in 0..layer.w.len() {
            let orig = layer.w[i];
            layer.w[i] = orig + h;
            let lp = loss_of(&layer);
            layer.w[i] = orig - h;
            let lm = loss_of(&layer);
            layer.w[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (fd - grad.dw[i]).abs() < 1e-7 + 1e-5 * fd.abs(),
                "w[{i}]: fd={fd} analytic={}",
                grad.dw[i]
            );
        }
    }
}
