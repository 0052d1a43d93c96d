//! Sparse linear models with logistic losses and an Adam optimizer over touched coordinates.
//!
//! Weights live in slots allocated on first touch. Untouched coordinates have zero weight and
//! zero optimizer moments, so updating only allocated slots is the same as dense Adam.

use std::collections::{BTreeMap, HashMap};

use super::features::FeatureVector;

#[derive(Debug, Clone)]
pub struct LinearModel {
    classes: usize,
    slots: HashMap<u32, usize>,
    buckets: Vec<u32>,
    /// `weights[slot * classes + class]`
    weights: Vec<f64>,
}

impl LinearModel {
    pub fn new(classes: usize) -> Self {
        assert!(classes >= 1);
        LinearModel {
            classes,
            slots: HashMap::new(),
            buckets: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn weight(&self, class: usize, bucket: u32) -> f64 {
        self.slots
            .get(&bucket)
            .map_or(0.0, |&s| self.weights[s * self.classes + class])
    }

    pub fn set_weight(&mut self, class: usize, bucket: u32, w: f64) {
        let s = self.slot(bucket);
        self.weights[s * self.classes + class] = w;
    }

    fn slot(&mut self, bucket: u32) -> usize {
        if let Some(&s) = self.slots.get(&bucket) {
            return s;
        }
        let s = self.buckets.len();
        self.slots.insert(bucket, s);
        self.buckets.push(bucket);
        self.weights.extend(std::iter::repeat_n(0.0, self.classes));
        s
    }

    /// Nonzero weights as `(class, bucket, weight)` sorted by bucket then class.
    pub fn nonzero(&self) -> Vec<(usize, u32, f64)> {
        let mut out: Vec<(usize, u32, f64)> = Vec::new();
        for (s, &b) in self.buckets.iter().enumerate() {
            for k in 0..self.classes {
                let w = self.weights[s * self.classes + k];
                if w.to_bits() != 0 {
                    out.push((k, b, w));
                }
            }
        }
        out.sort_by_key(|&(k, b, _)| (b, k));
        out
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    pub fn score(&self, class: usize, x: &FeatureVector) -> f64 {
        x.entries.iter().map(|&(b, v)| v * self.weight(class, b)).sum()
    }

    pub fn scores(&self, x: &FeatureVector) -> Vec<f64> {
        (0..self.classes).map(|k| self.score(k, x)).collect()
    }
}

/// Bitwise equality of every weight, independent of slot layout.
impl PartialEq for LinearModel {
    fn eq(&self, other: &Self) -> bool {
        let a = self.nonzero();
        let b = other.nonzero();
        self.classes == other.classes
            && a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|(x, y)| x.0 == y.0 && x.1 == y.1 && x.2.to_bits() == y.2.to_bits())
    }
}

/// Sparse gradient keyed by `(bucket, class)`.
pub type Gradient = BTreeMap<(u32, usize), f64>;

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Multinomial logistic loss `-log softmax(W x)[gold]`, adding `scale * dL/dW` into `grad`.
pub fn softmax_loss(model: &LinearModel, x: &FeatureVector, gold: usize, scale: f64, grad: &mut Gradient) -> f64 {
    let scores = model.scores(x);
    let p = softmax(&scores);
    for (k, pk) in p.iter().enumerate() {
        let coef = pk - if k == gold { 1.0 } else { 0.0 };
        if coef == 0.0 {
            continue;
        }
        for &(b, v) in &x.entries {
            *grad.entry((b, k)).or_insert(0.0) += scale * coef * v;
        }
    }
    log_sum_exp(&scores) - scores[gold]
}

/// Listwise logistic loss over candidates sharing one weight vector (class 0):
/// `-log softmax(w x_j)[gold]`.
pub fn ranking_loss(model: &LinearModel, xs: &[FeatureVector], gold: usize, scale: f64, grad: &mut Gradient) -> f64 {
    let scores: Vec<f64> = xs.iter().map(|x| model.score(0, x)).collect();
    let p = softmax(&scores);
    for (j, x) in xs.iter().enumerate() {
        let coef = p[j] - if j == gold { 1.0 } else { 0.0 };
        if coef == 0.0 {
            continue;
        }
        for &(b, v) in &x.entries {
            *grad.entry((b, 0)).or_insert(0.0) += scale * coef * v;
        }
    }
    log_sum_exp(&scores) - scores[gold]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamParams {
    pub fn new(learning_rate: f64) -> Self {
        AdamParams {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam state for one [`LinearModel`], indexed by the model's slots.
#[derive(Debug, Clone)]
pub struct Adam {
    params: AdamParams,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
    scratch: Vec<f64>,
}

impl Adam {
    pub fn new(params: AdamParams) -> Self {
        Adam {
            params,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
            scratch: Vec::new(),
        }
    }

    pub fn step(&mut self, model: &mut LinearModel, grad: &Gradient) {
        for &(bucket, _) in grad.keys() {
            model.slot(bucket);
        }
        let n = model.weights.len();
        self.m.resize(n, 0.0);
        self.v.resize(n, 0.0);
        self.scratch.clear();
        self.scratch.resize(n, 0.0);
        for (&(bucket, class), &g) in grad {
            let s = model.slots[&bucket];
            self.scratch[s * model.classes + class] += g;
        }
        self.step += 1;
        let AdamParams {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.params;
        let bc1 = 1.0 - beta1.powi(self.step);
        let bc2 = 1.0 - beta2.powi(self.step);
        for i in 0..n {
            let g = self.scratch[i];
            let m = beta1 * self.m[i] + (1.0 - beta1) * g;
            let v = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            model.weights[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vector(rng: &mut ChaCha8Rng, buckets: u32) -> FeatureVector {
        let n = rng.gen_range(1..6);
        FeatureVector::from_entries(
            (0..n)
                .map(|_| (rng.gen_range(0..buckets), rng.gen_range(-2.0..2.0)))
                .collect(),
        )
    }

    fn random_model(rng: &mut ChaCha8Rng, classes: usize, buckets: u32) -> LinearModel {
        let mut m = LinearModel::new(classes);
        for b in 0..buckets {
            for k in 0..classes {
                m.set_weight(k, b, rng.gen_range(-1.0..1.0));
            }
        }
        m
    }

    fn check(analytic: &Gradient, model: &LinearModel, loss: impl Fn(&LinearModel) -> f64, buckets: u32) {
        let h = 1e-5;
        for b in 0..buckets {
            for k in 0..model.classes() {
                let w = model.weight(k, b);
                let mut plus = model.clone();
                plus.set_weight(k, b, w + h);
                let mut minus = model.clone();
                minus.set_weight(k, b, w - h);
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let a = analytic.get(&(b, k)).copied().unwrap_or(0.0);
                let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
                assert!(err < 1e-5, "bucket {b} class {k}: analytic {a} numeric {numeric}");
            }
        }
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let model = random_model(&mut rng, 4, 8);
            let x = random_vector(&mut rng, 8);
            let gold = rng.gen_range(0..4);
            let mut g = Gradient::new();
            softmax_loss(&model, &x, gold, 1.0, &mut g);
            check(&g, &model, |m| softmax_loss(m, &x, gold, 1.0, &mut Gradient::new()), 8);
        }
    }

    #[test]
    fn ranking_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let model = random_model(&mut rng, 1, 8);
            let xs: Vec<FeatureVector> = (0..3).map(|_| random_vector(&mut rng, 8)).collect();
            let mut g = Gradient::new();
            ranking_loss(&model, &xs, 1, 1.0, &mut g);
            check(&g, &model, |m| ranking_loss(m, &xs, 1, 1.0, &mut Gradient::new()), 8);
        }
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut model = LinearModel::new(2);
        let mut adam = Adam::new(AdamParams::new(0.001));
        let grad: Gradient = [((3, 0), 0.5), ((3, 1), -2.0)].into_iter().collect();
        adam.step(&mut model, &grad);
        assert!((model.weight(0, 3) + 0.001).abs() < 1e-9);
        assert!((model.weight(1, 3) - 0.001).abs() < 1e-9);
        assert_eq!(model.weight(0, 4), 0.0);
    }

    #[test]
    fn adam_minimizes_a_separable_problem() {
        let x0 = FeatureVector::from_entries(vec![(0, 1.0), (1, 1.0)]);
        let x1 = FeatureVector::from_entries(vec![(0, 1.0), (2, 1.0)]);
        let mut model = LinearModel::new(2);
        let mut adam = Adam::new(AdamParams::new(0.05));
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            let mut g = Gradient::new();
            let loss =
                softmax_loss(&model, &x0, 0, 0.5, &mut g) * 0.5 + softmax_loss(&model, &x1, 1, 0.5, &mut g) * 0.5;
            adam.step(&mut model, &g);
            last = loss;
        }
        assert!(last < 0.05, "loss {last}");
        assert_eq!(argmax(&model.scores(&x0)), 0);
        assert_eq!(argmax(&model.scores(&x1)), 1);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
