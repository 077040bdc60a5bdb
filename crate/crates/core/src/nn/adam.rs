/// Adam with bias-corrected step size.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    step: i32,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(learning_rate: f32) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// Applies one update. `params` and `grads` must keep the same order and
    /// lengths between calls.
    pub fn update<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut [f32]>,
        grads: impl IntoIterator<Item = &'a [f32]>,
    ) {
        self.step += 1;
        let t = self.step;
        let lr = self.learning_rate * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t));
        for (slot, (p, g)) in params.into_iter().zip(grads).enumerate() {
            if slot == self.first.len() {
                self.first.push(vec![0.0; p.len()]);
                self.second.push(vec![0.0; p.len()]);
            }
            let m = &mut self.first[slot];
            let v = &mut self.second[slot];
            assert_eq!(m.len(), p.len(), "parameter layout changed between steps");
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= lr * m[i] / (v[i].sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let mut opt = Adam::new(0.1);
        let mut x = vec![3.0f32, -2.0];
        for _ in 0..500 {
            let g: Vec<f32> = x.iter().map(|v| 2.0 * v).collect();
            opt.update([x.as_mut_slice()], [g.as_slice()]);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2), "{x:?}");
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = Adam::new(1e-3);
        let mut x = vec![1.0f32];
        opt.update([x.as_mut_slice()], [[5.0f32].as_slice()]);
        assert!((x[0] - (1.0 - 1e-3)).abs() < 1e-6);
    }
}
