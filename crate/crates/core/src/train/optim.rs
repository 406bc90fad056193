use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TensorMut, TensorRef, Trainable};

/// Adaptive moment estimation with bias correction, no weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Updates applied so far.
    pub t: u64,
    #[serde(skip)]
    pub m: Vec<Vec<f32>>,
    #[serde(skip)]
    pub v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64, sizes: &[usize]) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Global L2 norm of the gradients of trainable tensors.
    pub fn grad_norm(grads: &[TensorRef<'_, f32>], trainable: &Trainable) -> f64 {
        grads
            .iter()
            .filter(|g| trainable.contains(g.group))
            .flat_map(|g| g.data.iter())
            .map(|&x| (x as f64) * (x as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// One update of every trainable tensor. Gradients are rescaled to
    /// `clip` global norm first when `clip > 0` and the norm exceeds it.
    /// Tensors outside `trainable` are not touched.
    pub fn step(
        &mut self,
        params: Vec<TensorMut<'_, f32>>,
        grads: &[TensorRef<'_, f32>],
        trainable: &Trainable,
        lr: f64,
        clip: f64,
    ) -> Result<f64> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "{} parameters, {} gradients, {} optimizer slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        let norm = Self::grad_norm(grads, trainable);
        let scale = if clip > 0.0 && norm > clip { clip / norm } else { 1.0 } as f32;
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = (lr * bc2.sqrt() / bc1) as f32;
        let (b1, b2, eps) = (self.beta1 as f32, self.beta2 as f32, (self.eps * bc2.sqrt()) as f32);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if !trainable.contains(p.group) {
                continue;
            }
            for (((w, &gr), mi), vi) in p.data.iter_mut().zip(g.data).zip(m.iter_mut()).zip(v.iter_mut()) {
                let gr = gr * scale;
                *mi = b1 * *mi + (1.0 - b1) * gr;
                *vi = b2 * *vi + (1.0 - b2) * gr * gr;
                *w -= step * *mi / (vi.sqrt() + eps);
            }
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamGroup;
    use ndarray::Array1;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut w = Array1::from(vec![1.0f32, -2.0, 0.5]);
        let g = Array1::from(vec![0.3f32, -4.0, 0.0]);
        let mut adam = Adam::new(0.9, 0.999, 1e-8, &[3]);
        let tr = Trainable::all();
        adam.step(
            vec![TensorMut::new("w".into(), ParamGroup::Attention, &mut w)],
            &[TensorRef::new("w".into(), ParamGroup::Attention, &g)],
            &tr,
            0.1,
            0.0,
        )
        .unwrap();
        // With bias correction the first update is lr * sign(g).
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 1.9).abs() < 1e-6);
        assert_eq!(w[2], 0.5);
    }

    #[test]
    fn frozen_group_untouched_and_clipping_applies() {
        let mut a = Array1::from(vec![1.0f32]);
        let mut b = Array1::from(vec![1.0f32]);
        let ga = Array1::from(vec![30.0f32]);
        let gb = Array1::from(vec![40.0f32]);
        let mut adam = Adam::new(0.9, 0.999, 1e-8, &[1, 1]);
        let tr = Trainable::all().with(ParamGroup::Norm, false);
        let norm = adam
            .step(
                vec![
                    TensorMut::new("a".into(), ParamGroup::Attention, &mut a),
                    TensorMut::new("b".into(), ParamGroup::Norm, &mut b),
                ],
                &[
                    TensorRef::new("a".into(), ParamGroup::Attention, &ga),
                    TensorRef::new("b".into(), ParamGroup::Norm, &gb),
                ],
                &tr,
                0.01,
                1.0,
            )
            .unwrap();
        assert_eq!(norm, 30.0);
        assert_eq!(b[0], 1.0);
        assert_eq!(adam.m[1][0], 0.0);
        assert!((adam.m[0][0] - 0.1).abs() < 1e-6);
    }
}
