use crate::diff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adaptive-moment optimizer with decoupled weight decay and a constant rate.
///
/// Moments and step counts are tracked per tensor, so tensors that sit out a
/// training stage resume with their own bias correction.
#[derive(Clone, Debug)]
pub struct AdamW {
    cfg: AdamWConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: Vec<u64>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, shapes: &[Tensor]) -> Self {
        AdamW {
            cfg,
            first: shapes.iter().map(|t| vec![0.0; t.len()]).collect(),
            second: shapes.iter().map(|t| vec![0.0; t.len()]).collect(),
            steps: vec![0; shapes.len()],
        }
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.cfg
    }

    /// Updates every tensor that has a gradient; `None` leaves a tensor untouched.
    ///
    /// All gradients are checked before any update, so a non-finite gradient
    /// aborts the step without modifying parameters.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Option<Tensor>], names: &[&str]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.steps.len() {
            return Err(Error::invalid(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.steps.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.shape() != params[i].shape() {
                    return Err(Error::Shape {
                        op: "optimizer step",
                        lhs: params[i].shape().to_vec(),
                        rhs: g.shape().to_vec(),
                    });
                }
                if !g.is_finite() {
                    let name = names.get(i).copied().unwrap_or("?");
                    return Err(Error::NonFinite(format!("gradient of {name}")));
                }
            }
        }
        let AdamWConfig {
            learning_rate: lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.cfg;
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            self.steps[i] += 1;
            let t = self.steps[i] as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            let decay = 1.0 - lr * weight_decay;
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (((p, &gj), mj), vj) in params[i]
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mj = beta1 * *mj + (1.0 - beta1) * gj;
                *vj = beta2 * *vj + (1.0 - beta2) * gj * gj;
                let m_hat = *mj / c1;
                let v_hat = *vj / c2;
                *p = *p * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut p = vec![Tensor::vector(vec![0.5, -1.0, 2.0]).unwrap()];
        let before = p.clone();
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut opt = AdamW::new(cfg, &p);
        opt.step(&mut p, &[Some(Tensor::zeros(&[3]))], &["w"]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn single_scalar_step_matches_closed_form() {
        let cfg = AdamWConfig {
            learning_rate: 0.1,
            ..AdamWConfig::default()
        };
        let mut p = vec![Tensor::scalar(1.0)];
        let mut opt = AdamW::new(cfg, &p);
        opt.step(&mut p, &[Some(Tensor::scalar(0.5))], &["w"]).unwrap();
        // m = 0.05, v = 0.00025; m̂ = 0.5, v̂ = 0.25
        let m_hat = 0.05 / (1.0 - 0.9);
        let v_hat = 0.00025 / (1.0 - 0.999);
        let expected = 1.0 * (1.0 - 0.1 * 0.01) - 0.1 * m_hat / (f64::sqrt(v_hat) + 1e-8);
        assert!((p[0].data()[0] - expected).abs() < 1e-15);
        assert!((p[0].data()[0] - 0.899_000_002).abs() < 1e-12);

        // second step, gradient -0.5
        opt.step(&mut p, &[Some(Tensor::scalar(-0.5))], &["w"]).unwrap();
        let m2: f64 = 0.9 * 0.05 - 0.1 * 0.5;
        let v2: f64 = 0.999 * 0.00025 + 0.001 * 0.25;
        let expected2 = expected * (1.0 - 0.001)
            - 0.1 * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        assert!((p[0].data()[0] - expected2).abs() < 1e-15);
    }

    #[test]
    fn update_is_elementwise() {
        let cfg = AdamWConfig {
            learning_rate: 0.01,
            ..AdamWConfig::default()
        };
        let vals = [0.3, -0.7, 1.1, 0.0];
        let grads = [0.2, -0.05, 1.5, -2.0];
        let perm = [2, 0, 3, 1];
        let mut a = vec![Tensor::vector(vals.to_vec()).unwrap()];
        let mut b = vec![Tensor::vector(perm.iter().map(|&i| vals[i]).collect()).unwrap()];
        let mut oa = AdamW::new(cfg.clone(), &a);
        let mut ob = AdamW::new(cfg, &b);
        for _ in 0..3 {
            oa.step(&mut a, &[Some(Tensor::vector(grads.to_vec()).unwrap())], &["a"]).unwrap();
            let pg = perm.iter().map(|&i| grads[i]).collect();
            ob.step(&mut b, &[Some(Tensor::vector(pg).unwrap())], &["b"]).unwrap();
        }
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(b[0].data()[k].to_bits(), a[0].data()[i].to_bits());
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = vec![Tensor::scalar(1.0), Tensor::scalar(2.0)];
        let mut opt = AdamW::new(AdamWConfig::default(), &p);
        let err = opt
            .step(
                &mut p,
                &[Some(Tensor::scalar(0.1)), Some(Tensor::scalar(f64::NAN))],
                &["first", "decoder.0.ff1.weight"],
            )
            .unwrap_err();
        assert!(err.to_string().contains("decoder.0.ff1.weight"));
        assert_eq!(p[0].data()[0], 1.0);
    }

    #[test]
    fn frozen_tensors_untouched() {
        let mut p = vec![Tensor::scalar(1.0), Tensor::scalar(2.0)];
        let mut opt = AdamW::new(AdamWConfig::default(), &p);
        opt.step(&mut p, &[None, Some(Tensor::scalar(1.0))], &["a", "b"]).unwrap();
        assert_eq!(p[0].data()[0].to_bits(), 1.0f64.to_bits());
        assert_ne!(p[1].data()[0], 2.0);
    }
}
