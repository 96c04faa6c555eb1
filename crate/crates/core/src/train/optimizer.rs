//! AMSGrad with coupled L2 weight decay.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::layers::ParamMut;
use crate::nn::Real;

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmsGradConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AmsGradConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Moment estimates for every trainable tensor, in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AmsGrad<T> {
    pub cfg: AmsGradConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub vhat: Vec<Vec<T>>,
    pub t: u64,
}

const MAGIC: &[u8; 8] = b"ARCOPTM1";

impl<T: Real> AmsGrad<T> {
    pub fn new(cfg: AmsGradConfig) -> Self {
        Self {
            cfg,
            m: Vec::new(),
            v: Vec::new(),
            vhat: Vec::new(),
            t: 0,
        }
    }

    fn ensure_state(&mut self, params: &[ParamMut<'_, T>]) -> Result<(), TrainError> {
        if self.m.is_empty() {
            let zeros = || {
                params
                    .iter()
                    .map(|p| vec![T::zero(); p.value.len()])
                    .collect::<Vec<_>>()
            };
            self.m = zeros();
            self.v = zeros();
            self.vhat = zeros();
        }
        let ok = self.m.len() == params.len()
            && params
                .iter()
                .zip(&self.m)
                .all(|(p, m)| p.value.len() == m.len() && p.grad.len() == m.len());
        if !ok {
            return Err(TrainError::Config(
                "optimizer state does not match the parameters".into(),
            ));
        }
        Ok(())
    }

    /// One update of every parameter. A non-finite gradient aborts the step
    /// before anything is modified.
    pub fn step(&mut self, mut params: Vec<ParamMut<'_, T>>, lr: f64) -> Result<(), TrainError> {
        if !(lr > 0.0) {
            return Err(TrainError::Config(format!("learning rate {lr} must be positive")));
        }
        self.ensure_state(&params)?;
        if let Some(p) = params.iter().find(|p| p.grad.iter().any(|g| !g.is_finite())) {
            return Err(TrainError::Numerical(format!("non-finite gradient in {}", p.name)));
        }
        let c = self.cfg;
        let (b1, b2, eps, lam, lr) = (
            T::of(c.beta1),
            T::of(c.beta2),
            T::of(c.eps),
            T::of(c.weight_decay),
            T::of(lr),
        );
        let (ob1, ob2) = (T::one() - b1, T::one() - b2);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v, vh) = (&mut self.m[i], &mut self.v[i], &mut self.vhat[i]);
            for j in 0..p.value.len() {
                let mut g = p.grad[j];
                if p.decay {
                    g += lam * p.value[j];
                }
                m[j] = b1 * m[j] + ob1 * g;
                v[j] = b2 * v[j] + ob2 * g * g;
                if v[j] > vh[j] {
                    vh[j] = v[j];
                }
                p.value[j] -= lr * m[j] / (vh[j].sqrt() + eps);
            }
        }
        self.t += 1;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&self.t.to_le_bytes())?;
        w.write_all(&(self.m.len() as u64).to_le_bytes())?;
        for i in 0..self.m.len() {
            w.write_all(&(self.m[i].len() as u64).to_le_bytes())?;
            for buf in [&self.m[i], &self.v[i], &self.vhat[i]] {
                let bytes: Vec<u8> = buf.iter().flat_map(|x| x.as_f64().to_le_bytes()).collect();
                w.write_all(&bytes)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, cfg: AmsGradConfig) -> Result<Self, TrainError> {
        let bad = || TrainError::Config("malformed optimizer state".into());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad());
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> std::io::Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let t = next(&mut r)?;
        let n = next(&mut r)? as usize;
        let mut s = Self::new(cfg);
        s.t = t;
        for _ in 0..n {
            let len = next(&mut r)? as usize;
            let read_vec = |r: &mut R| -> std::io::Result<Vec<T>> {
                let mut buf = vec![0u8; len * 8];
                r.read_exact(&mut buf)?;
                Ok(buf
                    .chunks_exact(8)
                    .map(|b| T::of(f64::from_le_bytes(b.try_into().expect("8-byte chunk"))))
                    .collect())
            };
            s.m.push(read_vec(&mut r)?);
            s.v.push(read_vec(&mut r)?);
            s.vhat.push(read_vec(&mut r)?);
        }
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, buf)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path, cfg: AmsGradConfig) -> Result<Self, TrainError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?), cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_step(opt: &mut AmsGrad<f64>, value: &mut f64, grad: f64, decay: bool, lr: f64) {
        let mut v = [*value];
        let g = [grad];
        opt.step(
            vec![ParamMut {
                name: "p",
                value: &mut v,
                grad: &g,
                decay,
            }],
            lr,
        )
        .unwrap();
        *value = v[0];
    }

    #[test]
    fn hand_case() {
        let mut opt = AmsGrad::new(AmsGradConfig {
            weight_decay: 0.0,
            ..Default::default()
        });
        let mut p = 1.0;
        scalar_step(&mut opt, &mut p, 1.0, true, 0.001);
        assert!((opt.m[0][0] - 0.1).abs() < 1e-15);
        assert!((opt.v[0][0] - 0.001).abs() < 1e-15);
        let expect = -0.001 * 0.1 / (0.001f64.sqrt() + 1e-8);
        assert!((p - 1.0 - expect).abs() < 1e-12);
        assert!((p - 1.0 + 0.0031623).abs() < 1e-7);
        assert_eq!(opt.t, 1);
    }

    #[test]
    fn zero_gradients_without_decay_leave_params() {
        let mut opt = AmsGrad::new(AmsGradConfig {
            weight_decay: 0.0,
            ..Default::default()
        });
        let mut p = 0.7;
        for _ in 0..5 {
            scalar_step(&mut opt, &mut p, 0.0, true, 0.001);
        }
        assert_eq!(p, 0.7);
    }

    #[test]
    fn decay_pulls_toward_zero_only_when_flagged() {
        let mut opt = AmsGrad::new(AmsGradConfig::default());
        let mut p = 1.0;
        scalar_step(&mut opt, &mut p, 0.0, true, 0.001);
        assert!(p < 1.0);
        let mut opt = AmsGrad::new(AmsGradConfig::default());
        let mut q = 1.0;
        scalar_step(&mut opt, &mut q, 0.0, false, 0.001);
        assert_eq!(q, 1.0);
    }

    #[test]
    fn nan_gradient_aborts_without_change() {
        let mut opt = AmsGrad::<f64>::new(AmsGradConfig::default());
        let mut v = [1.0, 2.0];
        let g = [0.5, f64::NAN];
        let r = opt.step(
            vec![ParamMut {
                name: "w",
                value: &mut v,
                grad: &g,
                decay: true,
            }],
            0.001,
        );
        assert!(matches!(r, Err(TrainError::Numerical(_))));
        assert_eq!(v, [1.0, 2.0]);
        assert_eq!(opt.t, 0);
    }

    #[test]
    fn state_round_trip() {
        let mut opt = AmsGrad::new(AmsGradConfig::default());
        let mut p = 0.3;
        scalar_step(&mut opt, &mut p, 0.2, true, 0.01);
        let mut buf = Vec::new();
        opt.write_to(&mut buf).unwrap();
        let back = AmsGrad::<f64>::read_from(&buf[..], AmsGradConfig::default()).unwrap();
        assert_eq!(back, opt);
    }
}
