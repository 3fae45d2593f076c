use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::GroundingError;

/// One flattened parameter tensor, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Uniform access to every learnable number of a parameter struct, in a
/// fixed order with dotted names.
pub trait Parameters {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, Vec<usize>, &[f64]));
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, _, d| n += d.len());
        n
    }

    fn to_tensors(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        self.visit_params("", &mut |name, shape, d| {
            out.push(NamedTensor {
                name,
                shape,
                data: d.to_vec(),
            })
        });
        out
    }

    /// Overwrites every tensor from `tensors`, matching names and shapes.
    fn load_tensors(&mut self, tensors: &[NamedTensor]) -> Result<(), GroundingError> {
        let mut shapes = Vec::new();
        self.visit_params("", &mut |name, shape, _| shapes.push((name, shape)));
        for (name, shape) in &shapes {
            match tensors.iter().find(|t| &t.name == name) {
                None => return Err(GroundingError::Checkpoint(format!("missing tensor {name}"))),
                Some(t) if &t.shape != shape => {
                    return Err(GroundingError::Checkpoint(format!(
                        "tensor {name}: shape {:?}, expected {:?}",
                        t.shape, shape
                    )))
                }
                Some(_) => {}
            }
        }
        self.visit_params_mut("", &mut |name, d| {
            let t = tensors.iter().find(|t| t.name == name).expect("checked above");
            d.copy_from_slice(&t.data);
        });
        Ok(())
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit_params("", &mut |_, _, d| out.extend_from_slice(d));
        out
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut pos = 0;
        self.visit_params_mut("", &mut |_, d| {
            d.copy_from_slice(&values[pos..pos + d.len()]);
            pos += d.len();
        });
        assert_eq!(pos, values.len(), "flat parameter length");
    }

    /// `self -= lr * grads`.
    fn sgd_step(&mut self, grads: &Self, lr: f64)
    where
        Self: Sized,
    {
        let g = grads.flatten();
        let mut pos = 0;
        self.visit_params_mut("", &mut |_, d| {
            for (x, gx) in d.iter_mut().zip(&g[pos..]) {
                *x -= lr * gx;
            }
            pos += d.len();
        });
    }

    /// `self += other`, elementwise.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        self.sgd_step(other, -1.0);
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit_params("", &mut |_, _, d| ok &= d.iter().all(|x| x.is_finite()));
        ok
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl Parameters for Array2<f64> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, Vec<usize>, &[f64])) {
        f(prefix.to_string(), self.shape().to_vec(), self.as_slice().expect("standard layout"));
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [f64])) {
        f(prefix.to_string(), self.as_slice_mut().expect("standard layout"));
    }
}

impl Parameters for Array1<f64> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, Vec<usize>, &[f64])) {
        f(prefix.to_string(), vec![self.len()], self.as_slice().expect("standard layout"));
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [f64])) {
        f(prefix.to_string(), self.as_slice_mut().expect("standard layout"));
    }
}

impl Parameters for f64 {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, Vec<usize>, &[f64])) {
        f(prefix.to_string(), Vec::new(), std::slice::from_ref(self));
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [f64])) {
        f(prefix.to_string(), std::slice::from_mut(self));
    }
}

macro_rules! impl_parameters {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::params::Parameters for $ty {
            fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, Vec<usize>, &[f64])) {
                $( $crate::params::Parameters::visit_params(&self.$field, &$crate::params::join(prefix, stringify!($field)), f); )*
            }
            fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [f64])) {
                $( $crate::params::Parameters::visit_params_mut(&mut self.$field, &$crate::params::join(prefix, stringify!($field)), f); )*
            }
        }
    };
}
pub(crate) use impl_parameters;

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Pair {
        m: Array2<f64>,
        s: f64,
    }
    impl_parameters!(Pair { m, s });

    #[test]
    fn visit_order_and_roundtrip() {
        let mut p = Pair {
            m: Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            s: 5.0,
        };
        assert_eq!(p.param_count(), 5);
        assert_eq!(p.flatten(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let t = p.to_tensors();
        assert_eq!(t[0].name, "m");
        assert_eq!(t[1].shape, Vec::<usize>::new());
        let g = p.clone();
        p.sgd_step(&g, 0.5);
        assert_eq!(p.flatten(), vec![0.5, 1.0, 1.5, 2.0, 2.5]);
        p.load_tensors(&t).unwrap();
        assert_eq!(p, g);
        let mut bad = t.clone();
        bad[0].shape = vec![4];
        assert!(p.load_tensors(&bad).is_err());
    }
}
