use nalgebra::DVector;
use std::ops::{Deref, DerefMut};

macro_rules! real_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(DVector<f64>);

        impl $name {
            pub fn new(values: Vec<f64>) -> Self {
                Self(DVector::from_vec(values))
            }

            pub fn zeros(dim: usize) -> Self {
                Self(DVector::zeros(dim))
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }

            pub fn to_vec(&self) -> Vec<f64> {
                self.0.iter().copied().collect()
            }

            pub fn into_inner(self) -> DVector<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = DVector<f64>;
            fn deref(&self) -> &DVector<f64> {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut DVector<f64> {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(values: Vec<f64>) -> Self {
                Self::new(values)
            }
        }

        impl From<&[f64]> for $name {
            fn from(values: &[f64]) -> Self {
                Self::new(values.to_vec())
            }
        }

        impl From<DVector<f64>> for $name {
            fn from(values: DVector<f64>) -> Self {
                Self(values)
            }
        }
    };
}

real_vector!(
    /// A point θ in parameter space.
    ParameterVector
);

real_vector!(
    /// A summary statistic s of one simulated or observed data set.
    SummaryVector
);
