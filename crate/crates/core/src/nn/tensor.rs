use super::{NnError, Result, Scalar};

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let want: usize = shape.iter().product();
        if want != data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "shape {shape:?} needs {want} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![T::zero(); n] }
    }

    /// Stacks equal-length single-channel series into `[batch, length, 1]`.
    pub fn from_series<S: AsRef<[f32]>>(rows: &[S]) -> Result<Self> {
        let len = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * len);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != len {
                return Err(NnError::ShapeMismatch(format!(
                    "series {i} has length {}, expected {len}",
                    r.len()
                )));
            }
            data.extend(r.iter().map(|&v| T::of_f64(f64::from(v))));
        }
        Self::new(vec![rows.len(), len, 1], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// `(batch, length, channels)` of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [b, l, c] => Ok((b, l, c)),
            _ => Err(NnError::ShapeMismatch(format!("expected rank 3, got {:?}", self.shape))),
        }
    }

    /// `(batch, features)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [b, f] => Ok((b, f)),
            _ => Err(NnError::ShapeMismatch(format!("expected rank 2, got {:?}", self.shape))),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
