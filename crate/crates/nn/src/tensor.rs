use crate::{NnError, Scalar};

/// Dense row-major array with up to four dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(dims: &[usize]) -> Self {
        Tensor {
            dims: dims.to_vec(),
            data: vec![T::zero(); dims.iter().product()],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self, NnError> {
        if dims.len() > 4 {
            return Err(NnError::Shape(format!("rank {} exceeds 4", dims.len())));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(NnError::Shape(format!("dims {dims:?} hold {n} values, got {}", data.len())));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
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

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap()).unwrap())
                .collect(),
        }
    }

    /// Rows of the leading dimension.
    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        let per = if self.dims.is_empty() { 1 } else { self.data.len() / self.dims[0].max(1) };
        self.data.chunks(per.max(1))
    }

    pub fn fill(&mut self, v: T) {
        self.data.fill(v);
    }
}
