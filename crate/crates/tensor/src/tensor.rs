use crate::element::Element;
use crate::error::{KernelError, Result};

/// Dense, contiguous, row-major array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(KernelError::InvalidArgument {
                op: "tensor",
                reason: format!("zero extent in shape {shape:?}"),
            });
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(KernelError::ShapeMismatch {
                op: "tensor",
                shapes: vec![shape, vec![data.len()]],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero extent in {shape:?}");
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), values.iter().map(|&v| T::cast_from(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
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

    /// Last-axis extent (1 for a scalar).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Number of rows when viewed as a `[rows, last_dim]` matrix.
    pub fn rows(&self) -> usize {
        self.numel() / self.last_dim()
    }

    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() || shape.contains(&0) {
            return Err(KernelError::ShapeMismatch {
                op: "reshape",
                shapes: vec![self.shape, shape.to_vec()],
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sum of squares accumulated in f64.
    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64() * v.as_f64()).sum()
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::cast_from(v.as_f64())).collect(),
        }
    }

    /// Row `i` of the `[rows, last_dim]` view.
    pub fn row(&self, i: usize) -> &[T] {
        let d = self.last_dim();
        &self.data[i * d..(i + 1) * d]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_checks_element_count() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]),
            Err(KernelError::ShapeMismatch { .. })
        ));
        assert!(Tensor::<f32>::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn scalar_has_one_element() {
        let s = Tensor::scalar(3.0f64);
        assert_eq!(s.rank(), 0);
        assert_eq!(s.numel(), 1);
        assert_eq!(s.item(), 3.0);
        assert_eq!(s.rows(), 1);
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::<f64>::from_f64(&[2, 3], &[1., 2., 3., 4., 5., 6.]).unwrap();
        let r = t.clone().reshape(&[3, 2]).unwrap();
        assert_eq!(r.data(), t.data());
        assert_eq!(r.row(1), &[3.0, 4.0]);
        assert!(t.reshape(&[4, 2]).is_err());
    }
}
