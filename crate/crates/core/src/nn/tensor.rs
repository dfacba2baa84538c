//! Dense n-dimensional `f32` array with an optional gradient buffer.

/// Dense row-major tensor. The only numeric currency of the differentiable
/// core: values are `f32`, reductions that feed statistics accumulate in
/// `f64` at the call sites that need it.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f32>,
    grad: Option<Vec<f32>>,
}

impl Tensor {
    /// Tensor of zeros with the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            values: vec![0.0; n],
            grad: None,
        }
    }

    /// Build from explicit values. Panics if the value count does not match
    /// the shape product; that is a programming error, not a data error.
    pub fn from_vec(shape: &[usize], values: Vec<f32>) -> Self {
        assert_eq!(
            values.len(),
            shape.iter().product::<usize>(),
            "tensor values do not match shape {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            values,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    /// Gradient buffer, if one has been attached.
    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    /// Attach (or reset) a zero gradient buffer of matching shape.
    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|v| *v = 0.0),
            None => self.grad = Some(vec![0.0; self.values.len()]),
        }
    }

    /// Mutable gradient buffer, allocating lazily.
    pub fn grad_mut(&mut self) -> &mut [f32] {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.values.len()]);
        }
        self.grad.as_mut().unwrap()
    }

    /// Split borrow: read-only values next to the mutable gradient buffer.
    pub fn values_and_grad_mut(&mut self) -> (&[f32], &mut [f32]) {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.values.len()]);
        }
        (&self.values, self.grad.as_mut().unwrap())
    }

    /// Reshape without copying. The element count must be preserved.
    pub fn reshaped(mut self, shape: &[usize]) -> Self {
        assert_eq!(
            self.values.len(),
            shape.iter().product::<usize>(),
            "reshape {:?} -> {shape:?} changes element count",
            self.shape
        );
        self.shape = shape.to_vec();
        self
    }
}
