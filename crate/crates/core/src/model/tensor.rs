use super::scalar::Real;

/// Batch of sequences laid out `[batch][time][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq<T> {
    pub n: usize,
    pub len: usize,
    pub ch: usize,
    pub data: Vec<T>,
}

impl<T: Real> Seq<T> {
    pub fn zeros(n: usize, len: usize, ch: usize) -> Self {
        Seq { n, len, ch, data: vec![T::zero(); n * len * ch] }
    }

    pub fn from_vec(n: usize, len: usize, ch: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * len * ch, "sequence buffer size");
        Seq { n, len, ch, data }
    }

    pub fn rows(&self) -> usize {
        self.n * self.len
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.ch..(r + 1) * self.ch]
    }

    /// Channel-wise concatenation `[a | b]`.
    pub fn concat(a: &Seq<T>, b: &Seq<T>) -> Seq<T> {
        assert_eq!((a.n, a.len), (b.n, b.len), "concat shape");
        let ch = a.ch + b.ch;
        let mut data = Vec::with_capacity(a.rows() * ch);
        for r in 0..a.rows() {
            data.extend_from_slice(a.row(r));
            data.extend_from_slice(b.row(r));
        }
        Seq { n: a.n, len: a.len, ch, data }
    }

    /// Inverse of [`Seq::concat`] for gradients.
    pub fn split(&self, first: usize) -> (Seq<T>, Seq<T>) {
        let second = self.ch - first;
        let mut a = Vec::with_capacity(self.rows() * first);
        let mut b = Vec::with_capacity(self.rows() * second);
        for r in 0..self.rows() {
            let row = self.row(r);
            a.extend_from_slice(&row[..first]);
            b.extend_from_slice(&row[first..]);
        }
        (Seq::from_vec(self.n, self.len, first, a), Seq::from_vec(self.n, self.len, second, b))
    }

    pub fn add_assign(&mut self, other: &Seq<T>) {
        assert_eq!(self.data.len(), other.data.len());
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += *y;
        }
    }
}

/// Learnable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub shape: Vec<usize>,
}

impl<T: Real> Param<T> {
    pub fn new(value: Vec<T>, shape: Vec<usize>) -> Self {
        assert_eq!(value.len(), shape.iter().product::<usize>(), "parameter shape");
        let grad = vec![T::zero(); value.len()];
        Param { value, grad, shape }
    }

    pub fn filled(v: T, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Param::new(vec![v; n], shape)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}
