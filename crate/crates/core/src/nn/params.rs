use rand::Rng;

use super::scalar::Scalar;

/// Named weight arrays, stored flat in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    values: Vec<Vec<T>>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            shapes: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Registers an array and returns its index.
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<T>) -> usize {
        assert_eq!(shape.iter().product::<usize>(), values.len(), "param shape");
        self.names.push(name.into());
        self.shapes.push(shape);
        self.values.push(values);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn get(&self, i: usize) -> &[T] {
        &self.values[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.values[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalar weights.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[usize], &[T])> {
        self.names
            .iter()
            .zip(&self.shapes)
            .zip(&self.values)
            .map(|((n, s), v)| (n.as_str(), s.as_slice(), v.as_slice()))
    }

    /// Zero-filled buffers with the same layout, for accumulating gradients.
    pub fn zeros_like(&self) -> Gradients<T> {
        Gradients(self.values.iter().map(|v| vec![T::zero(); v.len()]).collect())
    }

    pub fn fill(&mut self, value: T) {
        for v in &mut self.values {
            v.iter_mut().for_each(|x| *x = value);
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            shapes: self.shapes.clone(),
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|x| U::of(x.f64())).collect())
                .collect(),
        }
    }

    /// FNV-1a over the raw bits of every weight; cheap equality fingerprint.
    pub fn checksum(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for x in v {
                for b in x.f64().to_bits().to_le_bytes() {
                    hash ^= u64::from(b);
                    hash = hash.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        hash
    }
}

/// Gradient buffers aligned with a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T>(pub Vec<Vec<T>>);

impl<T: Scalar> Gradients<T> {
    pub fn zero(&mut self) {
        for g in &mut self.0 {
            g.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    pub fn get(&self, i: usize) -> &[T] {
        &self.0[i]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

/// Fan-in scaled uniform initialization: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
pub fn fan_in_uniform<T: Scalar, R: Rng>(rng: &mut R, count: usize, fan_in: usize) -> Vec<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..count)
        .map(|_| T::of(rng.gen_range(-bound..bound)))
        .collect()
}
