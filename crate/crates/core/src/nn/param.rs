use crate::scalar::Scalar;

/// Mutable view of one trainable tensor and its gradient buffer.
pub struct Param<'a, T> {
    pub name: String,
    pub value: &'a mut [T],
    pub grad: &'a mut [T],
}

/// Anything that owns trainable parameters.
///
/// Parameters are always visited in the same order; optimizers rely on that
/// order to pair moment buffers with parameters.
pub trait Trainable<T: Scalar> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(Param<'_, T>));

    fn zero_grad(&mut self) {
        self.visit_params("", &mut |p| p.grad.fill(T::zero()));
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |p| n += p.value.len());
        n
    }

    /// Flattened copy of all parameter values, in visiting order.
    fn params_flat(&mut self) -> Vec<T> {
        let mut out = Vec::new();
        self.visit_params("", &mut |p| out.extend_from_slice(p.value));
        out
    }

    /// Flattened copy of all gradients, in visiting order.
    fn grads_flat(&mut self) -> Vec<T> {
        let mut out = Vec::new();
        self.visit_params("", &mut |p| out.extend_from_slice(p.grad));
        out
    }

    /// Overwrite parameters from a flat buffer produced by [`params_flat`](Self::params_flat).
    fn set_params_flat(&mut self, flat: &[T]) {
        let mut off = 0;
        self.visit_params("", &mut |p| {
            let n = p.value.len();
            p.value.copy_from_slice(&flat[off..off + n]);
            off += n;
        });
        assert_eq!(off, flat.len(), "flat parameter buffer length");
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
