//! Dense feed-forward networks over a flat parameter vector.
//!
//! Hidden layers use `tanh`; the output layer is affine. Parameters for each
//! layer are stored as a row-major `(fan_out, fan_in)` weight block followed by
//! `fan_out` biases, layers back to back.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_width, Error, Result};

/// Hidden-layer activation.
#[inline]
pub fn activation(x: f64) -> f64 {
    x.tanh()
}

/// Derivative of [`activation`].
#[inline]
pub fn activation_derivative(x: f64) -> f64 {
    let t = x.tanh();
    1.0 - t * t
}

/// Layer widths: input width, hidden widths, output width.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Layout {
    widths: Vec<usize>,
}

impl Layout {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config(format!(
                "layout needs at least an input and an output width, got {widths:?}"
            )));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!(
                "layout widths must be positive, got {widths:?}"
            )));
        }
        Ok(Self { widths })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.widths
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    /// `(fan_in, fan_out, offset)` for every layer.
    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.widths.windows(2).scan(0usize, |offset, w| {
            let start = *offset;
            *offset += (w[0] + 1) * w[1];
            Some((w[0], w[1], start))
        })
    }
}

/// Flat network parameters tied to a [`Layout`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    layout: Layout,
    values: Vec<f64>,
}

/// Gradient with the same layout as the [`ParamVector`] it differentiates.
#[derive(Clone, Debug, PartialEq)]
pub struct NetGradient {
    layout: Layout,
    values: Vec<f64>,
}

/// Activations recorded by a forward pass, consumed by the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    acts: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

impl ParamVector {
    /// Uniform weights in `±1/sqrt(fan_in)`, zero biases.
    pub fn init(layout: Layout, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; layout.num_params()];
        for (fan_in, fan_out, offset) in layout.layers() {
            let scale = 1.0 / (fan_in as f64).sqrt();
            for w in &mut values[offset..offset + fan_in * fan_out] {
                *w = rng.gen_range(-scale..scale);
            }
        }
        Self { layout, values }
    }

    pub fn zeros(layout: Layout) -> Self {
        let values = vec![0.0; layout.num_params()];
        Self { layout, values }
    }

    pub fn from_values(layout: Layout, values: Vec<f64>) -> Result<Self> {
        check_width("parameter count", layout.num_params(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter value".into()));
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Weight block of layer `layer` as a row-major `(fan_out, fan_in)` slice.
    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let (fan_in, fan_out, offset) = self.layout.layers().nth(layer).expect("layer index");
        &mut self.values[offset..offset + fan_in * fan_out]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        let (fan_in, fan_out, offset) = self.layout.layers().nth(layer).expect("layer index");
        let start = offset + fan_in * fan_out;
        &mut self.values[start..start + fan_out]
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input)?.acts.pop().unwrap())
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace> {
        check_width("network input", self.layout.input_width(), input.len())?;
        let n_layers = self.layout.num_layers();
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(input.to_vec());
        for (l, (fan_in, fan_out, offset)) in self.layout.layers().enumerate() {
            let x = &acts[l];
            let w = &self.values[offset..offset + fan_in * fan_out];
            let b = &self.values[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            let hidden = l + 1 < n_layers;
            let out: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    let z = row.iter().zip(x).fold(b[o], |acc, (wi, xi)| acc + wi * xi);
                    if hidden {
                        activation(z)
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        Ok(ForwardTrace { acts })
    }

    /// Gradient of `<cotangent, forward(input)>` with respect to the parameters.
    pub fn backward(&self, input: &[f64], cotangent: &[f64]) -> Result<NetGradient> {
        let trace = self.forward_trace(input)?;
        let mut grad = NetGradient::zeros(self.layout.clone());
        self.accumulate_backward(&trace, cotangent, &mut grad)?;
        Ok(grad)
    }

    /// Adds the gradient of `<cotangent, output>` for a recorded pass into `grad`.
    pub fn accumulate_backward(
        &self,
        trace: &ForwardTrace,
        cotangent: &[f64],
        grad: &mut NetGradient,
    ) -> Result<()> {
        check_width("output cotangent", self.layout.output_width(), cotangent.len())?;
        if grad.layout != self.layout {
            return Err(Error::Shape {
                what: "gradient layout",
                expected: self.layout.num_params(),
                got: grad.layout.num_params(),
            });
        }
        let layers: Vec<_> = self.layout.layers().collect();
        let mut g_out = cotangent.to_vec();
        for l in (0..layers.len()).rev() {
            let (fan_in, fan_out, offset) = layers[l];
            let x = &trace.acts[l];
            let w = &self.values[offset..offset + fan_in * fan_out];
            let gw = &mut grad.values[offset..offset + (fan_in + 1) * fan_out];
            let mut g_in = vec![0.0; fan_in];
            for o in 0..fan_out {
                let go = g_out[o];
                if go == 0.0 {
                    continue;
                }
                let row = &mut gw[o * fan_in..(o + 1) * fan_in];
                for (gwi, xi) in row.iter_mut().zip(x) {
                    *gwi += go * xi;
                }
                gw[fan_in * fan_out + o] += go;
                if l > 0 {
                    let wrow = &w[o * fan_in..(o + 1) * fan_in];
                    for (gi, wi) in g_in.iter_mut().zip(wrow) {
                        *gi += go * wi;
                    }
                }
            }
            if l > 0 {
                // x holds tanh outputs of the previous layer.
                for (gi, xi) in g_in.iter_mut().zip(x) {
                    *gi *= 1.0 - xi * xi;
                }
                g_out = g_in;
            }
        }
        Ok(())
    }

    /// `self <- self - alpha * grad`. Rejects updates that would leave a non-finite value.
    pub fn sgd_step(&mut self, grad: &NetGradient, alpha: f64) -> Result<()> {
        if grad.layout != self.layout {
            return Err(Error::Shape {
                what: "gradient layout",
                expected: self.layout.num_params(),
                got: grad.layout.num_params(),
            });
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("step size must be >= 0, got {alpha}")));
        }
        if alpha == 0.0 {
            return Ok(());
        }
        let updated: Vec<f64> = self
            .values
            .iter()
            .zip(&grad.values)
            .map(|(p, g)| p - alpha * g)
            .collect();
        if updated.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("parameter update produced a non-finite value".into()));
        }
        self.values = updated;
        Ok(())
    }

    /// Returns `params - alpha * grad` without mutating `self`.
    pub fn stepped(&self, grad: &NetGradient, alpha: f64) -> Result<Self> {
        let mut next = self.clone();
        next.sgd_step(grad, alpha)?;
        Ok(next)
    }

    /// Little-endian encoding: layer count (u32), widths (u32 each), then the values as f64.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let widths = self.layout.widths();
        w.write_all(&(widths.len() as u32).to_le_bytes())?;
        for &width in widths {
            w.write_all(&(width as u32).to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let count = read_u32(r)? as usize;
        if count > 1024 {
            return Err(Error::Input(format!("implausible layer count {count}")));
        }
        let widths = (0..count)
            .map(|_| read_u32(r).map(|w| w as usize))
            .collect::<Result<Vec<_>>>()?;
        let layout = Layout::new(widths).map_err(|e| Error::Input(e.to_string()))?;
        let values = (0..layout.num_params())
            .map(|_| read_f64(r))
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(layout, values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(4 * (1 + self.layout.widths.len()) + 8 * self.len());
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}

impl NetGradient {
    pub fn zeros(layout: Layout) -> Self {
        let values = vec![0.0; layout.num_params()];
        Self { layout, values }
    }

    pub fn from_values(layout: Layout, values: Vec<f64>) -> Result<Self> {
        check_width("gradient length", layout.num_params(), values.len())?;
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn add_assign(&mut self, other: &NetGradient) -> Result<()> {
        check_width("gradient length", self.values.len(), other.values.len())?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }
}

/// Central-difference gradient of `loss` at `params`.
pub fn finite_diff_grad<F>(loss: F, params: &ParamVector, eps: f64) -> Result<NetGradient>
where
    F: Fn(&ParamVector) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("finite-difference eps must be > 0, got {eps}")));
    }
    let mut probe = params.clone();
    let mut values = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe.values[i];
        probe.values[i] = orig + eps;
        let up = loss(&probe);
        probe.values[i] = orig - eps;
        let down = loss(&probe);
        probe.values[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss while perturbing coordinate {i}"
            )));
        }
        values.push((up - down) / (2.0 * eps));
    }
    NetGradient::from_values(params.layout.clone(), values)
}

/// `‖a - b‖₂ / max(‖a‖₂, ‖b‖₂, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    w.write_all(&(values.len() as u32).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let n = read_u32(r)? as usize;
    (0..n).map(|_| read_f64(r)).collect()
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;

    fn layout(w: &[usize]) -> Layout {
        Layout::new(w.to_vec()).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_sized() {
        let a = ParamVector::init(layout(&[4, 8, 6]), 7);
        let b = ParamVector::init(layout(&[4, 8, 6]), 7);
        assert_eq!(a.len(), 94);
        let bits = |p: &ParamVector| p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn init_biases_are_zero() {
        let p = ParamVector::init(layout(&[2, 3]), 0);
        assert_eq!(&p.values()[6..9], &[0.0, 0.0, 0.0]);
        assert!(p.values()[..6].iter().any(|&w| w != 0.0));
        let scale = 1.0 / 2f64.sqrt();
        assert!(p.values()[..6].iter().all(|w| w.abs() <= scale));
    }

    #[test]
    fn bad_layouts_rejected() {
        assert!(matches!(Layout::new(vec![]), Err(Error::Config(_))));
        assert!(matches!(Layout::new(vec![3]), Err(Error::Config(_))));
        assert!(matches!(Layout::new(vec![3, 0, 2]), Err(Error::Config(_))));
    }

    #[test]
    fn zero_net_outputs_zero() {
        let p = ParamVector::zeros(layout(&[3, 5, 2]));
        assert_eq!(p.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_affine_layer() {
        let mut p = ParamVector::zeros(layout(&[3, 3]));
        let w = p.weights_mut(0);
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let x = [0.3, -1.5, 2.0];
        assert_eq!(p.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let p = ParamVector::zeros(layout(&[3, 2]));
        assert!(matches!(p.forward(&[1.0]), Err(Error::Shape { .. })));
        assert!(matches!(
            p.backward(&[1.0, 2.0, 3.0], &[1.0]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let p = ParamVector::init(layout(&[3, 4, 2]), 3);
        let g = p.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_is_linear_in_cotangent() {
        let p = ParamVector::init(layout(&[3, 4, 2]), 5);
        let x = [0.4, -0.7, 1.1];
        let g1 = p.backward(&x, &[1.0, 0.5]).unwrap();
        let g2 = p.backward(&x, &[-0.3, 2.0]).unwrap();
        let g12 = p.backward(&x, &[0.7, 2.5]).unwrap();
        for ((a, b), c) in g1.values().iter().zip(g2.values()).zip(g12.values()) {
            assert!((a + b - c).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_diff_of_half_square_norm_is_identity() {
        let p = ParamVector::init(layout(&[3, 4, 2]), 1);
        let g = finite_diff_grad(
            |q| 0.5 * q.values().iter().map(|v| v * v).sum::<f64>(),
            &p,
            1e-4,
        )
        .unwrap();
        for (a, b) in g.values().iter().zip(p.values()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn finite_diff_of_constant_is_zero() {
        let p = ParamVector::init(layout(&[2, 2]), 1);
        let g = finite_diff_grad(|_| 3.5, &p, 1e-3).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn finite_diff_rejects_nan_and_bad_eps() {
        let p = ParamVector::init(layout(&[2, 2]), 1);
        assert!(matches!(
            finite_diff_grad(|_| f64::NAN, &p, 1e-3),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(finite_diff_grad(|_| 0.0, &p, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn sgd_step_cases() {
        let l = layout(&[2, 2]);
        let p = ParamVector::init(l.clone(), 9);
        let zero = NetGradient::zeros(l.clone());
        assert_eq!(p.stepped(&zero, 0.1).unwrap(), p);

        let g = NetGradient::from_values(l.clone(), (0..6).map(|i| i as f64 - 2.5).collect()).unwrap();
        let z = ParamVector::zeros(l.clone());
        let out = z.stepped(&g, 1.0).unwrap();
        for (o, gv) in out.values().iter().zip(g.values()) {
            assert_eq!(*o, -gv);
        }

        let half_twice = p.stepped(&g, 0.25).unwrap().stepped(&g, 0.25).unwrap();
        let once = p.stepped(&g, 0.5).unwrap();
        for (a, b) in half_twice.values().iter().zip(once.values()) {
            assert!((a - b).abs() < 1e-15);
        }

        let other = NetGradient::zeros(layout(&[3, 2]));
        assert!(matches!(p.stepped(&other, 0.1), Err(Error::Shape { .. })));
    }

    #[test]
    fn sgd_step_refuses_non_finite_result() {
        let l = layout(&[1, 1]);
        let mut p = ParamVector::zeros(l.clone());
        let g = NetGradient::from_values(l, vec![f64::INFINITY, 0.0]).unwrap();
        assert!(matches!(p.sgd_step(&g, 1.0), Err(Error::Numeric(_))));
        assert!(p.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn activation_has_continuous_second_derivative() {
        // Second derivative via differences of the analytic first derivative,
        // compared against the closed form -2 tanh(x) (1 - tanh(x)^2).
        let h = 1e-5;
        let mut prev: Option<f64> = None;
        for k in -400..=400 {
            let x = k as f64 * 0.01;
            let d2 = (activation_derivative(x + h) - activation_derivative(x - h)) / (2.0 * h);
            let exact = -2.0 * x.tanh() * (1.0 - x.tanh().powi(2));
            assert!((d2 - exact).abs() < 1e-6, "x={x}");
            if let Some(p) = prev {
                // |f'''| <= 2 for tanh, so neighbours 0.01 apart differ by at most 0.02.
                assert!((d2 - p).abs() < 0.021, "jump in second derivative near x={x}");
            }
            prev = Some(d2);
        }
    }

    #[test]
    fn serialization_header_layout() {
        let p = ParamVector::init(layout(&[2, 3]), 4);
        let bytes = p.to_bytes();
        assert_eq!(&bytes[0..4], &2u32.to_le_bytes());
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(bytes.len(), 12 + 8 * 9);
        let back = ParamVector::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, p);
    }
}
