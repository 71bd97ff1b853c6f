use super::Tensor;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tensor {
    /// Element-wise map. `df(x, y)` is the local derivative at input `x`
    /// with output `y`.
    fn unary<F, D>(&self, op: &'static str, f: F, df: D) -> Result<Tensor>
    where
        F: Fn(f64) -> f64,
        D: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        let out: Vec<f64> = self.data().iter().map(|&x| f(x)).collect();
        let x = self.data_arc();
        let y = std::sync::Arc::new(out.clone());
        Tensor::from_op(
            op,
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let gx = g
                    .iter()
                    .zip(x.iter().zip(y.iter()))
                    .map(|(g, (&x, &y))| g * df(x, y))
                    .collect();
                vec![Some(gx)]
            }),
        )
    }

    pub fn activation(&self, mode: Activation) -> Result<Tensor> {
        match mode {
            Activation::Sigmoid => self.sigmoid(),
            Activation::Tanh => self.tanh(),
            Activation::Relu => self.relu(),
        }
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        self.unary("sigmoid", sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn tanh(&self) -> Result<Tensor> {
        self.unary("tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn relu(&self) -> Result<Tensor> {
        self.unary("relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// `log(sigmoid(x))`, stable for large |x|.
    pub fn log_sigmoid(&self) -> Result<Tensor> {
        self.unary(
            "log_sigmoid",
            |x| x.min(0.0) - (-x.abs()).exp().ln_1p(),
            |x, _| sigmoid(-x),
        )
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.unary("neg", |x| -x, |_, _| -1.0)
    }

    pub fn exp(&self) -> Result<Tensor> {
        self.unary("exp", f64::exp, |_, y| y)
    }

    pub fn ln(&self) -> Result<Tensor> {
        self.unary("ln", f64::ln, |x, _| 1.0 / x)
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        self.unary("sqrt", f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn recip(&self) -> Result<Tensor> {
        self.unary("recip", |x| 1.0 / x, |_, y| -y * y)
    }

    pub fn powf(&self, p: f64) -> Result<Tensor> {
        if p == 0.0 {
            return self.unary("powf", |_| 1.0, |_, _| 0.0);
        }
        self.unary("powf", move |x| x.powf(p), move |x, _| p * x.powf(p - 1.0))
    }

    pub fn add_scalar(&self, c: f64) -> Result<Tensor> {
        self.unary("add_scalar", move |x| x + c, |_, _| 1.0)
    }

    pub fn mul_scalar(&self, c: f64) -> Result<Tensor> {
        self.unary("mul_scalar", move |x| x * c, move |_, _| c)
    }

    /// `max(x, c)`; the gradient flows only where `x > c`.
    pub fn clamp_min(&self, c: f64) -> Result<Tensor> {
        self.unary(
            "clamp_min",
            move |x| x.max(c),
            move |x, _| if x > c { 1.0 } else { 0.0 },
        )
    }
}
