use super::Network;
use crate::encoders::EncodedBatch;
use crate::error::Result;
use crate::readout::cross_entropy;
use crate::tensor::{Tape, Tensor};

/// Worst agreement between tape and central-difference gradients for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub analytic: f64,
    pub numeric: f64,
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

impl Network {
    pub fn loss(&self, batch: &EncodedBatch, labels: &[usize]) -> Result<f64> {
        let mut tape = Tape::inference();
        let vars = self.bind(&mut tape);
        let out = self.forward(&mut tape, &vars, batch)?;
        let loss = cross_entropy(&mut tape, out.logits, labels)?;
        Ok(tape.value(loss).item())
    }

    /// Loss gradient for every parameter, in table order.
    pub fn gradients(&self, batch: &EncodedBatch, labels: &[usize]) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let out = self.forward(&mut tape, &vars, batch)?;
        let loss = cross_entropy(&mut tape, out.logits, labels)?;
        let mut grads = tape.backward(loss)?;
        Ok(vars
            .iter()
            .zip(&self.params)
            .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.value.shape())))
            .collect())
    }

    /// Compares every parameter element against central differences with step `h`.
    ///
    /// Meaningful only when the spike forward pass is smooth (see
    /// [`crate::tensor::Surrogate::Smooth`]).
    pub fn check_gradients(&mut self, batch: &EncodedBatch, labels: &[usize], h: f64, floor: f64) -> Result<Vec<GradCheck>> {
        let analytic = self.gradients(batch, labels)?;
        let mut report = Vec::with_capacity(analytic.len());
        for (i, grad) in analytic.iter().enumerate() {
            let mut worst = GradCheck {
                name: self.params[i].name.clone(),
                max_rel_err: 0.0,
                analytic: 0.0,
                numeric: 0.0,
            };
            for j in 0..grad.numel() {
                let original = self.params[i].value.data()[j];
                self.params[i].value.data_mut()[j] = original + h;
                let plus = self.loss(batch, labels)?;
                self.params[i].value.data_mut()[j] = original - h;
                let minus = self.loss(batch, labels)?;
                self.params[i].value.data_mut()[j] = original;
                let numeric = (plus - minus) / (2.0 * h);
                let a = grad.data()[j];
                let err = relative_error(a, numeric, floor);
                if err >= worst.max_rel_err {
                    worst.max_rel_err = err;
                    worst.analytic = a;
                    worst.numeric = numeric;
                }
            }
            report.push(worst);
        }
        Ok(report)
    }
}
