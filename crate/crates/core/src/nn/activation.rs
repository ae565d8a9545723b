use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: &[f64]) -> Vec<f64> {
        match self {
            Activation::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
            Activation::Tanh => x.iter().map(|v| v.tanh()).collect(),
        }
    }

    /// Chain rule through the activation given its output `y`.
    pub fn backward(self, y: &[f64], dy: &[f64]) -> Vec<f64> {
        match self {
            Activation::Relu => y
                .iter()
                .zip(dy)
                .map(|(&o, &g)| if o > 0.0 { g } else { 0.0 })
                .collect(),
            Activation::Tanh => y.iter().zip(dy).map(|(&o, &g)| g * (1.0 - o * o)).collect(),
        }
    }
}
