//! Input signals `u(t)` for simulations.

use crate::expr::{parse_expression, EvalError, Expr, ParseError, VarScope};

#[derive(Clone, Debug)]
pub enum InputSignal {
    Constant(Vec<f64>),
    /// `values[k]` holds on `[breaks[k-1], breaks[k])`, with `values[0]`
    /// before `breaks[0]` and the last value after the last break.
    PiecewiseConstant { breaks: Vec<f64>, values: Vec<Vec<f64>> },
    /// One expression in `t` per input.
    Expression(Vec<Expr>),
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SignalError {
    #[error("input signal has {got} channels but the system has {want} inputs")]
    Channels { got: usize, want: usize },
    #[error("piecewise-constant signal needs one more value than breaks, and increasing breaks")]
    Breaks,
    #[error("input expression: {0}")]
    Parse(ParseError),
    #[error("input expression: {0}")]
    Eval(EvalError),
}

impl InputSignal {
    pub fn constant(value: f64) -> Self {
        Self::Constant(vec![value])
    }

    /// Parses one expression in `t` per input channel.
    pub fn expressions(texts: &[String]) -> Result<Self, SignalError> {
        let scope = VarScope::new(&["t"], &[]);
        texts
            .iter()
            .map(|s| parse_expression(s, &scope).map_err(SignalError::Parse))
            .collect::<Result<Vec<_>, _>>()
            .map(Self::Expression)
    }

    pub fn channels(&self) -> usize {
        match self {
            Self::Constant(v) => v.len(),
            Self::PiecewiseConstant { values, .. } => values.first().map_or(0, Vec::len),
            Self::Expression(es) => es.len(),
        }
    }

    /// Checks the signal against a system with `m` inputs.
    pub fn validate(&self, m: usize) -> Result<(), SignalError> {
        if let Self::PiecewiseConstant { breaks, values } = self {
            if values.len() != breaks.len() + 1
                || breaks.windows(2).any(|w| w[0] >= w[1])
                || values.iter().any(|v| v.len() != values[0].len())
            {
                return Err(SignalError::Breaks);
            }
        }
        if self.channels() != m {
            return Err(SignalError::Channels { got: self.channels(), want: m });
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> Result<Vec<f64>, SignalError> {
        match self {
            Self::Constant(v) => Ok(v.clone()),
            Self::PiecewiseConstant { breaks, values } => {
                let k = breaks.partition_point(|b| *b <= t);
                Ok(values[k].clone())
            }
            Self::Expression(es) => es.iter().map(|e| e.evaluate(&[t]).map_err(SignalError::Eval)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_lookup() {
        let s = InputSignal::PiecewiseConstant { breaks: vec![1.0, 2.0], values: vec![vec![0.0], vec![1.0], vec![2.0]] };
        s.validate(1).unwrap();
        assert_eq!(s.at(0.5).unwrap(), vec![0.0]);
        assert_eq!(s.at(1.0).unwrap(), vec![1.0]);
        assert_eq!(s.at(5.0).unwrap(), vec![2.0]);
    }

    #[test]
    fn expression_in_time() {
        let s = InputSignal::expressions(&["sin(t) - 1".to_string()]).unwrap();
        assert!((s.at(0.5).unwrap()[0] - (0.5f64.sin() - 1.0)).abs() < 1e-15);
        assert_eq!(s.validate(2), Err(SignalError::Channels { got: 1, want: 2 }));
    }
}
