use std::fmt;

use serde::{Deserialize, Serialize};

use super::{KdError, LossValue};
use crate::matrix::{MatrixRole, RealMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Language,
    Nst,
    Pkt,
    Crd,
}

impl TermKind {
    pub const ALL: [TermKind; 4] = [TermKind::Language, TermKind::Nst, TermKind::Pkt, TermKind::Crd];

    /// The student tensor this term's gradient applies to.
    pub fn target(self) -> MatrixRole {
        match self {
            TermKind::Language | TermKind::Pkt => MatrixRole::Logits,
            TermKind::Nst => MatrixRole::Hidden,
            TermKind::Crd => MatrixRole::Representation,
        }
    }
}

impl fmt::Display for TermKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TermKind::Language => "language",
            TermKind::Nst => "nst",
            TermKind::Pkt => "pkt",
            TermKind::Crd => "crd",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_lang: f64,
    pub lambda_nst: f64,
    pub lambda_pkt: f64,
    pub lambda_crd: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_lang: 1.0,
            lambda_nst: 1.0,
            lambda_pkt: 1.0,
            lambda_crd: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(lang: f64, nst: f64, pkt: f64, crd: f64) -> Result<Self, KdError> {
        let w = LossWeights {
            lambda_lang: lang,
            lambda_nst: nst,
            lambda_pkt: pkt,
            lambda_crd: crd,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn get(&self, kind: TermKind) -> f64 {
        match kind {
            TermKind::Language => self.lambda_lang,
            TermKind::Nst => self.lambda_nst,
            TermKind::Pkt => self.lambda_pkt,
            TermKind::Crd => self.lambda_crd,
        }
    }

    pub fn validate(&self) -> Result<(), KdError> {
        for kind in TermKind::ALL {
            let w = self.get(kind);
            if !(w >= 0.0 && w.is_finite()) {
                return Err(KdError::InvalidWeights(format!("{kind} weight is {w}")));
            }
        }
        if TermKind::ALL.iter().all(|&k| self.get(k) == 0.0) {
            return Err(KdError::InvalidWeights("all weights are zero".into()));
        }
        Ok(())
    }

    pub fn enabled(&self) -> impl Iterator<Item = TermKind> + '_ {
        TermKind::ALL.into_iter().filter(|&k| self.get(k) > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub kind: TermKind,
    pub loss: LossValue,
}

impl LossTerm {
    pub fn new(kind: TermKind, loss: LossValue) -> Self {
        LossTerm { kind, loss }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLoss {
    pub value: f64,
    /// Unweighted value of every enabled term.
    pub components: Vec<(TermKind, f64)>,
    pub logits_grad: Option<RealMatrix>,
    pub hidden_grad: Option<RealMatrix>,
    pub representation_grad: Option<RealMatrix>,
}

impl CombinedLoss {
    pub fn grad(&self, role: MatrixRole) -> Option<&RealMatrix> {
        match role {
            MatrixRole::Logits => self.logits_grad.as_ref(),
            MatrixRole::Hidden => self.hidden_grad.as_ref(),
            MatrixRole::Representation => self.representation_grad.as_ref(),
        }
    }

    pub fn component(&self, kind: TermKind) -> Option<f64> {
        self.components.iter().find(|(k, _)| *k == kind).map(|&(_, v)| v)
    }
}

/// `Σ λ_k L_k` over the enabled terms. Terms whose weight is zero are
/// ignored even when supplied; gradients are summed per target tensor.
pub fn combined_loss(terms: &[LossTerm], weights: &LossWeights) -> Result<CombinedLoss, KdError> {
    weights.validate()?;
    for (i, t) in terms.iter().enumerate() {
        if terms[..i].iter().any(|u| u.kind == t.kind) {
            return Err(KdError::DuplicateTerm(t.kind.to_string()));
        }
    }
    let mut out = CombinedLoss {
        value: 0.0,
        components: Vec::new(),
        logits_grad: None,
        hidden_grad: None,
        representation_grad: None,
    };
    for kind in weights.enabled() {
        let term = terms
            .iter()
            .find(|t| t.kind == kind)
            .ok_or_else(|| KdError::MissingTerm(kind.to_string()))?;
        let w = weights.get(kind);
        out.value += w * term.loss.value;
        out.components.push((kind, term.loss.value));
        let slot = match kind.target() {
            MatrixRole::Logits => &mut out.logits_grad,
            MatrixRole::Hidden => &mut out.hidden_grad,
            MatrixRole::Representation => &mut out.representation_grad,
        };
        let g = &term.loss.grad;
        match slot {
            Some(acc) => {
                if acc.shape() != g.shape() {
                    return Err(KdError::DimensionMismatch(acc.cols(), g.cols()));
                }
                acc.axpy(w, g);
            }
            None => *slot = Some(g.scale(w).with_role(kind.target())),
        }
    }
    if !out.value.is_finite() {
        return Err(KdError::NonFinite);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(kind: TermKind, value: f64, rows: usize, cols: usize) -> LossTerm {
        let grad = RealMatrix::from_fn(rows, cols, |i, j| value * (i + 2 * j + 1) as f64);
        LossTerm::new(kind, LossValue { value, grad })
    }

    #[test]
    fn language_only_is_unchanged() {
        let lang = term(TermKind::Language, 2.5, 3, 4);
        let w = LossWeights::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let c = combined_loss(&[lang.clone(), term(TermKind::Pkt, 9.0, 3, 4)], &w).unwrap();
        assert_eq!(c.value, 2.5);
        assert_eq!(c.logits_grad.as_ref().unwrap().as_slice(), lang.loss.grad.as_slice());
        assert!(c.hidden_grad.is_none());
    }

    #[test]
    fn zero_weights_rejected() {
        assert!(matches!(
            LossWeights::new(0.0, 0.0, 0.0, 0.0),
            Err(KdError::InvalidWeights(_))
        ));
        assert!(LossWeights::new(-1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn hand_summed() {
        let terms = [
            term(TermKind::Language, 1.25, 3, 4),
            term(TermKind::Nst, 0.5, 3, 2),
            term(TermKind::Pkt, 0.125, 3, 4),
        ];
        let w = LossWeights::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let c = combined_loss(&terms, &w).unwrap();
        assert_eq!(c.value, 1.25 + 0.5 + 0.125);
        let lg = c.logits_grad.unwrap();
        assert_eq!(lg.get(2, 3), 1.25 * 9.0 + 0.125 * 9.0);
        assert_eq!(c.hidden_grad.unwrap().get(1, 1), 0.5 * 4.0);
        assert!(c.representation_grad.is_none());
    }

    #[test]
    fn missing_and_duplicate() {
        let w = LossWeights::default();
        let err = combined_loss(&[term(TermKind::Language, 1.0, 2, 2)], &w);
        assert_eq!(err, Err(KdError::MissingTerm("nst".into())));
        let lang = term(TermKind::Language, 1.0, 2, 2);
        let err = combined_loss(&[lang.clone(), lang], &w);
        assert!(matches!(err, Err(KdError::DuplicateTerm(_))));
    }
}
