use crate::diff::{stable_softplus, Matrix, Tape, Var};
use crate::error::{Error, Result};

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `−ln(f_pos / Σ_j f_j)` for one instance of positive scores.
pub fn infonce_loss(scores: &[f64], positive: usize) -> Result<f64> {
    if positive >= scores.len() {
        return Err(Error::InvalidArgument(format!(
            "positive index {positive} out of range for {} scores",
            scores.len()
        )));
    }
    if let Some(s) = scores.iter().find(|&&s| s.is_nan() || s <= 0.0) {
        return Err(Error::InvalidArgument(format!("InfoNCE needs positive scores, got {s}")));
    }
    let logs: Vec<f64> = scores.iter().map(|s| s.ln()).collect();
    Ok(infonce_from_log_scores(&logs, positive))
}

/// InfoNCE from log scores, stable for scores that would overflow.
pub fn infonce_from_log_scores(log_scores: &[f64], positive: usize) -> f64 {
    logsumexp(log_scores) - log_scores[positive]
}

/// Mean binary cross entropy of probabilities against labels.
pub fn bce_loss(probs: &[f64], labels: &[bool]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "bce_loss needs equally many probabilities and labels, got {} and {}",
            probs.len(),
            labels.len()
        )));
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| if y { -p.ln() } else { -(1.0 - p).ln() })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Mean binary cross entropy with probabilities `σ(logit)`:
/// `softplus(l) − y·l`, exact for any logit magnitude.
pub fn bce_with_logits(logits: &[f64], labels: &[bool]) -> Result<f64> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::InvalidArgument("bce_with_logits needs matching nonempty inputs".into()));
    }
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&l, &y)| stable_softplus(l) - if y { l } else { 0.0 })
        .sum();
    Ok(total / logits.len() as f64)
}

/// Mean InfoNCE over groups recorded on a tape. Row `i` of the `n×1` column
/// `log_scores` belongs to group `groups[i]`; `positives[g]` is the row of
/// group `g`'s positive pair.
pub fn infonce_on_tape(tape: &mut Tape, log_scores: Var, groups: Vec<usize>, positives: Vec<usize>) -> Result<Var> {
    let n = positives.len();
    let lse = tape.segment_logsumexp(log_scores, groups, n)?;
    let pos = tape.gather_rows(log_scores, positives)?;
    let per = tape.sub(lse, pos)?;
    Ok(tape.mean(per))
}

/// Mean `softplus(l) − y·l` over an `n×1` column of logits.
pub fn bce_on_tape(tape: &mut Tape, logits: Var, labels: &[bool]) -> Result<Var> {
    let y = tape.constant(Matrix::column(labels.iter().map(|&b| f64::from(u8::from(b))).collect()));
    let sp = tape.softplus(logits);
    let yl = tape.mul(logits, y)?;
    let per = tape.sub(sp, yl)?;
    Ok(tape.mean(per))
}
